"""Text and CSV rendering of a diagnostic verdict."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .verdict import DiagnosticVerdict


def _fmt(v) -> str:
    return "nan" if v is None or not np.isfinite(v) else f"{v:.6g}"


def _vector(names, values) -> str:
    return "  ".join(f"{n}={_fmt(v)}" for n, v in zip(names, values))


def format_report(v: DiagnosticVerdict) -> str:
    """Plain-text report with sections in a fixed order."""
    out = ["[verdict]", f"status = {v.status}", f"K = {v.K}", f"method = {v.method}",
           f"threshold = {v.threshold}", f"global_threshold = {v.global_threshold}",
           f"chains = {', '.join(v.labels)}", f"post_burn_in_length = {v.global_report.k}", "",
           "[global_rhat]", _vector(v.names, v.global_report.rhat),
           f"max = {_fmt(v.global_report.max)}  passed = {v.global_report.passed}", ""]
    if v.curve is not None:
        out.append("[k_vs_distortion]")
        out += [f"{k} {L:.10g}" for k, L in zip(*v.curve)]
        out.append("")
    if v.linkage is not None:
        out.append("[linkage average/euclidean]")
        out += [f"{a} {b} {d:.10g}" for a, b, d in v.linkage.merges]
        out.append("")
    out.append("[clusters]")
    for c in v.clusters:
        out.append(f"cluster {c.index}: {', '.join(c.chains)}")
        if c.report is None:
            out.append("  rhat: not computable (single chain)")
            continue
        out.append(f"  rhat: {_vector(v.names, c.report.rhat)}")
        out.append(f"  max = {_fmt(c.report.max)}  converged = {c.converged}")
        if c.ess is not None:
            out.append(f"  ess: {_vector(v.names, c.ess)}")
    return "\n".join(out) + "\n"


def write_report(v: DiagnosticVerdict, outdir) -> dict[str, Path]:
    """Write ``report.txt`` plus flat CSVs of the K-vs-L curve, linkage and membership."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = {"report": outdir / "report.txt"}
    files["report"].write_text(format_report(v))
    if v.curve is not None:
        files["k_distortion"] = outdir / "k_distortion.csv"
        with open(files["k_distortion"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K", "distortion"])
            w.writerows([int(k), f"{L:.17g}"] for k, L in zip(*v.curve))
    if v.linkage is not None:
        files["linkage"] = outdir / "linkage.csv"
        with open(files["linkage"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "node_a", "node_b", "distance", "size"])
            for i, (a, b, d, n) in enumerate(v.linkage.Z):
                w.writerow([i, int(a), int(b), f"{d:.17g}", int(n)])
    files["clusters"] = outdir / "clusters.csv"
    with open(files["clusters"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "cluster", "cluster_rhat_max", "cluster_converged"])
        for c in v.clusters:
            for lab in c.chains:
                w.writerow([lab, c.index, _fmt(c.report.max) if c.report else "", c.converged])
    return files
