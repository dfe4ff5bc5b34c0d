"""Command-line pipeline: simulate, synthesize, sample, diagnose, report.

Exit codes: 0 converged (or plain success), 2 not converged, 3 not
assessable, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .column import ColumnConfig, Chromatogram, ParameterError, SimulationError, write_chromatogram
from .column.config import load_mapping
from .diagnostics import (CONVERGED, NON_ASSESSABLE, DiagnosticError, InsufficientChainsError, clustered_rhat_verdict,
                          format_report, write_report)
from .posterior import (ColumnForwardModel, GaussianMixtureTarget, NoiseModel, Observations, ParameterSpec,
                        PosteriorProblem, trimodal_target)
from .sampler import ChainStore, SamplerConfig, SchemaError, default_initial_cov, resume, run_parallel, write_run

log = logging.getLogger("chromclust")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_NON_ASSESSABLE = 0, 1, 2, 3
_STATUS_CODE = {CONVERGED: EXIT_OK, "non-converged": EXIT_NOT_CONVERGED, NON_ASSESSABLE: EXIT_NON_ASSESSABLE}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Target, sampler, diagnostics and output blocks of a run file."""

    target: dict
    sampler: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    output: str = "run"
    base: Path = Path(".")
    source: str = "<config>"

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        raw = load_mapping(path) or {}
        if "target" not in raw:
            raise ConfigError(f"{path}: missing 'target' block")
        rc = cls(raw["target"], raw.get("sampler", {}) or {}, raw.get("diagnostics", {}) or {},
                 raw.get("output", "run"), path.parent, str(path))
        rc.validate()
        return rc

    def path(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base / p

    def validate(self) -> None:
        t = self.target
        kind = t.get("kind", "model")
        if kind not in ("model", "mixture", "trimodal"):
            raise ConfigError(f"{self.source}: target.kind must be model, mixture or trimodal")
        if kind == "model":
            for key in ("model", "parameters"):
                if key not in t:
                    raise ConfigError(f"{self.source}: target.{key} is required for a model target")
            if not self.path(t["model"]).is_file():
                raise ConfigError(f"{self.source}: target.model file {t['model']!r} not found")
        if int(self.sampler.get("chains", 6)) < 1:
            raise ConfigError(f"{self.source}: sampler.chains must be >= 1")
        bi = float(self.sampler.get("burn_in", 0.25))
        if not 0.0 <= bi < 1.0:
            raise ConfigError(f"{self.source}: sampler.burn_in must lie in [0, 1)")

    def data_path(self) -> Path | None:
        d = self.target.get("data")
        return None if d is None else self.path(d)


# ------------------------------------------------------------------ targets

def _param_specs(block) -> list[ParameterSpec]:
    out = []
    for p in block:
        targets = p.get("targets", [p["name"]])
        out.append(ParameterSpec(p["name"], float(p["min"]), float(p["max"]), p.get("transform", "log"),
                                 tuple([targets] if isinstance(targets, str) else targets)))
    return out


def _model(rc: RunConfig):
    t = rc.target
    cfg = ColumnConfig.load(rc.path(t["model"]))
    params = _param_specs(t["parameters"])
    return cfg, params


def build_target(rc: RunConfig, observations: Observations | None = None):
    """Target density described by the run configuration."""
    t = rc.target
    kind = t.get("kind", "model")
    if kind == "trimodal":
        return trimodal_target(float(t.get("separation", 12.0)), int(t.get("dim", 2)), t.get("names"))
    if kind == "mixture":
        return GaussianMixtureTarget.from_dict(t)
    cfg, params = _model(rc)
    if observations is None:
        dp = rc.data_path()
        if dp is None or not dp.is_file():
            raise ConfigError(f"{rc.source}: target.data file {t.get('data')!r} not found")
        observations = Observations.from_csv(dp, t.get("components", [1]))
    forward = ColumnForwardModel(cfg, params, observations.times, t.get("components", [1]),
                                 t.get("discretization"))
    noise = NoiseModel(**t["noise"]) if "noise" in t else None
    eta0 = None
    if "reference" in t:
        missing = [p.name for p in params if p.name not in t["reference"]]
        if missing:
            raise ConfigError(f"{rc.source}: target.reference lacks {missing}")
        eta0 = np.array([float(t["reference"][p.name]) for p in params])
    return PosteriorProblem(params, observations, forward, noise=noise, eta0=eta0)


def _bounds(rc: RunConfig, target):
    if hasattr(target, "rho_lower"):
        return target.rho_lower, target.rho_upper
    if "bounds" in rc.target:
        b = np.asarray(rc.target["bounds"], dtype=float)
        return b[:, 0], b[:, 1]
    r = np.abs(target.means).max() + 5.0
    n = target.n_params
    return np.full(n, -r), np.full(n, r)


def starting_points(rc: RunConfig, target, seed: int) -> np.ndarray:
    """Starts from ``sampler.starts``: ``prior`` (default), a list, or mode indices."""
    s = rc.sampler
    p = int(s.get("chains", 6))
    spec = s.get("starts", "prior")
    rng = np.random.default_rng([seed, 0x5EED])
    if isinstance(spec, dict) and "modes" in spec:
        idx = list(spec["modes"])
        jitter = float(spec.get("jitter", 0.0))
        x = np.asarray(target.means)[idx]
        return x + jitter * rng.standard_normal(x.shape)
    if isinstance(spec, (list, tuple)):
        x = np.atleast_2d(np.asarray(spec, dtype=float))
        if len(x) != p:
            raise ConfigError(f"{rc.source}: sampler.starts has {len(x)} rows for {p} chains")
        return x
    if spec != "prior":
        raise ConfigError(f"{rc.source}: sampler.starts must be 'prior', a list or {{modes: [...]}}")
    lo, hi = _bounds(rc, target)
    starts = []
    for _ in range(1000 * p):
        x = rng.uniform(lo, hi)
        base, _ = target.evaluate(x[None])
        if np.isfinite(base[0]):
            starts.append(x)
            if len(starts) == p:
                return np.array(starts)
    raise ConfigError("could not find starting points with non-zero density")


def initial_covariance(rc: RunConfig, target) -> np.ndarray:
    spec = rc.sampler.get("initial_cov")
    n = len(target.names)
    if spec is None:
        return default_initial_cov(*_bounds(rc, target))
    c = np.asarray(spec, dtype=float)
    if c.ndim == 0:
        return float(c) * np.eye(n)
    return np.diag(c) if c.ndim == 1 else c


def sampler_config(rc: RunConfig, online: bool | None) -> SamplerConfig:
    s = rc.sampler
    poll = s.get("poll_interval")
    if online and not poll:
        poll = 1000
    if online is False:
        poll = None
    return SamplerConfig(n_iter=int(s.get("n_iter", 10_000)), burn_in=float(s.get("burn_in", 0.25)),
                         delayed_rejection=bool(s.get("delayed_rejection", True)),
                         dr_scale=float(s.get("dr_scale", 0.1)), adapt=bool(s.get("adapt", True)),
                         adapt_interval=int(s.get("adapt_interval", 100)), adapt_until=s.get("adapt_until"),
                         poll_interval=int(poll) if poll else None, backend=s.get("backend", "lockstep"),
                         n_workers=s.get("workers"))


def diagnostic_settings(rc: RunConfig | None, threshold: float | None = None) -> dict:
    d = dict(rc.diagnostics) if rc is not None else {}
    out = {"threshold": float(d.get("threshold", 1.10)), "global_threshold": d.get("global_threshold"),
           "s": int(d.get("s", 64)), "method": d.get("method", "kmeans"),
           "restarts": int(d.get("restarts", 10)), "seed": int(d.get("seed", 0)),
           "k": d.get("k"), "penalty": float(d.get("penalty", 0.0))}
    if "k_range" in d:
        lo, hi = d["k_range"]
        out["ks"] = list(range(int(lo), int(hi) + 1))
    if threshold is not None:
        out["threshold"] = threshold
    return out


def _verdict(store, settings):
    ks = settings.get("ks")
    if ks is not None:
        ks = [k for k in ks if k <= store.n_chains]
    kw = {k: v for k, v in settings.items() if k != "ks"}
    return clustered_rhat_verdict(store, ks=ks, **kw)


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = ColumnConfig.load(args.config)
    chrom = cfg.simulate()
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "chromatogram.csv"
    write_chromatogram(path, chrom)
    if args.plot:
        from .plotting import plot_chromatogram

        plot_chromatogram(chrom, out / "chromatogram.png")
    print(f"wrote {path}")
    return EXIT_OK


def add_noise(y, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """``y + N(0, sigma2)`` element-wise; ``sigma2 = 0`` returns a copy of ``y``."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    y = np.asarray(y, dtype=float)
    return y + np.sqrt(sigma2) * rng.standard_normal(y.shape) if sigma2 > 0 else y.copy()


def synthesize(cfg: ColumnConfig, sigma2: float, seed: int, values: dict | None = None,
               relative_noise: float | None = None, components=None) -> tuple[Chromatogram, float]:
    """Simulate ``cfg`` (optionally with substituted values) and add noise.

    With ``relative_noise`` the standard deviation is that fraction of the
    largest simulated value over ``components``.
    """
    if values:
        cfg = cfg.with_values(values)
    clean = cfg.simulate()
    if relative_noise is not None:
        cols = clean.values if components is None else clean.values[:, list(components)]
        sigma2 = (relative_noise * float(np.max(np.abs(cols)))) ** 2
    noisy = add_noise(clean.values, sigma2, np.random.default_rng(seed))
    return Chromatogram(clean.times, noisy), sigma2


def cmd_synthesize(args) -> int:
    raw = load_mapping(args.config)
    seed = args.seed if args.seed is not None else 0
    if "target" in raw:
        rc = RunConfig.load(args.config)
        cfg, params = _model(rc)
        truth = rc.target.get("truth", {})
        values = {}
        for p in params:
            if p.name in truth:
                values[p.targets] = float(truth[p.name])
        syn = rc.target.get("synthesize", {})
        sigma2 = args.sigma2 if args.sigma2 is not None else syn.get("sigma2")
        rel = None if args.sigma2 is not None else syn.get("relative_noise")
        comps = rc.target.get("components", [1])
        seed = args.seed if args.seed is not None else int(syn.get("seed", 0))
        out = Path(args.out) if args.out else (rc.data_path() or Path("data.csv")).parent
        name = rc.data_path().name if rc.data_path() is not None else "data.csv"
    else:
        cfg, values, sigma2, rel, comps = ColumnConfig.load(args.config), {}, args.sigma2, None, None
        out, name = Path(args.out or "."), "data.csv"
    if rel is None:
        if sigma2 is None:
            raise ConfigError("a noise variance is required (--sigma2 or synthesize.sigma2)")
        if args.noise_free:
            sigma2 = 0.0
        elif not float(sigma2) > 0:
            raise ConfigError(f"sigma2 must be > 0, got {sigma2} (use --noise-free for exact data)")
    chrom, s2 = synthesize(cfg, float(sigma2 or 0.0), seed, values, rel, comps)
    out.mkdir(parents=True, exist_ok=True)
    write_chromatogram(out / name, chrom, fmt="%.17g")
    print(f"wrote {out / name} (sigma2={s2:.6g}, seed={seed})")
    return EXIT_OK


def _write_verdict(verdict, outdir: Path) -> None:
    write_report(verdict, outdir)


def cmd_sample(args) -> int:
    rc = RunConfig.load(args.config)
    out = Path(args.out or rc.path(rc.output))
    seed = args.seed if args.seed is not None else int(rc.sampler.get("seed", 0))
    cfg = sampler_config(rc, args.online)
    settings = diagnostic_settings(rc, args.threshold)
    target = build_target(rc)
    labels = rc.sampler.get("labels")

    def monitor(store):
        try:
            v = _verdict(store, settings)
        except (DiagnosticError, InsufficientChainsError, ValueError) as err:
            log.info("online check skipped: %s", err)
            return False
        log.info("iteration %d: %s (K=%d)", int(store.lengths().min()), v.status, v.K)
        return v

    mon = monitor if cfg.poll_interval else None
    if args.resume:
        if not (out / "manifest.json").is_file():
            raise ConfigError(f"nothing to resume in {out}")
        result = resume(out, target, cfg, monitor=mon)
    else:
        starts = starting_points(rc, target, seed)
        result = run_parallel(target, starts, cfg, seed=seed, labels=labels,
                              initial_cov=initial_covariance(rc, target), monitor=mon)
    write_run(result, out, seed, {"config": str(Path(args.config).resolve().name)})
    statuses = result.store.statuses()
    for s in result.states:
        print(f"chain {s.label}: {s.iteration} iterations, acceptance {s.acceptance_rate:.3f}, {s.status}")
    try:
        verdict = _verdict(result.store, settings)
    except (DiagnosticError, InsufficientChainsError, ValueError) as err:
        print(f"diagnostics: not assessable ({err})")
        return EXIT_ERROR if "failed" in statuses else EXIT_NON_ASSESSABLE
    _write_verdict(verdict, out / "diagnostics")
    print(format_report(verdict), end="")
    if "failed" in statuses:
        return EXIT_ERROR
    return _STATUS_CODE[verdict.status]


def _load_chains(args) -> tuple[ChainStore, RunConfig | None, Path]:
    rc = RunConfig.load(args.config) if args.config else None
    if args.chains:
        paths = [Path(p) for p in args.chains]
        if len(paths) == 1 and paths[0].is_dir():
            store, src = ChainStore.read(paths[0]), paths[0]
        else:
            store, src = ChainStore.read(paths), paths[0].parent
    else:
        src = Path(args.out or (rc.path(rc.output) if rc else "."))
        store = ChainStore.read(src)
    return store, rc, src


def cmd_diagnose(args, figures: bool = False) -> int:
    store, rc, src = _load_chains(args)
    settings = diagnostic_settings(rc, args.threshold)
    verdict = _verdict(store, settings)
    out = Path(args.out) / "diagnostics" if args.out else src / "diagnostics"
    _write_verdict(verdict, out)
    if figures:
        from .diagnostics.plots import render_figures

        render_figures(verdict, store, out)
    print(format_report(verdict), end="")
    return _STATUS_CODE[verdict.status]


def cmd_report(args) -> int:
    return cmd_diagnose(args, figures=True)


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chromclust", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="configuration file (YAML or JSON)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed")
        return p

    p = common(sub.add_parser("simulate", help="simulate a column configuration"))
    p.add_argument("--plot", action="store_true", help="also render the chromatogram")
    p = common(sub.add_parser("synthesize", help="simulate and add Gaussian noise"))
    p.add_argument("--sigma2", type=float, help="noise variance")
    p.add_argument("--noise-free", action="store_true", help="write the noise-free simulation")
    p = common(sub.add_parser("sample", help="run parallel chains"))
    p.add_argument("--online", dest="online", action="store_true", default=None,
                   help="poll the clustered diagnostic and stop on convergence")
    p.add_argument("--offline", dest="online", action="store_false", help="run to the iteration cap")
    p.add_argument("--threshold", type=float)
    p.add_argument("--resume", action="store_true", help="continue the run in the output directory")
    for name, hlp in (("diagnose", "diagnose chain dumps"), ("report", "diagnose and render figures")):
        p = common(sub.add_parser(name, help=hlp), config_required=False)
        p.add_argument("--threshold", type=float)
        p.add_argument("chains", nargs="*", help="run directory or chain CSV files")
    return ap


_COMMANDS = {"simulate": cmd_simulate, "synthesize": cmd_synthesize, "sample": cmd_sample,
             "diagnose": cmd_diagnose, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParameterError, SimulationError, SchemaError, DiagnosticError,
            InsufficientChainsError, KeyError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
