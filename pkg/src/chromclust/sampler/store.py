"""Append-only chain storage and on-disk chain dumps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"


class SchemaError(ValueError):
    """Chain dumps whose columns do not line up."""


@dataclass
class _Chain:
    label: str
    blocks: list = field(default_factory=list)
    length: int = 0
    status: str = "running"
    message: str = ""


class ChainStore:
    """Per-chain append-only record of ``(rho, sigma2, log_post)``.

    Rows are appended in blocks; previously stored rows are never touched.
    Array accessors return copies, so callers may hold on to them while
    sampling continues.
    """

    def __init__(self, labels, names, burn_in: float = 0.25):
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise ValueError("chain labels must be unique")
        if not 0.0 <= burn_in < 1.0:
            raise ValueError("burn-in fraction must lie in [0, 1)")
        self.names = list(names)
        self.burn_in = burn_in
        self._chains = [_Chain(lab) for lab in labels]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self._chains]

    @property
    def n_chains(self) -> int:
        return len(self._chains)

    @property
    def n_params(self) -> int:
        return len(self.names)

    def lengths(self) -> np.ndarray:
        return np.array([c.length for c in self._chains], dtype=int)

    def statuses(self) -> list[str]:
        return [c.status for c in self._chains]

    def set_status(self, i: int, status: str, message: str = "") -> None:
        self._chains[i].status = status
        self._chains[i].message = message

    def messages(self) -> list[str]:
        return [c.message for c in self._chains]

    def append(self, i: int, rho, sigma2, log_post) -> None:
        rho = np.array(rho, dtype=float, ndmin=2)
        sigma2 = np.array(sigma2, dtype=float, ndmin=1)
        log_post = np.array(log_post, dtype=float, ndmin=1)
        if rho.shape[1] != self.n_params or not (len(rho) == len(sigma2) == len(log_post)):
            raise ValueError("appended block has inconsistent shapes")
        block = np.column_stack([log_post, sigma2, rho])
        block.setflags(write=False)
        ch = self._chains[i]
        ch.blocks.append(block)
        ch.length += len(block)

    def _table(self, i: int) -> np.ndarray:
        ch = self._chains[i]
        if len(ch.blocks) > 1:
            merged = np.concatenate(ch.blocks)
            merged.setflags(write=False)
            ch.blocks = [merged]
        return ch.blocks[0] if ch.blocks else np.empty((0, 2 + self.n_params))

    def samples(self, i: int) -> np.ndarray:
        return self._table(i)[:, 2:].copy()

    def sigma2(self, i: int) -> np.ndarray:
        return self._table(i)[:, 1].copy()

    def log_post(self, i: int) -> np.ndarray:
        return self._table(i)[:, 0].copy()

    def post_burn_in(self, i: int) -> np.ndarray:
        x = self._table(i)[:, 2:]
        return x[int(np.floor(self.burn_in * len(x))):].copy()

    def snapshot(self) -> list[np.ndarray]:
        """Post-burn-in samples of every chain, each ``(k_i, n)``."""
        return [self.post_burn_in(i) for i in range(self.n_chains)]

    def subset(self, indices) -> "ChainStore":
        out = ChainStore([self.labels[i] for i in indices], self.names, self.burn_in)
        for j, i in enumerate(indices):
            t = self._table(i)
            if len(t):
                out.append(j, t[:, 2:], t[:, 1], t[:, 0])
            out.set_status(j, self._chains[i].status, self._chains[i].message)
        return out

    # ------------------------------------------------------------ disk format
    def write(self, outdir, extra: dict | None = None, fmt: str = "%.17g") -> Path:
        """One CSV per chain (``iter,log_post,sigma2,<names>``) plus a manifest."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        header = ",".join(["iter", "log_post", "sigma2"] + self.names)
        files = []
        for i, ch in enumerate(self._chains):
            t = self._table(i)
            path = outdir / f"chain_{ch.label}.csv"
            data = np.column_stack([np.arange(1, len(t) + 1), t])
            np.savetxt(path, data, delimiter=",", header=header, comments="",
                       fmt=["%d"] + [fmt] * t.shape[1])
            files.append(path.name)
        manifest = {
            "parameters": self.names,
            "burn_in": self.burn_in,
            "chains": [{"label": ch.label, "file": f, "length": ch.length, "status": ch.status,
                        "message": ch.message} for ch, f in zip(self._chains, files)],
        }
        manifest.update(extra or {})
        (outdir / MANIFEST).write_text(json.dumps(manifest, indent=1))
        return outdir / MANIFEST

    @classmethod
    def read(cls, source) -> "ChainStore":
        """Load from a run directory (with manifest) or a list of CSV files."""
        if isinstance(source, (str, Path)) and Path(source).is_dir():
            man = json.loads((Path(source) / MANIFEST).read_text())
            paths = [Path(source) / c["file"] for c in man["chains"]]
            labels = [c["label"] for c in man["chains"]]
            store = cls._from_files(paths, labels, man.get("burn_in", 0.25))
            for i, c in enumerate(man["chains"]):
                store.set_status(i, c.get("status", "done"), c.get("message", ""))
            if man["parameters"] != store.names:
                raise SchemaError("manifest parameter list does not match the chain files")
            return store
        paths = [Path(p) for p in source]
        labels = [p.stem.removeprefix("chain_") for p in paths]
        return cls._from_files(paths, labels, 0.25)

    @classmethod
    def _from_files(cls, paths, labels, burn_in) -> "ChainStore":
        names = None
        tables = []
        for p in paths:
            with open(p) as fh:
                header = fh.readline().strip().split(",")
            if header[:3] != ["iter", "log_post", "sigma2"]:
                raise SchemaError(f"{p}: expected columns iter,log_post,sigma2,<params>")
            if names is None:
                names = header[3:]
            elif header[3:] != names:
                raise SchemaError(f"{p}: parameter columns {header[3:]} differ from {names}")
            tables.append(np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2).reshape(-1, len(header)))
        store = cls(labels, names or [], burn_in)
        for i, t in enumerate(tables):
            if len(t):
                store.append(i, t[:, 3:], t[:, 2], t[:, 1])
            store.set_status(i, "done")
        return store
