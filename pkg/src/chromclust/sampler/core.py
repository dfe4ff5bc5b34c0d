"""Metropolis-within-Gibbs with adaptive Metropolis and delayed rejection.

Every chain owns a private random stream.  Per iteration a chain consumes
exactly one fixed bundle of variates (first-stage normals and uniform,
second-stage normals and uniform, and one gamma variate when a noise model
is present) whether or not they are used.  Variates are drawn in blocks, so
a chain's trajectory does not depend on whether chains are advanced
together in one vectorised batch or separately in worker processes, and a
run can be resumed bit-exactly from the saved generator state.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .store import ChainStore


class AdaptationWarning(RuntimeWarning):
    pass


@dataclass
class SamplerConfig:
    """Run settings.

    ``adapt_until`` defaults to the burn-in fraction of ``n_iter``: the
    proposal covariance is re-estimated every ``adapt_interval`` iterations
    up to that point and frozen afterwards.
    """

    n_iter: int = 10_000
    burn_in: float = 0.25
    delayed_rejection: bool = True
    dr_scale: float = 0.1
    adapt: bool = True
    adapt_interval: int = 100
    adapt_until: int | None = None
    adapt_eps: float = 1e-8
    scale: float | None = None
    block: int = 1024
    poll_interval: int | None = None
    backend: str = "lockstep"
    n_workers: int | None = None

    def __post_init__(self):
        if self.n_iter < 0 or self.block < 1:
            raise ValueError("n_iter must be >= 0 and block >= 1")
        if not 0.0 < self.dr_scale <= 1.0:
            raise ValueError("dr_scale must lie in (0, 1]")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must lie in [0, 1)")
        if self.backend not in ("lockstep", "process", "serial"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.adapt_interval < 1:
            raise ValueError("adapt_interval must be >= 1")

    @property
    def adaptation_end(self) -> int:
        if not self.adapt:
            return 0
        return int(self.burn_in * self.n_iter) if self.adapt_until is None else int(self.adapt_until)


@dataclass
class ProposalState:
    """Gaussian random-walk proposal with running history statistics."""

    cov: np.ndarray
    count: int = 0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None
    degenerate: int = 0

    def __post_init__(self):
        self.cov = np.array(self.cov, dtype=float)
        n = len(self.cov)
        self.mean = np.zeros(n) if self.mean is None else np.array(self.mean, dtype=float)
        self.m2 = np.zeros((n, n)) if self.m2 is None else np.array(self.m2, dtype=float)
        self.chol = spd_cholesky(self.cov)

    def observe(self, x: np.ndarray) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += np.outer(d, x - self.mean)

    def history_cov(self) -> np.ndarray:
        return self.m2 / (self.count - 1)

    def adapt(self, scale: float, eps: float) -> bool:
        """``cov = s_d Cov(history) + s_d eps I``; needs ``n + 1`` samples."""
        n = len(self.cov)
        if self.count < n + 1:
            return False
        emp = 0.5 * (self.history_cov() + self.history_cov().T)
        if not np.any(np.diag(emp) > 0):
            self.degenerate += 1
            warnings.warn("zero-variance adaptation history; falling back to eps*I", AdaptationWarning,
                          stacklevel=3)
        self.cov = scale * emp + scale * eps * np.eye(n)
        self.chol = spd_cholesky(self.cov)
        return True

    def to_dict(self) -> dict:
        return {"cov": self.cov.tolist(), "count": self.count, "mean": self.mean.tolist(),
                "m2": self.m2.tolist(), "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "ProposalState":
        return cls(np.array(d["cov"]), d["count"], np.array(d["mean"]), np.array(d["m2"]), d["degenerate"])


def spd_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, adding diagonal jitter until it exists."""
    cov = 0.5 * (cov + cov.T)
    jitter = 0.0
    scale = max(float(np.max(np.abs(np.diag(cov)))), 1e-300)
    for _ in range(30):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-12 if jitter == 0.0 else jitter * 10.0
    raise np.linalg.LinAlgError("covariance could not be made positive definite")


@dataclass
class ChainState:
    """Everything needed to continue one chain exactly."""

    label: str
    rho: np.ndarray
    sigma2: float
    log_base: float
    sse: float
    proposal: ProposalState
    seed: dict
    rng_state: dict
    block_offset: int = 0
    iteration: int = 0
    accepted: list = field(default_factory=lambda: [0, 0])
    attempts: list = field(default_factory=lambda: [0, 0])
    failures: int = 0
    status: str = "running"
    message: str = ""
    _block: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"label": self.label, "rho": self.rho.tolist(), "sigma2": self.sigma2,
                "log_base": self.log_base, "sse": self.sse, "proposal": self.proposal.to_dict(),
                "seed": self.seed, "rng_state": self.rng_state, "block_offset": self.block_offset,
                "iteration": self.iteration, "accepted": list(self.accepted),
                "attempts": list(self.attempts), "failures": self.failures, "status": self.status,
                "message": self.message}

    @classmethod
    def from_dict(cls, d: dict) -> "ChainState":
        return cls(d["label"], np.array(d["rho"], dtype=float), float(d["sigma2"]), float(d["log_base"]),
                   float(d["sse"]), ProposalState.from_dict(d["proposal"]), d["seed"], d["rng_state"],
                   d["block_offset"], d["iteration"], list(d["accepted"]), list(d["attempts"]),
                   d["failures"], d["status"], d["message"])

    @property
    def acceptance_rate(self) -> float:
        return (self.accepted[0] + self.accepted[1]) / max(self.iteration, 1)


def _gamma_shape(target) -> float | None:
    noise = getattr(target, "noise", None)
    return None if noise is None else noise.alpha0 + 0.5 * target.n_obs


def _draw_block(state: ChainState, n: int, size: int, shape: float | None) -> None:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state.rng_state
    blk = {"z1": rng.standard_normal((size, n)), "u1": rng.random(size),
           "z2": rng.standard_normal((size, n)), "u2": rng.random(size)}
    blk["g"] = rng.standard_gamma(shape, size) if shape is not None else None
    blk["next_state"] = rng.bit_generator.state
    state._block = blk


def _variates(state: ChainState, n: int, size: int, shape):
    if state._block is None:
        _draw_block(state, n, size, shape)
    if state.block_offset >= size:
        state.rng_state = state._block["next_state"]
        state.block_offset = 0
        _draw_block(state, n, size, shape)
    b, k = state._block, state.block_offset
    state.block_offset += 1
    return b["z1"][k], b["u1"][k], b["z2"][k], b["u2"][k], (None if b["g"] is None else b["g"][k])


def _safe_evaluate(target, rho: np.ndarray):
    """Batch evaluation; a raising batch is retried row by row."""
    try:
        base, sse = target.evaluate(rho)
        base = np.asarray(base, dtype=float)
        sse = None if sse is None else np.asarray(sse, dtype=float)
        return base, sse, np.zeros(len(rho), dtype=bool)
    except Exception:
        base = np.empty(len(rho))
        sse = np.empty(len(rho))
        failed = np.zeros(len(rho), dtype=bool)
        has_sse = True
        for i, r in enumerate(rho):
            try:
                b, s = target.evaluate(r[None])
                base[i] = b[0]
                has_sse = s is not None
                sse[i] = s[0] if s is not None else 0.0
            except Exception:
                base[i], sse[i], failed[i] = -np.inf, np.inf, True
        return base, (sse if has_sse else None), failed


def _conditional(base, sse, sigma2):
    if sse is None:
        return base
    with np.errstate(invalid="ignore"):
        out = base - sse / (2.0 * sigma2)
    return np.where(np.isfinite(base), out, -np.inf)


def _log1m_exp(x):
    """``log(1 - exp(x))`` for ``x <= 0``, ``-inf`` at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < -0.6931471805599453, np.log1p(-np.exp(x)), np.log(-np.expm1(x)))


def metropolis_log_alpha(pi_candidate, pi_current):
    """First-stage log acceptance probability ``min(0, log pi(y) - log pi(x))``."""
    pi_candidate = np.asarray(pi_candidate, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.minimum(0.0, pi_candidate - pi_current)
    return np.where(np.isfinite(pi_candidate), out, -np.inf)


def dr_log_alpha(pi_x, pi_y1, pi_y2, log_q_ratio):
    """Second-stage log acceptance probability of delayed rejection.

    ``log_q_ratio`` is ``log q1(y2 -> y1) - log q1(x -> y1)``.  The value is
    ``min(0, [pi(y2) q1(y2->y1) (1 - a1(y2, y1))] - [pi(x) q1(x->y1) (1 - a1(x, y1))])``
    in logs.
    """
    pi_y2 = np.asarray(pi_y2, dtype=float)
    num = pi_y2 + log_q_ratio + _log1m_exp(metropolis_log_alpha(pi_y1, pi_y2))
    den = pi_x + _log1m_exp(metropolis_log_alpha(pi_y1, pi_x))
    with np.errstate(invalid="ignore"):
        out = np.minimum(0.0, num - den)
    return np.where(np.isfinite(pi_y2) & np.isfinite(num), out, -np.inf)


def gibbs_sigma2(alpha0: float, beta0: float, n_obs: int, sse, gamma_variate):
    """Draw from IG(alpha0 + md/2, beta0 + S/2) given a Gamma(alpha0 + md/2, 1) variate."""
    return (beta0 + 0.5 * np.asarray(sse, dtype=float)) / gamma_variate


def sample_sigma2(rng: np.random.Generator, alpha0: float, beta0: float, n_obs: int, sse, size=None):
    return gibbs_sigma2(alpha0, beta0, n_obs, sse, rng.standard_gamma(alpha0 + 0.5 * n_obs, size))


def full_log_post(target, base, sse, sigma2):
    fn = getattr(target, "full_log_posterior", None)
    if fn is None or sse is None:
        return np.asarray(base, dtype=float)
    return fn(base, sse, sigma2)


def advance(states: list[ChainState], target, cfg: SamplerConfig, n_steps: int):
    """Advance chains in lockstep by up to ``n_steps`` iterations.

    Returns per-chain row blocks ``(rho, sigma2, log_post)``.
    """
    active = [s for s in states if s.status == "running"]
    p = len(active)
    rows = {s.label: ([], [], []) for s in states}
    if p == 0 or n_steps <= 0:
        return {k: tuple(np.array(v) for v in r) for k, r in rows.items()}
    n = len(active[0].rho)
    shape = _gamma_shape(target)
    noise = getattr(target, "noise", None)
    scale = cfg.scale if cfg.scale is not None else 2.4 ** 2 / n
    sqrt_a = math.sqrt(cfg.dr_scale)
    end = cfg.adaptation_end
    x = np.array([s.rho for s in active])
    base = np.array([s.log_base for s in active])
    has_sse = shape is not None
    sse = np.array([s.sse for s in active]) if has_sse else None
    sigma2 = np.array([s.sigma2 for s in active])
    buf_rho = np.empty((n_steps, p, n))
    buf_s2 = np.empty((n_steps, p))
    buf_lp = np.empty((n_steps, p))
    for step in range(n_steps):
        v = [_variates(s, n, cfg.block, shape) for s in active]
        z1 = np.array([t[0] for t in v])
        u1 = np.array([t[1] for t in v])
        z2 = np.array([t[2] for t in v])
        u2 = np.array([t[3] for t in v])
        chol = np.array([s.proposal.chol for s in active])

        cur = _conditional(base, sse, sigma2)
        y1 = x + np.einsum("pij,pj->pi", chol, z1)
        b1, s1, f1 = _safe_evaluate(target, y1)
        pi1 = _conditional(b1, s1, sigma2)
        log_a1 = metropolis_log_alpha(pi1, cur)
        with np.errstate(divide="ignore"):
            acc1 = np.log(u1) < log_a1
        for i, s in enumerate(active):
            s.attempts[0] += 1
            s.failures += int(f1[i])
        new_x, new_b = np.where(acc1[:, None], y1, x), np.where(acc1, b1, base)
        new_s = np.where(acc1, s1, sse) if has_sse else None

        rej = np.flatnonzero(~acc1)
        if cfg.delayed_rejection and len(rej):
            dz = np.einsum("pij,pj->pi", chol[rej], z2[rej])
            y2 = x[rej] + sqrt_a * dz
            b2, s2, f2 = _safe_evaluate(target, y2)
            pi2 = _conditional(b2, s2, sigma2[rej])
            # log q1(y2 -> y1) - log q1(x -> y1), in whitened coordinates
            dq = -0.5 * (np.sum((z1[rej] - sqrt_a * z2[rej]) ** 2, axis=1) - np.sum(z1[rej] ** 2, axis=1))
            log_a2 = dr_log_alpha(cur[rej], pi1[rej], pi2, dq)
            with np.errstate(divide="ignore"):
                acc2 = np.log(u2[rej]) < log_a2
            for j, i in enumerate(rej):
                active[i].attempts[1] += 1
                active[i].failures += int(f2[j])
                if acc2[j]:
                    active[i].accepted[1] += 1
            take = rej[acc2]
            new_x[take], new_b[take] = y2[acc2], b2[acc2]
            if has_sse:
                new_s[take] = s2[acc2]
        for i in np.flatnonzero(acc1):
            active[i].accepted[0] += 1
        x, base, sse = new_x, new_b, new_s

        if has_sse:
            g = np.array([t[4] for t in v])
            sigma2 = gibbs_sigma2(noise.alpha0, noise.beta0, target.n_obs, sse, g)
        buf_rho[step], buf_s2[step] = x, (sigma2 if has_sse else np.nan)
        buf_lp[step] = full_log_post(target, base, sse, sigma2)
        for i, s in enumerate(active):
            s.iteration += 1
            if s.iteration <= end:
                s.proposal.observe(x[i])
                if s.iteration % cfg.adapt_interval == 0:
                    s.proposal.adapt(scale, cfg.adapt_eps)
    for i, s in enumerate(active):
        s.rho, s.log_base = x[i].copy(), float(base[i])
        s.sse = float(sse[i]) if has_sse else 0.0
        s.sigma2 = float(sigma2[i])
        rows[s.label] = (buf_rho[:, i].copy(), buf_s2[:, i].copy(), buf_lp[:, i].copy())
    return {k: tuple(np.asarray(a) for a in r) for k, r in rows.items()}


# ---------------------------------------------------------------- drivers

def default_initial_cov(lower, upper) -> np.ndarray:
    """Diagonal ``(0.1 * range)^2`` in the sampled coordinates."""
    return np.diag((0.1 * (np.asarray(upper, float) - np.asarray(lower, float))) ** 2)


def init_states(target, starts, seed: int, initial_cov, labels=None, sigma2=None) -> list[ChainState]:
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    p, n = starts.shape
    labels = list(labels) if labels is not None else [f"c{i}" for i in range(p)]
    if len(labels) != p:
        raise ValueError("one label per chain is required")
    master = np.random.SeedSequence(seed)
    children = master.spawn(p)
    base, sse = target.evaluate(starts)
    base = np.asarray(base, dtype=float)
    bad = ~np.isfinite(base)
    if np.any(bad):
        raise ValueError(f"starting points {np.flatnonzero(bad).tolist()} have zero posterior density")
    shape = _gamma_shape(target)
    covs = np.broadcast_to(np.asarray(initial_cov, dtype=float), (p, n, n))
    states = []
    for i, ss in enumerate(children):
        if shape is not None:
            s2 = float(sigma2) if sigma2 is not None else (target.noise.beta0 + 0.5 * sse[i]) / shape
        else:
            s2 = float("nan")
        rng_state = np.random.PCG64(ss).state
        states.append(ChainState(labels[i], starts[i].copy(), s2, float(base[i]),
                                 float(sse[i]) if sse is not None else 0.0, ProposalState(covs[i].copy()),
                                 {"entropy": str(master.entropy), "spawn_key": list(ss.spawn_key)}, rng_state))
    return states


_WORKER_TARGET = None


def _worker_init(target):
    global _WORKER_TARGET
    _WORKER_TARGET = target


def _worker_advance(state: ChainState, cfg: SamplerConfig, n_steps: int):
    try:
        rows = advance([state], _WORKER_TARGET, cfg, n_steps)[state.label]
    except Exception as exc:
        state.status, state.message = "failed", f"{type(exc).__name__}: {exc}"
        rows = (np.empty((0, len(state.rho))), np.empty(0), np.empty(0))
    state._block = None
    return state, rows


class _Runner:
    def __init__(self, target, cfg: SamplerConfig):
        self.target, self.cfg = target, cfg
        self.pool = None
        if cfg.backend == "process":
            self.pool = ProcessPoolExecutor(cfg.n_workers, initializer=_worker_init, initargs=(target,))

    def step(self, states, n_steps):
        if self.cfg.backend == "lockstep":
            try:
                return states, advance(states, self.target, self.cfg, n_steps)
            except Exception as exc:
                for s in states:
                    if s.status == "running":
                        s.status, s.message = "failed", f"{type(exc).__name__}: {exc}"
                return states, {}
        if self.cfg.backend == "serial":
            out = {}
            for s in states:
                if s.status != "running":
                    continue
                try:
                    out.update(advance([s], self.target, self.cfg, n_steps))
                except Exception as exc:
                    s.status, s.message = "failed", f"{type(exc).__name__}: {exc}"
            return states, out
        running = [s for s in states if s.status == "running"]
        futures = [self.pool.submit(_worker_advance, s, self.cfg, n_steps) for s in running]
        done = {}
        new_states = {s.label: s for s in states}
        for f in futures:
            s, rows = f.result()
            new_states[s.label] = s
            done[s.label] = rows
        return [new_states[s.label] for s in states], done

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


@dataclass
class RunResult:
    store: ChainStore
    states: list[ChainState]
    stopped_early: bool = False
    verdicts: list = field(default_factory=list)

    def manifest_extra(self, seed) -> dict:
        return {"seed": seed, "states": [s.to_dict() for s in self.states],
                "stopped_early": self.stopped_early}


def run_parallel(target, starts, cfg: SamplerConfig, seed: int = 0, labels=None, initial_cov=None,
                 monitor: Callable | None = None, store: ChainStore | None = None,
                 states: list[ChainState] | None = None) -> RunResult:
    """Run ``len(starts)`` independent chains.

    Parameters
    ----------
    target
        Object with ``evaluate(rho_batch) -> (log_base, sse | None)``.
    starts
        ``(p, n)`` starting points in the sampled coordinates.
    monitor
        Online mode: called as ``monitor(store)`` every
        ``cfg.poll_interval`` iterations; a truthy return stops the run.
    store, states
        Continue an earlier run (see :func:`resume`).
    """
    if states is None:
        starts = np.atleast_2d(np.asarray(starts, dtype=float))
        n = starts.shape[1]
        if initial_cov is None:
            initial_cov = np.eye(n) * 0.01
        states = init_states(target, starts, seed, initial_cov, labels)
    names = list(getattr(target, "names", [f"x{i}" for i in range(len(states[0].rho))]))
    if store is None:
        store = ChainStore([s.label for s in states], names, cfg.burn_in)
    runner = _Runner(target, cfg)
    result = RunResult(store, states)
    chunk = cfg.poll_interval if (monitor is not None and cfg.poll_interval) else max(cfg.n_iter, 1)
    try:
        while True:
            running = [s for s in states if s.status == "running"]
            if not running:
                break
            remaining = cfg.n_iter - min(s.iteration for s in running)
            if remaining <= 0:
                break
            states, rows = runner.step(states, min(chunk, remaining))
            result.states = states
            for i, s in enumerate(states):
                if s.label in rows and len(rows[s.label][0]):
                    store.append(i, *rows[s.label])
                store.set_status(i, s.status, s.message)
            if monitor is not None and cfg.poll_interval:
                verdict = monitor(store)
                result.verdicts.append(verdict)
                if verdict:
                    result.stopped_early = any(s.iteration < cfg.n_iter for s in states if s.status == "running")
                    break
    finally:
        runner.close()
    for i, s in enumerate(states):
        if s.status == "running" and s.iteration >= cfg.n_iter:
            s.status = "done"
        store.set_status(i, s.status, s.message)
    return result


def resume(run_dir, target, cfg: SamplerConfig, monitor=None) -> RunResult:
    """Continue a run written by :func:`write_run` up to ``cfg.n_iter`` iterations."""
    import json
    from pathlib import Path

    man = json.loads((Path(run_dir) / "manifest.json").read_text())
    store = ChainStore.read(run_dir)
    states = [ChainState.from_dict(d) for d in man["states"]]
    for i, s in enumerate(states):
        if s.status == "done":
            s.status = "running"
        if store.lengths()[i] != s.iteration:
            raise ValueError(f"chain {s.label}: dump has {store.lengths()[i]} rows, state {s.iteration}")
    return run_parallel(target, None, cfg, seed=man.get("seed", 0), monitor=monitor, store=store,
                        states=states)


def write_run(result: RunResult, outdir, seed, extra: dict | None = None):
    info = result.manifest_extra(seed)
    info.update(extra or {})
    return result.store.write(outdir, info)
