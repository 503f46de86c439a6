"""Monte-Carlo oracle for time-changed polynomial processes.

The clock is built the direct way: simulate the alpha-stable subordinator on
an operational grid of step ``ds``, then read off first-passage times over
the calendar times of interest (linear interpolation inside the crossing
step).  The outer process is simulated by Euler steps in operational time,
with the last step of each leg shortened so that a path lands exactly on its
own clock value.

Paths are processed in fixed-size batches.  Every batch owns a generator
spawned from ``SeedSequence(seed)``, so the batch layout and not the worker
count determines the random numbers; per-path values are reduced in path
order, which keeps serial and threaded runs bit-identical.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .models import BrownianMotion, JacobiJump, LevyOU, ModelSpec, Pearson, QTSM, generator_matrix
from .polybasis import PolyVec

__all__ = [
    "SimConfig",
    "PathBundle",
    "simulate_stable_increments",
    "invert_path",
    "sample_inverse_stable",
    "sample_stationary",
    "simulate_model",
    "simulate_bundle",
    "estimate",
    "export_csv",
    "increment_laplace_samples",
    "moment_samples",
    "TruncationError",
]

log = logging.getLogger(__name__)

# Guards (clamps, reflections) engaging on more than this share of steps
# indicate that dt is too coarse.
CLAMP_WARN_RATE = 0.01


class TruncationError(RuntimeError):
    """A calendar time lies beyond the simulated subordinator path."""


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    dt_operational: float = 1e-3
    dt_subordinator: float = 1e-3
    seed: int = 0
    horizon: float = 10.0
    batch_size: int = 10_000
    jobs: int = 1

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            raise ValueError("n_paths must be an integer >= 100")
        if not (self.dt_operational > 0 and self.dt_subordinator > 0):
            raise ValueError("time steps must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.batch_size < 1 or self.jobs < 1:
            raise ValueError("batch_size and jobs must be positive")

    def batches(self) -> list[tuple[int, np.random.Generator]]:
        """(size, generator) per batch; independent streams from the seed."""
        nb = -(-self.n_paths // self.batch_size)
        seqs = np.random.SeedSequence(int(self.seed)).spawn(nb)
        sizes = [self.batch_size] * (nb - 1) + [self.n_paths - self.batch_size * (nb - 1)]
        return [(n, np.random.Generator(np.random.PCG64(s))) for n, s in zip(sizes, seqs)]


@dataclass(frozen=True)
class PathBundle:
    """Clock values and outer-process values at a set of calendar times."""

    calendar_times: np.ndarray
    L_samples: np.ndarray  # (n_paths, n_times)
    X_samples: np.ndarray  # (n_paths, n_times, state_dim)


# ---------------------------------------------------------------------------
# the clock
# ---------------------------------------------------------------------------


def simulate_stable_increments(alpha: float, n, ds: float, rng: np.random.Generator) -> np.ndarray:
    """Increments of the stable subordinator with ``E exp(-l S_ds) = exp(-ds l^alpha)``.

    Kanter's representation: with ``U ~ Unif(0, pi)`` and ``E ~ Exp(1)``,
    ``sin(alpha U) / sin(U)^(1/alpha) * (sin((1 - alpha) U) / E)^((1 - alpha)/alpha)``
    has the unit law.  ``n`` may be an int or a shape.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    U = rng.uniform(0.0, np.pi, n)
    E = rng.standard_exponential(n)
    a = alpha
    S = np.sin(a * U) / np.sin(U) ** (1.0 / a) * (np.sin((1.0 - a) * U) / E) ** ((1.0 - a) / a)
    S *= ds ** (1.0 / a)
    # U at the endpoints of (0, pi) can underflow to 0; keep increments positive
    np.maximum(S, np.finfo(float).tiny, out=S)
    return S


def invert_path(sigma_path, t_grid, ds: float = 1.0) -> np.ndarray:
    """First-passage times of a cumulative path over the levels ``t_grid``.

    ``sigma_path[k]`` is the subordinator at operational time ``(k + 1) ds``
    (it starts from 0 at time 0).  Inside the crossing step the operational
    time is interpolated linearly.
    """
    sig = np.concatenate([[0.0], np.asarray(sigma_path, dtype=float)])
    if np.any(np.diff(sig) < 0):
        raise ValueError("sigma_path must be non-decreasing")
    t = np.asarray(t_grid, dtype=float)
    if np.any(t >= sig[-1]):
        raise TruncationError(
            f"calendar time {t.max():.6g} is not reached by the path (ends at {sig[-1]:.6g})"
        )
    k = np.searchsorted(sig, t, side="right")  # first index with sig > t
    lo, hi = sig[k - 1], sig[k]
    return ds * ((k - 1) + (t - lo) / (hi - lo))


def _chunk_len(alpha: float, tmax: float, ds: float) -> int:
    # aim for a few chunks per path at the typical clock value
    typical = tmax**alpha / math.gamma(1 + alpha) / ds
    return int(min(1024, max(32, typical / 4)))


def sample_inverse_stable(alpha: float, t_grid: Sequence[float], n_paths: int, ds: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Inverse stable subordinator at ``t_grid`` for ``n_paths`` paths.

    Vectorised version of :func:`invert_path`: all paths advance together in
    chunks and leave the active set once the last level is crossed.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) < 0) or np.any(t < 0):
        raise ValueError("t_grid must be non-negative and non-decreasing")
    out = np.full((n_paths, t.size), np.nan)
    out[:, t == 0.0] = 0.0
    sigma = np.zeros(n_paths)
    steps = np.zeros(n_paths, dtype=np.int64)
    active = np.arange(n_paths)
    if t.size == 0 or t[-1] == 0.0:
        return out
    chunk = _chunk_len(alpha, t[-1], ds)
    while active.size:
        inc = simulate_stable_increments(alpha, (active.size, chunk), ds, rng)
        cum = np.cumsum(inc, axis=1)
        cum += sigma[active, None]
        last = cum[:, -1]
        for j, tj in enumerate(t):
            if tj == 0.0:
                continue
            rows = np.flatnonzero(np.isnan(out[active, j]) & (last > tj))
            if rows.size == 0:
                continue
            c = cum[rows]
            k = np.sum(c <= tj, axis=1)  # first column with c > tj
            hi = c[np.arange(rows.size), k]
            lo = np.where(k > 0, c[np.arange(rows.size), k - 1], sigma[active[rows]])
            out[active[rows], j] = ds * (steps[active[rows]] + k + (tj - lo) / (hi - lo))
        sigma[active] = last
        steps[active] += chunk
        active = active[np.isnan(out[active, -1])]
    return out


# ---------------------------------------------------------------------------
# the outer process
# ---------------------------------------------------------------------------


def _smallest_rate(model: ModelSpec) -> float:
    ev = np.linalg.eigvals(generator_matrix(model, 1).A)
    nz = np.abs(ev.real[np.abs(ev) > 1e-12])
    if nz.size == 0:
        raise ValueError("model has no mean reversion; no stationary law")
    return float(nz.min())


def sample_stationary(model: ModelSpec, n: int, rng: np.random.Generator, dt: float = 1e-3) -> np.ndarray:
    """Draws from the stationary law, shape ``(n, state_dim)``.

    Exact where the law is classical (Gaussian OU, Gamma CIR, Beta Jacobi
    without jumps, Gaussian QTSM factor); otherwise a burn-in of
    ``20 / smallest rate`` operational time units from the mean.
    """
    if isinstance(model, Pearson) and model.a1 == 0 and model.a2 == 0:
        x = rng.normal(model.theta, math.sqrt(model.a0 / (2 * model.beta)), n)
        return x[:, None]
    if isinstance(model, Pearson) and model.a2 == 0 and model.a1 > 0:
        root = -model.a0 / model.a1
        shape = 2 * model.beta * (model.theta - root) / model.a1
        scale = model.a1 / (2 * model.beta)
        return (root + rng.gamma(shape, scale, n))[:, None]
    if isinstance(model, JacobiJump) and model.lam == 0:
        s2 = model.sigma**2
        x = rng.beta(2 * model.beta * model.theta / s2, 2 * model.beta * (1 - model.theta) / s2, n)
        return x[:, None]
    if isinstance(model, QTSM):
        y = rng.normal(model.b / model.beta, model.sigma / math.sqrt(2 * model.beta), n)
        return np.column_stack([y, model.short_rate(y)])
    if isinstance(model, BrownianMotion):
        raise ValueError("Brownian motion has no stationary law")
    burn = 20.0 / _smallest_rate(model)
    x0 = np.full((n, 1), float(getattr(model, "theta", 0.0)))
    return simulate_model(model, x0, np.full((n, 1), burn), dt, rng)[:, 0, :]


class _Stepper:
    """One Euler step for a model; counts guard activations."""

    def __init__(self, model: ModelSpec):
        self.model = model
        self.guards = 0
        self.steps = 0
        if isinstance(model, LevyOU):
            rate, m2 = model.jump_rate, model.levy_m2
            self.jump = math.sqrt(m2 / rate) if m2 > 0 else 0.0
            # the default symmetric law has m3 = 0, m4 = m2^2 / rate, ...
            for n, mn in enumerate(model.levy_moments, start=3):
                want = 0.0 if n % 2 else rate * self.jump**n
                if not math.isclose(mn, want, rel_tol=1e-9, abs_tol=1e-12):
                    raise ValueError(
                        f"levy moment m{n}={mn} does not match the simulated symmetric jump law ({want})"
                    )

    def __call__(self, x: np.ndarray, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        m = self.model
        n = x.shape[0]
        self.steps += n
        z = rng.standard_normal(n)
        sq = np.sqrt(h)
        if isinstance(m, BrownianMotion):
            return x + (sq * z)[:, None]
        if isinstance(m, QTSM):
            y = x[:, 0] + (m.b - m.beta * x[:, 0]) * h + m.sigma * sq * z
            return np.column_stack([y, m.short_rate(y)])
        xs = x[:, 0]
        if isinstance(m, Pearson):
            var = m.a0 + m.a1 * xs + m.a2 * xs * xs
            neg = var < 0
            self.guards += int(neg.sum())
            xn = xs - m.beta * (xs - m.theta) * h + np.sqrt(np.where(neg, 0.0, var)) * sq * z
        elif isinstance(m, JacobiJump):
            var = np.clip(xs * (1 - xs), 0.0, None)
            xn = xs - m.beta * (xs - m.theta) * h + m.sigma * np.sqrt(var) * sq * z
            out = (xn < 0) | (xn > 1)
            self.guards += int(out.sum())
            xn = np.clip(xn, 0.0, 1.0)
            if m.lam > 0:
                jumps = rng.poisson(m.lam * h)
                odd = (jumps % 2) == 1
                xn = np.where(odd, 1.0 - xn, xn)
        elif isinstance(m, LevyOU):
            dY = m.levy_b * h + m.levy_a * sq * z
            if self.jump > 0:
                k = rng.poisson(m.jump_rate * h)
                has = k > 0
                if has.any():
                    # net displacement of k symmetric +-J jumps: J (2 Bin(k, 1/2) - k)
                    kk = k[has]
                    dY[has] += self.jump * (2 * rng.binomial(kk, 0.5) - kk)
            xn = xs - m.beta * (xs - m.theta) * h + m.sigma * dY
        else:
            raise TypeError(f"no simulator for {type(m).__name__}")
        return xn[:, None]


def simulate_model(model: ModelSpec, x0: np.ndarray, targets: np.ndarray, dt: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Run the model in operational time and record it at per-path targets.

    ``x0`` has shape ``(n, state_dim)``; ``targets`` has shape ``(n, m)``
    with each row non-decreasing.  Returns ``(n, m, state_dim)``.
    """
    x = np.array(x0, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    targets = np.asarray(targets, dtype=float)
    n, m = targets.shape
    if np.any(np.diff(targets, axis=1) < 0):
        raise ValueError("targets must be non-decreasing along each path")
    if not np.all(np.isfinite(targets)):
        raise TruncationError("some clock values are missing")
    d = x.shape[1]
    out = np.empty((n, m, d))
    tau = np.zeros(n)
    nxt = np.zeros(n, dtype=np.int64)
    step = _Stepper(model)
    idx = np.arange(n)

    def record(ids):
        # paths sitting exactly on their next target(s)
        while ids.size:
            hit = ids[tau[ids] >= targets[ids, nxt[ids]]]
            if hit.size == 0:
                break
            out[hit, nxt[hit]] = x[hit]
            nxt[hit] += 1
            ids = hit[nxt[hit] < m]

    record(idx)
    active = idx[nxt < m]
    while active.size:
        goal = targets[active, nxt[active]]
        h = np.minimum(dt, goal - tau[active])
        x[active] = step(x[active], h, rng)
        landed = h >= goal - tau[active]
        tau[active] = np.where(landed, goal, tau[active] + h)
        record(active[landed])
        active = active[nxt[active] < m]
    if step.steps and step.guards / step.steps > CLAMP_WARN_RATE:
        warnings.warn(
            f"state guard engaged on {100 * step.guards / step.steps:.2f}% of steps; reduce dt",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def _initial(model: ModelSpec, x0, n: int, rng, dt: float) -> np.ndarray:
    if isinstance(x0, str):
        if x0 != "stationary":
            raise ValueError(f"unknown initial mode {x0!r}")
        return sample_stationary(model, n, rng, dt)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.shape != (model.state_dim,):
        raise ValueError(f"initial state must have {model.state_dim} components")
    return np.tile(x, (n, 1))


def _run_batches(fn: Callable[[int, np.random.Generator], np.ndarray], cfg: SimConfig) -> np.ndarray:
    batches = cfg.batches()
    if cfg.jobs == 1 or len(batches) == 1:
        parts = [fn(n, g) for n, g in batches]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            parts = list(pool.map(lambda b: fn(*b), batches))
    return np.concatenate(parts, axis=0)


def simulate_bundle(model: ModelSpec, x0, alpha: float, t_grid: Sequence[float], cfg: SimConfig) -> PathBundle:
    """Clock and outer process at ``t_grid`` for ``cfg.n_paths`` paths."""
    t = np.asarray(t_grid, dtype=float)
    order = np.argsort(t, kind="stable")
    ts = t[order]
    if ts.size and ts[-1] > cfg.horizon:
        raise TruncationError(f"calendar time {ts[-1]} exceeds the configured horizon {cfg.horizon}")

    def one(n, rng):
        L = sample_inverse_stable(alpha, ts, n, cfg.dt_subordinator, rng)
        X0 = _initial(model, x0, n, rng, cfg.dt_operational)
        X = simulate_model(model, X0, L, cfg.dt_operational, rng)
        return np.concatenate([L[:, :, None], X], axis=2)

    res = _run_batches(one, cfg)
    inv = np.argsort(order, kind="stable")
    return PathBundle(t, res[:, inv, 0], res[:, inv, 1:])


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _eval_poly(p: PolyVec, X: np.ndarray) -> np.ndarray:
    """Evaluate ``p`` at the rows of ``X`` (shape ``(n, d)``)."""
    ex = np.array(p.basis.ordering, dtype=float)
    nz = np.flatnonzero(p.coeffs)
    vals = np.zeros(X.shape[0])
    for i in nz:
        vals += p.coeffs[i] * np.prod(X ** ex[i], axis=1)
    return vals


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n))


def estimate(query: str, args: Mapping[str, Any], cfg: SimConfig) -> tuple[float, float]:
    """Monte-Carlo estimate and standard error of a closed-form quantity.

    ``query`` and required ``args``:

    * ``"moment"``: model, p, x, t, alpha -- ``E_x[p(X_{L_t})]``
    * ``"cross_moment"``: model, p, q, s, t, alpha -- stationary
      ``E[p(X_{L_{t+s}}) q(X_{L_t})]``
    * ``"increment_laplace"``: alpha, beta, s, t -- ``E[exp(-beta (L_{t+s} - L_t))]``
    """
    if query == "moment":
        t = float(args["t"])
        b = simulate_bundle(args["model"], args["x"], args["alpha"], [t], cfg)
        return _mean_se(_eval_poly(args["p"], b.X_samples[:, 0]))
    if query == "cross_moment":
        s, t = float(args["s"]), float(args["t"])
        b = simulate_bundle(args["model"], "stationary", args["alpha"], [t, t + s], cfg)
        vals = _eval_poly(args["p"], b.X_samples[:, 1]) * _eval_poly(args["q"], b.X_samples[:, 0])
        return _mean_se(vals)
    if query == "increment_laplace":
        s, t = float(args["s"]), float(args["t"])
        if s == 0.0:
            return 1.0, 0.0
        vals = increment_laplace_samples(args["alpha"], [args["beta"]], [(s, t)], cfg)
        return _mean_se(vals[:, 0, 0])
    raise ValueError(f"unknown query {query!r}")


def increment_laplace_samples(alpha: float, betas: Sequence[float], pairs: Sequence[tuple[float, float]],
                              cfg: SimConfig) -> np.ndarray:
    """Per-path ``exp(-beta (L_{t+s} - L_t))``, shape ``(n_paths, len(pairs), len(betas))``.

    All pairs share the same clock paths, so estimates across the grid are
    positively correlated but each one is unbiased.
    """
    levels = sorted({v for s, t in pairs for v in (t, t + s)})
    if levels and levels[-1] > cfg.horizon:
        raise TruncationError(f"calendar time {levels[-1]} exceeds the configured horizon {cfg.horizon}")
    pos = {v: i for i, v in enumerate(levels)}
    lo = [pos[t] for s, t in pairs]
    hi = [pos[t + s] for s, t in pairs]
    bet = np.asarray(betas, dtype=float)

    def one(n, rng):
        L = sample_inverse_stable(alpha, levels, n, cfg.dt_subordinator, rng)
        d = L[:, hi] - L[:, lo]
        return np.exp(-d[:, :, None] * bet[None, None, :])

    return _run_batches(one, cfg)


def moment_samples(model: ModelSpec, ps: Sequence[PolyVec], x, alpha: float, t_grid: Sequence[float],
                   cfg: SimConfig) -> np.ndarray:
    """Per-path ``p(X_{L_t})``, shape ``(n_paths, len(t_grid), len(ps))``."""
    b = simulate_bundle(model, x, alpha, t_grid, cfg)
    out = np.empty((b.X_samples.shape[0], len(t_grid), len(ps)))
    for j in range(len(t_grid)):
        for i, p in enumerate(ps):
            out[:, j, i] = _eval_poly(p, b.X_samples[:, j])
    return out


def export_csv(rows: Sequence[Mapping[str, Any]], cfg: SimConfig, path=None) -> str:
    """CSV with columns query, estimate, std_error, n_paths, seed."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query", "estimate", "std_error", "n_paths", "seed"])
    for r in rows:
        w.writerow([r["query"], f"{r['estimate']:.12g}", f"{r['std_error']:.12g}", cfg.n_paths, cfg.seed])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
