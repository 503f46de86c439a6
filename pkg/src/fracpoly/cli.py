"""Batch front end: read a TOML/JSON job file, compute, write CSV or JSON.

Job file layout::

    [model]            # kind plus flat parameters, e.g. kind = "Pearson"
    [query]            # kind = moments | correlation | cross-moments | simulate | validate
    [grids]            # t, s, alpha lists
    [sim]              # Monte-Carlo settings
    [output]           # path, format = "csv" | "json"

Exit codes: 0 ok, 1 configuration error, 2 numerical failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .equilibrium import correlation, cross_moment, fhat_scalar, lrd_asymptote, make_context
from .fracmoments import moment_fractional
from .models import EigenSolverError, model_from_config
from .montecarlo import SimConfig, TruncationError, increment_laplace_samples, moment_samples
from .polybasis import PolyVec, build_basis, monomial, polyvec_from_mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3

COLUMNS = {
    "moments": ["t", "alpha", "value"],
    "correlation": ["s", "t", "alpha", "corr", "lrd_asymptote", "ratio"],
    "cross-moments": ["s", "t", "value_fractional", "value_classical"],
    "simulate": ["query", "estimate", "std_error", "n_paths", "seed"],
    "validate": ["quantity", "closed_form", "estimate", "std_error", "z_score", "pass"],
}

SECTIONS = {"model", "query", "grids", "sim", "output"}
QUERY_KEYS = {"kind", "p", "q", "x", "max_degree", "beta", "z_max"}
GRID_KEYS = {"t", "s", "alpha"}
SIM_KEYS = {"n_paths", "dt_operational", "dt_subordinator", "seed", "horizon", "batch_size"}
OUTPUT_KEYS = {"path", "format"}


class ConfigError(ValueError):
    """Invalid job file; the message starts with the offending key path."""


class NumericalFailure(ArithmeticError):
    pass


@dataclass
class Job:
    kind: str
    model: Any
    query: dict
    grids: dict
    sim: SimConfig
    out_path: Path | None
    out_format: str
    jobs: int = 1
    max_degree: int = 6


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def load_config(path: Path) -> dict:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config: parse error: {exc}") from exc


def _reject_unknown(section: Mapping, allowed: set, where: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown key")


def _float_list(grids: Mapping, key: str, *, required: bool) -> list[float]:
    if key not in grids:
        if required:
            raise ConfigError(f"grids.{key}: missing")
        return []
    vals = grids[key]
    if not isinstance(vals, list):
        vals = [vals]
    try:
        out = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"grids.{key}: expected a list of numbers") from None
    if required and not out:
        raise ConfigError(f"grids.{key}: empty grid")
    if any(not math.isfinite(v) or v < 0 for v in out):
        raise ConfigError(f"grids.{key}: values must be finite and non-negative")
    return out


def _poly(spec, d: int, where: str, max_degree: int) -> PolyVec:
    if isinstance(spec, (int, float)) and d == 1:
        spec = {str(int(spec)): 1.0}  # shorthand: p = 2 means x^2
    if not isinstance(spec, Mapping) or not spec:
        raise ConfigError(f"{where}: expected a non-empty table of monomial coefficients")
    try:
        p = polyvec_from_mapping(spec, d)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if p.degree > max_degree:
        raise ConfigError(f"{where}: degree {p.degree} exceeds max_degree {max_degree}")
    return p


def parse_job(cfg: Mapping, *, output: str | None = None, seed: int | None = None, jobs: int = 1) -> Job:
    _reject_unknown(cfg, SECTIONS, "config")
    query = dict(cfg.get("query", {}))
    _reject_unknown(query, QUERY_KEYS, "query")
    kind = query.get("kind")
    if kind not in COLUMNS:
        raise ConfigError(f"query.kind: expected one of {sorted(COLUMNS)}, got {kind!r}")
    max_degree = query.get("max_degree", 6)
    if not isinstance(max_degree, int) or max_degree < 1:
        raise ConfigError("query.max_degree: expected a positive integer")

    model = None
    if "model" in cfg:
        try:
            model = model_from_config(cfg["model"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"model: {exc}") from exc
    elif kind != "validate":
        raise ConfigError("model: missing section")

    grids = dict(cfg.get("grids", {}))
    _reject_unknown(grids, GRID_KEYS, "grids")
    g = {
        "t": _float_list(grids, "t", required=kind != "validate" or "t" in grids),
        "s": _float_list(grids, "s", required=kind in ("correlation", "cross-moments")),
        "alpha": _float_list(grids, "alpha", required=kind != "validate" or "alpha" in grids),
    }
    for a in g["alpha"]:
        if not 0.0 < a < 1.0:
            raise ConfigError(f"grids.alpha: {a} is not in (0, 1)")
    if kind == "validate":
        g = {"t": g["t"] or [1.0], "s": g["s"] or [1.0], "alpha": g["alpha"] or [0.5]}
    if kind == "cross-moments" and len(g["alpha"]) != 1:
        raise ConfigError("grids.alpha: cross-moments takes exactly one alpha (the CSV has no alpha column)")

    d = model.state_dim if model is not None else 1
    q = {}
    if kind in ("moments", "simulate"):
        q["p"] = _poly(query.get("p", {"1": 1.0} if d == 1 else None), d, "query.p", max_degree)
        if "x" not in query:
            raise ConfigError("query.x: missing initial state")
        q["x"] = _state(query["x"], d)
    elif kind == "cross-moments":
        q["p"] = _poly(query.get("p", 1 if d == 1 else None), d, "query.p", max_degree)
        q["q"] = _poly(query.get("q", 1 if d == 1 else None), d, "query.q", max_degree)
        if max(q["p"].degree, q["q"].degree, 1) * 2 > max_degree:
            raise ConfigError(f"query.p: cross-moments need degree 2k <= max_degree {max_degree}")
    elif kind == "validate":
        if model is not None:
            q["p"] = _poly(query.get("p", 1 if d == 1 else None), d, "query.p", max_degree)
            if "x" not in query:
                raise ConfigError("query.x: missing initial state")
            q["x"] = _state(query["x"], d)
        q["beta"] = float(query.get("beta", 1.0))
        q["z_max"] = float(query.get("z_max", 3.0))
    elif kind == "correlation" and d != 1:
        raise ConfigError("model: correlation jobs need a one-dimensional model")

    sim = dict(cfg.get("sim", {}))
    _reject_unknown(sim, SIM_KEYS, "sim")
    if seed is not None:
        sim["seed"] = seed
    sim.setdefault("horizon", max(g["t"] + [0.0]) + max(g["s"] + [0.0]) + 1.0)
    try:
        simcfg = SimConfig(**sim, jobs=jobs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from exc

    out = dict(cfg.get("output", {}))
    _reject_unknown(out, OUTPUT_KEYS, "output")
    path = output if output is not None else out.get("path")
    fmt = out.get("format")
    if fmt is None:
        fmt = "json" if path is not None and str(path).endswith(".json") else "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output.format: expected csv or json, got {fmt!r}")
    return Job(kind, model, q, g, simcfg, Path(path) if path else None, fmt, jobs, max_degree)


def _state(x, d: int):
    vals = x if isinstance(x, list) else [x]
    if len(vals) != d:
        raise ConfigError(f"query.x: expected {d} components")
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError("query.x: expected numbers") from None
    return vals[0] if d == 1 else tuple(vals)


# ---------------------------------------------------------------------------
# job runners
# ---------------------------------------------------------------------------


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_moments(job: Job) -> list[list]:
    pts = [(t, a) for a in job.grids["alpha"] for t in job.grids["t"]]
    vals = _pmap(lambda ta: moment_fractional(job.model, job.query["p"], job.query["x"], ta[0], ta[1]), pts, job.jobs)
    return [[t, a, v] for (t, a), v in zip(pts, vals)]


def run_correlation(job: Job) -> list[list]:
    ctx = make_context(job.model, 1)
    beta = -float(np.min(np.linalg.eigvals(ctx.A_k.A).real))
    pts = [(s, t, a) for a in job.grids["alpha"] for t in job.grids["t"] for s in job.grids["s"]]

    def one(p):
        s, t, a = p
        c = correlation(ctx, s, t, a)
        r = lrd_asymptote(a, beta, s, t)
        return [s, t, a, c, r, c / r]

    return _pmap(one, pts, job.jobs)


def run_cross(job: Job) -> list[list]:
    p, q = job.query["p"], job.query["q"]
    k = max(p.degree, q.degree, 1)
    ctx = make_context(job.model, k)
    a = job.grids["alpha"][0]
    pts = [(s, t) for t in job.grids["t"] for s in job.grids["s"]]
    return _pmap(
        lambda st: [st[0], st[1], cross_moment(ctx, p, q, st[0], st[1], a), cross_moment(ctx, p, q, st[0], st[1], None)],
        pts,
        job.jobs,
    )


def _poly_label(p: PolyVec) -> str:
    """Readable polynomial, e.g. ``x^2`` or ``0.5*x1*x2``."""
    d = p.basis.d
    names = ["x"] if d == 1 else [f"x{i + 1}" for i in range(d)]
    terms = []
    for e, c in zip(p.basis.ordering, p.coeffs):
        if c == 0.0:
            continue
        mon = "*".join(n if k == 1 else f"{n}^{k}" for n, k in zip(names, e) if k > 0) or "1"
        terms.append(mon if c == 1.0 else f"{c:g}*{mon}")
    return " + ".join(terms) or "0"


def run_simulate(job: Job) -> list[list]:
    rows = []
    for a in job.grids["alpha"]:
        v = moment_samples(job.model, [job.query["p"]], job.query["x"], a, job.grids["t"], job.sim)
        for j, t in enumerate(job.grids["t"]):
            col = v[:, j, 0]
            rows.append([
                f"moment(p={_poly_label(job.query['p'])},t={t:g},alpha={a:g})",
                float(col.mean()),
                float(col.std(ddof=1) / math.sqrt(col.size)),
                job.sim.n_paths,
                job.sim.seed,
            ])
    return rows


def default_zoo() -> list[tuple[str, Any, list[PolyVec], Any]]:
    """Models, test polynomials and starting points of the default validation suite."""
    from .models import QTSM, BrownianMotion, JacobiJump, LevyOU, Pearson

    b2 = build_basis(1, 2)
    x, x2 = monomial(b2, (1,)), monomial(b2, (2,))
    q2 = build_basis(2, 1)
    y, r = monomial(q2, (1, 0)), monomial(q2, (0, 1))
    qtsm = QTSM(b=0.1, beta=1.0, sigma=0.3, R0=0.02, R1=0.1, R2=0.5)
    return [
        ("BrownianMotion", BrownianMotion(), [x2], 0.0),
        ("Pearson-OU", Pearson(beta=1.0, theta=0.5, a0=0.5), [x, x2], 1.0),
        ("Pearson-CIR", Pearson(beta=1.0, theta=1.0, a0=0.0, a1=0.5), [x, x2], 0.5),
        ("JacobiJump", JacobiJump(beta=1.0, theta=0.3, sigma=0.5, lam=0.7), [x, x2], 0.8),
        ("LevyOU", LevyOU(beta=1.0, theta=0.5, sigma=0.5, levy_b=0.1, levy_a=0.5, levy_m2=0.4, jump_rate=2.0), [x, x2], 0.2),
        ("QTSM", qtsm, [y, r], (0.3, qtsm.short_rate(0.3))),
    ]


def run_validate(job: Job) -> list[list]:
    ts, alphas = job.grids["t"], job.grids["alpha"]
    if job.model is not None:
        suite = [(job.model.kind, job.model, [job.query["p"]], job.query["x"])]
    else:
        suite = default_zoo()
    rows = []
    for name, model, ps, x0 in suite:
        for a in alphas:
            v = moment_samples(model, ps, x0, a, ts, job.sim)
            for j, t in enumerate(ts):
                for i, p in enumerate(ps):
                    col = v[:, j, i]
                    est = float(col.mean())
                    se = float(col.std(ddof=1) / math.sqrt(col.size))
                    closed = moment_fractional(model, p, x0, t, a)
                    rows.append(_vrow(f"{name}:moment(p={_poly_label(p)},t={t:g},alpha={a:g})", closed, est, se, job))
    beta = job.query["beta"]
    pairs = [(s, t) for t in ts for s in job.grids["s"]]
    for a in alphas:
        vals = increment_laplace_samples(a, [beta], pairs, job.sim)
        for j, (s, t) in enumerate(pairs):
            col = vals[:, j, 0]
            est = float(col.mean())
            se = float(col.std(ddof=1) / math.sqrt(col.size))
            rows.append(_vrow(f"increment_laplace(beta={beta:g},s={s:g},t={t:g},alpha={a:g})",
                              fhat_scalar(a, beta, s, t), est, se, job))
    return rows


def _vrow(name: str, closed: float, est: float, se: float, job: Job) -> list:
    if se > 0:
        z = (est - closed) / se
    else:
        z = 0.0 if abs(est - closed) <= 1e-12 * max(1.0, abs(closed)) else math.inf
    return [name, closed, est, se, z, "pass" if abs(z) <= job.query["z_max"] else "fail"]


RUNNERS = {
    "moments": run_moments,
    "correlation": run_correlation,
    "cross-moments": run_cross,
    "simulate": run_simulate,
    "validate": run_validate,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def render(kind: str, rows: Sequence[Sequence], fmt: str) -> str:
    cols = COLUMNS[kind]
    text_rows = [[_fmt(v) for v in r] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows(text_rows)
        return buf.getvalue()
    # JSON mirrors the CSV cells: numbers parsed back from their 12-digit text
    recs = []
    for r in text_rows:
        rec = {}
        for c, cell in zip(cols, r):
            try:
                num = float(cell)
                rec[c] = int(cell) if cell.lstrip("-").isdigit() else num
            except ValueError:
                rec[c] = cell
        recs.append(rec)
    return json.dumps({"kind": kind, "columns": cols, "rows": recs}, indent=2, allow_nan=True) + "\n"


def run(config_path, *, output: str | None = None, seed: int | None = None, jobs: int = 1,
        stdout=None) -> int:
    """Execute a job file; returns the process exit status."""
    stdout = stdout if stdout is not None else sys.stdout
    try:
        job = parse_job(load_config(Path(config_path)), output=output, seed=seed, jobs=jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = RUNNERS[job.kind](job)
    except (ArithmeticError, EigenSolverError, TruncationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {job.kind}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"numerical failure in {job.kind}: invalid input: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = render(job.kind, rows, job.out_format)
    if job.out_path is None:
        stdout.write(text)
    else:
        job.out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(job.out_path, "w", newline="") as fh:
            fh.write(text)
    if job.kind == "validate" and any(r[-1] != "pass" for r in rows):
        failed = [r[0] for r in rows if r[-1] != "pass"]
        print(f"validation failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fracpoly", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="TOML or JSON job file")
    parser.add_argument("--output", help="output path (overrides [output].path; stdout if neither)")
    parser.add_argument("--seed", type=int, help="Monte-Carlo seed override (unsigned 64-bit)")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for grid points and path batches")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.jobs < 1:
        parser.error("--jobs must be positive")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    return run(args.config, output=args.output, seed=args.seed, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
