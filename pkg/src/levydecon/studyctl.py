"""Experiment orchestration: JSON configs, seeded replication, summaries, CLI.

A study simulates ``replications`` fields (replication ``i`` uses
``derived_seed(base_seed, i)``), runs the estimator for each ``l``, scores
``uv0_hat`` and its projection ``uv0_tilde`` against the analytic ``uv0`` in
``L^2(dx)`` and aggregates mean and sd of the squared errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import BoundaryLeakage, ConfigError, NumericalError
from .estimate import (
    EstimateResult,
    EstimatorConfig,
    calibrate_cutoff,
    decay_diagnostic,
    ecf,
    estimate,
    frequency_grid,
    l2_error,
    uv1_estimate,
    write_estimate_csv,
)
from .levy_model import (
    Kernel,
    LevyDensity,
    LevyTriplet,
    SimpleKernel,
    TemperedHalfGauss,
    field_density,
    kernel_from_dict,
    triplet_pushforward,
)
from .logfourier import LogGrid, SignedGridFunction
from .multiplier import (
    MultiplicativeWeight,
    check_injectivity,
    check_simple_condition,
    check_uniform_bound,
    default_probe,
    fit_lower_bound,
    multiplier_for,
)
from .simulate import FieldSample, GridSpec, derived_seed, read_field_csv, simulate_field, write_field_csv

__all__ = [
    "ModelConfig",
    "EstimatorSection",
    "StudyConfig",
    "StudyRow",
    "StudyResult",
    "load_config",
    "run_study",
    "run_calibration",
    "write_study",
    "emit_plotdata",
    "main",
    "THREADS_ENV",
]

log = logging.getLogger("levydecon")

THREADS_ENV = "LEVYDECON_THREADS"
# replication streams for calibration live far from the study's indices
_CALIBRATION_OFFSET = 2**40

_V0 = {"tempered_halfgauss": TemperedHalfGauss}


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# configuration


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ModelConfig:
    """``kernel`` is a kernel JSON object; ``a0`` is carried but unused."""

    kernel: dict = field(default_factory=lambda: {"type": "exp_trunc1d", "theta": 4.0})
    v0: str = "tempered_halfgauss"
    a0: float | None = None
    truncation_radius: float | None = None

    def __post_init__(self):
        if self.v0 not in _V0:
            raise ValueError(f"unknown v0 {self.v0!r}; choose from {sorted(_V0)}")
        kernel_from_dict(self.kernel)

    def build_kernel(self) -> Kernel:
        return kernel_from_dict(self.kernel)

    def build_v0(self) -> LevyDensity:
        return _V0[self.v0]()


@dataclass(frozen=True)
class EstimatorSection:
    """``a_n`` is a number, ``"auto"`` (rule from ``C_k``) or ``"calibrate"``."""

    l: tuple[int, ...] = (1, 2, 3)
    c: float = 0.0
    beta: float = 1.0
    signed: bool = True
    a_n: float | str = 0.5
    a: float = 0.5
    C_k: float = 0.8
    calibration_k: int = 10
    t_min: float = -12.0
    t_max: float = 12.0
    n_points: int = 4096
    y_per_l: int = 256

    def __post_init__(self):
        ls = tuple(int(v) for v in np.atleast_1d(self.l))
        object.__setattr__(self, "l", ls)
        if not ls or any(v < 1 for v in ls):
            raise ValueError("l values must be positive integers")
        if isinstance(self.a_n, str):
            if self.a_n not in ("auto", "calibrate"):
                raise ValueError("a_n must be a number, 'auto' or 'calibrate'")
        elif not float(self.a_n) > 0:
            raise ValueError("a_n must be positive")
        if self.calibration_k < 1:
            raise ValueError("calibration_k must be >= 1")
        LogGrid(self.t_min, self.t_max, self.n_points)

    @property
    def u(self) -> MultiplicativeWeight:
        return MultiplicativeWeight(self.beta, self.signed)

    @property
    def grid(self) -> LogGrid:
        return LogGrid(self.t_min, self.t_max, self.n_points)

    def config_for(self, l: int, a_n: float | None) -> EstimatorConfig:
        return EstimatorConfig(l=l, c=self.c, u=self.u, a_n=a_n, a=self.a, C_k=self.C_k, grid=self.grid,
                               y_per_l=self.y_per_l)


@dataclass(frozen=True)
class StudyConfig:
    name: str = "study"
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    replications: int = 100
    base_seed: int = 20240101
    threads: int | str = "auto"
    output_dir: str = "results"
    full: dict | None = None

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValueError("replications must be a positive integer")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")
        if not (self.threads == "auto" or (isinstance(self.threads, int) and self.threads >= 1)):
            raise ValueError("threads must be a positive integer or 'auto'")
        if self.grid.dimension != self.model.build_kernel().dimension:
            raise ValueError("grid dimension does not match kernel dimension")

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        for key, sub in (("model", ModelConfig), ("grid", GridSpec), ("estimator", EstimatorSection)):
            if key in data:
                data[key] = _build(sub, data[key], key)
        return _build(cls, data, "config")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": dataclasses.asdict(self.model),
            "grid": self.grid.to_dict(),
            "estimator": {**dataclasses.asdict(self.estimator), "l": list(self.estimator.l)},
            "replications": self.replications,
            "base_seed": int(self.base_seed),
            "threads": self.threads,
            "output_dir": self.output_dir,
            "full": self.full,
        }

    def config_hash(self) -> str:
        """sha256 over the fields that influence results."""
        d = self.to_dict()
        for k in ("threads", "output_dir", "full"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **kw) -> "StudyConfig":
        return dataclasses.replace(self, **kw)

    def at_full_scale(self) -> "StudyConfig":
        """Apply the ``full`` section (e.g. the 100x100, 100-replication setting)."""
        if not self.full:
            return self
        d = self.to_dict()
        for key, val in self.full.items():
            if isinstance(val, dict) and isinstance(d.get(key), dict):
                d[key] = {**d[key], **val}
            else:
                d[key] = val
        d["full"] = None
        return StudyConfig.from_dict(d)

    def resolve_threads(self) -> int:
        if self.threads != "auto":
            return int(self.threads)
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
            if n < 1:
                raise ConfigError(f"{THREADS_ENV} must be >= 1")
            return n
        return os.cpu_count() or 1


def load_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return StudyConfig.from_dict(data)


# ---------------------------------------------------------------------------
# study


@dataclass(frozen=True)
class StudyRow:
    estimator: str
    l: int
    mean_mse: float
    sd_mse: float
    mean_time_s: float
    sd_time_s: float


@dataclass
class StudyResult:
    rows: list[StudyRow]
    replications: list[dict]
    provenance: dict
    calibration: dict | None = None


class _Context:
    """Objects shared read-only by all replications."""

    def __init__(self, cfg: StudyConfig):
        self.cfg = cfg
        self.kernel = cfg.model.build_kernel()
        self.v0 = cfg.model.build_v0()
        est = cfg.estimator
        self.mu = multiplier_for(self.kernel, est.u, est.c)
        self.truth = SignedGridFunction.from_function(est.grid, self.v0.uv)

    def sample(self, seed: int) -> FieldSample:
        return simulate_field(self.kernel, self.v0, self.cfg.grid, seed,
                              truncation_radius=self.cfg.model.truncation_radius)


def _tag(exc: Exception, index: int) -> Exception:
    try:
        tagged = type(exc)(f"replication {index}: {exc}")
    except Exception:
        tagged = NumericalError(f"replication {index}: {exc}")
    tagged.__cause__ = exc
    return tagged


def _one_replication(ctx: _Context, index: int, a_n: float | None) -> list[dict]:
    seed = derived_seed(ctx.cfg.base_seed, index)
    try:
        t0 = time.perf_counter()
        sample = ctx.sample(seed)
        t_sim = time.perf_counter() - t0
        rows = []
        for l in ctx.cfg.estimator.l:
            ecfg = ctx.cfg.estimator.config_for(l, a_n)
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundaryLeakage)
                res = estimate(sample, ctx.mu, ecfg)
            elapsed = t_sim + time.perf_counter() - t0
            rows.append({
                "replication": index,
                "seed": seed,
                "l": l,
                "mse_hat": l2_error(res.uv0_hat, ctx.truth, 0.0) ** 2,
                "mse_tilde": l2_error(res.uv0_tilde, ctx.truth, 0.0) ** 2,
                "a_n": res.diagnostics["a_n"],
                "kept_fraction": res.diagnostics["kept_fraction"],
                "leakage": res.diagnostics["leakage_forward"],
                "time_s": elapsed,
            })
        return rows
    except Exception as exc:  # a failed replication aborts the study
        raise _tag(exc, index) from exc


def _pool_map(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_calibration(cfg: StudyConfig, ctx: _Context | None = None, threads: int = 1) -> dict:
    """Calibrate ``C_k`` on ``calibration_k`` replicates for the first ``l``.

    Calibration replicates use seeds disjoint from the study's.
    """
    ctx = ctx or _Context(cfg)
    est = cfg.estimator
    l = est.l[1] if len(est.l) > 1 and 2 in est.l else est.l[0]
    ecfg = est.config_for(l, 1.0)
    y = frequency_grid(l, est.y_per_l)

    def uv1_of(i):
        s = ctx.sample(derived_seed(cfg.base_seed, _CALIBRATION_OFFSET + i))
        return uv1_estimate(ecf(s, y), ecfg)

    uv1s = _pool_map(uv1_of, list(range(est.calibration_k)), threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLeakage)
        cal = calibrate_cutoff(uv1s, ctx.truth, ctx.mu, cfg.grid.n, est.a, ecfg)
    return {"l": l, "k": est.calibration_k, "C_k": cal.C_k, "a_n": cal.a_n, "argmin": cal.argmin}


def run_study(cfg: StudyConfig, threads: int | None = None) -> StudyResult:
    """Simulate, estimate for every ``l`` and aggregate the squared errors."""
    threads = cfg.resolve_threads() if threads is None else int(threads)
    ctx = _Context(cfg)
    est = cfg.estimator
    calibration = None
    if est.a_n == "calibrate":
        calibration = run_calibration(cfg, ctx, threads)
        a_n: float | None = calibration["a_n"]
    elif est.a_n == "auto":
        a_n = None
    else:
        a_n = float(est.a_n)
    log.info("study %s: %d replications on %d thread(s)", cfg.name, cfg.replications, threads)
    per_rep = _pool_map(lambda i: _one_replication(ctx, i, a_n), list(range(cfg.replications)), threads)
    reps = [row for rows in per_rep for row in rows]
    rows = []
    for l in est.l:
        sel = [r for r in reps if r["l"] == l]
        times = np.array([r["time_s"] for r in sel])
        for name in ("hat", "tilde"):
            mse = np.array([r[f"mse_{name}"] for r in sel])
            rows.append(StudyRow(
                name, l, float(mse.mean()), float(mse.std(ddof=1)) if mse.size > 1 else 0.0,
                float(times.mean()), float(times.std(ddof=1)) if times.size > 1 else 0.0,
            ))
    grid = est.grid
    provenance = {
        "config_hash": cfg.config_hash(),
        "base_seed": int(cfg.base_seed),
        "seed_scheme": "SeedSequence(base_seed, spawn_key=(i,)).generate_state(1, uint64)[0]; numpy default_rng",
        "version": __version__,
        "log_grid": [grid.t_min, grid.t_max, grid.n_points],
        "error_norm": "L2(dx) over the log grid, both branches",
    }
    return StudyResult(rows, reps, provenance, calibration)


_SUMMARY_COLS = ("estimator", "l", "mean_mse", "sd_mse", "mean_time_s", "sd_time_s")
_REP_COLS = ("replication", "seed", "l", "mse_hat", "mse_tilde", "a_n", "kept_fraction", "leakage", "time_s")


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def _write_csv(path: Path, cols: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    try:
        with path.open("w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(_cell(v) for v in r) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_summary_csv(rows: Sequence[StudyRow], path: str | Path) -> Path:
    return _write_csv(Path(path), _SUMMARY_COLS, [dataclasses.astuple(r) for r in rows])


def write_study(result: StudyResult, cfg: StudyConfig, out_dir: str | Path) -> Path:
    """``summary.csv``, ``replications.csv`` and ``study.json`` in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(result.rows, out / "summary.csv")
    _write_csv(out / "replications.csv", _REP_COLS, [[r[c] for c in _REP_COLS] for r in result.replications])
    meta = {
        "config": cfg.to_dict(),
        "provenance": result.provenance,
        "calibration": result.calibration,
        "summary": [dataclasses.asdict(r) for r in result.rows],
    }
    (out / "study.json").write_text(json.dumps(meta, indent=2, default=float) + "\n")
    return out


def emit_plotdata(
    out_dir: str | Path,
    sample: FieldSample | None = None,
    result: EstimateResult | None = None,
    truth: SignedGridFunction | None = None,
    rows: Sequence[StudyRow] = (),
) -> Path:
    """``trajectory.csv``, ``estimate.csv`` and ``summary.csv`` (headers only when empty)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if sample is not None:
        idx = sample.grid.indices()
        traj = [list(i) + [v] for i, v in zip(idx, sample.values)]
        d = sample.grid.dimension
    else:
        traj, d = [], 1
    cols = ["j"] if d == 1 else ["j1", "j2"]
    _write_csv(out / "trajectory.csv", cols + ["value"], traj)
    if result is not None:
        write_estimate_csv(result, out / "estimate.csv", truth)
    else:
        _write_csv(out / "estimate.csv", ["x", "uv1_hat", "uv0_hat", "uv0_tilde", "uv0_true"], [])
    write_summary_csv(rows, out / "summary.csv")
    return out


# ---------------------------------------------------------------------------
# CLI


def _cmd_simulate(cfg: StudyConfig, out: Path, args) -> None:
    ctx = _Context(cfg)
    sample = ctx.sample(derived_seed(cfg.base_seed, 0))
    out.mkdir(parents=True, exist_ok=True)
    write_field_csv(sample, out / "field.csv")
    emit_plotdata(out, sample)


def _cmd_estimate(cfg: StudyConfig, out: Path, args) -> None:
    ctx = _Context(cfg)
    sample = read_field_csv(args.input) if args.input else ctx.sample(derived_seed(cfg.base_seed, 0))
    est = cfg.estimator
    a_n = None if est.a_n == "auto" else (run_calibration(cfg, ctx)["a_n"] if est.a_n == "calibrate" else float(est.a_n))
    out.mkdir(parents=True, exist_ok=True)
    first = None
    errors = {}
    for l in est.l:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryLeakage)
            res = estimate(sample, ctx.mu, est.config_for(l, a_n))
        write_estimate_csv(res, out / f"estimate_l{l}.csv", ctx.truth)
        errors[l] = {"mse_hat": l2_error(res.uv0_hat, ctx.truth) ** 2, "mse_tilde": l2_error(res.uv0_tilde, ctx.truth) ** 2,
                     **{k: v for k, v in res.diagnostics.items() if k != "grid"}}
        first = first or res
    emit_plotdata(out, sample, first, ctx.truth)
    (out / "estimate.json").write_text(json.dumps({"seed": sample.seed, "errors": errors}, indent=2, default=float) + "\n")


def _cmd_study(cfg: StudyConfig, out: Path, args) -> None:
    result = run_study(cfg, args.threads)
    write_study(result, cfg, out)
    for r in result.rows:
        print(f"{r.estimator:>5} l={r.l} mean_mse={r.mean_mse:.6g} sd={r.sd_mse:.6g}")


def _cmd_multiplier(cfg: StudyConfig, out: Path, args) -> None:
    kernel = cfg.model.build_kernel()
    est = cfg.estimator
    m = multiplier_for(kernel, est.u, est.c)
    probe = default_probe()
    inj = check_injectivity(m, probe)
    ub = check_uniform_bound(m, probe)
    report: dict[str, Any] = {
        "kernel": kernel.kernel_id,
        "provenance": m.provenance,
        "bound": m.bound,
        "injectivity": {"ae_nonvanishing": inj.ae_nonvanishing, "min_abs": inj.min_abs,
                        "zeros": inj.zero_locations[:100].tolist(), "kind": inj.kind},
        "uniform_bound": {"bounded_below": ub.bounded_below, "inf_abs": ub.inf_abs, "tail_limit": ub.tail_limit},
    }
    try:
        cert = fit_lower_bound(m, 1.0, probe)
        report["lower_bound"] = {"gamma": cert.gamma, "alpha1": cert.alpha1, "analytic_gamma": cert.analytic_gamma}
    except NumericalError as exc:
        report["lower_bound"] = {"error": str(exc)}
    if isinstance(kernel, SimpleKernel):
        vals, meas = kernel.level_atoms()
        report["simple_condition"] = [dataclasses.asdict(check_simple_condition(vals, meas, est.u, est.c, p))
                                      for p in range(vals.size)]
    out.mkdir(parents=True, exist_ok=True)
    x = np.linspace(-50, 50, 2001)
    mp, mm = m(x)
    _write_csv(out / "multiplier.csv", ["x", "re_m_plus", "im_m_plus", "re_m_minus", "im_m_minus"],
               np.stack([x, mp.real, mp.imag, mm.real, mm.imag], axis=1).tolist())
    (out / "multiplier.json").write_text(json.dumps(report, indent=2, default=float) + "\n")
    print(json.dumps({k: report[k] for k in ("injectivity", "uniform_bound")}, default=float))


def _cmd_diagnose(cfg: StudyConfig, out: Path, args) -> None:
    ctx = _Context(cfg)
    grid = cfg.estimator.grid
    v1 = field_density(ctx.v0, ctx.kernel)
    uv1 = SignedGridFunction.from_function(grid, v1.uv)
    rep = decay_diagnostic(uv1, args.x_max)
    t0 = LevyTriplet(a=cfg.model.a0 or 0.0, b=0.0, v=ctx.v0)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "decay.csv", ["x", "I"], np.stack([rep.x, rep.curve], axis=1).tolist())
    info = {"bounded": rep.bounded, "fitted_b": rep.fitted_b, "se_b": rep.se_b, "I_at_x_max": float(rep.curve[-1]),
            "a1": triplet_pushforward(t0, ctx.kernel).a if cfg.model.a0 is not None else None}
    (out / "diagnose.json").write_text(json.dumps(info, indent=2, default=float) + "\n")
    print(json.dumps(info, default=float))


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "study": _cmd_study,
    "multiplier": _cmd_multiplier,
    "diagnose": _cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levydecon", description="Lévy density deconvolution for moving-average fields")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON study configuration")
        s.add_argument("--out", help="output directory (default: config output_dir)")
        s.add_argument("--seed", type=int, help="override base_seed")
        s.add_argument("--full", action="store_true", help="apply the config's full-scale section")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "study":
            s.add_argument("--threads", type=int, help="worker threads (default: config / $%s)" % THREADS_ENV)
        if name == "estimate":
            s.add_argument("--input", help="field CSV to estimate from instead of simulating")
        if name == "diagnose":
            s.add_argument("--x-max", type=float, default=1e5, dest="x_max")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.full:
            cfg = cfg.at_full_scale()
        if args.seed is not None:
            cfg = StudyConfig.from_dict({**cfg.to_dict(), "base_seed": args.seed})
        out = Path(args.out or cfg.output_dir)
        _COMMANDS[args.command](cfg, out, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError) as exc:
        # invariant violations surfaced while assembling components from the config
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0
