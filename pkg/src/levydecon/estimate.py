"""Estimation pipeline: ECF -> uv1 -> regularized inversion -> uv0.

``uv1`` is estimated from the empirical characteristic function through
``F_+[uv1] = theta / psi`` and a truncated inverse Fourier integral over
``[-pi l, pi l]``.  ``uv0`` is then obtained by dividing by the multiplier
``mu_f`` in the multiplicative Fourier domain, keeping only frequencies with
``|mu_f| > a_n``, and optionally projecting onto the sign of ``u``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BoundaryLeakage, DegenerateSearch, EmptySpectrum, GridMismatch
from .logfourier import (
    DEFAULT_GRID,
    LEAKAGE_TOL,
    LogGrid,
    SignedGridFunction,
    check_boundary,
    mult_fourier,
    mult_fourier_inv,
    weight_map,
)
from .multiplier import MultiplicativeWeight, MultiplierFunction
from .simulate import FieldSample

__all__ = [
    "EcfSample",
    "EstimatorConfig",
    "EstimateResult",
    "CalibrationResult",
    "DecayReport",
    "ecf",
    "frequency_grid",
    "fourier_plus",
    "uv1_estimate",
    "uv0_plugin",
    "nonneg_project",
    "estimate",
    "a_n_rule",
    "argmin_cutoff",
    "cutoff_candidates",
    "calibrate_cutoff",
    "l2_error",
    "decay_diagnostic",
    "write_estimate_csv",
]


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class EcfSample:
    """Empirical ``psi(y) = mean exp(i y Y)`` and ``theta(y) = mean Y exp(i y Y)``."""

    y_grid: np.ndarray = field(repr=False)
    psi_hat: np.ndarray = field(repr=False)
    theta_hat: np.ndarray = field(repr=False)
    n: int

    def __post_init__(self):
        for name in ("y_grid", "psi_hat", "theta_hat"):
            a = np.array(getattr(self, name), dtype=float if name == "y_grid" else complex)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (self.y_grid.shape == self.psi_hat.shape == self.theta_hat.shape):
            raise ValueError("ECF arrays must share one shape")
        if self.n < 1:
            raise ValueError("sample size must be >= 1")


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs of the estimator.

    ``a_n = None`` selects the rule ``a_n = C_k^(1/2) n^(-a/(4a+2))``.
    ``y_per_l`` is the number of frequency cells per unit of ``l`` on
    ``[0, pi l]`` (so ``2 y_per_l l + 1`` nodes in total).
    """

    l: int = 2
    c: float = 0.0
    u: MultiplicativeWeight = MultiplicativeWeight(1.0, True)
    a_n: float | None = 0.5
    a: float = 0.5
    C_k: float = 0.8
    grid: LogGrid = DEFAULT_GRID
    y_per_l: int = 256
    leakage_tol: float = LEAKAGE_TOL

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 1:
            raise ValueError("l must be a positive integer")
        if self.a_n is not None and not self.a_n > 0:
            raise ValueError("a_n must be positive")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.y_per_l < 64:
            raise ValueError("need at least 64 frequency cells per unit of l")

    def resolve_a_n(self, n: int) -> float:
        return float(self.a_n) if self.a_n is not None else a_n_rule(self.C_k, n, self.a)


@dataclass(frozen=True)
class EstimateResult:
    uv1_hat: SignedGridFunction
    uv0_hat: SignedGridFunction
    uv0_tilde: SignedGridFunction
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CalibrationResult:
    C_k: float
    a_n: float
    argmin: float
    candidates: np.ndarray = field(repr=False)
    errors: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DecayReport:
    x: np.ndarray = field(repr=False)
    curve: np.ndarray = field(repr=False)
    bounded: bool
    fitted_b: float
    se_b: float


# ---------------------------------------------------------------------------
# Filon quadrature for piecewise-linear integrands


def _moments(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``E0 = int_0^1 e^{i theta s} ds`` and ``E1 = int_0^1 s e^{i theta s} ds``."""
    small = np.abs(theta) < 1e-2
    ts = np.where(small, 1.0, theta)
    e = np.exp(1j * ts)
    E0 = (e - 1.0) / (1j * ts)
    E1 = e / (1j * ts) + (e - 1.0) / (ts * ts)
    if np.any(small):
        z = 1j * theta[small]
        s0 = np.zeros(z.shape, dtype=complex)
        s1 = np.zeros(z.shape, dtype=complex)
        term = np.ones(z.shape, dtype=complex)  # z^k / k!
        for k in range(8):
            s0 += term / (k + 1)
            s1 += term / (k + 2)
            term = term * z / (k + 1)
        E0[small], E1[small] = s0, s1
    return E0, E1


def _filon(nodes: np.ndarray, values: np.ndarray, omega: np.ndarray, block: int = 512) -> np.ndarray:
    """``int e^{i omega s} g(s) ds`` for ``g`` linear between ``nodes``."""
    a, b = nodes[:-1], nodes[1:]
    L = b - a
    ga, gb = values[:-1], values[1:]
    out = np.empty(omega.size, dtype=complex)
    for i in range(0, omega.size, block):
        w = omega[i : i + block, None]
        E0, E1 = _moments(w * L)
        out[i : i + block] = (L * np.exp(1j * w * a) * (ga * (E0 - E1) + gb * E1)).sum(axis=1)
    return out


def _filon_uniform_pair(y: np.ndarray, F: np.ndarray, omega: np.ndarray, block: int = 1024):
    """``_filon`` at ``+omega`` and ``-omega`` for uniform ``y``.

    On a uniform grid the segment sum collapses to the two trigonometric
    sums ``sum_k F_k e^{+-i omega y_k}`` times per-frequency Filon weights.
    """
    dy = y[1] - y[0]
    plus = np.empty(omega.size, dtype=complex)
    minus = np.empty(omega.size, dtype=complex)
    for i in range(0, omega.size, block):
        w = omega[i : i + block]
        arg = np.outer(w, y)
        cF, sF = np.cos(arg) @ F, np.sin(arg) @ F
        for sign, out in ((1.0, plus), (-1.0, minus)):
            ws = sign * w
            S = cF + 1j * sign * sF
            first = F[0] * np.exp(1j * ws * y[0])
            last = F[-1] * np.exp(1j * ws * y[-1])
            E0, E1 = _moments(ws * dy)
            out[i : i + block] = dy * ((E0 - E1) * (S - last) + E1 * np.exp(-1j * ws * dy) * (S - first))
    return plus, minus


# ---------------------------------------------------------------------------
# uv1


def frequency_grid(l: int, per_l: int = 256) -> np.ndarray:
    """Uniform nodes on ``[-pi l, pi l]`` with ``per_l l`` cells on each half.

    The grid is exactly symmetric, ``y[::-1] == -y``.
    """
    m = int(per_l) * int(l)
    half = np.linspace(0.0, math.pi * l, m + 1)
    return np.concatenate([-half[:0:-1], half])


def _values(sample) -> np.ndarray:
    vals = sample.values if isinstance(sample, FieldSample) else np.asarray(sample, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("empty sample")
    return vals


def ecf(sample: FieldSample | np.ndarray, y_grid) -> EcfSample:
    """Empirical characteristic function and its ``-i`` derivative.

    Sums are formed once per distinct ``|y|`` from ``cos`` and ``sin`` of
    ``|y| Y``, and the sign of ``y`` is applied afterwards, so
    ``psi(-y) = conj psi(y)`` holds bit for bit.
    """
    Y = _values(sample)
    y = np.asarray(y_grid, dtype=float).ravel()
    ay, inv = np.unique(np.abs(y), return_inverse=True)
    sgn = np.where(y < 0, -1.0, 1.0)
    c_mean, s_mean = np.empty(ay.size), np.empty(ay.size)
    c_first, s_first = np.empty(ay.size), np.empty(ay.size)
    step = max(1, 4_000_000 // Y.size)
    for i in range(0, ay.size, step):
        arg = np.outer(ay[i : i + step], Y)
        cs, sn = np.cos(arg), np.sin(arg)
        c_mean[i : i + step], s_mean[i : i + step] = cs.mean(axis=1), sn.mean(axis=1)
        c_first[i : i + step], s_first[i : i + step] = (cs @ Y) / Y.size, (sn @ Y) / Y.size
    psi = c_mean[inv] + 1j * sgn * s_mean[inv]
    theta = c_first[inv] + 1j * sgn * s_first[inv]
    mod = np.abs(psi)
    over = mod > 1.0
    psi[over] /= mod[over]
    return EcfSample(y, psi, theta, Y.size)


def fourier_plus(e: EcfSample) -> np.ndarray:
    """``theta / psi`` where ``|psi| > n^(-1/2)``, zero elsewhere."""
    keep = np.abs(e.psi_hat) > e.n ** -0.5
    out = np.zeros(e.psi_hat.shape, dtype=complex)
    out[keep] = e.theta_hat[keep] / e.psi_hat[keep]
    return out


def uv1_estimate(e: EcfSample, cfg: EstimatorConfig, x_grid: LogGrid | None = None) -> SignedGridFunction:
    """``(1/2 pi) int_{-pi l}^{pi l} e^{-iyx} theta/psi dy`` on both branches.

    ``theta/psi`` is interpolated linearly in ``y`` and integrated exactly
    against the exponential (Filon), so large ``|x|`` is resolved without
    refining the frequency grid.  Frequencies of ``e`` outside
    ``[-pi l, pi l]`` are ignored.
    """
    grid = x_grid or cfg.grid
    lim = math.pi * cfg.l * (1 + 1e-12)
    sel = np.abs(e.y_grid) <= lim
    y = e.y_grid[sel]
    if y.size < 64 * cfg.l or y.min() > -math.pi * cfg.l * 0.999 or y.max() < math.pi * cfg.l * 0.999:
        raise ValueError("frequency grid must cover [-pi l, pi l] with >= 64 l points")
    order = np.argsort(y)
    y, F = y[order], fourier_plus(e)[sel][order]
    x = grid.x
    dy = np.diff(y)
    if np.allclose(dy, dy[0], rtol=1e-9, atol=0):
        at_neg, at_pos = _filon_uniform_pair(y, F, x)
        pos, neg = at_pos.real, at_neg.real
    else:
        pos, neg = _filon(y, F, -x).real, _filon(y, F, x).real
    pos, neg = pos / (2 * math.pi), neg / (2 * math.pi)
    return SignedGridFunction(grid, pos, neg)


# ---------------------------------------------------------------------------
# uv0


def _forward(uv1: SignedGridFunction, c: float, tol: float, diag: dict) -> SignedGridFunction:
    W = weight_map(uv1, c, "forward")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundaryLeakage)
        diag["leakage_forward"] = check_boundary(W, tol, "warn")
        phi = mult_fourier(W, leakage="ignore")
    diag["leakage_flagged"] = bool(caught)
    if caught:
        warnings.warn(caught[0].message, stacklevel=3)
    return phi


def _invert(phi: SignedGridFunction, mu: SignedGridFunction, a_n: float, c: float, diag: dict) -> SignedGridFunction:
    kp, km = np.abs(mu.pos) > a_n, np.abs(mu.neg) > a_n
    kept = int(kp.sum() + km.sum())
    diag["kept_fraction"] = kept / (2 * mu.grid.n_points)
    if kept == 0:
        raise EmptySpectrum(f"no frequency has |mu_f| > a_n = {a_n:g}")
    pos = np.zeros_like(phi.pos)
    neg = np.zeros_like(phi.neg)
    pos[kp] = phi.pos[kp] / mu.pos[kp]
    neg[km] = phi.neg[km] / mu.neg[km]
    w = mult_fourier_inv(SignedGridFunction(phi.grid, pos, neg), leakage="ignore")
    out = weight_map(w, c, "inverse")
    diag["imag_residue"] = float(max(np.max(np.abs(out.pos.imag)), np.max(np.abs(out.neg.imag)), 0.0))
    return out.real


def uv0_plugin(
    uv1_hat: SignedGridFunction, mu_f: MultiplierFunction, cfg: EstimatorConfig, n: int | None = None, *, diagnostics: dict | None = None
) -> SignedGridFunction:
    """``M^-1 F^-1 ((1/mu_f) 1{|mu_f| > a_n} F M uv1_hat)``, real part.

    ``n`` is needed only when ``cfg.a_n`` is None (automatic rule).
    Boundary leakage of ``M uv1_hat`` is reported as a warning, not raised.
    """
    if cfg.a_n is None and n is None:
        raise ValueError("sample size n is required to resolve a_n automatically")
    a_n = cfg.resolve_a_n(n or 1)
    diag = {} if diagnostics is None else diagnostics
    diag["a_n"] = a_n
    phi = _forward(uv1_hat, cfg.c, cfg.leakage_tol, diag)
    return _invert(phi, mu_f.mu_on_grid(uv1_hat.grid), a_n, cfg.c, diag)


def nonneg_project(uv0_hat: SignedGridFunction, u: MultiplicativeWeight) -> SignedGridFunction:
    """Zero every node where ``value / u(x) < 0``."""
    x = uv0_hat.grid.x
    sp, sn = np.sign(u(x)), np.sign(u(-x))
    vp, vn = uv0_hat.pos.real, uv0_hat.neg.real
    return SignedGridFunction(uv0_hat.grid, np.where(vp * sp >= 0, vp, 0.0), np.where(vn * sn >= 0, vn, 0.0))


def estimate(
    sample: FieldSample | np.ndarray, mu_f: MultiplierFunction, cfg: EstimatorConfig, y_grid=None
) -> EstimateResult:
    """Run the whole pipeline on one sample."""
    Y = _values(sample)
    y = frequency_grid(cfg.l, cfg.y_per_l) if y_grid is None else y_grid
    e = ecf(Y, y)
    uv1 = uv1_estimate(e, cfg)
    diag: dict = {"n": Y.size, "grid": (cfg.grid.t_min, cfg.grid.t_max, cfg.grid.n_points)}
    uv0 = uv0_plugin(uv1, mu_f, cfg, Y.size, diagnostics=diag)
    return EstimateResult(uv1, uv0, nonneg_project(uv0, cfg.u), diag)


# ---------------------------------------------------------------------------
# error and calibration


def l2_error(est: SignedGridFunction, truth: SignedGridFunction, c: float = 0.0) -> float:
    """Discrete ``L^2(|x|^c dx)`` distance; node weight ``|x|^(c+1) h``."""
    if est.grid != truth.grid:
        raise GridMismatch(f"{est.grid} != {truth.grid}")
    g = est.grid
    w = g.weights * np.exp((c + 1.0) * g.t)
    d2 = np.abs(est.pos - truth.pos) ** 2 + np.abs(est.neg - truth.neg) ** 2
    return float(math.sqrt(np.sum(d2 * w)))


def a_n_rule(C_k: float, n: int, a: float) -> float:
    """``a_n = C_k^(1/2) n^(-a/(4a+2))``."""
    return math.sqrt(C_k) * n ** (-a / (4 * a + 2))


def argmin_cutoff(candidates, errors, rtol: float = 1e-12) -> float:
    """Smallest candidate attaining the minimum error.

    Raises ``DegenerateSearch`` when the error curve is flat.
    """
    cand = np.asarray(candidates, dtype=float)
    err = np.asarray(errors, dtype=float)
    if cand.shape != err.shape or cand.size == 0:
        raise ValueError("candidates and errors must be nonempty and aligned")
    finite = np.isfinite(err)
    if not finite.any():
        raise DegenerateSearch("no candidate has a finite error")
    lo, hi = err[finite].min(), err[finite].max()
    if hi - lo <= rtol * max(abs(hi), 1e-300):
        raise DegenerateSearch("error curve is flat over the whole search interval")
    order = np.argsort(cand, kind="stable")
    cand, err = cand[order], err[order]
    return float(cand[np.flatnonzero(err == lo)[0]])


def cutoff_candidates(mu_f: MultiplierFunction, grid: LogGrid, count: int = 200) -> np.ndarray:
    """Logarithmically spaced ``a_n`` values over the admissible interval.

    ``[min|mu|, max|mu|]`` when the infimum is positive, else
    ``(max|mu| 1e-4, max|mu|]``.  The infimum over the whole group is taken
    from the analytic tail limit when known, since a finite grid never
    reaches the tail.
    """
    mu = mu_f.mu_on_grid(grid)
    mods = np.concatenate([np.abs(mu.pos), np.abs(mu.neg)])
    top = float(mods.max())
    low = float(mods.min())
    if mu_f.tail_limit is not None:
        low = min(low, mu_f.tail_limit)
    if low > 0:
        return np.geomspace(low, top, count)
    return np.geomspace(top * 1e-4, top, count + 1)[1:]


def calibrate_cutoff(
    uv1_hats: Sequence[SignedGridFunction],
    truth: SignedGridFunction,
    mu_f: MultiplierFunction,
    n: int,
    a: float,
    cfg: EstimatorConfig,
    candidates=None,
) -> CalibrationResult:
    """Grid search of ``a_n`` minimizing the mean ``L^2(dx)`` error of the
    projected estimate over ``k = len(uv1_hats)`` replicates.

    Returns ``C_k = n^(a/(2a+1)) argmin^2`` and the deployment value
    ``a_n = C_k^(1/2) n^(-a/(4a+2))``.
    """
    if len(uv1_hats) < 1:
        raise ValueError("need at least one replicate")
    grid = truth.grid
    cand = cutoff_candidates(mu_f, grid) if candidates is None else np.asarray(candidates, dtype=float)
    mu = mu_f.mu_on_grid(grid)
    phis = [_forward(u1, cfg.c, cfg.leakage_tol, {}) for u1 in uv1_hats]
    errors = np.empty(cand.size)
    for i, s in enumerate(cand):
        total = 0.0
        for phi in phis:
            try:
                est = nonneg_project(_invert(phi, mu, float(s), cfg.c, {}), cfg.u)
            except EmptySpectrum:
                est = SignedGridFunction.zeros(grid)
            total += l2_error(est, truth, 0.0)
        errors[i] = total / len(phis)
    best = argmin_cutoff(cand, errors)
    C_k = n ** (a / (2 * a + 1)) * best**2
    return CalibrationResult(C_k, a_n_rule(C_k, n, a), best, cand, errors)


# ---------------------------------------------------------------------------
# decay diagnostic


def decay_diagnostic(uv1: SignedGridFunction, x_max: float = 1e5, n_points: int = 400) -> DecayReport:
    """``I(X) = int_0^X Im (F_+ uv1)(y) dy`` and a fit of ``I ~ b log(1 + X)``.

    Uses ``int_0^X sin(yx) dy = (1 - cos(Xx))/x``, so
    ``I(X) = int (1 - cos(Xx)) uv1(x) / x dx``, evaluated by Filon quadrature
    with ``uv1(x)/x`` linear in ``x`` between grid nodes.  For a pure-jump
    field ``I(X) = -log|psi(X)|``.  ``b`` is fitted on ``[x_max/10, x_max]``;
    the curve counts as bounded when ``|b| <= max(2 SE, 0.05)``.
    """
    if not x_max > 0:
        raise ValueError("x_max must be positive")
    g = uv1.grid
    X = np.unique(np.concatenate([[0.0], np.geomspace(min(1e-3, x_max), x_max, n_points - 1)]))
    xs = g.x
    total = np.zeros(X.size)
    for branch, sign in ((uv1.pos.real, 1.0), (uv1.neg.real, -1.0)):
        if not np.any(branch):
            continue
        gx = branch / xs  # uv1(x)/x on this branch, in |x|
        base = float(np.sum(0.5 * (gx[1:] + gx[:-1]) * np.diff(xs)))
        osc = _filon(xs, gx.astype(complex), X).real
        total += sign * (base - osc)
    total[X == 0.0] = 0.0
    tail = X >= x_max / 10
    A = np.stack([np.ones(tail.sum()), np.log1p(X[tail])], axis=1)
    coef, *_ = np.linalg.lstsq(A, total[tail], rcond=None)
    resid = total[tail] - A @ coef
    dof = max(1, tail.sum() - 2)
    cov = (resid @ resid / dof) * np.linalg.inv(A.T @ A)
    b, se = float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))
    return DecayReport(X, total, bool(abs(b) <= max(2 * se, 0.05)), b, se)


# ---------------------------------------------------------------------------
# output


def write_estimate_csv(result: EstimateResult, path: str | Path, truth: SignedGridFunction | None = None) -> Path:
    """Columns ``x, uv1_hat, uv0_hat, uv0_tilde[, uv0_true]``; positive branch
    first, then the negative branch, each in ascending ``|x|``."""
    path = Path(path)
    g = result.uv1_hat.grid
    x = np.concatenate([g.x, -g.x])
    cols = [x]
    for f in (result.uv1_hat, result.uv0_hat, result.uv0_tilde) + ((truth,) if truth is not None else ()):
        cols.append(np.concatenate([f.pos.real, f.neg.real]))
    header = "x,uv1_hat,uv0_hat,uv0_tilde" + (",uv0_true" if truth is not None else "")
    np.savetxt(path, np.stack(cols, axis=1), delimiter=",", header=header, comments="", fmt="%.17g")
    return path
