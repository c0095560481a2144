"""Multiplier functions of the scaled-kernel integral operator.

With ``q = beta + (c - 1)/2`` and ``u(x) = |x|^beta`` (or ``sgn(x)|x|^beta``)

    m_+(x) = int u(f(s)) |f(s)|^((c-1)/2) exp(-i x log|f(s)|) ds,
    m_-(x) = same integrand times sgn f(s),

and ``mu_f(y) = m_+(log|y|)`` for ``y > 0``, ``m_-(log|y|)`` for ``y < 0``.
Under the multiplicative Fourier transform the operator ``uv0 -> uv1``
becomes multiplication by ``mu_f``.  Closed forms for the catalog kernels are
derived in ``docs/derivations.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy import optimize

from .errors import DegenerateBound, IntegrabilityViolation, UnsupportedKernel
from .levy_model import Epanechnikov2D, Exp1D, ExpTrunc1D, Kernel, Power1D, SampledKernel, SimpleKernel
from .logfourier import LogGrid, SignedGridFunction

__all__ = [
    "MultiplicativeWeight",
    "MultiplierFunction",
    "LowerBoundCertificate",
    "InjectivityReport",
    "UniformBoundReport",
    "SimpleConditionReport",
    "multiplier_closed_form",
    "multiplier_quadrature",
    "multiplier_from_kernel",
    "multiplier_for",
    "integrability_constant",
    "check_injectivity",
    "check_uniform_bound",
    "check_simple_condition",
    "fit_lower_bound",
    "default_probe",
    "ZERO_TOL",
]

ZERO_TOL = 1e-10
ComplexFn = Callable[[np.ndarray], np.ndarray]


def default_probe() -> np.ndarray:
    """2^17 uniform points on [-200, 200]."""
    return np.linspace(-200.0, 200.0, 2**17)


@dataclass(frozen=True)
class MultiplicativeWeight:
    """``u(x) = |x|^beta`` or, when ``signed``, ``u(x) = sgn(x) |x|^beta``."""

    beta: float = 1.0
    signed: bool = True

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.abs(x) ** self.beta
        return np.sign(x) * out if self.signed else out

    def q(self, c: float) -> float:
        """Exponent ``beta + (c - 1)/2`` of ``|f|`` in the multiplier integrand."""
        return self.beta + 0.5 * (c - 1.0)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "signed": self.signed}


@dataclass(frozen=True)
class MultiplierFunction:
    """The pair ``(m_+, m_-)`` with provenance.

    ``tail_limit`` is ``lim_{|x|->inf} |m_+-(x)|`` when known analytically (0 for
    the decaying catalog kernels) and None otherwise.  ``bound`` is the
    integrability constant ``C = int |u(f)| |f|^((c-1)/2) ds >= sup |m|``.
    """

    m_plus: ComplexFn
    m_minus: ComplexFn
    provenance: Literal["closed_form", "quadrature"]
    bound: float = math.inf
    tail_limit: float | None = None
    analytic_gamma: Callable[[float], float | None] | None = field(default=None, repr=False)
    label: str = ""

    def __call__(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.m_plus(x), dtype=complex), np.asarray(self.m_minus(x), dtype=complex)

    def modulus(self, x) -> np.ndarray:
        """``min(|m_+(x)|, |m_-(x)|)``: the binding branch at each point."""
        p, m = self(x)
        return np.minimum(np.abs(p), np.abs(m))

    def mu_on_grid(self, grid: LogGrid) -> SignedGridFunction:
        """``mu_f`` at ``+-exp(t_k)``, i.e. ``m_+-(t_k)``."""
        p, m = self(grid.t)
        return SignedGridFunction(grid, p, m)


@dataclass(frozen=True)
class LowerBoundCertificate:
    """``|m_+-(x)| >= gamma / (1 + |x|^alpha1)`` on the probed range."""

    gamma: float
    alpha1: float
    kind: Literal["analytic", "fitted"]
    analytic_gamma: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.alpha1 >= 0:
            raise ValueError("alpha1 must be nonnegative")


@dataclass(frozen=True)
class InjectivityReport:
    ae_nonvanishing: bool
    min_abs: float
    zero_locations: np.ndarray
    kind: str = "heuristic"


@dataclass(frozen=True)
class UniformBoundReport:
    bounded_below: bool
    inf_abs: float
    tail_limit: float | None


@dataclass(frozen=True)
class SimpleConditionReport:
    holds: bool
    lhs: float


# ---------------------------------------------------------------------------
# construction


def _exp_trunc(theta: float, q: float):
    def m(x):
        z = q - 1j * np.asarray(x, dtype=float)
        small = np.abs(z) * theta < 1e-8
        zs = np.where(small, 1.0, z)
        # -expm1 keeps full precision when theta z is small
        return np.where(small, theta * (1 - 0.5 * theta * z), -np.expm1(-theta * zs) / zs)

    bound = theta if q == 0 else -math.expm1(-theta * q) / q
    return m, bound


def _simple_sum(values: np.ndarray, measures: np.ndarray, u: MultiplicativeWeight, c: float, signed_branch: bool):
    amp = u(values) * np.abs(values) ** (0.5 * (c - 1.0)) * measures
    if signed_branch:
        amp = amp * np.sign(values)
    logs = np.log(np.abs(values))

    def m(x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.zeros(flat.shape, dtype=complex)
        for a, lg in zip(amp, logs):
            out += a * np.exp(-1j * flat * lg)
        return out.reshape(x.shape)

    return m


def multiplier_closed_form(kernel: Kernel, u: MultiplicativeWeight, c: float = 0.0) -> MultiplierFunction:
    """Analytic ``m_+-`` for the catalog kernels and step kernels.

    Raises ``UnsupportedKernel`` for sampled kernels and when the defining
    integral diverges for the given ``(beta, c)``.
    """
    c = float(c)
    q = u.q(c)
    label = f"{kernel.kernel_id} beta={u.beta:g} c={c:g}"
    if isinstance(kernel, SimpleKernel):
        values, measures = kernel.level_atoms()
        mp = _simple_sum(values, measures, u, c, False)
        mm = _simple_sum(values, measures, u, c, True)
        bound = float(np.sum(np.abs(values) ** q * measures))
        return MultiplierFunction(mp, mm, "closed_form", bound, None, None, label)

    if isinstance(kernel, ExpTrunc1D):
        m, bound = _exp_trunc(kernel.theta, q)
        return MultiplierFunction(m, m, "closed_form", bound, 0.0, None, label)

    if isinstance(kernel, Exp1D):
        if not q > 0:
            raise UnsupportedKernel(f"exp1d multiplier needs beta + (c-1)/2 > 0, got {q}")
        th = kernel.theta

        def m(x):
            return 2.0 / (th * (q - 1j * np.asarray(x, dtype=float)))

        def gamma(alpha1):
            return (2.0 / th) / math.sqrt(1.0 + q * q) if alpha1 == 1 else None

        return MultiplierFunction(m, m, "closed_form", 2.0 / (th * q), 0.0, gamma, label)

    if isinstance(kernel, Power1D):
        th = kernel.theta
        p = q - 1.0 / th
        if not p > 0:
            raise UnsupportedKernel(f"power1d multiplier needs beta + (c-1)/2 > 1/theta, got {q}")

        def m(x):
            return (2.0 / th) / (p - 1j * np.asarray(x, dtype=float))

        def gamma(alpha1):
            return (2.0 / th) / math.sqrt(1.0 + p * p) if alpha1 == 1 else None

        return MultiplierFunction(m, m, "closed_form", (2.0 / th) / p, 0.0, gamma, label)

    if isinstance(kernel, Epanechnikov2D):
        tau, kappa = kernel.tau, kernel.kappa
        p = q + 1.0
        if not p > 0:
            raise UnsupportedKernel(f"epanechnikov2d multiplier needs 1 + beta + (c-1)/2 > 0, got {p}")
        top = math.log(tau * kappa**2)

        def m(x):
            z = p - 1j * np.asarray(x, dtype=float)
            return (math.pi / tau) * np.exp(z * top) / z

        def gamma(alpha1):
            if alpha1 != 1:
                return None
            return math.pi * kappa ** (2 * u.beta + 1 + c) * tau**q / math.sqrt(1.0 + p * p)

        bound = (math.pi / tau) * math.exp(p * top) / p
        return MultiplierFunction(m, m, "closed_form", bound, 0.0, gamma, label)

    raise UnsupportedKernel(f"no closed-form multiplier for {kernel.kernel_id}")


def _abs_integral(amp: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Quadrature of ``int |amp| ds`` at full and at half resolution."""
    full = float(np.sum(np.abs(amp) * weights))
    n = amp.size - amp.size % 2
    if n < 2:
        return full, full
    # merge neighbouring cells, keeping the even-indexed sample of each pair
    coarse = float(np.sum(np.abs(amp[:n:2]) * (weights[:n:2] + weights[1:n:2])))
    if amp.size % 2:
        coarse += float(abs(amp[-1]) * weights[-1])
    return full, coarse


def multiplier_quadrature(
    g_samples,
    h_samples,
    c: float = 0.0,
    x_grid=None,
    weights=None,
    *,
    label: str = "",
) -> MultiplierFunction:
    """``m_+(x) = sum_i w_i g_i |h_i|^(-(c+1)/2) exp(i x log|h_i|)``.

    ``m_-`` carries the extra factor ``sgn h_i``.  With ``h = 1/f`` and
    ``g = u(f)/|f|`` this reproduces the kernel form of the multiplier.
    ``weights`` default to 1 (samples already carry their cell measure).
    ``x_grid``, when given, is evaluated eagerly and the values cached.
    """
    g = np.asarray(g_samples, dtype=float).ravel()
    h = np.asarray(h_samples, dtype=float).ravel()
    if g.shape != h.shape:
        raise ValueError("g and h samples must have the same length")
    w = np.ones_like(g) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != g.shape:
        raise ValueError("weights must match the samples")
    active = (g != 0) & (w != 0)
    if np.any(h[active] == 0):
        raise IntegrabilityViolation("h vanishes where g does not")
    g, h, w = g[active], h[active], w[active]
    amp = g * np.abs(h) ** (-0.5 * (c + 1.0))
    if not np.all(np.isfinite(amp)):
        raise IntegrabilityViolation("non-finite integrand samples")
    full, coarse = _abs_integral(amp, w)
    if coarse > 0 and full > 1.1 * coarse:
        raise IntegrabilityViolation(f"absolute integral grows under refinement: {coarse:.6g} -> {full:.6g}")
    logs = np.log(np.abs(h))
    wp = amp * w
    wm = wp * np.sign(h)

    def make(coef):
        def m(x):
            x = np.asarray(x, dtype=float)
            flat = x.ravel()
            out = np.empty(flat.shape, dtype=complex)
            step = max(1, 2_000_000 // max(1, logs.size))
            for i in range(0, flat.size, step):
                out[i : i + step] = np.exp(1j * np.outer(flat[i : i + step], logs)) @ coef
            return out.reshape(x.shape)

        return m

    mp, mm = make(wp), make(wm)
    if x_grid is not None:
        xg = np.asarray(x_grid, dtype=float)
        vp, vm = mp(xg), mm(xg)

        def cached(fn, table):
            def m(x):
                x = np.asarray(x, dtype=float)
                if x.shape == xg.shape and np.array_equal(x, xg):
                    return table.copy()
                return fn(x)

            return m

        mp, mm = cached(mp, vp), cached(mm, vm)
    return MultiplierFunction(mp, mm, "quadrature", full, None, None, label)


def multiplier_from_kernel(
    kernel: Kernel, u: MultiplicativeWeight, c: float = 0.0, n_samples: int = 10_000, x_grid=None
) -> MultiplierFunction:
    """Quadrature multiplier of any kernel via its level measure.

    Level nodes ``w_i`` (values of ``f``) are converted to ``h = 1/w`` and
    ``g = u(w)/|w|`` for ``multiplier_quadrature``.
    """
    q = u.q(c)
    w, wt = kernel.level_nodes(n_samples, decay=max(q, 1e-300))
    w, wt = np.asarray(w, dtype=float), np.asarray(wt, dtype=float)
    keep = wt != 0
    w, wt = w[keep], wt[keep]
    g = u(w) / np.abs(w)
    m = multiplier_quadrature(g, 1.0 / w, c, x_grid, wt, label=f"{kernel.kernel_id} beta={u.beta:g} c={c:g}")
    tail = 0.0 if kernel.continuous else None
    return MultiplierFunction(m.m_plus, m.m_minus, "quadrature", m.bound, tail, None, m.label)


def multiplier_for(kernel: Kernel, u: MultiplicativeWeight, c: float = 0.0) -> MultiplierFunction:
    """Closed form when available, else level-measure quadrature."""
    try:
        return multiplier_closed_form(kernel, u, c)
    except UnsupportedKernel:
        if isinstance(kernel, SampledKernel) or kernel.continuous:
            return multiplier_from_kernel(kernel, u, c)
        raise


def integrability_constant(kernel: Kernel, u: MultiplicativeWeight, c: float = 0.0) -> float:
    """``C = int |f(s)|^(beta + (c-1)/2) ds``; finite iff the multipliers exist."""
    q = u.q(c)
    if not kernel.continuous:
        w, m = kernel.level_atoms()
        return float(np.sum(np.abs(w) ** q * m))
    return kernel.level_integral(lambda w: abs(w) ** q, decay=q)


# ---------------------------------------------------------------------------
# solvability checks


def _refine_minima(fn: Callable[[float], float], probe: np.ndarray, vals: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Polish local minima at ``probe[idx]`` by bounded Brent search."""
    out = vals[idx].copy()
    for j, i in enumerate(idx):
        lo, hi = probe[max(i - 1, 0)], probe[min(i + 1, probe.size - 1)]
        if hi <= lo:
            continue
        res = optimize.minimize_scalar(fn, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        out[j] = min(out[j], res.fun)
    return out


def _local_minima(vals: np.ndarray) -> np.ndarray:
    inner = np.flatnonzero((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:])) + 1
    edges = [0] if vals.size > 1 and vals[0] <= vals[1] else []
    tail = [vals.size - 1] if vals.size > 1 and vals[-1] <= vals[-2] else []
    return np.concatenate([edges, inner, tail]).astype(int)


def _branch_scan(m: MultiplierFunction, probe: np.ndarray):
    p, mm = m(probe)
    return [(np.abs(p), lambda x: float(np.abs(m.m_plus(np.array([x])))[0])),
            (np.abs(mm), lambda x: float(np.abs(m.m_minus(np.array([x])))[0]))]


def check_injectivity(m: MultiplierFunction, probe_grid=None, tol: float = ZERO_TOL) -> InjectivityReport:
    """Heuristic a.e.-nonvanishing test on a probe grid.

    A branch counts as vanishing on a set of positive measure when at least
    two consecutive probe values fall below ``tol``.  Isolated zeros are
    located as local minima below ``1e-3 sup|m|`` and polished by Brent's
    method.
    """
    probe = default_probe() if probe_grid is None else np.asarray(probe_grid, dtype=float)
    ae = True
    min_abs = math.inf
    zeros: list[float] = []
    for vals, fn in _branch_scan(m, probe):
        small = vals < tol
        if np.any(small[1:] & small[:-1]):
            ae = False
        sup = float(vals.max()) if vals.size else 0.0
        idx = _local_minima(vals)
        idx = idx[vals[idx] < 1e-3 * sup] if sup > 0 else idx[:0]
        refined = _refine_minima(fn, probe, vals, idx)
        min_abs = min(min_abs, float(vals.min()), float(refined.min()) if refined.size else math.inf)
        for i, r in zip(idx, refined):
            lo, hi = probe[max(i - 1, 0)], probe[min(i + 1, probe.size - 1)]
            if hi > lo and r < 1e-3 * sup:
                res = optimize.minimize_scalar(fn, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
                zeros.append(float(res.x))
    locs = np.unique(np.round(np.array(sorted(zeros)), 9)) if zeros else np.empty(0)
    return InjectivityReport(ae, float(min_abs), locs)


def check_uniform_bound(m: MultiplierFunction, probe_grid=None, tol: float = 1e-3) -> UniformBoundReport:
    """Is ``inf |m_+-| > 0``?  Decided as: probe infimum above ``tol`` and
    analytic tail limit (when known) above ``tol``."""
    probe = default_probe() if probe_grid is None else np.asarray(probe_grid, dtype=float)
    inf_abs = math.inf
    for vals, fn in _branch_scan(m, probe):
        idx = _local_minima(vals)
        # polish the smallest few minima only; the rest cannot win
        idx = idx[np.argsort(vals[idx])[:32]]
        refined = _refine_minima(fn, probe, vals, idx)
        inf_abs = min(inf_abs, float(vals.min()), float(refined.min()) if refined.size else math.inf)
    if m.tail_limit is not None:
        inf_abs = min(inf_abs, m.tail_limit)
    ok = inf_abs > tol and (m.tail_limit is None or m.tail_limit > tol)
    return UniformBoundReport(bool(ok), float(inf_abs), m.tail_limit)


def check_simple_condition(values, measures, u: MultiplicativeWeight, c: float = 0.0, pivot: int = 0) -> SimpleConditionReport:
    """Sufficient condition for a step kernel:
    ``sum_{j != pivot} (|f_j|/|f_p|)^q nu_j / nu_p < 1`` with ``q = beta + (c-1)/2``.
    """
    f = np.asarray(values, dtype=float).ravel()
    nu = np.asarray(measures, dtype=float).ravel()
    if f.shape != nu.shape or f.size == 0:
        raise ValueError("values and measures must be nonempty and of equal length")
    if np.any(f == 0) or np.unique(f).size != f.size:
        raise ValueError("step values must be nonzero and pairwise distinct")
    if np.any(~np.isfinite(nu)) or np.any(nu <= 0):
        raise ValueError("step measures must be positive and finite")
    if not 0 <= pivot < f.size:
        raise ValueError("pivot index out of range")
    q = u.q(c)
    others = np.arange(f.size) != pivot
    lhs = float(np.sum((np.abs(f[others]) / abs(f[pivot])) ** q * nu[others] / nu[pivot]))
    return SimpleConditionReport(lhs < 1.0, lhs)


def fit_lower_bound(m: MultiplierFunction, alpha1: float = 1.0, probe_grid=None) -> LowerBoundCertificate:
    """``gamma = min over probe of |m_+-(x)| (1 + |x|^alpha1)``."""
    if not alpha1 >= 0:
        raise ValueError("alpha1 must be >= 0")
    probe = default_probe() if probe_grid is None else np.asarray(probe_grid, dtype=float)
    gamma = float(np.min(m.modulus(probe) * (1.0 + np.abs(probe) ** alpha1)))
    if not gamma > 1e-14:
        raise DegenerateBound(f"fitted gamma {gamma:.3g} carries no information")
    analytic = m.analytic_gamma(alpha1) if m.analytic_gamma is not None else None
    return LowerBoundCertificate(gamma, float(alpha1), "fitted", analytic)
