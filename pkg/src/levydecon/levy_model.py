"""Kernels, Lévy densities and the forward map from integrator to field.

The moving average ``X(t) = int f(t - x) Lambda(dx)`` has Lévy density

    v1(x) = int_{supp f} v0(x / f(s)) / |f(s)| ds.

Every integral over ``s`` that shows up (forward map, drift, multipliers,
moments) depends on ``s`` only through the value ``w = f(s)``, so kernels
expose their *level measure*: the image of Lebesgue measure on ``supp f``
under ``f``.  Continuous catalog kernels have a level density ``rho(w)`` on
``(f_lo, f_hi]``; step kernels and sampled kernels have atoms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import QuadratureDivergence, UnsupportedKernel
from .logfourier import LogGrid, SignedGridFunction

__all__ = [
    "Kernel",
    "ExpTrunc1D",
    "Exp1D",
    "Power1D",
    "Epanechnikov2D",
    "SimpleKernel",
    "SampledKernel",
    "LevyDensity",
    "TemperedHalfGauss",
    "ExpTruncFieldDensity",
    "EpanechnikovFieldDensity",
    "TabulatedDensity",
    "PushforwardDensity",
    "LevyTriplet",
    "v1_from_v0",
    "triplet_pushforward",
    "characteristic_exponent",
    "pure_jump_triplet",
    "kernel_from_dict",
]

_QUAD = dict(epsabs=0.0, epsrel=1e-11, limit=400)


def _quad(fn, a, b, **kw):
    opts = {**_QUAD, **kw}
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fn, a, b, **opts)
        except integrate.IntegrationWarning as exc:
            raise QuadratureDivergence(f"quadrature on [{a}, {b}] did not converge: {exc}") from None
    return val


def _panel_gauss(a: float, b: float, n: int, order: int = 16):
    """Composite Gauss-Legendre nodes/weights with ``~n`` nodes on [a, b]."""
    panels = max(1, -(-n // order))
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Moving-average kernel ``f: R^d -> R``."""

    dimension: int = 1
    #: True when the level measure has a density, False when it has atoms
    continuous: bool = True

    @property
    def kernel_id(self) -> str:
        raise NotImplementedError

    def __call__(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support_box(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Bounding box ``(lo, hi)`` of ``supp f``; None when unbounded."""
        return None

    # continuous level measure: density rho on (f_lo, f_hi]
    f_lo: float = 0.0
    f_hi: float = 1.0
    #: rho(w) * w grows like w^(-level_growth) as w -> 0
    level_growth: float = 0.0

    def level_log_density(self, r: np.ndarray) -> np.ndarray:
        """``rho(e^r) e^r``: the level measure in the variable ``r = log w``."""
        raise NotImplementedError

    def level_density(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        inside = (w > self.f_lo) & (w <= self.f_hi)
        out[inside] = self.level_log_density(np.log(w[inside])) / w[inside]
        return out

    def level_atoms(self) -> tuple[np.ndarray, np.ndarray]:
        raise UnsupportedKernel(f"{self.kernel_id} has a continuous level measure")

    def level_nodes(self, n: int = 4000, decay: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``w_i`` and weights with ``sum phi(w_i) wt_i ~ int phi(f(s)) ds``.

        ``decay`` is the rate at which the integrand vanishes at small levels,
        ``phi(w) = O(w^decay)``; it sets the truncation of unbounded log ranges.
        """
        if not self.continuous:
            return self.level_atoms()
        r_hi = math.log(self.f_hi)
        if self.f_lo > 0:
            r_lo = math.log(self.f_lo)
        else:
            rate = decay - self.level_growth
            if rate <= 0:
                raise QuadratureDivergence(
                    f"integrand decay {decay} does not beat level growth {self.level_growth} of {self.kernel_id}"
                )
            r_lo = r_hi - 40.0 / rate
        r, wr = _panel_gauss(r_lo, r_hi, n)
        return np.exp(r), wr * self.level_log_density(r)

    def level_integral(self, phi: Callable[[float], float], decay: float = 1.0) -> float:
        """Adaptive quadrature of ``int phi(f(s)) ds``."""
        if not self.continuous:
            w, m = self.level_atoms()
            return float(sum(phi(float(wi)) * mi for wi, mi in zip(w, m)))
        r_hi = math.log(self.f_hi)
        if self.f_lo > 0:
            r_lo = math.log(self.f_lo)
        else:
            rate = decay - self.level_growth
            if rate <= 0:
                raise QuadratureDivergence(f"level integral of {self.kernel_id} diverges at w -> 0")
            r_lo = r_hi - 40.0 / rate
        dens = self.level_log_density
        return _quad(lambda r: phi(math.exp(r)) * float(dens(np.array(r))), r_lo, r_hi)

    def integral(self) -> float:
        """``int f(s) ds``."""
        return self.level_integral(lambda w: w)

    def integral_sq(self) -> float:
        """``int f(s)^2 ds``."""
        return self.level_integral(lambda w: w * w, decay=2.0)

    def support_measure(self) -> float:
        """Lebesgue measure of ``supp f`` (inf when unbounded)."""
        if not self.continuous:
            return float(np.sum(self.level_atoms()[1]))
        if self.f_lo == 0:
            return math.inf
        return self.level_integral(lambda w: 1.0, decay=0.0)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExpTrunc1D(Kernel):
    """``f(s) = exp(-s)`` on ``[0, theta]``."""

    theta: float = 4.0
    dimension = 1

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def kernel_id(self):
        return f"exp_trunc1d(theta={self.theta:g})"

    @property
    def f_lo(self):
        return math.exp(-self.theta)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0) & (s <= self.theta), np.exp(-np.clip(s, 0, None)), 0.0)

    def support_box(self):
        return np.array([0.0]), np.array([self.theta])

    def level_log_density(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def integral(self):
        return -math.expm1(-self.theta)

    def integral_sq(self):
        return -0.5 * math.expm1(-2 * self.theta)

    def support_measure(self):
        return self.theta

    def to_dict(self):
        return {"type": "exp_trunc1d", "theta": self.theta}


@dataclass(frozen=True)
class Exp1D(Kernel):
    """``f(s) = exp(-theta |s|)`` on the real line."""

    theta: float = 4.0
    dimension = 1

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def kernel_id(self):
        return f"exp1d(theta={self.theta:g})"

    def __call__(self, s):
        return np.exp(-self.theta * np.abs(np.asarray(s, dtype=float)))

    def level_log_density(self, r):
        return np.full_like(np.asarray(r, dtype=float), 2.0 / self.theta)

    def integral(self):
        return 2.0 / self.theta

    def integral_sq(self):
        return 1.0 / self.theta

    def to_dict(self):
        return {"type": "exp1d", "theta": self.theta}


@dataclass(frozen=True)
class Power1D(Kernel):
    """``f(s) = (1 + |s|)^(-theta)`` on the real line."""

    theta: float = 2.0
    dimension = 1

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @property
    def kernel_id(self):
        return f"power1d(theta={self.theta:g})"

    @property
    def level_growth(self):
        return 1.0 / self.theta

    def __call__(self, s):
        return (1.0 + np.abs(np.asarray(s, dtype=float))) ** (-self.theta)

    def level_log_density(self, r):
        # s = w^(-1/theta) - 1 on each side of the origin
        return (2.0 / self.theta) * np.exp(-np.asarray(r, dtype=float) / self.theta)

    def integral(self):
        if self.theta <= 1:
            return math.inf
        return 2.0 / (self.theta - 1.0)

    def integral_sq(self):
        if self.theta <= 0.5:
            return math.inf
        return 2.0 / (2.0 * self.theta - 1.0)

    def to_dict(self):
        return {"type": "power1d", "theta": self.theta}


@dataclass(frozen=True)
class Epanechnikov2D(Kernel):
    """``f(s) = tau (kappa^2 - |s|^2)`` on the disc ``|s| < kappa`` in R^2."""

    tau: float = 0.5
    kappa: float = 1.0
    dimension = 2
    level_growth = -1.0

    def __post_init__(self):
        if not (self.tau > 0 and self.kappa > 0):
            raise ValueError("tau and kappa must be positive")

    @property
    def kernel_id(self):
        return f"epanechnikov2d(tau={self.tau:g},kappa={self.kappa:g})"

    @property
    def f_hi(self):
        return self.tau * self.kappa**2

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        r2 = np.sum(s * s, axis=-1)
        return np.where(r2 < self.kappa**2, self.tau * (self.kappa**2 - r2), 0.0)

    def support_box(self):
        k = self.kappa
        return np.array([-k, -k]), np.array([k, k])

    def level_log_density(self, r):
        # polar coordinates: ds = 2 pi rho d rho = (pi / tau) dw
        return (math.pi / self.tau) * np.exp(np.asarray(r, dtype=float))

    def integral(self):
        return 0.5 * math.pi * self.tau * self.kappa**4

    def integral_sq(self):
        return math.pi * self.tau**2 * self.kappa**6 / 3.0

    def support_measure(self):
        return math.pi * self.kappa**2

    def to_dict(self):
        return {"type": "epanechnikov2d", "tau": self.tau, "kappa": self.kappa}


@dataclass(frozen=True)
class SimpleKernel(Kernel):
    """Step kernel ``f = sum_j f_j 1_{D_j}`` given by ``(f_j, |D_j|)`` pairs.

    For simulation the sets are laid out as consecutive intervals starting at
    0 (d = 1) or as concentric annuli around the origin (d = 2).
    """

    steps: tuple[tuple[float, float], ...] = ((1.0, 1.0),)
    dimension: int = 1
    continuous = False

    def __post_init__(self):
        steps = tuple((float(v), float(m)) for v, m in self.steps)
        object.__setattr__(self, "steps", steps)
        values = [v for v, _ in steps]
        if not steps:
            raise ValueError("a simple kernel needs at least one step")
        if any(v == 0 for v in values) or len(set(values)) != len(values):
            raise ValueError("step values must be nonzero and pairwise distinct")
        if any(not (0 < m < math.inf) for _, m in steps):
            raise ValueError("step measures must be positive and finite")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")

    @property
    def kernel_id(self):
        body = ";".join(f"{v:g}:{m:g}" for v, m in self.steps)
        return f"simple{self.dimension}d({body})"

    def level_atoms(self):
        arr = np.array(self.steps)
        return arr[:, 0].copy(), arr[:, 1].copy()

    def _edges(self):
        measures = np.array([m for _, m in self.steps])
        cum = np.concatenate([[0.0], np.cumsum(measures)])
        return cum if self.dimension == 1 else np.sqrt(cum / math.pi)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        radius = s if self.dimension == 1 else np.sqrt(np.sum(s * s, axis=-1))
        edges = self._edges()
        idx = np.searchsorted(edges, radius, side="right") - 1
        values = np.array([v for v, _ in self.steps] + [0.0])
        idx = np.where((idx < 0) | (idx >= len(self.steps)), len(self.steps), idx)
        return values[idx]

    def support_box(self):
        edges = self._edges()
        if self.dimension == 1:
            return np.array([0.0]), np.array([edges[-1]])
        return np.array([-edges[-1]] * 2), np.array([edges[-1]] * 2)

    def integral(self):
        return float(sum(v * m for v, m in self.steps))

    def integral_sq(self):
        return float(sum(v * v * m for v, m in self.steps))

    def to_dict(self):
        return {"type": "simple", "steps": [list(s) for s in self.steps], "dimension": self.dimension}


@dataclass(frozen=True)
class SampledKernel(Kernel):
    """Kernel known only through samples ``f(s_i)`` with quadrature weights.

    ``points`` (1D only) enable evaluation by linear interpolation, which the
    simulator needs.
    """

    values: np.ndarray = field(default_factory=lambda: np.ones(1))
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    points: np.ndarray | None = None
    dimension: int = 1
    continuous = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if v.shape != w.shape:
            raise ValueError("values and weights must have the same length")
        if np.any(w < 0):
            raise ValueError("quadrature weights must be nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        if self.points is not None:
            p = np.asarray(self.points, dtype=float).ravel()
            if p.shape != v.shape or np.any(np.diff(p) <= 0):
                raise ValueError("points must be increasing and match values")
            object.__setattr__(self, "points", p)

    @property
    def kernel_id(self):
        return f"sampled{self.dimension}d(n={self.values.size})"

    def level_atoms(self):
        keep = self.values != 0
        return self.values[keep], self.weights[keep]

    def __call__(self, s):
        if self.points is None or self.dimension != 1:
            raise UnsupportedKernel("sampled kernel cannot be evaluated off its samples")
        return np.interp(np.asarray(s, dtype=float), self.points, self.values, left=0.0, right=0.0)

    def support_box(self):
        if self.points is None:
            return None
        return np.array([self.points[0]]), np.array([self.points[-1]])

    def to_dict(self):
        out = {"type": "sampled", "values": self.values.tolist(), "weights": self.weights.tolist(),
               "dimension": self.dimension}
        if self.points is not None:
            out["points"] = self.points.tolist()
        return out


def kernel_from_dict(d: dict) -> Kernel:
    """Build a kernel from its JSON description (see ``Kernel.to_dict``)."""
    d = dict(d)
    kind = d.pop("type", None)
    table = {
        "exp_trunc1d": ExpTrunc1D,
        "exp1d": Exp1D,
        "power1d": Power1D,
        "epanechnikov2d": Epanechnikov2D,
    }
    if kind in table:
        return table[kind](**d)
    if kind == "simple":
        return SimpleKernel(steps=tuple(tuple(s) for s in d.pop("steps")), **d)
    if kind == "sampled":
        return SampledKernel(**d)
    raise UnsupportedKernel(f"unknown kernel type {kind!r}")


# ---------------------------------------------------------------------------
# Lévy densities


class LevyDensity:
    """A Lévy density ``v`` on R^x, evaluated pointwise."""

    name: str = "levy"
    #: interval outside of which v vanishes
    support: tuple[float, float] = (-math.inf, math.inf)

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def uv(self, x) -> np.ndarray:
        """``x v(x)``, the function the estimators target (``u(x) = x``)."""
        x = np.asarray(x, dtype=float)
        return x * self(x)

    def _pieces(self):
        lo, hi = self.support
        if lo < 0:
            yield max(lo, -math.inf), min(hi, 0.0)
        if hi > 0:
            yield max(lo, 0.0), hi

    def integrate(self, fn: Callable[[float], float]) -> float:
        """``int fn(x) v(x) dx`` by adaptive quadrature, split at 0 and +-1."""
        total = 0.0
        for a, b in self._pieces():
            cuts = [a] + [c for c in (-1.0, 1.0) if a < c < b] + [b]
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                total += _quad(lambda x: fn(x) * float(self(np.array(x))), lo, hi)
        return total

    def total_mass(self) -> float:
        return self.integrate(lambda x: 1.0)

    def levy_integral(self) -> float:
        """``int min(1, x^2) v(x) dx``; finite for a Lévy density."""
        return self.integrate(lambda x: min(1.0, x * x))

    def sample_jumps(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw from ``v / int v`` (finite-activity densities only)."""
        raise NotImplementedError(f"{self.name} has no jump sampler")

    def to_dict(self) -> dict:
        return {"type": self.name}


@dataclass(frozen=True)
class TemperedHalfGauss(LevyDensity):
    """``v0(x) = (pi x)^(-1/2) exp(-x)`` on ``x > 0``.

    Its total mass is ``Gamma(1/2) / sqrt(pi) = 1`` and ``v0`` itself is the
    Gamma(1/2, 1) density, so a random measure with this Lévy density is a
    unit-rate compound Poisson measure with Gamma(1/2, 1) marks.
    """

    name = "tempered_halfgauss"
    support = (0.0, math.inf)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-x[pos]) / np.sqrt(np.pi * x[pos])
        return out

    def uv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.sqrt(x[pos] / np.pi) * np.exp(-x[pos])
        return out

    def total_mass(self):
        return 1.0

    def moment(self, k: int) -> float:
        """``int x^k v0(x) dx = Gamma(k + 1/2) / sqrt(pi)``."""
        return math.gamma(k + 0.5) / math.sqrt(math.pi)

    def sample_jumps(self, rng, size):
        return rng.gamma(0.5, 1.0, size)


@dataclass(frozen=True)
class ExpTruncFieldDensity(LevyDensity):
    """Field density for ``v0 = TemperedHalfGauss`` and ``f = ExpTrunc1D(theta)``.

    ``v1(x) = pi^(-1/2) x^(-1) int_x^(x e^theta) t^(-1/2) e^(-t) dt``, i.e.
    ``x v1(x) = erf(sqrt(x e^theta)) - erf(sqrt(x))``.
    """

    theta: float = 4.0
    name = "v1_exp_trunc"
    support = (0.0, math.inf)

    def uv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        xp = x[pos]
        a, b = np.sqrt(xp), np.sqrt(xp * math.exp(self.theta))
        small = xp < 1.0
        out_p = np.empty_like(xp)
        out_p[small] = special.erf(b[small]) - special.erf(a[small])
        out_p[~small] = special.erfc(a[~small]) - special.erfc(b[~small])
        out[pos] = out_p
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x >= 1e-8
        out[pos] = self.uv(x[pos]) / x[pos]
        # below 1e-8 use the leading term of the small-x expansion
        tiny = (x > 0) & ~pos
        out[tiny] = 2.0 / math.sqrt(math.pi) * math.expm1(self.theta / 2) / np.sqrt(x[tiny])
        return out

    def total_mass(self):
        return self.theta

    def to_dict(self):
        return {"type": self.name, "theta": self.theta}


@dataclass(frozen=True)
class EpanechnikovFieldDensity(LevyDensity):
    """Field density for ``v0 = TemperedHalfGauss`` and ``f = Epanechnikov2D``.

    ``v1(x) = (sqrt(pi)/tau) int_z^inf r^(-3/2) e^(-r) dr`` with
    ``z = x / (tau kappa^2)``; integrating by parts,
    ``int_z^inf r^(-3/2) e^(-r) dr = 2 e^(-z) (z^(-1/2) - sqrt(pi) erfcx(sqrt(z)))``.
    """

    tau: float = 0.5
    kappa: float = 1.0
    name = "v1_epanechnikov"
    support = (0.0, math.inf)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        z = x[pos] / (self.tau * self.kappa**2)
        tail = 2.0 * np.exp(-z) * (1.0 / np.sqrt(z) - math.sqrt(math.pi) * special.erfcx(np.sqrt(z)))
        out[pos] = math.sqrt(math.pi) / self.tau * tail
        return out

    def total_mass(self):
        return math.pi * self.kappa**2

    def to_dict(self):
        return {"type": self.name, "tau": self.tau, "kappa": self.kappa}


class TabulatedDensity(LevyDensity):
    """Density given by samples on a log grid, linear in ``log|x|`` between nodes."""

    name = "tabulated"

    def __init__(self, table: SignedGridFunction):
        pos, neg = table.pos.real, table.neg.real
        scale = max(np.max(np.abs(pos)), np.max(np.abs(neg)), 1e-300)
        if np.min(pos) < -1e-12 * scale or np.min(neg) < -1e-12 * scale:
            raise ValueError("a Lévy density must be nonnegative")
        self.table = table
        self.grid = table.grid
        self._pos = np.clip(pos, 0, None)
        self._neg = np.clip(neg, 0, None)
        x = self.grid.x
        w = self.grid.weights * x
        self._cell_mass = np.concatenate([self._pos * w, self._neg * w])
        integ = np.sum((self._pos + self._neg) * np.minimum(1.0, x * x) * w)
        if not np.isfinite(integ):
            raise ValueError("int min(1, x^2) v(x) dx is not finite")
        lo = -math.inf if np.any(self._neg > 0) else 0.0
        hi = math.inf if np.any(self._pos > 0) else 0.0
        self.support = (lo, hi)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = np.log(np.abs(np.where(x == 0, 1.0, x)))
        inside = (x != 0) & (t >= self.grid.t_min) & (t <= self.grid.t_max)
        pos = np.interp(t, self.grid.t, self._pos)
        neg = np.interp(t, self.grid.t, self._neg)
        return np.where(inside, np.where(x > 0, pos, neg), 0.0)

    def total_mass(self):
        return float(np.sum(self._cell_mass))

    def integrate(self, fn):
        x = self.grid.x
        w = self.grid.weights * x
        f = np.vectorize(fn, otypes=[float])
        return float(np.sum(f(x) * self._pos * w) + np.sum(f(-x) * self._neg * w))

    def sample_jumps(self, rng, size):
        p = self._cell_mass / self._cell_mass.sum()
        idx = rng.choice(p.size, size=size, p=p)
        n = self.grid.n_points
        t = self.grid.t[idx % n] + (rng.random(size) - 0.5) * self.grid.h
        t = np.clip(t, self.grid.t_min, self.grid.t_max)
        return np.where(idx < n, 1.0, -1.0) * np.exp(t)

    def to_dict(self):
        return {"type": self.name}


class PushforwardDensity(LevyDensity):
    """``v1`` computed lazily from ``v0`` and a kernel by quadrature."""

    name = "pushforward"

    def __init__(self, v0: LevyDensity, kernel: Kernel):
        self.v0 = v0
        self.kernel = kernel
        lo, hi = v0.support
        self.support = (-math.inf if (lo < 0 or _has_negative_levels(kernel)) else 0.0,
                        math.inf if (hi > 0 or _has_negative_levels(kernel)) else 0.0)

    def __call__(self, x):
        return _pushforward_values(self.v0, self.kernel, np.asarray(x, dtype=float))


def _has_negative_levels(kernel: Kernel) -> bool:
    return (not kernel.continuous) and bool(np.any(kernel.level_atoms()[0] < 0))


# ---------------------------------------------------------------------------
# forward map


def _pushforward_values(v0: LevyDensity, kernel: Kernel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    if not kernel.continuous:
        levels, measures = kernel.level_atoms()
        for w, m in zip(levels, measures):
            out += m * v0(x / w) / abs(w)
        return out[0] if scalar else out

    if isinstance(v0, TabulatedDensity):
        # trapezoid over the tabulation nodes y = +-e^t:
        # v1(x) = int v0(y) rho(x / y) / |y| dy = int v0(y) rho(x / y) dt
        g = v0.grid
        y = g.x
        for i, xi in enumerate(x):
            if xi == 0:
                continue
            branch = v0._pos if xi > 0 else v0._neg
            out[i] = np.sum(branch * kernel.level_density(abs(xi) / y) * g.weights)
        return out[0] if scalar else out

    lo_v, hi_v = v0.support
    for i, xi in enumerate(x):
        if xi == 0:
            continue
        # positive levels: y = x / w has the sign of x and runs over
        # [x / f_hi, x / f_lo] in absolute value
        a = abs(xi) / kernel.f_hi
        b = abs(xi) / kernel.f_lo if kernel.f_lo > 0 else math.inf
        sign = 1.0 if xi > 0 else -1.0
        if (sign > 0 and hi_v <= 0) or (sign < 0 and lo_v >= 0):
            continue

        def integrand(ay, xi=xi, sign=sign):
            return float(v0(np.array(sign * ay))) * float(kernel.level_density(np.array(abs(xi) / ay))) / ay

        if math.isinf(b):
            out[i] = _quad(integrand, a, math.inf)
        else:
            # log variable resolves integrable peaks near the lower end
            out[i] = _quad(lambda r: integrand(math.exp(r)) * math.exp(r), math.log(a), math.log(b))
    return out[0] if scalar else out


def v1_from_v0(v0: LevyDensity, kernel: Kernel, x_grid) -> SignedGridFunction | np.ndarray:
    """Tabulate the field density ``v1`` on ``x_grid`` by quadrature.

    ``x_grid`` may be a ``LogGrid`` (returns a ``SignedGridFunction``) or an
    array of nonzero reals (returns an array).
    """
    if isinstance(x_grid, LogGrid):
        x = x_grid.x
        return SignedGridFunction(x_grid, _pushforward_values(v0, kernel, x), _pushforward_values(v0, kernel, -x))
    return _pushforward_values(v0, kernel, np.asarray(x_grid, dtype=float))


@dataclass(frozen=True)
class LevyTriplet:
    """Lévy characteristic ``(a, b, v)`` with truncation function ``1_[-1,1]``."""

    a: float
    b: float
    v: LevyDensity

    def __post_init__(self):
        if not self.b >= 0:
            raise ValueError("Gaussian component b must be nonnegative")


def pure_jump_triplet(v: LevyDensity) -> LevyTriplet:
    """Triplet whose exponent is ``int (e^{iyx} - 1) v(x) dx``.

    The drift ``a = int_{-1}^{1} x v(x) dx`` cancels the compensator.
    """
    return LevyTriplet(a=v.integrate(lambda x: x if abs(x) <= 1 else 0.0), b=0.0, v=v)


def _drift_integral_pos(v0: LevyDensity, lo: float, hi: float) -> float:
    """``int_{lo < |x| <= hi} x v0(x) dx`` by direct quadrature."""
    total = 0.0
    s_lo, s_hi = v0.support
    if s_hi > 0 and hi > lo:
        total += _quad(lambda x: x * float(v0(np.array(x))), lo, hi)
    if s_lo < 0 and hi > lo:
        total += _quad(lambda x: -x * float(v0(np.array(-x))), lo, hi)
    return total


def triplet_pushforward(t0: LevyTriplet, kernel: Kernel) -> LevyTriplet:
    """Field triplet ``(a1, b1, v1)`` of ``X(0)`` from the integrator triplet.

    ``a1 = int U(f(s)) ds``, ``b1 = b0 int f^2``, and ``v1`` is the catalog
    closed form when one is known, otherwise a lazily evaluated pushforward.
    """

    def drift(w: float) -> float:
        aw = abs(w)
        if aw == 1.0:
            corr = 0.0
        elif aw < 1.0:
            corr = _drift_integral_pos(t0.v, 1.0, 1.0 / aw)
        else:
            corr = -_drift_integral_pos(t0.v, 1.0 / aw, 1.0)
        return w * (t0.a + corr)

    a1 = kernel.level_integral(drift)
    b1 = t0.b * kernel.integral_sq() if t0.b else 0.0
    return LevyTriplet(a=a1, b=b1, v=field_density(t0.v, kernel))


def field_density(v0: LevyDensity, kernel: Kernel) -> LevyDensity:
    """Closed-form ``v1`` for the catalog pairs, else a quadrature pushforward."""
    if isinstance(v0, TemperedHalfGauss):
        if isinstance(kernel, ExpTrunc1D):
            return ExpTruncFieldDensity(kernel.theta)
        if isinstance(kernel, Epanechnikov2D):
            return EpanechnikovFieldDensity(kernel.tau, kernel.kappa)
    if isinstance(kernel, SimpleKernel) and kernel.steps == ((1.0, 1.0),):
        return v0
    return PushforwardDensity(v0, kernel)


def _sin_minus_id(z: float) -> float:
    """``sin z - z`` without cancellation for small ``|z|``."""
    if abs(z) > 1e-2:
        return math.sin(z) - z
    z2 = z * z
    return -z * z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0))


def characteristic_exponent(t: LevyTriplet, y: float) -> complex:
    """``K(y) = i y a - b y^2 / 2 + int (e^{iyx} - 1 - i y x 1{|x|<=1}) v(x) dx``."""
    y = float(y)
    if y == 0.0:
        return 0j
    v = t.v
    # cancellation-free integrands: cos z - 1 = -2 sin^2(z/2), series for sin z - z
    re = v.integrate(lambda x: -2.0 * math.sin(0.5 * y * x) ** 2)
    im = v.integrate(lambda x: _sin_minus_id(y * x) if abs(x) <= 1.0 else math.sin(y * x))
    return complex(-0.5 * t.b * y * y + re, y * t.a + im)
