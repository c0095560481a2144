"""Exact compound-Poisson simulation of pure-jump moving-average fields.

When the integrator density ``v0`` has finite mass ``lam0``, the random
measure restricted to a bounded window ``B`` is a Poisson number
(mean ``lam0 |B|``) of uniform points carrying i.i.d. marks with density
``v0 / lam0``.  The field is then the finite shot-noise sum
``X(t) = sum_i f(t - s_i) J_i``.  For ``v0(x) = (pi x)^(-1/2) e^(-x)`` the mass
is 1 and the marks are Gamma(1/2, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UnboundedKernel
from .levy_model import Kernel, LevyDensity

__all__ = [
    "GridSpec",
    "FieldSample",
    "simulate_field",
    "replicate",
    "derived_seed",
    "write_field_csv",
    "read_field_csv",
]

_U64 = 2**64


@dataclass(frozen=True)
class GridSpec:
    """Lattice points ``delta * j`` with ``j = origin + (0..shape-1)`` per axis."""

    dimension: int = 1
    delta: float = 1.0
    shape: tuple[int, ...] = (100,)
    origin: tuple[int, ...] = (-50,)

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        origin = tuple(int(o) for o in np.atleast_1d(self.origin))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError("delta must be positive")
        if len(shape) != self.dimension or len(origin) != self.dimension:
            raise ValueError("shape and origin need one entry per axis")
        if any(s < 1 for s in shape):
            raise ValueError("shape entries must be >= 1")

    @classmethod
    def centered(cls, dimension: int, delta: float, side: int) -> "GridSpec":
        """``j in {-side//2, ..., side - side//2 - 1}^d``."""
        return cls(dimension, delta, (side,) * dimension, (-(side // 2),) * dimension)

    @property
    def n(self) -> int:
        return int(np.prod(self.shape))

    def indices(self) -> np.ndarray:
        """Integer lattice indices, shape ``(n, d)``, row-major."""
        axes = [np.arange(o, o + s) for o, s in zip(self.origin, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def points(self) -> np.ndarray:
        return self.delta * self.indices().astype(float)

    def shape_str(self) -> str:
        return "x".join(str(s) for s in self.shape)

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "delta": self.delta, "shape": list(self.shape), "origin": list(self.origin)}


@dataclass(frozen=True)
class FieldSample:
    """One simulated field on a lattice; ``values`` are row-major over the grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    seed: int
    kernel_id: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.grid.n:
            raise ValueError(f"expected {self.grid.n} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


def derived_seed(base_seed: int, index: int) -> int:
    """64-bit seed of replication ``index``: ``SeedSequence(base, spawn_key=(index,))``."""
    ss = np.random.SeedSequence(int(base_seed) % _U64, spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _support(kernel: Kernel, d: int, truncation_radius: float | None):
    box = kernel.support_box()
    if box is None:
        if truncation_radius is None:
            raise UnboundedKernel(f"{kernel.kernel_id} has unbounded support; set a truncation radius")
        r = float(truncation_radius)
        return np.full(d, -r), np.full(d, r)
    lo, hi = (np.asarray(b, dtype=float).reshape(-1) for b in box)
    if lo.size != d:
        raise ValueError(f"kernel dimension {lo.size} does not match grid dimension {d}")
    return lo, hi


def _window(kernel: Kernel, grid: GridSpec, truncation_radius: float | None):
    lo, hi = _support(kernel, grid.dimension, truncation_radius)
    pts = grid.points()
    # f(t - x) != 0 requires x in [t - hi, t - lo]
    return pts.min(axis=0) - hi, pts.max(axis=0) - lo, pts


def _accumulate(kernel: Kernel, pts: np.ndarray, centers: np.ndarray, marks: np.ndarray,
                lo: np.ndarray, hi: np.ndarray, max_pairs: int) -> np.ndarray:
    """``sum_i f(t - s_i) J_i`` over the centers that can reach each point.

    Centers are sorted along the first axis; point ``t`` only sees centers
    with ``s_0`` in ``[t_0 - hi_0, t_0 - lo_0]``.  Points are processed in
    blocks holding at most ``max_pairs`` (point, center) pairs.
    """
    d = pts.shape[1]
    order = np.argsort(centers[:, 0], kind="stable")
    c, m = centers[order], marks[order]
    start = np.searchsorted(c[:, 0], pts[:, 0] - hi[0], side="left")
    stop = np.searchsorted(c[:, 0], pts[:, 0] - lo[0], side="right")
    counts = np.maximum(stop - start, 0)
    cum = np.concatenate([[0], np.cumsum(counts)])
    n = pts.shape[0]
    values = np.zeros(n)
    i = 0
    while i < n:
        j = max(i + 1, int(np.searchsorted(cum, cum[i] + max_pairs, side="right")) - 1)
        j = min(j, n)
        cnt = counts[i:j]
        local = np.repeat(np.arange(j - i), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(cum[i:j] - cum[i], cnt)
        c_idx = np.repeat(start[i:j], cnt) + offs
        diff = pts[i:j][local] - c[c_idx]
        arg = diff[:, 0] if d == 1 else diff
        values[i:j] = np.bincount(local, weights=kernel(arg) * m[c_idx], minlength=j - i)
        i = j
    return values


def simulate_field(
    kernel: Kernel,
    v0: LevyDensity,
    grid: GridSpec,
    seed: int,
    *,
    truncation_radius: float | None = None,
    max_pairs: int = 2_000_000,
) -> FieldSample:
    """Draw ``X(delta j)`` for all lattice points of ``grid``.

    Deterministic given ``seed`` (fed to ``numpy.random.default_rng``).
    Kernels with unbounded support are cut to ``[-R, R]^d``, which drops the
    kernel tail beyond ``R``.
    """
    lo, hi, pts = _window(kernel, grid, truncation_radius)
    box_lo, box_hi = _support(kernel, grid.dimension, truncation_radius)
    seed = int(seed) % _U64
    rng = np.random.default_rng(seed)
    lam0 = v0.total_mass()
    volume = float(np.prod(hi - lo))
    count = rng.poisson(lam0 * volume) if lam0 > 0 else 0
    values = np.zeros(grid.n)
    if count:
        centers = lo + (hi - lo) * rng.random((count, grid.dimension))
        marks = v0.sample_jumps(rng, count)
        values = _accumulate(kernel, pts, centers, marks, box_lo, box_hi, max_pairs)
    return FieldSample(grid, values, seed, kernel.kernel_id)


def replicate(
    kernel: Kernel,
    v0: LevyDensity,
    grid: GridSpec,
    k: int,
    base_seed: int,
    *,
    truncation_radius: float | None = None,
) -> list[FieldSample]:
    """``k`` independent samples, replication ``i`` seeded by ``derived_seed(base_seed, i)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return [
        simulate_field(kernel, v0, grid, derived_seed(base_seed, i), truncation_radius=truncation_radius)
        for i in range(k)
    ]


def write_field_csv(sample: FieldSample, path: str | Path) -> Path:
    """Header ``# seed=<u64> kernel=<id> delta=<f> shape=<dims>``, then ``index..., value`` rows."""
    path = Path(path)
    g = sample.grid
    lines = [f"# seed={sample.seed} kernel={sample.kernel_id} delta={g.delta!r} shape={g.shape_str()}"]
    idx = g.indices()
    for row, v in zip(idx, sample.values):
        lines.append(",".join(str(int(j)) for j in row) + f",{v:.17g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field_csv(path: str | Path) -> FieldSample:
    """Inverse of ``write_field_csv``."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    shape = tuple(int(s) for s in meta["shape"].split("x"))
    d = len(shape)
    origin = tuple(int(o) for o in rows[0, :d]) if rows.size else (0,) * d
    grid = GridSpec(d, float(meta["delta"]), shape, origin)
    return FieldSample(grid, rows[:, d] if rows.size else np.zeros(0), int(meta["seed"]), meta["kernel"])
