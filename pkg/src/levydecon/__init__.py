"""Lévy density deconvolution for infinitely divisible moving-average fields.

Estimates the Lévy density of the integrator of ``X(t) = int f(t - x) Lambda(dx)``
from lattice observations of ``X``: the field's Lévy density is estimated
from the empirical characteristic function, and the scaled-kernel integral
equation linking the two densities is inverted with the multiplicative
Fourier transform and a spectral cutoff.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .logfourier import (  # noqa: E402,F401
    DEFAULT_GRID,
    LogGrid,
    SignedGridFunction,
    haar_norm,
    mult_fourier,
    mult_fourier_inv,
    sobolev_weight_norm,
    weight_map,
    weighted_l2_norm,
)
from .special import incomplete_gamma  # noqa: E402,F401
