import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conftest import UV0_NORM
from levydecon.errors import BoundaryLeakage, DegenerateSearch, EmptySpectrum, GridMismatch
from levydecon.estimate import (
    EcfSample,
    EstimatorConfig,
    a_n_rule,
    argmin_cutoff,
    calibrate_cutoff,
    cutoff_candidates,
    decay_diagnostic,
    ecf,
    estimate,
    fourier_plus,
    frequency_grid,
    l2_error,
    nonneg_project,
    uv0_plugin,
    uv1_estimate,
    write_estimate_csv,
)
from levydecon.levy_model import (
    EpanechnikovFieldDensity,
    ExpTruncFieldDensity,
    SimpleKernel,
    characteristic_exponent,
    pure_jump_triplet,
)
from levydecon.logfourier import LogGrid, SignedGridFunction
from levydecon.multiplier import MultiplicativeWeight, multiplier_closed_form
from levydecon.simulate import GridSpec, derived_seed, replicate, simulate_field

CFG = EstimatorConfig(l=2, a_n=0.5)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLeakage)
        return fn(*args, **kw)


def smoothed_uv1(x, l=2):
    """(1/2pi) int_{-pi l}^{pi l} e^{-iyx} (F_+ uv1)(y) dy with
    (F_+ uv1)(y) = (1/2) int_0^4 e^{s/2} (e^s - iy)^(-3/2) ds, by quadrature."""
    t, w = np.polynomial.legendre.leggauss(64)
    s, ws = 2 + 2 * t, 2 * w

    def F(y):
        return 0.5 * np.sum(ws * np.exp(s / 2) * (np.exp(s) - 1j * y) ** -1.5)

    re = integrate.quad(lambda y: (np.exp(-1j * y * x) * F(y)).real, -math.pi * l, math.pi * l, limit=200, epsabs=1e-13)
    return re[0] / (2 * math.pi)


# --- configuration --------------------------------------------------------


@pytest.mark.parametrize("kw", [{"l": 0}, {"l": 1.5}, {"a_n": 0.0}, {"a": -1.0}, {"y_per_l": 32}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        EstimatorConfig(**kw)


def test_config_rule_when_a_n_missing():
    cfg = EstimatorConfig(a_n=None, C_k=0.8, a=0.5)
    assert cfg.resolve_a_n(100) == a_n_rule(0.8, 100, 0.5)


def test_frequency_grid():
    y = frequency_grid(2, 64)
    assert y.size == 2 * 64 * 2 + 1
    assert y[0] == -2 * math.pi and y[-1] == 2 * math.pi and y[128] == 0.0


# --- empirical characteristic function ------------------------------------


def test_ecf_of_zeros():
    e = ecf(np.zeros(10), frequency_grid(1, 64))
    assert np.all(e.psi_hat == 1) and np.all(e.theta_hat == 0)


def test_ecf_of_point_mass():
    y = frequency_grid(1, 64)
    e = ecf(np.full(7, 0.7), y)
    assert np.allclose(e.psi_hat, np.exp(1j * y * 0.7), atol=1e-15)
    assert np.allclose(e.theta_hat, 0.7 * np.exp(1j * y * 0.7), atol=1e-15)


def test_frequency_grid_is_exactly_symmetric():
    for l in (1, 2, 3):
        y = frequency_grid(l, 256)
        assert np.array_equal(y[::-1], -y)


def test_ecf_conjugate_symmetry_is_exact():
    rng = np.random.default_rng(0)
    y = frequency_grid(3, 64)
    e = ecf(rng.gamma(0.5, 1.0, 300), y)
    assert np.array_equal(e.psi_hat[::-1], np.conj(e.psi_hat))
    assert np.array_equal(e.theta_hat[::-1], np.conj(e.theta_hat))


def test_ecf_rejects_empty_and_misaligned():
    with pytest.raises(ValueError):
        ecf(np.zeros(0), [0.0])
    with pytest.raises(ValueError):
        EcfSample(np.zeros(3), np.zeros(2), np.zeros(3), 5)


def test_ecf_matches_exponent_of_field(kernel, v0):
    # Delta = 5 > theta = 4: lattice values are independent draws of X(0)
    g = GridSpec(1, 5.0, (5000,), (0,))
    vals = np.concatenate([simulate_field(kernel, v0, g, derived_seed(77, i)).values for i in range(20)])
    e = ecf(vals, [1.0])
    K = characteristic_exponent(pure_jump_triplet(ExpTruncFieldDensity(4.0)), 1.0)
    assert abs(e.psi_hat[0] - np.exp(K)) < 3 * vals.size**-0.5


def test_fourier_plus_threshold():
    e = EcfSample(np.array([0.0, 1.0]), np.array([1.0, 0.05]), np.array([2.0, 1.0]), 100)
    assert fourier_plus(e).tolist() == [2.0, 0.0]


# --- uv1 estimate ---------------------------------------------------------


def test_uv1_of_zero_theta(grid):
    y = frequency_grid(2, 64)
    e = EcfSample(y, np.ones(y.size), np.zeros(y.size), 50)
    assert uv1_estimate(e, CFG).max_abs() == 0.0


@pytest.mark.parametrize("l", [1, 2, 3])
def test_uv1_of_point_mass_is_dirichlet_kernel(grid, l):
    c0 = 0.7
    cfg = EstimatorConfig(l=l, y_per_l=64)
    out = uv1_estimate(ecf(np.full(4, c0), frequency_grid(l, 64)), cfg)
    x = grid.x
    expect_pos = c0 * np.sin(math.pi * l * x) / (math.pi * x)
    assert np.max(np.abs(out.pos - expect_pos)) < 1e-10
    assert np.max(np.abs(out.neg - expect_pos)) < 1e-10  # sin(pi l x)/x is even


def test_uv1_mean_tracks_smoothed_truth(grid, kernel, v0):
    samples = replicate(kernel, v0, GridSpec(1, 1.0, (100,), (-50,)), 100, 31)
    y = frequency_grid(2, 256)
    idx = np.searchsorted(grid.x, [0.1, 0.5, 1.0, 2.0, 4.0])
    ests = np.array([uv1_estimate(ecf(s, y), CFG).pos.real[idx] for s in samples])
    mean, se = ests.mean(axis=0), ests.std(axis=0, ddof=1) / 10
    truth = np.array([smoothed_uv1(grid.x[i]) for i in idx])
    assert np.all(np.abs(mean - truth) < 3 * se)


def test_uv1_ignores_frequencies_outside_band(grid):
    y_wide = frequency_grid(3, 64)
    e = ecf(np.full(4, 0.7), y_wide)
    a = uv1_estimate(e, EstimatorConfig(l=2, y_per_l=64))
    b = uv1_estimate(ecf(np.full(4, 0.7), frequency_grid(2, 64)), EstimatorConfig(l=2, y_per_l=64))
    assert np.max(np.abs(a.pos - b.pos)) < 1e-12


# --- plug-in inversion ----------------------------------------------------


def test_identity_kernel_round_trip(grid, u):
    # mu_f = 1: the plug-in is M^-1 F^-1 F M, exact up to transform error
    mu = multiplier_closed_form(SimpleKernel(((1.0, 1.0),)), u, 0.0)
    bump = SignedGridFunction.from_function(grid, lambda x: x * np.exp(-np.log(np.abs(x)) ** 2 / 4))
    out = uv0_plugin(bump, mu, EstimatorConfig(a_n=0.5))
    assert (out - bump).max_abs() < 1e-6 * bump.max_abs()


def test_identity_kernel_round_trip_exact_uv1(uv1_table, u):
    # M uv1 is ~4e-5 of its peak at x = e^-12, which bounds the round trip
    mu = multiplier_closed_form(SimpleKernel(((1.0, 1.0),)), u, 0.0)
    out = quiet(uv0_plugin, uv1_table, mu, EstimatorConfig(a_n=0.5))
    assert l2_error(out, uv1_table) < 5e-5 * l2_error(SignedGridFunction.zeros(uv1_table.grid), uv1_table)


def test_exact_input_recovers_uv0(uv1_table, mu_f, uv0_truth):
    out = quiet(uv0_plugin, uv1_table, mu_f, EstimatorConfig(a_n=1e-6))
    assert l2_error(out, uv0_truth) / UV0_NORM < 1e-2


def test_threshold_monotonicity(uv1_table, mu_f, uv0_truth):
    errs = [l2_error(quiet(uv0_plugin, uv1_table, mu_f, EstimatorConfig(a_n=a)), uv0_truth) for a in (1e-6, 0.5)]
    assert errs[0] <= errs[1]


def test_zero_input_gives_zero(grid, mu_f):
    out = uv0_plugin(SignedGridFunction.zeros(grid), mu_f, CFG)
    assert out.max_abs() == 0.0


def test_empty_spectrum(uv1_table, mu_f):
    with pytest.raises(EmptySpectrum):
        quiet(uv0_plugin, uv1_table, mu_f, EstimatorConfig(a_n=10.0))


def test_plugin_needs_n_for_rule(uv1_table, mu_f):
    with pytest.raises(ValueError):
        uv0_plugin(uv1_table, mu_f, EstimatorConfig(a_n=None))


def test_plugin_records_diagnostics(uv1_table, mu_f):
    diag = {}
    quiet(uv0_plugin, uv1_table, mu_f, CFG, diagnostics=diag)
    assert diag["a_n"] == 0.5 and 0 < diag["kept_fraction"] < 1
    assert diag["leakage_forward"] >= 0 and diag["imag_residue"] < 1e-6


def test_pipeline_leakage_is_a_warning(uv1_table, mu_f):
    with pytest.warns(BoundaryLeakage):
        uv0_plugin(uv1_table, mu_f, CFG)


# --- projection -----------------------------------------------------------


def test_projection_keeps_correct_sign(uv0_truth, u):
    out = nonneg_project(uv0_truth, u)
    assert np.array_equal(out.pos, uv0_truth.pos)


def test_projection_of_wrong_sign_is_zero(uv0_truth, u):
    assert nonneg_project(-uv0_truth, u).max_abs() == 0.0


def test_projection_on_negative_branch(grid):
    f = SignedGridFunction(grid, np.ones(grid.n_points), np.ones(grid.n_points))
    signed = nonneg_project(f, MultiplicativeWeight(1.0, True))
    unsigned = nonneg_project(f, MultiplicativeWeight(1.0, False))
    assert np.all(signed.neg == 0) and np.all(unsigned.neg == 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_never_increases_error(seed):
    # the truth has the correct sign, so zeroing wrong-sign nodes can only help
    from levydecon.logfourier import DEFAULT_GRID

    rng = np.random.default_rng(seed)
    truth = SignedGridFunction.from_function(DEFAULT_GRID, lambda x: np.where(x > 0, np.sqrt(np.abs(x)) * np.exp(-np.abs(x)), 0.0))
    noise = SignedGridFunction(DEFAULT_GRID, rng.normal(0, 0.1, 4096), rng.normal(0, 0.1, 4096))
    est = truth + noise
    u = MultiplicativeWeight(1.0, True)
    assert l2_error(nonneg_project(est, u), truth) <= l2_error(est, truth)


# --- error and calibration ------------------------------------------------


def test_l2_error_identity(uv0_truth):
    assert l2_error(uv0_truth, uv0_truth) == 0.0


def test_l2_error_of_zero_estimate(grid, uv0_truth):
    assert abs(l2_error(SignedGridFunction.zeros(grid), uv0_truth) - UV0_NORM) < 1e-8


def test_l2_error_grid_mismatch(uv0_truth):
    with pytest.raises(GridMismatch):
        l2_error(SignedGridFunction.zeros(LogGrid(-1, 1, 8)), uv0_truth)


def test_a_n_rule_values():
    assert abs(a_n_rule(0.8, 100, 0.5) - 0.8**0.5 * 100 ** (-1 / 8)) < 1e-15
    assert abs(a_n_rule(0.8, 100, 0.5) - 0.503) < 1e-3
    assert abs(a_n_rule(4.74, 10_000, 0.25) - 1.011) < 1e-3


def test_argmin_tie_break():
    cand = np.linspace(0.1, 1.0, 10)
    err = np.array([5, 4, 3, 2, 1, 0, 0, 0, 0, 0], dtype=float)
    assert argmin_cutoff(cand, err) == cand[5]
    # order of the candidate list does not matter
    assert argmin_cutoff(cand[::-1], err[::-1]) == cand[5]


def test_argmin_flat_curve():
    with pytest.raises(DegenerateSearch):
        argmin_cutoff([0.1, 0.2, 0.3], [1.0, 1.0, 1.0])
    with pytest.raises(DegenerateSearch):
        argmin_cutoff([0.1, 0.2], [np.nan, np.inf])


def test_cutoff_candidates(grid, mu_f):
    cand = cutoff_candidates(mu_f, grid)
    top = np.abs(mu_f(0.0)[0])
    assert cand.size == 200 and np.all(np.diff(cand) > 0)
    assert cand[-1] <= top * (1 + 1e-12) and cand[0] > 0


def test_calibration_consistency(grid, kernel, v0, mu_f, uv0_truth):
    samples = replicate(kernel, v0, GridSpec(1, 1.0, (100,), (-50,)), 3, 5)
    y = frequency_grid(2, 256)
    uv1s = [uv1_estimate(ecf(s, y), CFG) for s in samples]
    cal = quiet(calibrate_cutoff, uv1s, uv0_truth, mu_f, 100, 0.5, CFG)
    assert abs(cal.C_k - 100 ** (0.5 / 2) * cal.argmin**2) < 1e-12 * cal.C_k
    assert abs(cal.a_n - a_n_rule(cal.C_k, 100, 0.5)) < 1e-15
    assert cal.errors.min() == cal.errors[np.searchsorted(cal.candidates, cal.argmin)]


def test_calibration_needs_replicates(uv0_truth, mu_f):
    with pytest.raises(ValueError):
        calibrate_cutoff([], uv0_truth, mu_f, 100, 0.5, CFG)


# --- decay diagnostic -----------------------------------------------------


def _closed_decay(x, theta=4.0):
    return theta + 2 * np.log(np.abs((1 + np.sqrt(1 - 1j * x)) / (np.exp(theta / 2) + np.sqrt(np.exp(theta) - 1j * x))))


def test_decay_curve_exp_trunc(uv1_table):
    rep = decay_diagnostic(uv1_table)
    assert np.max(np.abs(rep.curve - _closed_decay(rep.x))) < 5e-3
    assert abs(rep.curve[-1] - 4.0) < 0.05
    assert rep.bounded


def test_decay_curve_matches_cumulative_transform(uv1_table):
    # cross-check: trapezoid of Im F_+ uv1 on a fine y grid up to X = 20
    rep = decay_diagnostic(uv1_table, x_max=20.0, n_points=50)
    t, w = np.polynomial.legendre.leggauss(64)
    s, ws = 2 + 2 * t, 2 * w
    y = np.linspace(0, 20, 20001)
    F = 0.5 * np.sum(ws * np.exp(s / 2) * (np.exp(s)[None, :] - 1j * y[:, None]) ** -1.5, axis=1)
    cum = np.concatenate([[0], np.cumsum(0.5 * (F.imag[1:] + F.imag[:-1]) * np.diff(y))])
    assert np.max(np.abs(np.interp(rep.x, y, cum) - rep.curve)) < 2e-3


def test_decay_curve_epanechnikov_is_bounded(grid):
    uv1 = SignedGridFunction.from_function(grid, EpanechnikovFieldDensity(0.5, 1.0).uv)
    rep = decay_diagnostic(uv1)
    assert rep.bounded and abs(rep.fitted_b) < 0.05
    assert np.all(np.abs(rep.curve) < 10)


def test_decay_rejects_bad_range(uv1_table):
    with pytest.raises(ValueError):
        decay_diagnostic(uv1_table, x_max=0.0)


# --- whole pipeline -------------------------------------------------------


def test_estimate_is_deterministic(kernel, v0, mu_f):
    s = simulate_field(kernel, v0, GridSpec(1, 1.0, (100,), (-50,)), derived_seed(3, 0))
    a, b = quiet(estimate, s, mu_f, CFG), quiet(estimate, s, mu_f, CFG)
    for f in ("uv1_hat", "uv0_hat", "uv0_tilde"):
        assert np.array_equal(getattr(a, f).pos, getattr(b, f).pos)
        assert np.array_equal(getattr(a, f).neg, getattr(b, f).neg)
    assert a.diagnostics == b.diagnostics


def test_estimate_projection_helps(kernel, v0, mu_f, uv0_truth):
    s = simulate_field(kernel, v0, GridSpec(1, 1.0, (100,), (-50,)), derived_seed(3, 1))
    r = quiet(estimate, s, mu_f, CFG)
    assert l2_error(r.uv0_tilde, uv0_truth) <= l2_error(r.uv0_hat, uv0_truth)
    assert abs(r.uv1_hat.pos.real[np.searchsorted(r.uv1_hat.grid.x, 1e-6)] - np.mean(s.values)) < 1
    assert r.diagnostics["n"] == 100


def test_write_estimate_csv(tmp_path, kernel, v0, mu_f, uv0_truth):
    s = simulate_field(kernel, v0, GridSpec(1, 1.0, (100,), (-50,)), 1)
    r = quiet(estimate, s, mu_f, CFG)
    path = write_estimate_csv(r, tmp_path / "e.csv", uv0_truth)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "x,uv1_hat,uv0_hat,uv0_tilde,uv0_true"
    assert data.shape == (2 * 4096, 5)
    assert np.array_equal(data[:4096, 2], r.uv0_hat.pos.real)
