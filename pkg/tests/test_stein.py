import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockspin.errors import InsufficientSamples, NotHighTemperature, NotInvertible, ValidationError
from blockspin.model import BlockModelSpec, SpinConfiguration, spectral, validate_spec
from blockspin.oracle import exact_pmf
from blockspin.sampler import SamplerConfig, conditional_mean, sample_chain
from blockspin.stein import (
    conditional_abs_third_moment,
    conditional_drift,
    conditional_second_moment,
    default_suite,
    e2_envelope,
    error_terms,
    error_terms_exact,
    fit_log_slope,
    gaussian_expectations,
    proportional_sizes,
    quadratic_test_function,
    rate_sweep,
    regression_matrix,
    remainder_R,
    smooth_distance,
)

from conftest import HIGH_PAIR_A, pd_specs

# exact error terms for the high-temperature pair interaction at sizes (6, 6), from the enumerated law
HIGH_PAIR_N12_E = (0.0723360665469493, 0.2394753464615565, 0.0345024848168667)


def _spec(sizes, A):
    spec = BlockModelSpec(len(sizes), tuple(sizes), np.asarray(A, dtype=float))
    return spec, validate_spec(spec)


def _high(spec):
    # rescale so that the model sits in the strict high-temperature regime
    sc = validate_spec(spec)
    norm = spectral(spec, sc).op_norm
    if norm < 0.9:
        return spec, sc
    spec = BlockModelSpec(spec.k, spec.block_sizes, spec.A * 0.8 / norm)
    return spec, validate_spec(spec)


def brute_force_moments(spec, sc, x):
    """Average over the N update sites and both outcomes of the block increments m_hat - m_hat~."""
    sizes = np.sqrt(np.asarray(spec.block_sizes, dtype=float))
    mom = np.zeros((3, spec.k))
    for j in range(spec.N):
        b = spec.block_of[j]
        p_plus = 0.5 * (1 + conditional_mean(spec, sc, x, j))
        for new, p in ((1, p_plus), (-1, 1 - p_plus)):
            d = (x.spins[j] - new) / sizes[b]
            w = p / spec.N
            mom[0, b] += w * d
            mom[1, b] += w * d**2
            mom[2, b] += w * abs(d) ** 3
    return mom


def test_scalar_regression_matrix():
    spec, sc = _spec((20,), [[0.7]])
    reg = regression_matrix(spec, sc)
    assert reg.Lam[0, 0] == pytest.approx(0.3 / 20, rel=1e-14)
    assert reg.Lam_inv[0, 0] == pytest.approx(20 / 0.3, rel=1e-14)
    np.testing.assert_allclose(reg.weights, [20 / 0.3])


def test_high_pair_regression_weights(high_pair):
    reg = regression_matrix(*high_pair)
    np.testing.assert_allclose(reg.weights, [80, 80], rtol=1e-12)
    np.testing.assert_allclose(reg.Lam @ reg.Lam_inv, np.eye(2), atol=1e-12)


@given(pd_specs(max_k=4, max_size=10, max_N=30))
def test_regression_matrix_properties(spec):
    spec, sc = _high(spec)
    reg = regression_matrix(spec, sc)
    N = spec.N
    assert np.linalg.norm(reg.Lam, 2) <= 1 / N + 1e-12
    np.testing.assert_allclose(reg.Lam @ reg.Lam_inv, np.eye(spec.k), atol=1e-9)
    M = spectral(spec, sc, "finite_n").matrix
    partial, power = np.zeros_like(M), np.eye(spec.k)
    for _ in range(400):
        partial += power
        power = power @ M
    np.testing.assert_allclose(reg.Lam_inv, N * partial, rtol=1e-8, atol=1e-8)


def test_not_invertible_and_not_high():
    spec, sc = _spec((4, 4), [[2.0, 0.0], [0.0, 2.0]])
    with pytest.raises(NotInvertible):
        regression_matrix(spec, sc)
    with pytest.raises(NotHighTemperature):
        error_terms_exact(spec, sc, exact_pmf(spec))
    with pytest.raises(NotHighTemperature):
        error_terms(spec, sc, SamplerConfig(n_samples=1000))


def test_insufficient_samples(high_pair):
    with pytest.raises(InsufficientSamples):
        error_terms(*high_pair, SamplerConfig(n_samples=99))


@given(pd_specs(max_k=3, max_size=5, max_N=12), st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_closed_forms_match_site_average(spec, seed):
    sc = validate_spec(spec)
    x = SpinConfiguration.uniform_random(spec, np.random.default_rng(seed))
    mom = brute_force_moments(spec, sc, x)
    np.testing.assert_allclose(conditional_drift(spec, x.m), mom[0], atol=1e-13)
    np.testing.assert_allclose(conditional_second_moment(spec, x.m), mom[1], atol=1e-13)
    np.testing.assert_allclose(conditional_abs_third_moment(spec, x.m), mom[2], atol=1e-13)


def test_linear_regression_decomposition():
    rng = np.random.default_rng(17)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        sizes = tuple(int(s) for s in rng.integers(1, 5, size=k))
        L = rng.normal(size=(k, k))
        spec, sc = _high(BlockModelSpec(k, sizes, L @ L.T + 0.1 * np.eye(k)))
        x = SpinConfiguration.uniform_random(spec, rng)
        m_hat = x.m / np.sqrt(spec.sizes)
        lhs = brute_force_moments(spec, sc, x)[0]
        rhs = regression_matrix(spec, sc).Lam @ m_hat + remainder_R(spec, sc, x)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_remainder_scalar_example():
    spec, sc = _spec((4,), [[0.5]])
    x = SpinConfiguration.from_plus_counts(spec, [2])
    # balanced block: m = 0 and the fields are -+A/N at +-1 sites, so the tanh terms cancel
    assert remainder_R(spec, sc, x)[0] == pytest.approx(0.0, abs=1e-16)
    x = SpinConfiguration.all_plus(spec)
    # one block: the scaled interaction is 0.5, m_hat = 2 and every field is 0.5 * 3 / 4
    expected = (0.5 * 2 - 4 * math.tanh(0.375) / 2) / 4
    assert remainder_R(spec, sc, x)[0] == pytest.approx(expected, abs=1e-15)


def test_exact_error_terms_fig1(high_pair):
    spec, sc = high_pair
    rep = error_terms_exact(spec, sc, exact_pmf(spec))
    np.testing.assert_allclose((rep.E1, rep.E2, rep.E3), HIGH_PAIR_N12_E, rtol=1e-12)
    assert rep.E2 <= rep.envelope_E2 == pytest.approx(e2_envelope(spec))
    assert rep.max_E == rep.E2


def test_sampled_error_terms_agree_with_exact(high_pair):
    spec, sc = high_pair
    cfg = SamplerConfig(seed=2, burn_in=100, n_samples=100_000, n_chains=2)
    rep = error_terms(spec, sc, cfg)
    for got, se, want in zip((rep.E1, rep.E2, rep.E3), (rep.se1, rep.se2, rep.se3), HIGH_PAIR_N12_E):
        assert 0 < se < 0.01 * want
        assert abs(got - want) < 3 * se + 1e-12
    assert rep.n_samples == 200_000
    assert rep.to_dict()["mode"] == "sampled"


@given(pd_specs(max_k=3, max_size=8, max_N=20))
@settings(max_examples=25)
def test_e2_envelope_holds(spec):
    spec, sc = _high(spec)
    rep = error_terms_exact(spec, sc, exact_pmf(spec))
    assert rep.E2 <= rep.envelope_E2 * (1 + 1e-12)
    m = exact_pmf(spec).support.astype(float)
    # pointwise, every configuration respects the envelope
    assert np.all(conditional_abs_third_moment(spec, m).sum(axis=-1) <= rep.envelope_E2 * (1 + 1e-12))


def test_uniform_weights_are_equal():
    spec, sc = _spec((5, 5, 5), [[1.0, 0.4, 0.4], [0.4, 1.0, 0.4], [0.4, 0.4, 1.0]])
    w = regression_matrix(spec, sc).weights
    assert w.max() / w.min() < 1 + 1e-9


def test_standard_error_shrinks_with_samples(high_pair):
    spec, sc = high_pair
    small = error_terms(spec, sc, SamplerConfig(seed=7, burn_in=100, n_samples=20_000))
    large = error_terms(spec, sc, SamplerConfig(seed=7, burn_in=100, n_samples=80_000))
    for a, b in ((small.se1, large.se1), (small.se2, large.se2), (small.se3, large.se3)):
        assert 0.3 < b / a < 0.75


def test_proportional_sizes():
    assert proportional_sizes([0.5, 0.5], 13) == (7, 6)
    assert proportional_sizes([1, 2, 1], 100) == (25, 50, 25)
    assert sum(proportional_sizes([0.2, 0.3, 0.5], 1001)) == 1001
    with pytest.raises(ValidationError):
        proportional_sizes([0.01, 0.99], 10)


def test_rate_sweep_validation(high_pair):
    spec, sc = high_pair
    cfg = SamplerConfig(n_samples=200)
    with pytest.raises(ValidationError):
        rate_sweep(spec, sc, [10, 20, 40], cfg)
    with pytest.raises(ValidationError):
        rate_sweep(spec, sc, [10, 40, 20, 80], cfg)


def test_rate_sweep_small():
    spec, sc = _spec((2, 2), HIGH_PAIR_A)
    cfg = SamplerConfig(seed=1, burn_in=50, n_samples=2000)
    sweep = rate_sweep(spec, sc, [64, 128, 256, 512], cfg)
    assert [r.N for r in sweep.reports] == [64, 128, 256, 512]
    assert sweep.slope_max.slope == pytest.approx(-1.5, abs=0.05)
    assert sweep.slope_scaled.slope == pytest.approx(sweep.slope_max.slope + 1, abs=1e-9)
    rows = list(sweep.csv_rows())
    assert len(rows) == 5 and rows[0][0] == "N"


def test_fit_log_slope_exact_power_law():
    N = np.array([100, 200, 400, 800])
    fit = fit_log_slope(N, 3.0 * N**-1.5, 0.01 * 3.0 * N**-1.5)
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.ci_low <= fit.slope <= fit.ci_high


def _partial(f, x, idx, h=1e-3):
    if not idx:
        return f(x)
    e = np.zeros(x.shape[1])
    e[idx[0]] = h
    return (_partial(f, x + e, idx[1:], h) - _partial(f, x - e, idx[1:], h)) / (2 * h)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_suite_derivative_bounds(k):
    rng = np.random.default_rng(k)
    x = rng.normal(scale=2.0, size=(400, k))
    for h in default_suite(k):
        assert h.bound <= 1
        for order in (1, 2, 3):
            for idx in itertools.product(range(k), repeat=order):
                d = np.max(np.abs(_partial(h.fn, x, idx)))
                assert d <= h.bound + 1e-4, (h.name, idx, d)


def test_gaussian_expectations_exact_cases():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    suite = default_suite(2) + [quadratic_test_function(2)]
    g = gaussian_expectations(sigma, suite)
    names = [h.name for h in suite]
    assert g[names.index("linear_mean")] == pytest.approx(0.0, abs=1e-15)
    assert g[names.index("sin_first")] == pytest.approx(0.0, abs=1e-15)
    assert g[names.index("cos_first")] == pytest.approx(math.exp(-1.0), abs=1e-4)
    assert g[names.index("quadratic")] == pytest.approx(3.0 / 4.0, rel=1e-3)


def test_smooth_distance_exact_sequence():
    maxima = []
    for n in (6, 60, 600):
        spec, sc = _spec((n, n), HIGH_PAIR_A)
        d = smooth_distance(spec, sc, default_suite(2) + [quadratic_test_function(2)], pmf=exact_pmf(spec))
        gaps = dict(zip(d.names, d.gaps))
        assert gaps["linear_mean"] < 1e-12
        assert gaps["quadratic"] < 1e-3 * d.model_values[-1]
        maxima.append(d.suite_max)
    assert maxima[0] > maxima[1] > maxima[2]
    assert maxima[0] / maxima[2] >= 10


def test_smooth_distance_from_samples(high_pair):
    spec, sc = high_pair
    s = sample_chain(spec, sc, SamplerConfig(seed=3, burn_in=100, n_samples=100_000))
    sampled = smooth_distance(spec, sc, samples=s)
    exact = smooth_distance(spec, sc, pmf=exact_pmf(spec))
    assert abs(sampled.suite_max - exact.suite_max) < 0.01
    assert sampled.to_dict()["suite_version"] == "f3-v1"
    with pytest.raises(ValidationError):
        smooth_distance(spec, sc)
