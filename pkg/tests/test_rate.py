import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from blockspin.errors import DomainError, NoConvergence, NotACriticalPoint
from blockspin.model import BlockModelSpec, validate_spec
from blockspin.rate import (
    CriticalPoint,
    Definiteness,
    critical_point,
    critical_value_identity,
    curie_weiss_root,
    find_maximizers,
    global_maxima,
    ldp_rate_J,
    lstar,
    mean_field_residual,
    rate_gradient,
    rate_hessian,
    rate_I,
    solve_mean_field,
    structured_solution,
)

from conftest import pd_specs, random_pd

# positive root of tanh(1.3 m) = m, by brentq at full precision
M_STAR_13 = optimize.brentq(lambda m: math.tanh(1.3 * m) - m, 0.1, 1.0, xtol=1e-16, rtol=1e-15)


def uniform_family(k, beta, alpha):
    return (beta - alpha) * np.eye(k) + alpha * np.ones((k, k))


def test_lstar_values():
    assert lstar(0.0) == 0.0
    assert lstar(1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert lstar(-1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert lstar(0.5) == pytest.approx(0.5 * (1.5 * math.log(1.5) + 0.5 * math.log(0.5)), abs=1e-15)
    with pytest.raises(DomainError):
        lstar(1.0000001)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1))
def test_lstar_even_nonneg_convex(a, b, t):
    assert lstar(a) >= 0
    assert lstar(a) == pytest.approx(lstar(-a), abs=1e-15)
    assert lstar(t * a + (1 - t) * b) <= t * lstar(a) + (1 - t) * lstar(b) + 1e-12


@given(pd_specs(max_k=4), st.integers(0, 2**32 - 1))
def test_rate_symmetry_and_origin(spec, seed):
    sc = validate_spec(spec)
    x = np.random.default_rng(seed).uniform(-1, 1, spec.k)
    assert rate_I(spec, sc, x) == pytest.approx(rate_I(spec, sc, -x), abs=1e-14)
    assert rate_I(spec, sc, np.zeros(spec.k)) == 0.0
    np.testing.assert_array_equal(rate_gradient(spec, sc, np.zeros(spec.k)), 0.0)
    np.testing.assert_array_equal(mean_field_residual(spec, sc, np.zeros(spec.k)), 0.0)
    g = sc.gamma_inf
    M = g[:, None] * spec.A * g[None, :]
    np.testing.assert_allclose(rate_hessian(spec, sc, np.zeros(spec.k)),
                               np.diag(g) @ (M - np.eye(spec.k)) @ np.diag(g), atol=1e-14)


def test_uniform_form():
    k = 3
    A = uniform_family(3, 1.5, 0.4)
    spec = BlockModelSpec(k, (4, 4, 4), A)
    sc = validate_spec(spec)
    x = np.array([0.3, -0.7, 0.1])
    expected = x @ A @ x / (2 * k**2) - np.sum(lstar(x)) / k
    assert rate_I(spec, sc, x) == pytest.approx(expected, abs=1e-15)


def test_two_block_residual_reduction():
    spec = BlockModelSpec(2, (3, 7), [[2.0, 0.5], [0.5, 2.0]])
    sc = validate_spec(spec)
    x = np.array([0.2, -0.4])
    r = mean_field_residual(spec, sc, x)
    assert r[0] == pytest.approx(x[0] - math.tanh(0.3 * 2.0 * x[0] + 0.7 * 0.5 * x[1]), abs=1e-15)


def test_domain_errors(high_pair):
    spec, sc = high_pair
    with pytest.raises(DomainError):
        rate_I(spec, sc, [1.2, 0.0])
    with pytest.raises(DomainError):
        rate_gradient(spec, sc, [1.0, 0.0])
    with pytest.raises(DomainError):
        rate_I(spec, sc, [0.1])
    assert np.isfinite(rate_I(spec, sc, [1.0, -1.0]))


def test_scalar_solvers():
    spec = BlockModelSpec(1, (10,), [[1.5]])
    sc = validate_spec(spec)
    root = curie_weiss_root(1.5)
    assert math.tanh(1.5 * root) == pytest.approx(root, abs=1e-15)
    for method in ("newton", "damped_fixed_point"):
        cp = solve_mean_field(spec, sc, [0.5], method=method)
        assert cp.x[0] == pytest.approx(0.8590, abs=1e-3)
        assert cp.x[0] == pytest.approx(root, abs=1e-9)
        assert cp.residual < 1e-10
        assert cp.hessian_definiteness is Definiteness.MAX
    assert curie_weiss_root(0.9) == 0.0


@given(st.floats(1.1, 4.0), st.floats(0.01, 0.99))
def test_scalar_damped_iteration_monotone(beta, x0):
    f = lambda x: 0.5 * x + 0.5 * math.tanh(beta * x)
    xs = [x0]
    for _ in range(3000):
        xs.append(f(xs[-1]))
    d = np.diff(xs[1:])
    assert np.all(d >= -1e-15) or np.all(d <= 1e-15)
    assert xs[-1] == pytest.approx(curie_weiss_root(beta), abs=1e-6)


def test_newton_failure_carries_best_iterate(low_pair):
    spec, sc = low_pair
    with pytest.raises(NoConvergence) as exc:
        solve_mean_field(spec, sc, [0.3, 0.2], method="damped_fixed_point", max_iter=3)
    assert exc.value.best_x is not None and exc.value.residual > 0


def test_low_pair_two_maxima(low_pair):
    spec, sc = low_pair
    cp = solve_mean_field(spec, sc, [0.5, 0.5])
    np.testing.assert_allclose(cp.x, [M_STAR_13, M_STAR_13], atol=1e-9)
    points = find_maximizers(spec, sc)
    maxima = global_maxima(points)
    assert len(maxima) == 2
    for p in maxima:
        assert p.residual < 1e-10
        assert abs(abs(p.x[0]) - curie_weiss_root(1.3)) < 1e-9
        assert p.x[0] == pytest.approx(p.x[1], abs=1e-12)
    assert maxima[0].x[0] == pytest.approx(-maxima[1].x[0], abs=1e-12)
    origin = [p for p in points if np.max(np.abs(p.x)) < 1e-12]
    assert origin and origin[0].hessian_definiteness is Definiteness.SADDLE


def test_prop_two_maxima_non_uniform():
    spec = BlockModelSpec(2, (3, 7), [[2.0, 0.5], [0.5, 2.0]])
    sc = validate_spec(spec)
    maxima = global_maxima(find_maximizers(spec, sc))
    assert len(maxima) == 2
    np.testing.assert_allclose(maxima[0].x, -maxima[1].x, atol=1e-12)


def test_four_block_example():
    # the example's parameters are high temperature (top eigenvalue 3.8 < 4)
    spec = BlockModelSpec(4, (5,) * 4, _four_block(2.0, 1.0, 0.4))
    sc = validate_spec(spec)
    points = find_maximizers(spec, sc)
    assert len(points) == 1 and np.max(np.abs(points[0].x)) < 1e-12
    spec = BlockModelSpec(4, (5,) * 4, _four_block(2.5, 1.0, 0.5))
    sc = validate_spec(spec)
    maxima = global_maxima(find_maximizers(spec, sc))
    assert len(maxima) == 2
    # top eigenvalue 4.5 > k with eigenvector (1,1,1,1)
    s = structured_solution(spec, sc)
    assert s is not None
    assert any(np.max(np.abs(p.x - s.x)) < 1e-9 for p in maxima)


def _four_block(beta, alpha, gamma):
    """Two groups of two blocks: ``beta`` on the diagonal, ``alpha`` within a group, ``gamma`` across."""
    A = np.full((4, 4), gamma)
    A[:2, :2] = alpha
    A[2:, 2:] = alpha
    np.fill_diagonal(A, beta)
    return A


@pytest.mark.parametrize("k,beta,alpha", [(3, 1.5, 1.2), (2, 1.8, 0.8), (4, 2.0, 0.9), (5, 1.2, 1.1)])
def test_structured_solutions(k, beta, alpha):
    spec = BlockModelSpec(k, (3,) * k, uniform_family(k, beta, alpha))
    sc = validate_spec(spec)
    assert beta + (k - 1) * alpha > k
    s = structured_solution(spec, sc)
    assert s is not None and s.residual < 1e-10
    m = curie_weiss_root((beta + (k - 1) * alpha) / k)
    np.testing.assert_allclose(s.x, m * np.ones(k), atol=1e-12)


def test_structured_solution_needs_low_temperature(high_pair):
    assert structured_solution(*high_pair) is None
    spec = BlockModelSpec(2, (3, 7), [[2.0, 0.5], [0.5, 2.0]])
    assert structured_solution(spec, validate_spec(spec)) is None


@given(st.integers(0, 2**32 - 1))
def test_high_temperature_unique_zero(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    sizes = tuple(int(s) for s in rng.integers(1, 10, size=k))
    A = random_pd(rng, k)
    spec = BlockModelSpec(k, sizes, A)
    sc = validate_spec(spec)
    g = sc.gamma_inf
    norm = np.linalg.eigvalsh(g[:, None] * A * g[None, :])[-1]
    spec = BlockModelSpec(k, sizes, A * rng.uniform(0.1, 0.95) / norm)
    sc = validate_spec(spec)
    points = find_maximizers(spec, sc)
    assert len(points) == 1 and np.max(np.abs(points[0].x)) < 1e-12
    assert points[0].hessian_definiteness is Definiteness.MAX


@given(st.integers(0, 2**32 - 1))
def test_critical_points_closed_and_interior(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    spec = BlockModelSpec(k, tuple(int(s) for s in rng.integers(1, 10, size=k)), random_pd(rng, k, 5.0))
    sc = validate_spec(spec)
    points = find_maximizers(spec, sc)
    for p in points:
        assert np.max(np.abs(p.x)) <= 1 - 1e-6
        assert any(np.max(np.abs(q.x + p.x)) < 1e-6 for q in points)
        assert abs(p.value - critical_value_identity(spec, sc, p)) < 1e-9


def test_identity_examples():
    spec = BlockModelSpec(1, (10,), [[1.5]])
    sc = validate_spec(spec)
    assert critical_value_identity(spec, sc, critical_point(spec, sc, [0.0])) == 0.0
    m = curie_weiss_root(1.5)
    p = critical_point(spec, sc, [m])
    closed = -0.5 * (m * math.atanh(m) + math.log(1 - m * m))
    assert critical_value_identity(spec, sc, p) == pytest.approx(closed, abs=1e-15)
    assert rate_I(spec, sc, [m]) == pytest.approx(closed, abs=1e-12)
    with pytest.raises(NotACriticalPoint):
        critical_value_identity(spec, sc, critical_point(spec, sc, [0.3]))


def test_ldp_rate(low_pair):
    spec, sc = low_pair
    points = find_maximizers(spec, sc)
    top = global_maxima(points)[0]
    assert ldp_rate_J(spec, sc, top.x, points) == pytest.approx(0.0, abs=1e-15)
    assert ldp_rate_J(spec, sc, [0.0, 0.0], points) > 0


def test_global_maxima_falls_back_to_degenerate():
    pts = [CriticalPoint(np.zeros(1), 0.0, 0.0, Definiteness.DEGENERATE)]
    assert global_maxima(pts) == pts


@given(st.integers(0, 2**32 - 1))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    spec = BlockModelSpec(k, tuple(int(s) for s in rng.integers(1, 10, size=k)), random_pd(rng, k, 3.0))
    sc = validate_spec(spec)
    x = rng.uniform(-0.9, 0.9, k)
    h = 1e-6
    E = np.eye(k)
    fd_grad = np.array([(rate_I(spec, sc, x + h * e) - rate_I(spec, sc, x - h * e)) / (2 * h) for e in E])
    assert np.max(np.abs(fd_grad - rate_gradient(spec, sc, x))) < 1e-6
    h = 1e-5
    fd_hess = np.array([(rate_gradient(spec, sc, x + h * e) - rate_gradient(spec, sc, x - h * e)) / (2 * h)
                        for e in E])
    assert np.max(np.abs(fd_hess - rate_hessian(spec, sc, x))) < 1e-4


def test_solver_from_any_start_high_pair(high_pair):
    spec, sc = high_pair
    for x0 in ([0.9, -0.9], [0.5, 0.5], [-0.99, 0.2]):
        cp = solve_mean_field(spec, sc, x0)
        assert np.max(np.abs(cp.x)) < 1e-12
