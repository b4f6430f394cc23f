"""Exchangeable-pair quantities for the Glauber step and the three Stein error terms.

For the pair ``(X, X~)`` given by one heat-bath update, the conditional drift
of ``m_hat`` is linear up to a remainder,
``E(m_hat - m_hat~ | X) = Lam m_hat + R(X)`` with
``Lam = N^-1 (Id - G A G)`` (``G = Gamma_n``). All conditional moments used
below are exact finite sums over the ``N`` possible update sites; since the
local field only depends on the block and the current spin, each block
contributes through two ``tanh`` values, so everything is vectorized over
samples of ``m``.

Error terms (sums over blocks ``i``):

* ``E1 = sum_i sd(E((m_hat_i - m_hat~_i)^2 | X))``
* ``E2 = sum_i E|m_hat_i - m_hat~_i|^3``
* ``E3 = sum_i sd(R_i(X))``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import InsufficientSamples, NotHighTemperature, NotInvertible, ValidationError
from .model import BlockModelSpec, BlockScaling, Regime, SpinConfiguration, scaled_interaction, spectral, validate_spec
from .oracle import MagnetizationPMF, exact_moments
from .sampler import SamplerConfig, sample_chain
from .stats import batch_means, jackknife_se

MIN_SAMPLES = 100
BATCH_SWEEPS = 50
SUITE_VERSION = "f3-v1"


# --- regression matrix -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegressionMatrix:
    Lam: np.ndarray
    Lam_inv: np.ndarray
    weights: np.ndarray  # lambda(i) = sum_m |(Lam^-1)_{m,i}|
    finite_norm: float


def regression_matrix(spec: BlockModelSpec, scaling: BlockScaling) -> RegressionMatrix:
    """``Lam = N^-1 (Id - G_n A G_n)``, its inverse and the column weights ``lambda(i)``."""
    sd = spectral(spec, scaling, "finite_n")
    if sd.op_norm >= 1:
        raise NotInvertible(f"NotInvertible: ||G_n A G_n|| = {sd.op_norm:.12g} >= 1")
    N = spec.N
    M = sd.matrix
    Lam = (np.eye(spec.k) - M) / N
    V = sd.eigenvectors
    Lam_inv = N * (V.T @ np.diag(1.0 / (1.0 - sd.eigenvalues)) @ V)
    Lam_inv = 0.5 * (Lam_inv + Lam_inv.T)
    return RegressionMatrix(Lam, Lam_inv, np.abs(Lam_inv).sum(axis=0), sd.op_norm)


# --- closed-form conditional quantities --------------------------------------

@dataclass(frozen=True, eq=False)
class BlockTanhSums:
    """Per-block sums over sites ``j`` in the block: ``sum X_j tanh g_j`` and ``sum tanh g_j``."""

    signed: np.ndarray  # (..., k)
    plain: np.ndarray  # (..., k)


def block_tanh_sums(spec: BlockModelSpec, m) -> BlockTanhSums:
    """Evaluate the two block sums from block sums ``m`` of shape ``(..., k)``."""
    m = np.asarray(m, dtype=float)
    sizes = spec.sizes.astype(float)
    N = spec.N
    plus = 0.5 * (m + sizes)
    minus = sizes - plus
    a = m @ spec.A / N  # A is symmetric
    diag = np.diag(spec.A) / N
    t_plus = np.tanh(a - diag)  # field at a +1 site
    t_minus = np.tanh(a + diag)  # field at a -1 site
    return BlockTanhSums(plus * t_plus - minus * t_minus, plus * t_plus + minus * t_minus)


def conditional_second_moment(spec: BlockModelSpec, m) -> np.ndarray:
    """``E((m_hat_i - m_hat~_i)^2 | X) = 2/N - 2 (N |B_i|)^-1 sum_j X_j tanh g_j``."""
    s = block_tanh_sums(spec, m)
    N = spec.N
    return 2.0 / N - 2.0 * s.signed / (N * spec.sizes)


def conditional_abs_third_moment(spec: BlockModelSpec, m) -> np.ndarray:
    """``E(|m_hat_i - m_hat~_i|^3 | X) = 4 N^-1 |B_i|^-3/2 sum_j (1 - X_j tanh g_j)``."""
    s = block_tanh_sums(spec, m)
    sizes = spec.sizes.astype(float)
    return 4.0 / spec.N * sizes**-1.5 * (sizes - s.signed)


def conditional_drift(spec: BlockModelSpec, m) -> np.ndarray:
    """``E(m_hat_i - m_hat~_i | X) = N^-1 |B_i|^-1/2 sum_j (X_j - tanh g_j)``."""
    s = block_tanh_sums(spec, m)
    sizes = spec.sizes.astype(float)
    return (np.asarray(m, dtype=float) - s.plain) / (spec.N * np.sqrt(sizes))


def remainder_R(spec: BlockModelSpec, scaling: BlockScaling, x) -> np.ndarray:
    """``R_i = N^-1 ((G_n A G_n m_hat)_i - |B_i|^-1/2 sum_j tanh g_j)``.

    ``x`` is a :class:`SpinConfiguration` or block sums of shape ``(..., k)``.
    """
    m = x.m if isinstance(x, SpinConfiguration) else np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    sizes = spec.sizes.astype(float)
    M = scaled_interaction(spec, scaling, "finite_n")
    m_hat = m / np.sqrt(sizes)
    s = block_tanh_sums(spec, m)
    return (m_hat @ M - s.plain / np.sqrt(sizes)) / spec.N


def e2_envelope(spec: BlockModelSpec) -> float:
    """Deterministic ceiling ``sum_i 8 N^-1 |B_i|^-1/2`` on ``E2``."""
    return float(np.sum(8.0 / spec.N / np.sqrt(spec.sizes)))


# --- error terms ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SteinErrorReport:
    N: int
    E1: float
    E2: float
    E3: float
    se1: float
    se2: float
    se3: float
    lambda_inv_row_sums: np.ndarray
    n_samples: int
    envelope_E2: float = 0.0
    mode: str = "sampled"

    @property
    def max_E(self) -> float:
        return max(self.E1, self.E2, self.E3)

    @property
    def max_se(self) -> float:
        return (self.se1, self.se2, self.se3)[int(np.argmax([self.E1, self.E2, self.E3]))]

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "E1": self.E1, "E2": self.E2, "E3": self.E3,
            "se1": self.se1, "se2": self.se2, "se3": self.se3,
            "E2_envelope": self.envelope_E2,
            "lambda_inv_row_sums": self.lambda_inv_row_sums.tolist(),
            "n_samples": self.n_samples,
            "mode": self.mode,
        }


def _sum_sd(mom):
    # mom[..., 0, :] = E q, mom[..., 1, :] = E q^2
    return np.sum(np.sqrt(np.maximum(mom[1] - mom[0] ** 2, 0.0)))


def _terms_from_samples(spec, scaling, m, batch_len):
    """E1, E2, E3 and their errors from block sums ``m`` of shape ``(chains, n, k)``."""
    q2 = conditional_second_moment(spec, m)
    q3 = conditional_abs_third_moment(spec, m)
    r = remainder_R(spec, scaling, m)
    n_tot = m.shape[0] * m.shape[1]

    def sum_sd(q):
        flat = q.reshape(-1, spec.k)
        value = float(np.sum(flat.std(axis=0, ddof=1)))
        se = float(jackknife_se(np.stack([q, q**2], axis=-2), batch_len, _sum_sd))
        return value, se

    E1, se1 = sum_sd(q2)
    E3, se3 = sum_sd(r)
    E2 = float(np.sum(q3.reshape(-1, spec.k).mean(axis=0)))
    b = batch_means(q3.sum(axis=-1, keepdims=True), batch_len)[:, 0]
    se2 = float(b.std(ddof=1) / math.sqrt(len(b))) if len(b) > 1 else float("nan")
    return E1, E2, E3, se1, se2, se3, n_tot


def _check_high(spec, scaling):
    sd = spectral(spec, scaling, "asymptotic")
    if sd.regime is not Regime.HIGH_STRICT:
        raise NotHighTemperature(f"NotHighTemperature: ||G A G|| = {sd.op_norm:.12g}")


def error_terms(spec: BlockModelSpec, scaling: BlockScaling, cfg: SamplerConfig,
                threads: Optional[int] = None, samples=None) -> SteinErrorReport:
    """Estimate ``E1, E2, E3`` from Glauber samples drawn with ``cfg``.

    Standard errors come from batch means with batches of 50 sweeps (at least
    one retained sample per batch). Precomputed ``samples`` can be passed to
    skip the sampler.
    """
    _check_high(spec, scaling)
    reg = regression_matrix(spec, scaling)
    if cfg.n_samples * cfg.n_chains < MIN_SAMPLES:
        raise InsufficientSamples(f"InsufficientSamples: need at least {MIN_SAMPLES} samples, "
                                  f"got {cfg.n_samples * cfg.n_chains}")
    if samples is None:
        samples = sample_chain(spec, scaling, cfg, threads=threads)
    m = np.asarray(getattr(samples, "m", samples), dtype=float)
    batch_len = max(1, BATCH_SWEEPS // cfg.thinning)
    E1, E2, E3, se1, se2, se3, n = _terms_from_samples(spec, scaling, m, batch_len)
    return SteinErrorReport(spec.N, E1, E2, E3, se1, se2, se3, reg.weights, n, e2_envelope(spec))


def error_terms_exact(spec: BlockModelSpec, scaling: BlockScaling, pmf: MagnetizationPMF) -> SteinErrorReport:
    """The same three terms with the outer expectations taken under the exact law of ``m``."""
    _check_high(spec, scaling)
    reg = regression_matrix(spec, scaling)
    m = pmf.support.astype(float)
    p = pmf.probs

    def sum_sd(q):
        mean = p @ q
        return float(np.sum(np.sqrt(np.maximum(p @ q**2 - mean**2, 0.0))))

    E1 = sum_sd(conditional_second_moment(spec, m))
    E2 = float(np.sum(p @ conditional_abs_third_moment(spec, m)))
    E3 = sum_sd(remainder_R(spec, scaling, m))
    return SteinErrorReport(spec.N, E1, E2, E3, 0.0, 0.0, 0.0, reg.weights, len(p), e2_envelope(spec),
                            mode="exact")


# --- rate sweep ----------------------------------------------------------------

def proportional_sizes(proportions: Sequence[float], N: int) -> tuple:
    """Integer block sizes summing to ``N`` by largest-remainder rounding of ``N * proportions``."""
    p = np.asarray(proportions, dtype=float)
    p = p / p.sum()
    raw = N * p
    base = np.floor(raw).astype(int)
    short = N - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    if np.any(base < 1):
        raise ValidationError(f"N={N} too small for proportions {p.tolist()}")
    return tuple(int(b) for b in base)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    se: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "se": self.se,
                "ci95": [self.ci_low, self.ci_high]}


def fit_log_slope(N, values, se) -> SlopeFit:
    """Weighted least squares of ``log value`` on ``log N``; weights from relative errors."""
    x = np.log(np.asarray(N, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    rel = np.asarray(se, dtype=float) / np.asarray(values, dtype=float)
    rel = np.where(np.isfinite(rel) & (rel > 0), rel, np.nan)
    if np.all(np.isnan(rel)):
        rel = np.ones_like(y)
    rel = np.where(np.isnan(rel), np.nanmin(rel), rel)
    w = 1.0 / rel**2
    X = np.column_stack([x, np.ones_like(x)])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    dof = max(len(x) - 2, 1)
    # inflate by the reduced chi-square when the scatter exceeds the error bars
    scale = max(1.0, float(np.sum(w * resid**2) / dof))
    se_slope = float(np.sqrt(cov[0, 0] * scale))
    slope = float(beta[0])
    return SlopeFit(slope, float(beta[1]), se_slope, slope - 1.96 * se_slope, slope + 1.96 * se_slope)


@dataclass(frozen=True, eq=False)
class RateSweep:
    reports: list
    slope_max: SlopeFit
    slope_scaled: SlopeFit

    def to_dict(self) -> dict:
        return {
            "per_N": [r.to_dict() for r in self.reports],
            "slope_log_max_E": self.slope_max.to_dict(),
            "slope_log_N_max_E": self.slope_scaled.to_dict(),
        }

    def csv_rows(self):
        yield ["N", "E1", "E2", "E3", "se1", "se2", "se3", "max_E", "N_max_E", "E2_envelope"]
        for r in self.reports:
            yield [r.N, r.E1, r.E2, r.E3, r.se1, r.se2, r.se3, r.max_E, r.N * r.max_E, r.envelope_E2]


def rate_sweep(spec_template: BlockModelSpec, scaling: Optional[BlockScaling], N_list: Sequence[int],
               cfg: SamplerConfig, threads: Optional[int] = None) -> RateSweep:
    """Error terms along ``N_list`` at the template's block proportions, with fitted exponents.

    The asymptotic proportions ``gamma_inf`` of ``scaling`` (or of the template)
    are kept for every ``N``; block sizes are rounded to integers.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 4:
        raise ValidationError("rate_sweep needs at least 4 system sizes")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValidationError("N_list must be strictly ascending")
    gamma_inf = (scaling or validate_spec(spec_template)).gamma_inf
    props = gamma_inf**2
    reports = []
    for N in N_list:
        spec = spec_template.with_block_sizes(proportional_sizes(props, N))
        sc = validate_spec(spec, gamma_inf=gamma_inf)
        reports.append(error_terms(spec, sc, cfg, threads=threads))
    Ns = [r.N for r in reports]
    mx = [r.max_E for r in reports]
    se = [r.max_se for r in reports]
    fit = fit_log_slope(Ns, mx, se)
    fit_scaled = fit_log_slope(Ns, [n * v for n, v in zip(Ns, mx)], [n * s for n, s in zip(Ns, se)])
    return RateSweep(reports, fit, fit_scaled)


# --- smooth test-function distance -------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """A smooth test function on ``R^k``, vectorized over rows.

    ``bound`` is a certified ceiling on the sup of every partial derivative of
    order 1 to 3.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    bound: float
    __test__ = False  # not a pytest class


def _mean(x):
    return x.mean(axis=1)


def default_suite(k: int) -> list:
    """Fixed suite of 12 test functions (version ``f3-v1``); partial derivatives up to order 3 are at most 1."""
    shift = 0.5 * np.ones(k)
    return [
        TestFunction("prod_cos", lambda x: np.prod(np.cos(x / k), axis=1), 1.0 / k),
        TestFunction("prod_cos_half", lambda x: np.prod(np.cos(x / (2 * k)), axis=1), 0.5 / k),
        TestFunction("sin_first", lambda x: np.sin(x[:, 0]), 1.0),
        TestFunction("cos_first", lambda x: np.cos(x[:, 0]), 1.0),
        TestFunction("cos_mean", lambda x: np.cos(_mean(x)), 1.0 / k),
        TestFunction("atan_mean", lambda x: 2.0 * np.arctan(_mean(x) / 2.0), 1.0 / k),
        TestFunction("tanh_mean", lambda x: 2.0 * np.tanh(_mean(x) / 2.0), 1.0 / k),
        TestFunction("logcosh_mean", lambda x: np.log(np.cosh(_mean(x))), 1.0 / k),
        TestFunction("bump", lambda x: np.exp(-np.sum(x**2, axis=1) / 8.0), 0.5),
        TestFunction("bump_shifted", lambda x: np.exp(-np.sum((x - shift) ** 2, axis=1) / 8.0), 0.5),
        TestFunction("sin_cos_half", lambda x: np.sin(x[:, 0] / 2.0) * np.cos(x[:, -1] / 2.0), 0.5),
        TestFunction("linear_mean", _mean, 1.0 / k),
    ]


def quadratic_test_function(k: int) -> TestFunction:
    """``|x|^2 / (2k)``: its Gaussian and exact expectations agree once second moments match."""
    return TestFunction("quadratic", lambda x: np.sum(x**2, axis=1) / (2.0 * k), 1.0 / k)


@dataclass(frozen=True, eq=False)
class SmoothDistance:
    names: list
    gaps: np.ndarray
    model_values: np.ndarray
    gaussian_values: np.ndarray
    sigma_n: np.ndarray
    suite_version: str = SUITE_VERSION
    n_qmc: int = 0

    @property
    def suite_max(self) -> float:
        """Largest gap in the suite; a lower bound on the supremum over the whole smooth class."""
        return float(np.max(self.gaps))

    def to_dict(self) -> dict:
        return {
            "suite_version": self.suite_version,
            "gaps": dict(zip(self.names, self.gaps.tolist())),
            "suite_max": self.suite_max,
            "sigma_n": self.sigma_n.tolist(),
            "n_qmc": self.n_qmc,
        }


def gaussian_expectations(sigma: np.ndarray, suite: Sequence[TestFunction], log2_points: int = 18,
                          seed: int = 12345) -> np.ndarray:
    """``E h(sigma^{1/2} Z)`` by scrambled Sobol quasi-Monte Carlo."""
    k = sigma.shape[0]
    engine = qmc.MultivariateNormalQMC(mean=np.zeros(k), cov=sigma, seed=seed)
    z = engine.random(2**log2_points)
    z = np.vstack([z, -z])  # antithetic: exact for odd functions
    return np.array([float(np.mean(h.fn(z))) for h in suite])


def smooth_distance(spec: BlockModelSpec, scaling: BlockScaling, h_suite: Optional[Sequence[TestFunction]] = None,
                    pmf: Optional[MagnetizationPMF] = None, samples=None, log2_points: int = 18) -> SmoothDistance:
    """``|E h(m_hat) - E h(Sigma_n^{1/2} Z)|`` for each ``h`` in the suite.

    ``Sigma_n = E m_hat m_hat^T`` comes from the same source as ``E h(m_hat)``:
    the exact law when ``pmf`` is given, otherwise the sample second moments.
    """
    _check_high(spec, scaling)
    suite = list(h_suite) if h_suite is not None else default_suite(spec.k)
    if (pmf is None) == (samples is None):
        raise ValidationError("pass exactly one of pmf or samples")
    if pmf is not None:
        mh = pmf.support / np.sqrt(spec.sizes)
        sigma = exact_moments(pmf, spec, 2)
        model = np.array([float(pmf.probs @ h.fn(mh)) for h in suite])
    else:
        m = np.asarray(getattr(samples, "m", samples), dtype=float).reshape(-1, spec.k)
        mh = m / np.sqrt(spec.sizes)
        sigma = mh.T @ mh / len(mh)
        model = np.array([float(np.mean(h.fn(mh))) for h in suite])
    gauss = gaussian_expectations(sigma, suite, log2_points)
    return SmoothDistance([h.name for h in suite], np.abs(model - gauss), model, gauss, sigma,
                          n_qmc=2 * 2**log2_points)
