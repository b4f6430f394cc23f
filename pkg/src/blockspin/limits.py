"""Limit laws of the block magnetization: Gaussian at high temperature, quartic at criticality."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from .errors import NonSimpleTopEigenvalue, NotCritical, NotHighTemperature, NotUniform, ValidationError
from .model import TAU_CRIT, BlockModelSpec, BlockScaling, Regime, spectral
from .oracle import MagnetizationPMF, QuarticMoments, exact_moments, quartic_cdf, quartic_gaussian_moments
from .stats import batch_means_se, jackknife_se

DEFAULT_BATCHES = 50


def limiting_covariance(spec: BlockModelSpec, scaling: BlockScaling) -> np.ndarray:
    """``(Id - G A G)^{-1}`` assembled from the eigendecomposition of ``G A G``."""
    sd = spectral(spec, scaling, "asymptotic")
    if sd.regime is not Regime.HIGH_STRICT:
        raise NotHighTemperature(f"NotHighTemperature: ||G A G|| = {sd.op_norm:.12g}")
    V = sd.eigenvectors
    S = V.T @ np.diag(1.0 / (1.0 - sd.eigenvalues)) @ V
    return 0.5 * (S + S.T)


@dataclass(frozen=True, eq=False)
class CovarianceReport:
    sigma_inf: np.ndarray
    sigma_n: np.ndarray
    frobenius_gap: float
    per_entry_z: Optional[np.ndarray] = None
    sigma_n_se: Optional[np.ndarray] = None
    mode: str = "exact"
    n_samples: int = 0

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "sigma_inf": self.sigma_inf.tolist(),
            "sigma_n": self.sigma_n.tolist(),
            "frobenius_gap": self.frobenius_gap,
        }
        if self.per_entry_z is not None:
            d["per_entry_z"] = self.per_entry_z.tolist()
            d["sigma_n_se"] = self.sigma_n_se.tolist()
            d["n_samples"] = self.n_samples
        return d


def clt_check(spec: BlockModelSpec, scaling: BlockScaling, samples=None,
              pmf: Optional[MagnetizationPMF] = None, n_batches: int = DEFAULT_BATCHES) -> CovarianceReport:
    """Compare ``Sigma_n = E m_hat m_hat^T`` with the limiting covariance.

    Pass either ``pmf`` (exact) or ``samples``: a :class:`~blockspin.sampler.ChainSamples`
    or an array of block sums ``m`` with shape ``(n_chains, n_samples, k)`` or
    ``(n, k)``. Empirical mode adds jackknife standard errors over batches and
    entrywise z-scores; pass/fail thresholds are left to the caller.
    """
    sigma_inf = limiting_covariance(spec, scaling)
    if (samples is None) == (pmf is None):
        raise ValidationError("pass exactly one of samples or pmf")
    if pmf is not None:
        sigma_n = exact_moments(pmf, spec, 2)
        return CovarianceReport(sigma_inf, sigma_n, float(np.linalg.norm(sigma_n - sigma_inf)))
    m = np.asarray(getattr(samples, "m", samples), dtype=float)
    if m.ndim == 2:
        m = m[None]
    mh = m / np.sqrt(spec.sizes)
    outer = mh[..., :, None] * mh[..., None, :]
    sigma_n = outer.reshape(-1, spec.k, spec.k).mean(axis=0)
    batch_len = max(1, m.shape[1] * m.shape[0] // n_batches // m.shape[0])
    se = jackknife_se(outer, batch_len, lambda s: s)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (sigma_n - sigma_inf) / se
    return CovarianceReport(sigma_inf, sigma_n, float(np.linalg.norm(sigma_n - sigma_inf)), z, se,
                            mode="empirical", n_samples=m.shape[0] * m.shape[1])


@dataclass(frozen=True, eq=False)
class CriticalGeometry:
    """Eigen-data of ``A`` used by the critical statistic (``lambda_k = k``)."""

    eigenvalues: np.ndarray  # of A, ascending
    V: np.ndarray  # rows are eigenvectors

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def quad_coeffs(self) -> np.ndarray:
        lam = self.eigenvalues[:-1]
        return lam - lam**2 / self.k

    @property
    def quartic_coeff(self) -> float:
        return self.k**3 / 12.0 * float(np.sum(self.V[-1] ** 4))


def critical_geometry(spec: BlockModelSpec, scaling: BlockScaling) -> CriticalGeometry:
    if not scaling.is_uniform() or len(set(spec.block_sizes)) != 1:
        raise NotUniform("NotUniform: the critical statistic needs equal block sizes")
    sd = spectral(spec, scaling, "asymptotic")
    if sd.regime is not Regime.CRITICAL:
        raise NotCritical(f"NotCritical: ||G A G|| = {sd.op_norm:.12g} (regime {sd.regime.value})")
    if sd.top_gap <= TAU_CRIT:
        raise NonSimpleTopEigenvalue(f"NonSimpleTopEigenvalue: top gap {sd.top_gap:.3g}")
    return CriticalGeometry(spec.k * sd.eigenvalues, sd.eigenvectors)


def critical_statistic(spec: BlockModelSpec, scaling: BlockScaling, m) -> np.ndarray:
    """``diag(N^-1/2, ..., N^-1/2, N^-3/4) V m`` for one or many block-sum vectors."""
    geo = critical_geometry(spec, scaling)
    N = spec.N
    scale = np.full(spec.k, N**-0.5)
    scale[-1] = N**-0.75
    m = np.asarray(m, dtype=float)
    return (m @ geo.V.T) * scale


@dataclass(frozen=True, eq=False)
class CriticalReport:
    w_prime_samples: np.ndarray
    quad_coeffs: np.ndarray
    quartic_coeff: float
    convolved: bool
    target: QuarticMoments
    sample_raw: np.ndarray  # (k, 4) raw moments of w'
    sample_raw_se: np.ndarray
    moment_gaps: np.ndarray  # sample_raw - target.raw
    sample_excess_kurtosis: np.ndarray
    target_excess_kurtosis: np.ndarray
    ks_statistic: float
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "convolved": self.convolved,
            "target": "quad_coeffs lambda_i - lambda_i^2/k" if self.convolved else "precisions k - lambda_j",
            "quad_coeffs": self.quad_coeffs.tolist(),
            "quartic_coeff": self.quartic_coeff,
            "target_precisions": self.target.precisions.tolist(),
            "target_raw_moments": self.target.raw.tolist(),
            "sample_raw_moments": self.sample_raw.tolist(),
            "sample_raw_moments_se": self.sample_raw_se.tolist(),
            "moment_gaps": self.moment_gaps.tolist(),
            "sample_excess_kurtosis": self.sample_excess_kurtosis.tolist(),
            "target_excess_kurtosis": self.target_excess_kurtosis.tolist(),
            "ks_statistic_last": self.ks_statistic,
            "n_samples": int(self.w_prime_samples.shape[0]),
        }


def critical_check(spec: BlockModelSpec, scaling: BlockScaling, samples, convolve: bool = False,
                   seed: int = 0, n_batches: int = DEFAULT_BATCHES) -> CriticalReport:
    """Moments of ``w'`` against the quartic-Gaussian limit.

    Without convolution the first ``k-1`` coordinates target variances
    ``1/(k - lambda_j)``. With ``convolve=True`` independent noise of covariance
    ``diag(1/lambda_1, ..., 1/lambda_{k-1}, 1/(k sqrt N))`` is added first and
    the targets become the density coefficients ``lambda_i - lambda_i^2/k``.
    The last coordinate targets the density ``exp(-s x^4)`` in both modes.
    """
    geo = critical_geometry(spec, scaling)
    k, N = spec.k, spec.N
    m = np.asarray(getattr(samples, "m", samples), dtype=float)
    if m.ndim == 2:
        m = m[None]
    w = critical_statistic(spec, scaling, m)
    if convolve:
        var = np.append(1.0 / geo.eigenvalues[:-1], 1.0 / (k * np.sqrt(N)))
        rng = np.random.default_rng(seed)
        w = w + rng.standard_normal(w.shape) * np.sqrt(var)
        precisions = geo.quad_coeffs
    else:
        precisions = k - geo.eigenvalues[:-1]
    target = quartic_gaussian_moments(precisions, geo.quartic_coeff)
    powers = np.stack([w**p for p in range(1, 5)], axis=-1)  # (chains, n, k, 4)
    flat = powers.reshape(-1, k, 4)
    raw = flat.mean(axis=0)
    batch_len = max(1, m.shape[1] // max(1, n_batches // m.shape[0]))
    se = batch_means_se(powers, batch_len)
    exk = raw[:, 3] / raw[:, 1] ** 2 - 3.0
    last = w[..., -1].ravel()
    ks = float(sps.kstest(last, quartic_cdf(geo.quartic_coeff)).statistic)
    return CriticalReport(w.reshape(-1, k), geo.quad_coeffs, geo.quartic_coeff, convolve, target, raw, se,
                          raw - target.raw, exk, target.excess_kurtosis, ks)


def excess_kurtosis_se(x: np.ndarray, batch_len: int) -> float:
    """Jackknife error of the excess kurtosis of a centred 1-D chain sample ``(chains, n)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None]
    pw = np.stack([x**2, x**4], axis=-1)
    return float(jackknife_se(pw, batch_len, lambda mom: mom[1] / mom[0] ** 2 - 3.0))
