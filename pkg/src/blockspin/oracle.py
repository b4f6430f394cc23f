"""Exact Gibbs law of the block magnetization vector, plus quadrature for limit densities.

The Hamiltonian depends on a configuration only through ``m``, so the law of
``m`` is a product of binomial multiplicities times ``exp(<m, A m>/(2N))``.
Enumerating block counts costs ``prod(|B_i| + 1)`` instead of ``2**N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .errors import QuadratureNonConvergence, TooLarge, ValidationError
from .model import BlockModelSpec

ENUMERATION_CAP = 2_000_000
NAIVE_MAX_N = 22


@dataclass(frozen=True, eq=False)
class MagnetizationPMF:
    support: np.ndarray  # (S, k) integer block sums
    probs: np.ndarray  # (S,)
    logZ: float

    def expect(self, values) -> np.ndarray:
        """Expectation of per-state ``values`` (shape ``(S, ...)``)."""
        return np.tensordot(self.probs, np.asarray(values, dtype=float), axes=(0, 0))

    def prob_of(self, m) -> float:
        hit = np.all(self.support == np.asarray(m), axis=1)
        return float(self.probs[hit].sum())


def _state_count(spec: BlockModelSpec) -> int:
    return math.prod(s + 1 for s in spec.block_sizes)


def _log_binom(n, c):
    return gammaln(n + 1) - gammaln(c + 1) - gammaln(n - c + 1)


def exact_pmf(spec: BlockModelSpec, cap: int = ENUMERATION_CAP) -> MagnetizationPMF:
    states = _state_count(spec)
    if states > cap:
        raise TooLarge(states, cap)
    grids = [np.arange(-s, s + 1, 2, dtype=np.int64) for s in spec.block_sizes]
    mesh = np.meshgrid(*grids, indexing="ij")
    support = np.stack([g.ravel() for g in mesh], axis=1)
    sizes = spec.sizes
    counts = (support + sizes) // 2
    log_mult = _log_binom(sizes, counts).sum(axis=1)
    mf = support.astype(float)
    energy = np.einsum("si,ij,sj->s", mf, spec.A, mf) / (2 * spec.N)
    logw = log_mult + energy
    logZ = float(logsumexp(logw))
    probs = np.exp(logw - logZ)
    return MagnetizationPMF(support, probs, logZ)


def naive_pmf(spec: BlockModelSpec) -> MagnetizationPMF:
    """Law of ``m`` by summing over all ``2**N`` configurations.

    Independent of :func:`exact_pmf`; only meant as a check for small ``N``.
    The support is returned in the same order as :func:`exact_pmf`.
    """
    N = spec.N
    if N > NAIVE_MAX_N:
        raise TooLarge(2**N, 2**NAIVE_MAX_N)
    codes = np.arange(2**N, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(N)) & 1
    x = (2 * bits - 1).astype(float)
    J = spec.A[np.ix_(spec.block_of, spec.block_of)] / N
    H = 0.5 * np.einsum("ci,ij,cj->c", x, J, x)
    logZ = float(logsumexp(H))
    p = np.exp(H - logZ)
    m = np.zeros((2**N, spec.k), dtype=np.int64)
    for b in range(spec.k):
        m[:, b] = x[:, spec.block_of == b].sum(axis=1).astype(np.int64)
    grids = [np.arange(-s, s + 1, 2, dtype=np.int64) for s in spec.block_sizes]
    mesh = np.meshgrid(*grids, indexing="ij")
    support = np.stack([g.ravel() for g in mesh], axis=1)
    # flat index of m in the meshgrid ordering
    idx = np.zeros(2**N, dtype=np.int64)
    for b, s in enumerate(spec.block_sizes):
        idx = idx * (s + 1) + (m[:, b] + s) // 2
    probs = np.bincount(idx, weights=p, minlength=len(support))
    return MagnetizationPMF(support, probs, logZ)


def exact_moments(pmf: MagnetizationPMF, spec: BlockModelSpec, order: int) -> np.ndarray:
    """Tensor of ``E[m_hat_i1 ... m_hat_ir]`` for ``r = order``."""
    if order not in (1, 2, 3, 4):
        raise ValidationError(f"order must be 1..4, got {order}")
    k = spec.k
    if order % 2 == 1:
        # the Gibbs measure is invariant under m -> -m
        return np.zeros((k,) * order)
    mh = pmf.support / np.sqrt(spec.sizes)
    if order == 2:
        return np.einsum("s,si,sj->ij", pmf.probs, mh, mh)
    return np.einsum("s,si,sj,sk,sl->ijkl", pmf.probs, mh, mh, mh, mh)


def expectation(pmf: MagnetizationPMF, spec: BlockModelSpec, fn: Callable[[np.ndarray], np.ndarray]) -> float:
    """``E fn(m_hat)`` where ``fn`` maps an ``(S, k)`` array to ``(S,)``."""
    mh = pmf.support / np.sqrt(spec.sizes)
    return float(pmf.expect(fn(mh)))


@dataclass(frozen=True, eq=False)
class QuarticMoments:
    """Raw moments ``E x^p`` (``p = 1..4``) of each coordinate of the limit density.

    The density is ``exp(-0.5 sum_i c_i x_i^2 - s x_k^4)`` up to normalization,
    with Gaussian precisions ``c_i`` and quartic coefficient ``s``.
    """

    precisions: np.ndarray
    quartic_coeff: float
    raw: np.ndarray  # (k, 4)

    @property
    def variances(self) -> np.ndarray:
        return self.raw[:, 1]

    @property
    def excess_kurtosis(self) -> np.ndarray:
        return self.raw[:, 3] / self.raw[:, 1] ** 2 - 3.0


def _quad(f, epsrel):
    val, err = integrate.quad(f, -np.inf, np.inf, epsabs=0.0, epsrel=epsrel, limit=200)
    if not np.isfinite(val) or err > 1e-8 * abs(val):
        raise QuadratureNonConvergence(f"QuadratureNonConvergence: value {val!r}, error estimate {err!r}")
    return val


def _marginal_moments(logdens: Callable[[float], float], epsrel: float = 1e-11) -> np.ndarray:
    z = _quad(lambda x: math.exp(logdens(x)), epsrel)
    out = np.empty(4)
    for p in range(1, 5):
        if p % 2:
            out[p - 1] = 0.0  # even density
        else:
            out[p - 1] = _quad(lambda x, p=p: x**p * math.exp(logdens(x)), epsrel) / z
    return out


def quartic_gaussian_moments(precisions: Sequence[float], quartic_coeff: float) -> QuarticMoments:
    """First four raw moments of every coordinate of the factorized limit density.

    Each factor is integrated separately by adaptive quadrature, including the
    Gaussian ones, so the result does not rely on closed forms.
    """
    c = np.asarray(precisions, dtype=float).ravel()
    if np.any(c <= 0):
        raise ValidationError(f"quadratic coefficients must be positive, got {c.tolist()}")
    if not quartic_coeff > 0:
        raise ValidationError(f"quartic coefficient must be positive, got {quartic_coeff!r}")
    rows = []
    for ci in c:
        sd = 1.0 / math.sqrt(ci)
        # integrate in standardized units to keep quad's scale detection happy
        std = _marginal_moments(lambda u: -0.5 * u * u)
        rows.append(std * np.array([sd, sd**2, sd**3, sd**4]))
    s = float(quartic_coeff)
    scale = s ** -0.25
    std = _marginal_moments(lambda u: -u**4)
    rows.append(std * np.array([scale, scale**2, scale**3, scale**4]))
    return QuarticMoments(c, s, np.array(rows))


def quartic_cdf(quartic_coeff: float, grid_size: int = 4001):
    """CDF of the density proportional to ``exp(-s x^4)`` as an interpolating callable."""
    scale = quartic_coeff ** -0.25
    u = np.linspace(-6.0, 6.0, grid_size)
    dens = np.exp(-u**4)
    cum = integrate.cumulative_trapezoid(dens, u, initial=0.0)
    cum /= cum[-1]

    def cdf(x):
        return np.interp(np.asarray(x) / scale, u, cum, left=0.0, right=1.0)

    return cdf
