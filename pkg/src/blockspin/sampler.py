"""Glauber (heat-bath) dynamics for the block spin model.

One step picks a site ``I`` uniformly and redraws its spin from the
conditional law given the others: ``+1`` with probability
``(1 + tanh g_I(x)) / 2`` where ``g_i(x) = ((A m)_{h(i)} - A_{h(i)h(i)} x_i) / N``.
The same step produces the exchangeable pair used by the Stein module.

The Python-level :func:`glauber_step` and the compiled chain kernel consume
random numbers identically (site from one uniform, spin from a second), so a
chain run either way from the same generator state gives the same trajectory.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional

import numba
import numpy as np

from .errors import ValidationError
from .model import (
    BlockModelSpec,
    BlockScaling,
    MagnetizationView,
    Regime,
    SpinConfiguration,
    magnetizations,
    spectral,
)

INITS = ("all_plus", "uniform_random", "custom")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings. ``burn_in`` and ``thinning`` are counted in sweeps of ``N`` steps."""

    seed: int = 0
    burn_in: int = 1000
    thinning: int = 1
    n_samples: int = 1000
    n_chains: int = 1
    init: str = "all_plus"
    init_spins: Optional[tuple] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValidationError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValidationError("thinning must be >= 1")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.n_chains < 1:
            raise ValidationError("n_chains must be >= 1")
        if self.init not in INITS:
            raise ValidationError(f"init must be one of {INITS}, got {self.init!r}")
        if self.init == "custom" and self.init_spins is None:
            raise ValidationError("init='custom' needs init_spins")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("init_spins")
        return d


def chain_generators(seed: int, n_chains: int) -> list:
    """Independent PCG64 streams, one per chain, spawned from a single seed."""
    children = np.random.SeedSequence(seed).spawn(n_chains)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def local_field(spec: BlockModelSpec, x: SpinConfiguration, i: int) -> float:
    """``g_i(x)``; it does not depend on ``x_i`` itself."""
    b = spec.block_of[i]
    m = 2 * x.plus_counts - spec.sizes
    return float((spec.A[b] @ m - spec.A[b, b] * x.spins[i]) / spec.N)


def conditional_mean(spec: BlockModelSpec, scaling: BlockScaling, x: SpinConfiguration, i: int) -> float:
    """``E(new spin at i | rest) = tanh(g_i(x))``."""
    return math.tanh(local_field(spec, x, i))


def glauber_step(spec: BlockModelSpec, scaling: BlockScaling, x: SpinConfiguration,
                 rng: np.random.Generator) -> int:
    """Advance ``x`` by one heat-bath update; returns the chosen site."""
    N = spec.N
    i = int(rng.random() * N)
    g = local_field(spec, x, i)
    u = rng.random()
    x.set_spin(i, 1 if 2.0 * u < 1.0 + math.tanh(g) else -1)
    return i


def exchangeable_pair(spec: BlockModelSpec, scaling: BlockScaling, x: SpinConfiguration,
                      rng: np.random.Generator):
    """One Glauber step seen as a pair ``(m_hat(X), m_hat(X~), I)``.

    ``x`` is advanced to ``X~`` in place.
    """
    before = magnetizations(spec, x).m_hat
    i = glauber_step(spec, scaling, x, rng)
    after = magnetizations(spec, x).m_hat
    return before, after, i


@numba.njit(cache=True, nogil=True)
def _advance(spins, block_of, counts, sizes, A, n_steps, rng):
    k = counts.shape[0]
    N = spins.shape[0]
    for _ in range(n_steps):
        i = int(rng.random() * N)
        b = block_of[i]
        xi = spins[i]
        f = 0.0
        for l in range(k):
            f += A[b, l] * (2 * counts[l] - sizes[l])
        g = (f - A[b, b] * xi) / N
        u = rng.random()
        new = 1 if 2.0 * u < 1.0 + math.tanh(g) else -1
        if new != xi:
            spins[i] = new
            counts[b] += new


@numba.njit(cache=True, nogil=True)
def _run_chain(spins, block_of, counts, sizes, A, burn_steps, thin_steps, n_samples, rng, out):
    _advance(spins, block_of, counts, sizes, A, burn_steps, rng)
    for s in range(n_samples):
        _advance(spins, block_of, counts, sizes, A, thin_steps, rng)
        for b in range(counts.shape[0]):
            out[s, b] = 2 * counts[b] - sizes[b]


@numba.njit(cache=True, nogil=True)
def _trajectory(spins, block_of, counts, sizes, A, n_steps, rng, sites, new_spins):
    k = counts.shape[0]
    N = spins.shape[0]
    for t in range(n_steps):
        i = int(rng.random() * N)
        b = block_of[i]
        xi = spins[i]
        f = 0.0
        for l in range(k):
            f += A[b, l] * (2 * counts[l] - sizes[l])
        g = (f - A[b, b] * xi) / N
        u = rng.random()
        new = 1 if 2.0 * u < 1.0 + math.tanh(g) else -1
        sites[t] = i
        new_spins[t] = new
        if new != xi:
            spins[i] = new
            counts[b] += new


def _kernel_state(spec: BlockModelSpec, x: SpinConfiguration):
    spins = x.spins.astype(np.int64)
    counts = x.plus_counts.astype(np.int64).copy()
    return spins, np.ascontiguousarray(spec.block_of), counts, np.ascontiguousarray(spec.sizes), \
        np.ascontiguousarray(spec.A)


def run_steps(spec: BlockModelSpec, x: SpinConfiguration, n_steps: int, rng: np.random.Generator,
              record: bool = False):
    """Advance ``x`` by ``n_steps`` compiled Glauber updates.

    With ``record=True`` returns the chosen sites and the spins drawn there.
    """
    spins, block_of, counts, sizes, A = _kernel_state(spec, x)
    if record:
        sites = np.empty(n_steps, dtype=np.int64)
        drawn = np.empty(n_steps, dtype=np.int64)
        _trajectory(spins, block_of, counts, sizes, A, n_steps, rng, sites, drawn)
    else:
        _advance(spins, block_of, counts, sizes, A, n_steps, rng)
    x.spins[:] = spins
    x.plus_counts[:] = counts
    if record:
        return sites, drawn
    return None


@dataclass(frozen=True, eq=False)
class ChainSamples:
    """Retained block sums ``m`` with shape ``(n_chains, n_samples, k)``.

    Iterating yields :class:`MagnetizationView` objects ordered by (chain, index).
    """

    spec: BlockModelSpec
    config: SamplerConfig
    m: np.ndarray
    regime: Regime
    metastable: bool

    @property
    def m_hat(self) -> np.ndarray:
        return self.m / np.sqrt(self.spec.sizes)

    @property
    def m_tilde(self) -> np.ndarray:
        return self.m / self.spec.sizes

    def flat_m(self) -> np.ndarray:
        return self.m.reshape(-1, self.spec.k)

    def __iter__(self) -> Iterator[MagnetizationView]:
        for chain in self.m:
            for row in chain:
                yield MagnetizationView.from_m(self.spec, row)

    def __len__(self) -> int:
        return self.m.shape[0] * self.m.shape[1]

    def metadata(self) -> dict:
        return {
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "regime": self.regime.value,
            "metastable": self.metastable,
            "note": "metastable: chain may not mix" if self.metastable else "",
        }


def _initial_state(spec: BlockModelSpec, cfg: SamplerConfig, chain: int, rng) -> SpinConfiguration:
    if cfg.init == "all_plus":
        return SpinConfiguration.all_plus(spec)
    if cfg.init == "uniform_random":
        return SpinConfiguration.uniform_random(spec, rng)
    init = np.asarray(cfg.init_spins)
    if init.ndim == 2:
        return SpinConfiguration(spec, init[chain])
    return SpinConfiguration(spec, init)


def default_threads() -> int:
    env = os.environ.get("BLOCKSPIN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sample_chain(spec: BlockModelSpec, scaling: BlockScaling, cfg: SamplerConfig,
                 threads: Optional[int] = None) -> ChainSamples:
    """Run ``cfg.n_chains`` independent chains and collect thinned block sums.

    Chains run concurrently when ``threads > 1``; each chain owns its own
    generator, so the result does not depend on the thread count.
    """
    N = spec.N
    out = np.empty((cfg.n_chains, cfg.n_samples, spec.k), dtype=np.int64)
    rngs = chain_generators(cfg.seed, cfg.n_chains)

    def run(c):
        x = _initial_state(spec, cfg, c, rngs[c])
        spins, block_of, counts, sizes, A = _kernel_state(spec, x)
        _run_chain(spins, block_of, counts, sizes, A, cfg.burn_in * N, cfg.thinning * N,
                   cfg.n_samples, rngs[c], out[c])

    threads = threads or default_threads()
    if threads > 1 and cfg.n_chains > 1:
        with ThreadPoolExecutor(max_workers=min(threads, cfg.n_chains)) as pool:
            list(pool.map(run, range(cfg.n_chains)))
    else:
        for c in range(cfg.n_chains):
            run(c)
    regime = spectral(spec, scaling, "asymptotic").regime
    return ChainSamples(spec, cfg, out, regime, regime is Regime.LOW)
