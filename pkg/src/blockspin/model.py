"""Block spin Ising model: parameterization, magnetizations, Hamiltonian and spectra.

Sites are ordered block by block, so block ``i`` occupies a contiguous range of
positions. A model is a block count ``k``, the block sizes ``|B_i|`` (summing
to ``N``) and a symmetric positive-definite ``k x k`` interaction matrix ``A``;
the Gibbs weight of a configuration ``x`` is ``exp(<m, A m> / (2N))`` where
``m`` is the vector of block sums.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricMatrix,
    EigSolverFailure,
    EmptyBlock,
    NotPositiveDefinite,
    ValidationError,
)

TAU_PD = 1e-10
TAU_CRIT = 1e-9
GAMMA_SUM_TOL = 1e-12


class Regime(str, enum.Enum):
    HIGH_STRICT = "HighStrict"
    CRITICAL = "Critical"
    LOW = "Low"


@dataclass(frozen=True, eq=False)
class BlockModelSpec:
    """Raw model parameters; call :func:`validate_spec` before use.

    ``gamma_inf`` optionally overrides the asymptotic square-root block
    proportions. Left as ``None`` the finite profile ``sqrt(|B_i|/N)`` is used.
    """

    k: int
    block_sizes: tuple
    A: np.ndarray
    gamma_inf: Optional[tuple] = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        A = np.array(self.A, dtype=float, copy=True)
        if A.ndim != 2 or A.shape != (self.k, self.k):
            raise ValidationError(f"A must be {self.k}x{self.k}, got shape {A.shape}")
        if len(sizes) != self.k:
            raise ValidationError(f"expected {self.k} block sizes, got {len(sizes)}")
        A.setflags(write=False)
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "A", A)
        if self.gamma_inf is not None:
            g = tuple(float(v) for v in self.gamma_inf)
            if len(g) != self.k:
                raise ValidationError(f"expected {self.k} gamma_inf entries, got {len(g)}")
            object.__setattr__(self, "gamma_inf", g)

    @property
    def N(self) -> int:
        return sum(self.block_sizes)

    @cached_property
    def sizes(self) -> np.ndarray:
        s = np.array(self.block_sizes, dtype=np.int64)
        s.setflags(write=False)
        return s

    @cached_property
    def block_of(self) -> np.ndarray:
        """Block index ``h(j)`` of every site ``j`` (0-based)."""
        b = np.repeat(np.arange(self.k, dtype=np.int64), self.sizes)
        b.setflags(write=False)
        return b

    def with_block_sizes(self, sizes: Sequence[int]) -> "BlockModelSpec":
        return BlockModelSpec(self.k, tuple(sizes), self.A, self.gamma_inf)

    def with_gamma_inf(self, gamma_inf) -> "BlockModelSpec":
        return BlockModelSpec(self.k, self.block_sizes, self.A, gamma_inf)

    def to_dict(self) -> dict:
        d = {"k": self.k, "block_sizes": list(self.block_sizes), "A": self.A.tolist()}
        if self.gamma_inf is not None:
            d["gamma_inf"] = list(self.gamma_inf)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BlockModelSpec":
        missing = {"k", "block_sizes", "A"} - set(d)
        if missing:
            raise ValidationError(f"model spec missing field(s): {sorted(missing)}")
        return cls(int(d["k"]), tuple(d["block_sizes"]), np.asarray(d["A"], dtype=float),
                   d.get("gamma_inf"))

    @classmethod
    def load(cls, path) -> "BlockModelSpec":
        with open(path) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON in {path}: {exc.msg} at line {exc.lineno} column {exc.colno}") \
                from None
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: model spec must be a JSON object")
        return cls.from_dict(data)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class BlockScaling:
    """Square-root relative block sizes at finite ``N`` and in the limit."""

    gamma_n: np.ndarray
    gamma_inf: np.ndarray

    @property
    def k(self) -> int:
        return len(self.gamma_n)

    def gamma(self, which: str = "asymptotic") -> np.ndarray:
        if which == "finite_n":
            return self.gamma_n
        if which == "asymptotic":
            return self.gamma_inf
        raise ValueError(f"which must be 'finite_n' or 'asymptotic', got {which!r}")

    def is_uniform(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.gamma_inf - 1.0 / np.sqrt(self.k)) <= tol))


def validate_spec(spec: BlockModelSpec, gamma_inf=None, require_pd: bool = True) -> BlockScaling:
    """Check the model invariants and return its block scaling.

    ``gamma_inf`` here (or on the spec) overrides the asymptotic profile.
    ``require_pd=False`` skips the definiteness check; the Gibbs law itself is
    well defined for any symmetric ``A`` (used by the exact enumeration).
    Raises :class:`AsymmetricMatrix`, :class:`NotPositiveDefinite` or
    :class:`EmptyBlock`.
    """
    A = spec.A
    if not np.array_equal(A, A.T):
        i, j = np.unravel_index(np.argmax(np.abs(A - A.T)), A.shape)
        raise AsymmetricMatrix(f"AsymmetricMatrix: A[{i},{j}]={float(A[i, j])!r} != A[{j},{i}]={float(A[j, i])!r}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("A has non-finite entries")
    smallest = float(np.linalg.eigvalsh(A)[0])
    if require_pd and smallest <= TAU_PD:
        raise NotPositiveDefinite(smallest)
    sizes = spec.sizes
    if np.any(sizes < 1):
        raise EmptyBlock(f"EmptyBlock: block sizes {list(spec.block_sizes)} must all be >= 1")
    gamma_n = np.sqrt(sizes / sizes.sum())
    g = gamma_inf if gamma_inf is not None else spec.gamma_inf
    if g is None:
        g_inf = gamma_n.copy()
    else:
        g_inf = np.asarray(g, dtype=float)
        if g_inf.shape != (spec.k,):
            raise ValidationError(f"gamma_inf must have {spec.k} entries")
        if np.any(g_inf <= 0) or np.any(g_inf > 1):
            raise ValidationError(f"gamma_inf entries must lie in (0, 1], got {g_inf.tolist()}")
        if abs(np.sum(g_inf**2) - 1.0) > GAMMA_SUM_TOL:
            raise ValidationError(f"sum of gamma_inf**2 must be 1, got {np.sum(g_inf**2)!r}")
    gamma_n.setflags(write=False)
    g_inf.setflags(write=False)
    return BlockScaling(gamma_n, g_inf)


@dataclass(frozen=True, eq=False)
class MagnetizationView:
    """Block sums ``m`` together with the averaged and sqrt-scaled versions."""

    m: np.ndarray
    m_tilde: np.ndarray
    m_hat: np.ndarray

    @classmethod
    def from_m(cls, spec: BlockModelSpec, m) -> "MagnetizationView":
        m = np.asarray(m, dtype=np.int64)
        sizes = spec.sizes
        return cls(m, m / sizes, m / np.sqrt(sizes))


class SpinConfiguration:
    """A mutable +-1 configuration with cached per-block counts of +1 spins."""

    def __init__(self, spec: BlockModelSpec, spins):
        spins = np.asarray(spins)
        if spins.shape != (spec.N,):
            raise ValidationError(f"expected {spec.N} spins, got shape {spins.shape}")
        if not np.all(np.abs(spins) == 1):
            raise ValidationError("spins must be +1 or -1")
        self.spec = spec
        self.spins = spins.astype(np.int8)
        self.plus_counts = np.bincount(spec.block_of[self.spins == 1], minlength=spec.k).astype(np.int64)

    @classmethod
    def all_plus(cls, spec: BlockModelSpec) -> "SpinConfiguration":
        return cls(spec, np.ones(spec.N, dtype=np.int8))

    @classmethod
    def uniform_random(cls, spec: BlockModelSpec, rng: np.random.Generator) -> "SpinConfiguration":
        return cls(spec, np.where(rng.random(spec.N) < 0.5, 1, -1))

    @classmethod
    def from_plus_counts(cls, spec: BlockModelSpec, counts) -> "SpinConfiguration":
        """Configuration with the first ``counts[i]`` sites of each block set to +1."""
        spins = -np.ones(spec.N, dtype=np.int8)
        start = 0
        for c, s in zip(counts, spec.block_sizes):
            if not 0 <= c <= s:
                raise ValidationError(f"plus count {c} outside [0, {s}]")
            spins[start:start + c] = 1
            start += s
        return cls(spec, spins)

    @property
    def m(self) -> np.ndarray:
        return 2 * self.plus_counts - self.spec.sizes

    def set_spin(self, i: int, value: int) -> None:
        old = self.spins[i]
        if value == old:
            return
        self.spins[i] = value
        self.plus_counts[self.spec.block_of[i]] += 1 if value == 1 else -1

    def flip(self, i: int) -> None:
        self.set_spin(i, -int(self.spins[i]))

    def copy(self) -> "SpinConfiguration":
        return SpinConfiguration(self.spec, self.spins.copy())


def magnetizations(spec: BlockModelSpec, x: SpinConfiguration) -> MagnetizationView:
    return MagnetizationView.from_m(spec, 2 * x.plus_counts - spec.sizes)


def hamiltonian(spec: BlockModelSpec, view: MagnetizationView, via: str = "m") -> float:
    """Energy ``H_n = <m, A m> / (2N)``.

    ``via`` selects one of the three equivalent forms: ``"m"``, ``"m_hat"``
    (with ``Gamma_n A Gamma_n``) or ``"m_tilde"`` (with ``Gamma_n^2 A Gamma_n^2``).
    """
    N = spec.N
    A = spec.A
    if via == "m":
        m = view.m.astype(float)
        return float(m @ A @ m) / (2 * N)
    g = np.sqrt(spec.sizes / N)
    if via == "m_hat":
        M = g[:, None] * A * g[None, :]
        return 0.5 * float(view.m_hat @ M @ view.m_hat)
    if via == "m_tilde":
        g2 = g**2
        M = g2[:, None] * A * g2[None, :]
        return 0.5 * N * float(view.m_tilde @ M @ view.m_tilde)
    raise ValueError(f"unknown form {via!r}")


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigendecomposition ``matrix = V^T diag(eigenvalues) V``; rows of ``V`` are eigenvectors."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    op_norm: float
    regime: Regime

    @property
    def top_gap(self) -> float:
        if len(self.eigenvalues) < 2:
            return float("inf")
        return float(self.eigenvalues[-1] - self.eigenvalues[-2])


def classify_regime(op_norm: float, tau: float = TAU_CRIT) -> Regime:
    if op_norm < 1 - tau:
        return Regime.HIGH_STRICT
    if op_norm > 1 + tau:
        return Regime.LOW
    return Regime.CRITICAL


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # first non-negligible component of each row made positive
    V = V.copy()
    for r in range(V.shape[0]):
        nz = np.flatnonzero(np.abs(V[r]) > 1e-12)
        if nz.size and V[r, nz[0]] < 0:
            V[r] = -V[r]
    return V


def scaled_interaction(spec: BlockModelSpec, scaling: BlockScaling, which: str = "asymptotic") -> np.ndarray:
    """``Gamma A Gamma`` for the chosen block profile."""
    g = scaling.gamma(which)
    return g[:, None] * spec.A * g[None, :]


def spectral(spec: BlockModelSpec, scaling: BlockScaling, which: str = "asymptotic") -> SpectralData:
    M = scaled_interaction(spec, scaling, which)
    try:
        w, U = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigSolverFailure(f"EigSolverFailure: {exc}") from exc
    V = _fix_signs(U.T)
    for arr in (M, w, V):
        arr.setflags(write=False)
    op = float(w[-1])
    return SpectralData(M, w, V, op, classify_regime(op))
