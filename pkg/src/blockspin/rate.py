"""Large-deviation rate function and the mean-field equations.

``I(x) = 0.5 <x, G^2 A G^2 x> - sum_i g_i^2 L*(x_i)`` with ``G = diag(gamma_inf)``
and ``L*`` the convex conjugate of ``log cosh``. Its critical points are the
solutions of ``x = tanh(A G^2 x)``; the LDP rate is ``J = sup I - I``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.special import xlogy
from scipy.stats import qmc

from .errors import DomainError, LeftDomain, NoConvergence, NotACriticalPoint
from .model import BlockModelSpec, BlockScaling, spectral

TAU_MFE = 1e-10
DEGENERATE_EIG = 1e-8
DEDUP_RADIUS = 1e-6
MAX_SIGN_PATTERNS = 3**10


class Definiteness(str, enum.Enum):
    MAX = "max"
    MIN = "min"
    SADDLE = "saddle"
    DEGENERATE = "degenerate"


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    x: np.ndarray
    residual: float
    value: float
    hessian_definiteness: Definiteness

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "value": self.value,
            "residual": self.residual,
            "class": self.hessian_definiteness.value,
        }


def lstar(t):
    """``0.5 (1+t) log(1+t) + 0.5 (1-t) log(1-t)`` on ``[-1, 1]``, with ``L*(+-1) = log 2``."""
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1):
        raise DomainError(f"DomainError: L* is defined on [-1, 1], got {t[np.abs(t) > 1].tolist()}")
    out = 0.5 * (xlogy(1 + t, 1 + t) + xlogy(1 - t, 1 - t))
    return float(out) if out.ndim == 0 else out


def _quad_matrix(spec: BlockModelSpec, scaling: BlockScaling) -> np.ndarray:
    g2 = scaling.gamma_inf**2
    return g2[:, None] * spec.A * g2[None, :]


def _as_point(x, k: int, interior: bool) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (k,):
        raise DomainError(f"DomainError: expected a {k}-vector, got shape {x.shape}")
    if interior and np.any(np.abs(x) >= 1):
        raise DomainError(f"DomainError: {x.tolist()} is not in the open cube (-1, 1)^{k}")
    if np.any(np.abs(x) > 1):
        raise DomainError(f"DomainError: {x.tolist()} is not in [-1, 1]^{k}")
    return x


def rate_I(spec: BlockModelSpec, scaling: BlockScaling, x) -> float:
    x = _as_point(x, spec.k, interior=False)
    C = _quad_matrix(spec, scaling)
    return float(0.5 * x @ C @ x - np.sum(scaling.gamma_inf**2 * lstar(x)))


def rate_gradient(spec: BlockModelSpec, scaling: BlockScaling, x) -> np.ndarray:
    x = _as_point(x, spec.k, interior=True)
    return _quad_matrix(spec, scaling) @ x - scaling.gamma_inf**2 * np.arctanh(x)


def rate_hessian(spec: BlockModelSpec, scaling: BlockScaling, x) -> np.ndarray:
    x = _as_point(x, spec.k, interior=True)
    return _quad_matrix(spec, scaling) - np.diag(scaling.gamma_inf**2 / (1 - x**2))


def mean_field_residual(spec: BlockModelSpec, scaling: BlockScaling, x) -> np.ndarray:
    x = _as_point(x, spec.k, interior=True)
    return x - np.tanh(spec.A @ (scaling.gamma_inf**2 * x))


def classify(hessian: np.ndarray, tol: float = DEGENERATE_EIG) -> Definiteness:
    w = np.linalg.eigvalsh(hessian)
    if np.any(np.abs(w) < tol):
        return Definiteness.DEGENERATE
    if np.all(w < 0):
        return Definiteness.MAX
    if np.all(w > 0):
        return Definiteness.MIN
    return Definiteness.SADDLE


def critical_point(spec: BlockModelSpec, scaling: BlockScaling, x) -> CriticalPoint:
    """Package ``x`` with its residual, rate value and Hessian class."""
    x = np.asarray(x, dtype=float)
    res = float(np.max(np.abs(mean_field_residual(spec, scaling, x))))
    return CriticalPoint(x, res, rate_I(spec, scaling, x), classify(rate_hessian(spec, scaling, x)))


def _damped_fixed_point(spec, scaling, x, omega, tol, max_iter):
    g2 = scaling.gamma_inf**2
    best, best_res = x, np.inf
    for _ in range(max_iter):
        fx = np.tanh(spec.A @ (g2 * x))
        res = float(np.max(np.abs(x - fx)))
        if res < best_res:
            best, best_res = x, res
        if res < tol:
            return x
        x = (1 - omega) * x + omega * fx
    raise NoConvergence(f"NoConvergence: fixed-point residual {best_res:.3g} after {max_iter} iterations",
                        best, best_res)


def _polish(spec, scaling, x, res, residual):
    # one extra full Newton step; kept only if it helps
    try:
        trial = x + np.linalg.solve(rate_hessian(spec, scaling, x), -rate_gradient(spec, scaling, x))
    except np.linalg.LinAlgError:
        return x
    if np.all(np.abs(trial) < 1) and residual(trial) <= res:
        return trial
    return x


def _newton(spec, scaling, x, tol, max_iter):
    # Where the Hessian of I is negative definite this is plain Newton (line
    # search on the residual). Elsewhere the Hessian is shifted to be negative
    # definite, which gives an ascent direction for I, and the line search asks
    # for an increase of I. Iterates therefore climb towards a maximiser instead
    # of jumping to whichever critical point is nearest; a start that already
    # solves the equations (e.g. a saddle at 0) is returned as is.
    def residual(z):
        return float(np.max(np.abs(mean_field_residual(spec, scaling, z))))

    res = residual(x)
    for _ in range(max_iter):
        if res < tol:
            return _polish(spec, scaling, x, res, residual)
        grad = rate_gradient(spec, scaling, x)
        H = rate_hessian(spec, scaling, x)
        top = float(np.linalg.eigvalsh(H)[-1])
        ascent = top >= -DEGENERATE_EIG
        if ascent:
            H = H - (top + max(1.0, abs(top))) * np.eye(spec.k)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            raise NoConvergence("NoConvergence: singular Hessian", x, res) from None
        value = rate_I(spec, scaling, x)
        t = 1.0
        while True:
            trial = x + t * step
            if np.all(np.abs(trial) < 1):
                trial_res = residual(trial)
                if ascent and rate_I(spec, scaling, trial) > value:
                    break
                if not ascent and trial_res < res:
                    break
            t *= 0.5
            if t < 1e-12:
                raise NoConvergence("NoConvergence: line search stalled", x, res)
        if not np.all(np.abs(trial) < 1):
            raise LeftDomain(f"LeftDomain: Newton iterate left (-1, 1)^{spec.k}")
        x, res = trial, trial_res
    if res < tol:
        return _polish(spec, scaling, x, res, residual)
    raise NoConvergence(f"NoConvergence: Newton residual {res:.3g} after {max_iter} iterations", x, res)


def solve_mean_field(spec: BlockModelSpec, scaling: BlockScaling, x0, method: str = "newton",
                     omega: float = 0.5, tol: float = TAU_MFE, max_iter: Optional[int] = None) -> CriticalPoint:
    """Solve ``x = tanh(A G^2 x)`` from ``x0``.

    ``method`` is ``"newton"`` (Hessian of ``I``, shifted where it is not
    negative definite so that iterates ascend ``I``; backtracking keeps them in
    the open cube) or ``"damped_fixed_point"`` (``x <- (1-w) x + w tanh(A G^2 x)``).
    """
    x = _as_point(x0, spec.k, interior=True).copy()
    if method == "newton":
        x = _newton(spec, scaling, x, tol, max_iter or 200)
    elif method == "damped_fixed_point":
        x = _damped_fixed_point(spec, scaling, x, omega, tol, max_iter or 100_000)
    else:
        raise ValueError(f"unknown method {method!r}")
    return critical_point(spec, scaling, x)


def curie_weiss_root(beta: float, xtol: float = 1e-15) -> float:
    """Positive solution of ``tanh(beta m) = m`` for ``beta > 1``, by bisection."""
    if beta <= 1:
        return 0.0
    f = lambda m: np.tanh(beta * m) - m
    return float(optimize.bisect(f, 1e-12, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def starting_points(k: int, n_starts: int) -> np.ndarray:
    """Sign patterns in ``{-1/2, 0, 1/2}^k`` followed by scrambled Halton interior points."""
    if 3**k <= MAX_SIGN_PATTERNS:
        grid = np.array(list(itertools.product((-0.5, 0.0, 0.5), repeat=k)))
    else:
        rng = np.random.default_rng(0)
        grid = rng.choice([-0.5, 0.0, 0.5], size=(MAX_SIGN_PATTERNS, k))
    halton = qmc.Halton(d=k, scramble=True, seed=0).random(n_starts)
    return np.vstack([grid, 1.9 * (halton - 0.5)])


def find_maximizers(spec: BlockModelSpec, scaling: BlockScaling, n_starts: Optional[int] = None,
                    method: str = "newton") -> list:
    """Multi-start search for critical points of ``I``, deduplicated, sorted by value (descending).

    Completeness is best effort. :func:`global_maxima` extracts the maximizers.
    """
    k = spec.k
    n_starts = max(n_starts or 16 * k, 2 * k)
    found: list = []
    for x0 in starting_points(k, n_starts):
        try:
            cp = solve_mean_field(spec, scaling, x0, method=method)
        except (NoConvergence, LeftDomain):
            continue
        if any(np.max(np.abs(cp.x - f.x)) < DEDUP_RADIUS for f in found):
            continue
        found.append(cp)
        neg = critical_point(spec, scaling, -cp.x)
        if not any(np.max(np.abs(neg.x - f.x)) < DEDUP_RADIUS for f in found):
            found.append(neg)
    found.sort(key=lambda c: -c.value)
    return found


def global_maxima(points: list, tol: float = 1e-9) -> list:
    """Critical points of class ``max`` whose value is within ``tol`` of the best."""
    maxima = [p for p in points if p.hessian_definiteness is Definiteness.MAX]
    if not maxima:
        # a degenerate point can still be the global maximum (e.g. at criticality)
        maxima = [p for p in points if p.hessian_definiteness is Definiteness.DEGENERATE]
    if not maxima:
        return []
    top = max(p.value for p in maxima)
    return [p for p in maxima if p.value >= top - tol]


def ldp_rate_J(spec: BlockModelSpec, scaling: BlockScaling, x, maximizers: Optional[list] = None) -> float:
    """``sup I - I(x)`` with the supremum over the critical points found."""
    points = maximizers if maximizers is not None else find_maximizers(spec, scaling)
    sup = max(p.value for p in points)
    return sup - rate_I(spec, scaling, x)


def structured_solution(spec: BlockModelSpec, scaling: BlockScaling) -> Optional[CriticalPoint]:
    """``m* v`` for a top eigenvector ``v`` of ``A`` that rescales into ``{-1, 0, 1}^k``.

    Only defined in the uniform case with ``||A|| > k``; ``m*`` is the
    Curie-Weiss root at ``beta = lambda_max / k``. Returns ``None`` when a
    precondition fails.
    """
    if not scaling.is_uniform():
        return None
    sd = spectral(spec, scaling, "asymptotic")
    if sd.op_norm <= 1:
        return None
    v = sd.eigenvectors[-1]
    v = v / np.max(np.abs(v))
    rounded = np.round(v)
    if np.max(np.abs(v - rounded)) > 1e-8:
        return None
    m_star = curie_weiss_root(sd.op_norm)  # lambda_max(A) / k
    cp = critical_point(spec, scaling, m_star * rounded)
    if cp.residual >= TAU_MFE:
        return None
    return cp


def critical_value_identity(spec: BlockModelSpec, scaling: BlockScaling, p: CriticalPoint) -> float:
    """Value of ``I`` at a solution of the mean-field equations without the quadratic form.

    Substituting ``artanh(x_i) = (A G^2 x)_i`` gives
    ``I(x) = -0.5 sum_i g_i^2 (x_i artanh(x_i) + log(1 - x_i^2))``.
    """
    if not p.residual < TAU_MFE:
        raise NotACriticalPoint(f"NotACriticalPoint: residual {p.residual:.3g} >= {TAU_MFE}")
    x = p.x
    return float(-0.5 * np.sum(scaling.gamma_inf**2 * (x * np.arctanh(x) + np.log1p(-x**2))))
