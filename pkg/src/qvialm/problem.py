"""Problem contract, weighted vector-space helpers and box geometry.

Vectors are plain 1-D ``numpy`` arrays. The quadrature weights realizing the
discrete L2 pairings live on the problem (``x_weights`` for the primal space,
``h_weights`` for the constraint space) and are passed explicitly to
:func:`inner`, :func:`norm` and :func:`dist_K`.

Infinite bounds are always ``-np.inf`` / ``np.inf``; never a large number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


class ContractError(ValueError):
    """Raised when a precondition of the public API is violated."""


class EvaluationError(FloatingPointError):
    """A problem callback produced a non-finite value."""

    def __init__(self, what: str, index: int):
        super().__init__(f"non-finite value in {what} at component {index}")
        self.what = what
        self.index = index


def check_finite(v: np.ndarray, what: str) -> np.ndarray:
    bad = ~np.isfinite(v)
    if bad.any():
        raise EvaluationError(what, int(np.flatnonzero(bad)[0]))
    return v


def _check_dims(a: np.ndarray, b: np.ndarray, what: str = "vectors") -> None:
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch between {what}: {a.shape} vs {b.shape}")


def inner(a, b, weights) -> float:
    """Weighted pairing ``sum_i w_i a_i b_i``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    weights = np.asarray(weights, dtype=float)
    _check_dims(a, b)
    _check_dims(a, weights, "vector and weights")
    return float(np.dot(weights * a, b))


def norm(a, weights) -> float:
    return float(np.sqrt(max(inner(a, a, weights), 0.0)))


@dataclass(frozen=True)
class BoxSet:
    """Closed box ``{z : lower <= z <= upper}`` with possibly infinite bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ContractError("lower and upper bounds differ in length")
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise ContractError("NaN bound")
        if (lo > hi).any():
            raise ContractError("empty box: lower > upper")
        if np.isposinf(lo).any() or np.isneginf(hi).any():
            raise ContractError("empty box: lower=+inf or upper=-inf")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim: int, lower: float = -np.inf, upper: float = np.inf) -> "BoxSet":
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)))

    @classmethod
    def nonnegative(cls, dim: int) -> "BoxSet":
        return cls.uniform(dim, 0.0, np.inf)

    @classmethod
    def nonpositive(cls, dim: int) -> "BoxSet":
        return cls.uniform(dim, -np.inf, 0.0)

    @classmethod
    def whole_space(cls, dim: int) -> "BoxSet":
        return cls.uniform(dim)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    def is_cone(self) -> bool:
        """True if every finite bound is zero."""
        lo, hi = self.lower, self.upper
        return bool(np.all((lo == 0) | np.isneginf(lo)) and np.all((hi == 0) | np.isposinf(hi)))

    def recession_cone(self) -> "BoxSet":
        """Componentwise recession cone: a finite bound becomes 0."""
        lo = np.where(np.isfinite(self.lower), 0.0, -np.inf)
        hi = np.where(np.isfinite(self.upper), 0.0, np.inf)
        return BoxSet(lo, hi)

    def polar_cone(self) -> "BoxSet":
        """Polar of the recession cone, again a box.

        [0,inf) -> (-inf,0], (-inf,0] -> [0,inf), R -> {0}, {0} -> R.
        """
        rec = self.recession_cone()
        lo = np.where(np.isfinite(rec.lower), -np.inf, 0.0)
        hi = np.where(np.isfinite(rec.upper), np.inf, 0.0)
        return BoxSet(lo, hi)


def project_box(z, S: BoxSet) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (S.dim,):
        raise ContractError(f"dimension mismatch: vector {z.shape} vs box of dim {S.dim}")
    return np.minimum(np.maximum(z, S.lower), S.upper)


def dist_K(g, K: BoxSet, weights) -> float:
    """Weighted distance from ``g`` to the box ``K``."""
    g = np.asarray(g, dtype=float)
    return norm(g - project_box(g, K), weights)


def project_polar_cone(z, K: BoxSet) -> np.ndarray:
    """Projection onto the polar cone of a box cone ``K``."""
    if not K.is_cone():
        raise ContractError("project_polar_cone requires K to be a cone")
    return project_box(z, K.polar_cone())


@dataclass(frozen=True)
class KktPoint:
    x: np.ndarray
    lam: np.ndarray


def _dense_from_action(apply, n_in: int, n_out: int) -> np.ndarray:
    out = np.zeros((n_out, n_in))
    e = np.zeros(n_in)
    for j in range(n_in):
        e[j] = 1.0
        out[:, j] = apply(e)
        e[j] = 0.0
    return out


@dataclass(frozen=True)
class QviProblem:
    """QVI with feasible set ``Phi(x) = {y in C : G(x, y) in K}``.

    ``eval_F`` returns the Riesz representative of ``F(x)`` with respect to the
    ``x_weights`` pairing, and ``apply_DyG_adj`` is the adjoint with respect to
    the ``x_weights``/``h_weights`` pairings.

    The ``jac_*`` callbacks are optional matrix assemblers (sparse or dense)
    used by the Newton solver; when absent the matrices are built column by
    column from the corresponding action, which is only sensible for small
    problems.  ``DxG_factors`` may instead return ``(U, V)`` with
    ``DxG = U @ V.T`` for low-rank x-dependence of the constraint.
    ``newton_solver`` is an optional hook
    ``(x, w, rho, free_C, active_K) -> solve(rhs)`` for problems whose ALM
    Jacobian has exploitable structure.
    """

    n: int
    m: int
    eval_F: Callable[[np.ndarray], np.ndarray]
    eval_G: Callable[[np.ndarray, np.ndarray], np.ndarray]
    apply_DyG: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    apply_DyG_adj: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    apply_DxG: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    set_C: BoxSet
    set_K: BoxSet
    x_weights: np.ndarray
    h_weights: np.ndarray
    jac_F: Optional[Callable[[np.ndarray], object]] = None
    jac_DyG: Optional[Callable[[np.ndarray, np.ndarray], object]] = None
    jac_DxG: Optional[Callable[[np.ndarray, np.ndarray], object]] = None
    DxG_factors: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    apply_dF: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    newton_solver: Optional[Callable] = None
    # diagonal scaling for the inner natural residual (see ViOperator)
    primal_scale: Optional[np.ndarray] = None
    linear_in_y: bool = False
    name: str = "qvi"
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.set_C.dim != self.n:
            raise ContractError("C has wrong dimension")
        if self.set_K.dim != self.m:
            raise ContractError("K has wrong dimension")
        xw = np.asarray(self.x_weights, dtype=float)
        hw = np.asarray(self.h_weights, dtype=float)
        if xw.shape != (self.n,) or hw.shape != (self.m,):
            raise ContractError("weights have wrong length")
        if (xw <= 0).any() or (hw <= 0).any():
            raise ContractError("weights must be strictly positive")
        object.__setattr__(self, "x_weights", xw)
        object.__setattr__(self, "h_weights", hw)

    # checked evaluations -------------------------------------------------
    def F(self, x) -> np.ndarray:
        return check_finite(np.asarray(self.eval_F(x), dtype=float), "F")

    def G(self, x, y) -> np.ndarray:
        return check_finite(np.asarray(self.eval_G(x, y), dtype=float), "G")

    def G_diag(self, x) -> np.ndarray:
        return self.G(x, x)

    def DyG_adj(self, x, y, mu) -> np.ndarray:
        if self.m == 0:
            return np.zeros(self.n)
        return check_finite(np.asarray(self.apply_DyG_adj(x, y, mu), dtype=float), "DyG*")

    # matrices ------------------------------------------------------------
    def dF_matrix(self, x):
        if self.jac_F is not None:
            return self.jac_F(x)
        # forward-difference fallback is deliberately not offered: F' must be exact
        raise ContractError(f"problem {self.name!r} has no jac_F")

    def DyG_matrix(self, x, y):
        if self.jac_DyG is not None:
            return self.jac_DyG(x, y)
        return _dense_from_action(lambda d: self.apply_DyG(x, y, d), self.n, self.m)

    def dF_apply(self, x, d) -> np.ndarray:
        if self.apply_dF is not None:
            return np.asarray(self.apply_dF(x, d), dtype=float)
        return np.asarray(self.dF_matrix(x) @ d, dtype=float)

    def DxG_matrix(self, x, y):
        if self.DxG_factors is not None:
            U, V = self.DxG_factors(x, y)
            return np.asarray(U) @ np.asarray(V).T
        if self.jac_DxG is not None:
            return self.jac_DxG(x, y)
        return _dense_from_action(lambda d: self.apply_DxG(x, y, d), self.n, self.m)

    def DyG_adj_matrix(self, x, y):
        """Weighted adjoint ``W_x^{-1} DyG^T W_H`` as a matrix."""
        A = self.DyG_matrix(x, y)
        if sp.issparse(A):
            return (sp.diags(1.0 / self.x_weights) @ A.T @ sp.diags(self.h_weights)).tocsr()
        return (A.T * self.h_weights[None, :]) / self.x_weights[:, None]


# validation suite -----------------------------------------------------------

def adjoint_mismatch(p: QviProblem, x, y, d, mu) -> float:
    """Relative gap ``|<DyG d, mu>_H - <d, DyG* mu>_X|`` for one sample."""
    lhs = inner(p.apply_DyG(x, y, d), mu, p.h_weights)
    rhs = inner(d, p.DyG_adj(x, y, mu), p.x_weights)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale


def dyg_fd_mismatch(p: QviProblem, x, y, d, eps: float = 1e-6) -> float:
    """Relative error of ``DyG d`` against central differences of ``G(x, .)``."""
    fd = (p.G(x, y + eps * d) - p.G(x, y - eps * d)) / (2 * eps)
    an = p.apply_DyG(x, y, d)
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(an), np.linalg.norm(fd), 1e-300))


def dxg_fd_mismatch(p: QviProblem, x, y, d, eps: float = 1e-6) -> float:
    fd = (p.G(x + eps * d, y) - p.G(x - eps * d, y)) / (2 * eps)
    an = p.apply_DxG(x, y, d)
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(an), np.linalg.norm(fd), 1e-300))


def validate_problem(p: QviProblem, rng=None, samples: int = 3, scale: float = 1.0) -> dict:
    """Worst adjoint and finite-difference mismatches over random samples."""
    rng = np.random.default_rng(rng)
    out = {"adjoint": 0.0, "dyg_fd": 0.0, "dxg_fd": 0.0}
    if p.m == 0:
        return out
    for _ in range(samples):
        x = scale * rng.standard_normal(p.n)
        y = scale * rng.standard_normal(p.n)
        d = rng.standard_normal(p.n)
        mu = rng.standard_normal(p.m)
        out["adjoint"] = max(out["adjoint"], adjoint_mismatch(p, x, y, d, mu))
        out["dyg_fd"] = max(out["dyg_fd"], dyg_fd_mismatch(p, x, y, d))
        out["dxg_fd"] = max(out["dxg_fd"], dxg_fd_mismatch(p, x, y, d))
    return out
