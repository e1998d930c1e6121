"""Globalized semismooth Newton method for box-constrained VIs.

The VI ``x in C, <T(x), y - x> >= 0 for all y in C`` is rewritten as the
nonsmooth equation ``Theta(x) = x - P_C(x - T(x)) = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .augmented import eval_aug_lagrangian
from .problem import BoxSet, QviProblem, check_finite, project_box

log = logging.getLogger(__name__)


@dataclass
class ViOperator:
    apply: Callable[[np.ndarray], np.ndarray]
    apply_jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    assemble_jacobian: Optional[Callable[[np.ndarray], object]] = None
    # (x, free_mask) -> solve(rhs) for (I - Sigma (I - J)) d = rhs
    solve_jacobian: Optional[Callable] = None
    # positive diagonal D; Newton works on x - P_C(x - D T(x)), same zeros
    residual_scale: Optional[np.ndarray] = None


@dataclass
class NewtonConfig:
    tol: float = 1e-10
    max_iterations: int = 50
    line_search_beta: float = 0.5
    line_search_sigma: float = 1e-4
    regularization_floor: float = 1e-10
    max_backtracks: int = 30

    def __post_init__(self):
        if self.tol <= 0 or self.max_iterations < 0:
            raise ValueError("tol must be positive and max_iterations nonnegative")
        if not (0 < self.line_search_beta < 1 and 0 < self.line_search_sigma < 1):
            raise ValueError("line search parameters must lie in (0, 1)")
        if self.regularization_floor < 0:
            raise ValueError("regularization_floor must be nonnegative")


@dataclass
class NewtonResult:
    x: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    message: str = ""


class LinearSolveError(RuntimeError):
    pass


@dataclass
class LowRankUpdate:
    """Matrix ``base + U @ V.T`` with a sparse or dense ``base`` and thin ``U``, ``V``."""

    base: object
    U: np.ndarray
    V: np.ndarray

    def __matmul__(self, d):
        return self.base @ d + self.U @ (self.V.T @ d)

    def toarray(self):
        b = self.base.toarray() if sp.issparse(self.base) else np.asarray(self.base)
        return b + self.U @ self.V.T


def _wnorm(v, weights):
    if weights is None:
        return float(np.linalg.norm(v))
    return float(np.sqrt(np.dot(weights * v, v)))


def natural_residual(T: ViOperator, C: BoxSet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    Tx = check_finite(np.asarray(T.apply(x), dtype=float), "operator")
    return x - project_box(x - Tx, C)


def free_mask(C: BoxSet, x, Tx) -> np.ndarray:
    """Sigma_C: true where ``x - T(x)`` is strictly inside the box (kinks -> 0)."""
    z = x - Tx
    return (z > C.lower) & (z < C.upper)


def generalized_jacobian_action(T: ViOperator, C: BoxSet, x, d) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    sigma = free_mask(C, x, T.apply(x))
    return np.where(sigma, T.apply_jacobian(x, d), d)


def _newton_matrix(J, sigma):
    """Rows of ``J`` on the free set, identity rows elsewhere."""
    n = sigma.size
    s = sigma.astype(float)
    if isinstance(J, LowRankUpdate):
        return LowRankUpdate(_newton_matrix(J.base, sigma), J.U * s[:, None], J.V)
    if sp.issparse(J):
        return (sp.diags(s) @ J + sp.diags(1.0 - s)).tocsc()
    J = np.asarray(J, dtype=float)
    M = J * s[:, None]
    M[np.arange(n), np.arange(n)] += 1.0 - s
    return M


def _factor_solve(M, rhs):
    if isinstance(M, LowRankUpdate):
        # Woodbury: (B + U V^T)^{-1} r = z - Y (I + V^T Y)^{-1} V^T z
        rhs_all = np.column_stack([rhs, M.U])
        sol = _factor_solve(M.base, rhs_all)
        z, Y = sol[:, 0], sol[:, 1:]
        cap = np.eye(M.U.shape[1]) + M.V.T @ Y
        d = z - Y @ np.linalg.solve(cap, M.V.T @ z)
        if not np.all(np.isfinite(d)):
            raise np.linalg.LinAlgError("non-finite solution")
        return d
    if sp.issparse(M):
        lu = spla.splu(M)
        d = lu.solve(rhs)
    else:
        d = scipy.linalg.solve(M, rhs, check_finite=True)
    if not np.all(np.isfinite(d)):
        raise np.linalg.LinAlgError("non-finite solution")
    return d


def _regularized(M, floor):
    if isinstance(M, LowRankUpdate):
        return LowRankUpdate(_regularized(M.base, floor), M.U, M.V)
    n = M.shape[0]
    return M + floor * (sp.identity(n, format="csc") if sp.issparse(M) else np.eye(n))


def _solve_direct(M, rhs, floor):
    try:
        with np.errstate(all="ignore"):
            return _factor_solve(M, rhs)
    except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        if floor <= 0:
            raise LinearSolveError(str(exc)) from exc
        log.debug("factorization failed (%s); regularizing with %g", exc, floor)
        Mr = _regularized(M, floor)
        try:
            with np.errstate(all="ignore"):
                return _factor_solve(Mr, rhs)
        except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc2:
            raise LinearSolveError(f"linear solve failed after regularization: {exc2}") from exc2


def newton_direction(T: ViOperator, C: BoxSet, x, Tx, theta, floor, scale=None) -> np.ndarray:
    """Newton step for ``x - P_C(x - D T(x))`` with ``theta`` its current value.

    Free rows read ``D_i (J d)_i = -theta_i``, the others ``d_i = -theta_i``.
    """
    sigma = free_mask(C, x, Tx if scale is None else scale * Tx)
    rhs = -theta if scale is None else np.where(sigma, -theta / scale, -theta)
    if T.solve_jacobian is not None:
        return T.solve_jacobian(x, sigma)(rhs)
    if T.assemble_jacobian is not None:
        J = T.assemble_jacobian(x)
    else:
        n = x.size
        J = np.column_stack([T.apply_jacobian(x, e) for e in np.eye(n)])
    return _solve_direct(_newton_matrix(J, sigma), rhs, floor)


def semismooth_newton(T: ViOperator, C: BoxSet, x0, cfg: NewtonConfig | None = None,
                      weights=None) -> NewtonResult:
    """Solve the box VI for ``T`` from ``x0``.

    ``weights`` selects the norm used for the stopping test and the line
    search (Euclidean if omitted).  Convergence is declared on the natural
    residual; if ``T.residual_scale`` is set, directions and the Armijo test
    use the diagonally scaled residual instead.
    """
    cfg = cfg or NewtonConfig()
    D = T.residual_scale
    x = np.asarray(x0, dtype=float).copy()
    check_finite(x, "x0")

    def evaluate(v):
        Tv = check_finite(np.asarray(T.apply(v), dtype=float), "operator")
        th = v - project_box(v - Tv, C)
        th_s = th if D is None else v - project_box(v - D * Tv, C)
        return Tv, th, _wnorm(th, weights), th_s, _wnorm(th_s, weights)

    Tx, theta, nrm, theta_s, merit = evaluate(x)
    history = [nrm]
    for it in range(cfg.max_iterations + 1):
        if nrm <= cfg.tol:
            return NewtonResult(x, nrm, it, True, history, "converged")
        if it == cfg.max_iterations:
            break
        try:
            d = newton_direction(T, C, x, Tx, theta_s, cfg.regularization_floor, D)
        except LinearSolveError as exc:
            return NewtonResult(x, nrm, it, False, history, str(exc))
        t = 1.0
        for _ in range(cfg.max_backtracks + 1):
            try:
                trial = evaluate(x + t * d)
            except FloatingPointError:
                trial = None
            if trial is not None and trial[4] <= (1.0 - cfg.line_search_sigma * t) * merit:
                break
            t *= cfg.line_search_beta
        else:
            return NewtonResult(x, nrm, it, False, history,
                                f"line search failed at residual {nrm:.3e}")
        x = x + t * d
        Tx, theta, nrm, theta_s, merit = trial
        history.append(nrm)
    return NewtonResult(x, nrm, cfg.max_iterations, False, history,
                        "maximum number of iterations reached")


def alm_active_set(p: QviProblem, x, w, rho: float) -> np.ndarray:
    """Diagonal of the generalized derivative of ``z - P_K(z)`` (1 strictly outside K)."""
    z = p.G(x, x) + np.asarray(w, dtype=float) / rho
    return (z < p.set_K.lower) | (z > p.set_K.upper)


def build_alm_operator(p: QviProblem, w, rho: float) -> ViOperator:
    """VI operator ``x -> L_rho(x, w)`` with a Gauss-Newton type Jacobian.

    ``J(x) = F'(x) + rho DyG(x,x)^* Sigma_K (DxG(x,x) + DyG(x,x))``; the
    derivative of ``x -> DyG(x,x)^*`` is dropped.
    """
    w = np.asarray(w, dtype=float).copy()
    if rho <= 0:
        raise ValueError("rho must be positive")

    def apply(x):
        return eval_aug_lagrangian(p, x, w, rho)

    def apply_jacobian(x, d):
        out = p.dF_apply(x, d)
        if p.m:
            act = alm_active_set(p, x, w, rho)
            inner_d = p.apply_DxG(x, x, d) + p.apply_DyG(x, x, d)
            out = out + rho * p.DyG_adj(x, x, np.where(act, inner_d, 0.0))
        return np.asarray(out, dtype=float)

    def assemble_jacobian(x):
        JF = p.dF_matrix(x)
        if p.m == 0:
            return JF
        act = alm_active_set(p, x, w, rho).astype(float)
        A = p.DyG_adj_matrix(x, x)
        if sp.issparse(A):
            A = A @ sp.diags(rho * act)
        else:
            A = A * (rho * act)[None, :]
        lowrank = None
        if p.DxG_factors is not None:
            U, V = p.DxG_factors(x, x)
            inner_m = p.DyG_matrix(x, x)
            lowrank = (np.asarray(A @ U), np.asarray(V))
        else:
            inner_m = p.DxG_matrix(x, x) + p.DyG_matrix(x, x)
        if sp.issparse(inner_m) and not sp.issparse(A):
            inner_m = inner_m.toarray()
        prod = A @ inner_m
        if sp.issparse(JF) and sp.issparse(prod):
            J = (JF + prod).tocsr()
        else:
            J = ((JF.toarray() if sp.issparse(JF) else np.asarray(JF))
                 + (prod.toarray() if sp.issparse(prod) else np.asarray(prod)))
        if lowrank is not None:
            return LowRankUpdate(J, *lowrank)
        return J

    def structured_solve(x, sigma):
        return p.newton_solver(x, w, rho, sigma, alm_active_set(p, x, w, rho))

    solve_jacobian = structured_solve if p.newton_solver is not None else None

    return ViOperator(apply, apply_jacobian, assemble_jacobian, solve_jacobian,
                      residual_scale=p.primal_scale)
