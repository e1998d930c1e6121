"""Augmented Lagrangian building blocks: operator, utility function,
multiplier and penalty updates, and KKT diagnostics."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .problem import BoxSet, ContractError, QviProblem, inner, norm, project_box


def _shifted_residual(p: QviProblem, g: np.ndarray, w: np.ndarray, rho: float):
    z = g + w / rho
    return z - project_box(z, p.set_K)


def eval_aug_lagrangian(p: QviProblem, x, w, rho: float) -> np.ndarray:
    """``F(x) + rho * DyG(x,x)^* [z - P_K(z)]`` with ``z = G(x,x) + w/rho``."""
    if rho <= 0:
        raise ContractError("rho must be positive")
    x = np.asarray(x, dtype=float)
    Fx = p.F(x)
    if p.m == 0:
        return Fx
    r = _shifted_residual(p, p.G(x, x), np.asarray(w, dtype=float), rho)
    return Fx + p.DyG_adj(x, x, rho * r)


def eval_lagrangian(p: QviProblem, x, lam) -> np.ndarray:
    """``F(x) + DyG(x,x)^* lam``."""
    x = np.asarray(x, dtype=float)
    if p.m == 0:
        return p.F(x)
    return p.F(x) + p.DyG_adj(x, x, np.asarray(lam, dtype=float))


def eval_V(p: QviProblem, x, w, rho: float) -> float:
    """Utility function ``||G(x,x) - P_K(G(x,x) + w/rho)||_H``."""
    if rho <= 0:
        raise ContractError("rho must be positive")
    if p.m == 0:
        return 0.0
    g = p.G(x, x)
    return norm(g - project_box(g + np.asarray(w, dtype=float) / rho, p.set_K), p.h_weights)


def update_multiplier(p: QviProblem, x_new, w, rho: float) -> np.ndarray:
    if rho <= 0:
        raise ContractError("rho must be positive")
    if p.m == 0:
        return np.zeros(0)
    return rho * _shifted_residual(p, p.G(x_new, x_new), np.asarray(w, dtype=float), rho)


def safeguard(lam, B: BoxSet) -> np.ndarray:
    return project_box(lam, B)


def penalty_update(v_new: float, v_prev: Optional[float], rho: float, gamma: float,
                   tau: float, k: int) -> float:
    """Keep ``rho`` if ``k == 0`` or ``v_new <= tau * v_prev``, else scale by ``gamma``."""
    if rho <= 0 or v_new < 0:
        raise ContractError("penalty_update needs rho > 0 and v_new >= 0")
    if k == 0:
        return rho
    if v_prev is None:
        raise ContractError("v_prev unset at k > 0")
    return rho if v_new <= tau * v_prev else gamma * rho


def complementarity_bound(lam_new, w, rho: float, weights) -> float:
    """``max(0, (<lam, w>_H - ||lam||_H^2) / rho)``."""
    if rho <= 0:
        raise ContractError("rho must be positive")
    lam_new = np.asarray(lam_new, dtype=float)
    if lam_new.size == 0:
        return 0.0
    val = (inner(lam_new, w, weights) - inner(lam_new, lam_new, weights)) / rho
    return max(0.0, val)


def normality_sup(lam, g, K: BoxSet, weights) -> float:
    """Closed-form ``sup_{y in K} <lam, y - g>_H`` for a box ``K``.

    Each component is maximized at the bound selected by the sign of
    ``lam_i``; an infinite bound with the wrong multiplier sign gives ``inf``.
    """
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(g, dtype=float)
    y = np.where(lam > 0, K.upper, np.where(lam < 0, K.lower, 0.0))
    with np.errstate(invalid="ignore"):
        terms = np.where(lam == 0, 0.0, weights * lam * (y - g))
    if np.isposinf(terms).any():
        return np.inf
    return float(terms.sum())


def kkt_residual(p: QviProblem, x, lam) -> float:
    """``||x - P_C(x - L(x,lam))||_X + ||G(x,x) - P_K(G(x,x) + lam)||_H``."""
    x = np.asarray(x, dtype=float)
    L = eval_lagrangian(p, x, lam)
    stat = norm(x - project_box(x - L, p.set_C), p.x_weights)
    if p.m == 0:
        return stat
    g = p.G(x, x)
    comp = norm(g - project_box(g + np.asarray(lam, dtype=float), p.set_K), p.h_weights)
    return stat + comp


def feasibility(p: QviProblem, x) -> float:
    if p.m == 0:
        return 0.0
    g = p.G(x, x)
    return norm(g - project_box(g, p.set_K), p.h_weights)
