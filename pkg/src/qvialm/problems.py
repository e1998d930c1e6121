"""Concrete QVI instances: an analytic scalar problem, plain VIs, and the three
discretized applications (implicit Signorini, gradient constraints, GNEP)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import discretization as fd
from .problem import BoxSet, ContractError, QviProblem

# ---------------------------------------------------------------------------
# analytic moving-set problem


def build_analytic_moving_set() -> QviProblem:
    """Scalar QVI ``F(x) = x - 2``, ``Phi(x) = {y : y <= (x + 1)/2}``.

    The unique solution is ``x = 1`` with multiplier ``lambda = 1``.
    """
    one = np.ones(1)
    return QviProblem(
        n=1,
        m=1,
        eval_F=lambda x: np.asarray(x, dtype=float) - 2.0,
        eval_G=lambda x, y: np.asarray(y, dtype=float) - (np.asarray(x, dtype=float) + 1.0) / 2,
        apply_DyG=lambda x, y, d: np.asarray(d, dtype=float).copy(),
        apply_DyG_adj=lambda x, y, mu: np.asarray(mu, dtype=float).copy(),
        apply_DxG=lambda x, y, d: -0.5 * np.asarray(d, dtype=float),
        set_C=BoxSet.whole_space(1),
        set_K=BoxSet.nonpositive(1),
        x_weights=one,
        h_weights=one,
        jac_F=lambda x: np.eye(1),
        jac_DyG=lambda x, y: np.eye(1),
        jac_DxG=lambda x, y: -0.5 * np.eye(1),
        linear_in_y=True,
        name="analytic",
    )


def qvi_from_vi(F: Callable, C: BoxSet, jac_F: Optional[Callable] = None,
                weights=None, name: str = "vi") -> QviProblem:
    """Wrap the VI ``x in C, <F(x), y - x> >= 0`` as a QVI with no constraints."""
    n = C.dim
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    empty = np.zeros(0)
    return QviProblem(
        n=n,
        m=0,
        eval_F=F,
        eval_G=lambda x, y: empty,
        apply_DyG=lambda x, y, d: empty,
        apply_DyG_adj=lambda x, y, mu: np.zeros(n),
        apply_DxG=lambda x, y, d: empty,
        set_C=C,
        set_K=BoxSet(empty, empty),
        x_weights=w,
        h_weights=empty,
        jac_F=jac_F,
        jac_DyG=lambda x, y: sp.csr_matrix((0, n)),
        jac_DxG=lambda x, y: sp.csr_matrix((0, n)),
        linear_in_y=True,
        name=name,
    )


def build_linear_vi(A, b, C: BoxSet) -> QviProblem:
    """``F(x) = A x - b`` over the box ``C``."""
    A = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return qvi_from_vi(lambda x: A @ x - b, C, jac_F=lambda x: A)


# ---------------------------------------------------------------------------
# implicit Signorini problem


@dataclass
class SignoriniData:
    n: int = 16
    f: Optional[np.ndarray] = None  # default -1 on all nodes
    phi: Optional[np.ndarray] = None  # default 1 on the boundary
    h0: Optional[np.ndarray] = None  # default 1 on the boundary

    def __post_init__(self):
        if self.n < 3:
            raise ContractError("Signorini problem needs n >= 3")
        if self.phi is not None and np.any(np.asarray(self.phi) < 0):
            raise ContractError("phi must be nonnegative")


def _vector(val, size, default):
    if val is None:
        return np.full(size, float(default))
    v = np.asarray(val, dtype=float)
    return np.full(size, float(v)) if v.ndim == 0 else v.reshape(size)


def build_signorini(d: SignoriniData) -> QviProblem:
    """``F(u) = u - Laplace u - f``, ``G(u, v) = trace(v) - h0 + <phi, d_n u>_Gamma``, ``K = H_+``."""
    grid = fd.Grid2D(d.n, include_boundary=True)
    N = grid.size
    Tr = fd.trace_matrix(grid)
    Dn = fd.normal_derivative_matrix(grid)
    m = Tr.shape[0]
    bw = grid.boundary_weights
    qw = grid.quad_weights
    f = _vector(d.f, N, -1.0)
    phi = _vector(d.phi, m, 1.0)
    h0 = _vector(d.h0, m, 1.0)
    A = fd.helmholtz_operator(grid)
    # c(u) = sum_b h phi_b (d_n u)_b = a . u
    a = np.asarray(Dn.T @ (bw * phi)).ravel()
    ones_m = np.ones(m)
    TrT_w = (sp.diags(1.0 / qw) @ Tr.T @ sp.diags(bw)).tocsr()

    def eval_G(u, v):
        return Tr @ v - h0 + float(a @ u)

    return QviProblem(
        n=N,
        m=m,
        eval_F=lambda u: A @ u - f,
        eval_G=eval_G,
        apply_DyG=lambda u, v, dv: Tr @ dv,
        apply_DyG_adj=lambda u, v, mu: TrT_w @ mu,
        apply_DxG=lambda u, v, du: float(a @ du) * ones_m,
        set_C=BoxSet.whole_space(N),
        set_K=BoxSet.nonnegative(m),
        x_weights=qw,
        h_weights=bw,
        jac_F=lambda u: A,
        jac_DyG=lambda u, v: Tr,
        DxG_factors=lambda u, v: (ones_m[:, None], a[:, None]),
        linear_in_y=True,
        name="signorini",
        data={"grid": grid, "f": f, "phi": phi, "h0": h0, "c_vector": a},
    )


# ---------------------------------------------------------------------------
# parametric gradient constraints


@dataclass
class GradientQviData:
    n: int = 16
    p: float = 2.0
    f: Optional[np.ndarray] = None  # surrogate default: f = 1
    psi_affine: tuple = (0.01, 2.0)

    def __post_init__(self):
        if self.n < 2:
            raise ContractError("gradient problem needs n >= 2")
        if self.p < 2:
            raise ContractError("p must be at least 2")
        if self.psi_affine[0] <= 0:
            raise ContractError("Psi must be bounded below by a positive constant")


def build_gradient_qvi(d: GradientQviData) -> QviProblem:
    """``F(u) = -Delta_p u - f``, ``G(u, v)_i = |grad v|_i^2 - Psi(u)^2 <= 0``,
    ``Psi(u) = c0 + c1 |int u|``."""
    grid = fd.Grid2D(d.n, include_boundary=False)
    N = grid.size
    w = grid.quad_weights
    Dx, Dy = fd.backward_difference_matrices(grid)
    f = _vector(d.f, N, 1.0)
    c0, c1 = d.psi_affine
    p = d.p
    ones = np.ones(N)

    def psi(u):
        return c0 + c1 * abs(float(w @ u))

    def eval_G(u, v):
        gx, gy = Dx @ v, Dy @ v
        return gx * gx + gy * gy - psi(u) ** 2

    def DyG(u, v, dv):
        return 2.0 * ((Dx @ v) * (Dx @ dv) + (Dy @ v) * (Dy @ dv))

    def DyG_adj(u, v, mu):
        # x and constraint weights coincide, so the adjoint is the transpose
        return 2.0 * (Dx.T @ ((Dx @ v) * mu) + Dy.T @ ((Dy @ v) * mu))

    def dxg_coeff(u):
        return -2.0 * psi(u) * c1 * np.sign(float(w @ u))

    def DxG(u, v, du):
        return dxg_coeff(u) * float(w @ du) * ones

    def jac_DyG(u, v):
        return (2.0 * (sp.diags(Dx @ v) @ Dx + sp.diags(Dy @ v) @ Dy)).tocsr()

    return QviProblem(
        n=N,
        m=N,
        eval_F=lambda u: fd.p_laplacian_apply(grid, u, p) - f,
        eval_G=eval_G,
        apply_DyG=DyG,
        apply_DyG_adj=DyG_adj,
        apply_DxG=DxG,
        set_C=BoxSet.whole_space(N),
        set_K=BoxSet.nonpositive(N),
        x_weights=w,
        h_weights=w.copy(),
        jac_F=lambda u: fd.p_laplacian_jacobian(grid, u, p),
        jac_DyG=jac_DyG,
        DxG_factors=lambda u, v: (ones[:, None], (dxg_coeff(u) * w)[:, None]),
        name="gradient",
        data={"grid": grid, "f": f, "psi": psi, "p": p},
    )


# ---------------------------------------------------------------------------
# optimal-control GNEP

GNEP_ALPHA = (2.8859, 4.3374, 2.5921, 3.9481)
GNEP_Z1 = (0.25, 0.75, 0.25, 0.75)
GNEP_Z2 = (0.25, 0.25, 0.75, 0.75)


def gnep_psi(x1, x2):
    return np.cos(5.0 * np.sqrt((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2)) + 0.1


def gnep_xi(nu, x1, x2):
    """Bump ``xi_nu`` for player index ``nu`` in ``0..3``."""
    r = np.maximum(np.abs(x1 - GNEP_Z1[nu]), np.abs(x2 - GNEP_Z2[nu]))
    return 1e3 * np.maximum(0.0, 1.0 - 4.0 * r)


@dataclass
class GnepData:
    n: int = 16
    alpha: tuple = GNEP_ALPHA
    f: float = 1.0
    bound: float = 12.0
    # which argument of G carries the player's own control.  "x" reads the
    # constraint as y(u^nu, v^{-nu}); "y" swaps the roles.  Both agree on the
    # diagonal G(u, u) and differ only in the Newton linearization.
    own_slot: str = "x"
    # per-player desired states; None samples them from the bumps xi_nu
    y_desired: Optional[tuple] = None
    players: int = field(init=False, default=4)

    def __post_init__(self):
        if self.n < 2:
            raise ContractError("GNEP needs n >= 2")
        if len(self.alpha) != self.players or min(self.alpha) <= 0:
            raise ContractError("need four positive alpha values")
        if self.own_slot not in ("x", "y"):
            raise ContractError("own_slot must be 'x' or 'y'")
        if self.y_desired is not None and len(self.y_desired) != self.players:
            raise ContractError("need one desired state per player")


def build_gnep(d: GnepData) -> QviProblem:
    """Four-player optimal-control GNEP with state constraint ``S(sum u + f) >= psi``.

    ``F(u)_nu = alpha_nu u^nu + S(y(u) - y_d^nu)`` with ``y(u) = S(sum u + f)``.
    Controls are stacked player by player.
    """
    grid = fd.Grid2D(d.n, include_boundary=False)
    Nn = grid.size
    P = d.players
    n = P * Nn
    S = fd.PoissonSolver(grid)
    w = np.tile(grid.quad_weights, P)
    X1, X2 = grid.points
    psi = gnep_psi(X1, X2)
    xi = [gnep_xi(nu, X1, X2) for nu in range(P)]
    if d.y_desired is None:
        y_d = [xi[nu] - xi[P - 1 - nu] for nu in range(P)]
    else:
        y_d = [np.broadcast_to(np.asarray(v, dtype=float), (Nn,)).copy() for v in d.y_desired]
    alpha = np.asarray(d.alpha, dtype=float)
    f = np.full(Nn, float(d.f))
    own_in_y = d.own_slot == "y"

    def blocks(v):
        return np.asarray(v, dtype=float).reshape(P, Nn)

    def state(u):
        return S(blocks(u).sum(axis=0) + f)

    def eval_F(u):
        U = blocks(u)
        y = S(U.sum(axis=0) + f)
        return np.concatenate([alpha[nu] * U[nu] + S(y - y_d[nu]) for nu in range(P)])

    def apply_dF(u, du):
        D = blocks(du)
        t = S(S(D.sum(axis=0)))
        return np.concatenate([alpha[nu] * D[nu] + t for nu in range(P)])

    def eval_G(u, v):
        U, V = blocks(u), blocks(v)
        own, other = (V, U) if own_in_y else (U, V)
        tot = other.sum(axis=0)
        return np.concatenate([S(own[nu] + tot - other[nu] + f) - psi for nu in range(P)])

    def DyG(u, v, dv):
        D = blocks(dv)
        if own_in_y:
            return np.concatenate([S(D[nu]) for nu in range(P)])
        tot = D.sum(axis=0)
        return np.concatenate([S(tot - D[nu]) for nu in range(P)])

    def DxG(u, v, du):
        D = blocks(du)
        if own_in_y:
            tot = D.sum(axis=0)
            return np.concatenate([S(tot - D[nu]) for nu in range(P)])
        return np.concatenate([S(D[nu]) for nu in range(P)])

    # S is self-adjoint in the h^2 pairing and all weights coincide
    DyG_adj = lambda u, v, mu: DyG(u, v, mu)

    def newton_solver(x, wk, rho, free, active):
        """Sparse augmented form of ``(I - Sigma_C (I - J)) d = rhs``.

        Unknowns ``[d (P*Nn), a, b, e^1..e^P]`` with ``L a = sum d``,
        ``L b = a``, ``L e^mu = rho * (sum of active masks feeding mu) * a``;
        free rows read ``alpha_mu d^mu + b + e^mu = rhs^mu``.
        """
        L = S.matrix
        act = np.asarray(active, dtype=float).reshape(P, Nn)
        if own_in_y:
            feed = act
        else:
            feed = act.sum(axis=0)[None, :] - act
        s = np.asarray(free, dtype=float)
        I_N = sp.identity(Nn, format="csr")
        Sf = sp.diags(s)
        dd = sp.diags(np.repeat(alpha, Nn) * s + (1.0 - s))
        M = sp.bmat([
            [dd, None, Sf @ sp.vstack([I_N] * P), Sf],
            [-sp.hstack([I_N] * P), L, None, None],
            [None, -I_N, L, None],
            [None, sp.vstack([sp.diags(-rho * feed[mu]) for mu in range(P)]), None,
             sp.kron(sp.identity(P), L)],
        ], format="csc")
        lu = spla.splu(M)
        tail = np.zeros(M.shape[0] - n)

        def solve(rhs):
            sol = lu.solve(np.concatenate([rhs, tail]))
            d_ = sol[:n]
            if not np.all(np.isfinite(d_)):
                raise np.linalg.LinAlgError("non-finite Newton step")
            return d_

        return solve

    return QviProblem(
        n=n,
        m=n,
        eval_F=eval_F,
        eval_G=eval_G,
        apply_DyG=DyG,
        apply_DyG_adj=DyG_adj,
        apply_DxG=DxG,
        set_C=BoxSet.uniform(n, -d.bound, d.bound),
        set_K=BoxSet.nonnegative(n),
        x_weights=w,
        h_weights=w.copy(),
        apply_dF=apply_dF,
        newton_solver=newton_solver,
        primal_scale=np.repeat(1.0 / alpha, Nn),
        linear_in_y=True,
        name="gnep",
        data={"grid": grid, "solver": S, "psi": psi, "y_desired": y_d, "alpha": alpha,
              "state": state},
    )


def gnep_objectives(p: QviProblem, u) -> np.ndarray:
    """Player objectives ``J_nu(u)`` (weighted L2 norms)."""
    grid = p.data["grid"]
    wq = grid.quad_weights
    y = p.data["state"](u)
    U = np.asarray(u, dtype=float).reshape(-1, grid.size)
    out = []
    for nu, yd in enumerate(p.data["y_desired"]):
        out.append(0.5 * wq @ (y - yd) ** 2 + 0.5 * p.data["alpha"][nu] * wq @ U[nu] ** 2)
    return np.array(out)
