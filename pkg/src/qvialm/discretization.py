"""Finite-difference kernels on the unit square.

Node ``(i, j)`` (``i`` along x, ``j`` along y) has flat index ``j * n + i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import ContractError


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid with ``n`` points per row/column.

    With ``include_boundary`` the points are ``0, h, ..., 1`` and
    ``h = 1/(n-1)``; otherwise only the interior points ``h, ..., 1-h`` with
    ``h = 1/(n+1)`` are stored (homogeneous Dirichlet data implied).
    """

    n: int
    include_boundary: bool = False

    def __post_init__(self):
        if self.n < (2 if self.include_boundary else 1):
            raise ContractError("grid too small")

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1) if self.include_boundary else 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n * self.n

    def index(self, i, j):
        return np.asarray(j) * self.n + np.asarray(i)

    def coords(self, k):
        k = np.asarray(k)
        return k % self.n, k // self.n

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.arange(self.n) * self.h
        if not self.include_boundary:
            t = t + self.h
        X, Y = np.meshgrid(t, t)  # X[j, i] = x_i
        return X.ravel(), Y.ravel()

    @cached_property
    def boundary_index_list(self) -> np.ndarray:
        if not self.include_boundary:
            return np.zeros(0, dtype=int)
        i, j = self.coords(np.arange(self.size))
        on = (i == 0) | (i == self.n - 1) | (j == 0) | (j == self.n - 1)
        return np.flatnonzero(on)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Domain quadrature: ``h^2`` per node, trapezoidal halving on the boundary."""
        w1 = np.full(self.n, self.h)
        if self.include_boundary:
            w1[0] = w1[-1] = self.h / 2
        return np.outer(w1, w1).ravel()

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """Boundary quadrature: ``h`` per boundary node (total length 4)."""
        return np.full(self.boundary_index_list.size, self.h)

    def sample(self, fun) -> np.ndarray:
        X, Y = self.points
        return np.asarray(fun(X, Y), dtype=float) * np.ones(self.size)


def _require_interior(grid: Grid2D):
    if grid.include_boundary:
        raise ContractError("operation needs an interior-only grid")


@lru_cache(maxsize=32)
def laplacian_dirichlet(grid: Grid2D) -> sp.csr_matrix:
    """5-point ``-Laplace`` with zero Dirichlet data, scaled by ``1/h^2``."""
    _require_interior(grid)
    n, h = grid.n, grid.h
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    I = sp.identity(n)
    return ((sp.kron(I, T) + sp.kron(T, I)) / h**2).tocsr()


class PoissonSolver:
    """Cached sparse LU of the Dirichlet Laplacian; ``solve`` applies ``S = L^{-1}``."""

    def __init__(self, grid: Grid2D):
        self.grid = grid
        self.matrix = laplacian_dirichlet(grid).tocsc()
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        return self._lu

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        return self.lu.solve(rhs)

    __call__ = solve


def poisson_solve(L, rhs) -> np.ndarray:
    """Solve ``L y = rhs`` for a :class:`PoissonSolver` or a sparse matrix."""
    if isinstance(L, PoissonSolver):
        return L.solve(rhs)
    return spla.spsolve(sp.csc_matrix(L), np.asarray(rhs, dtype=float))


@lru_cache(maxsize=32)
def backward_difference_matrices(grid: Grid2D) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Backward differences ``(u_ij - u_{i-1,j})/h`` and ``(u_ij - u_{i,j-1})/h``,
    with zero values outside the interior grid."""
    _require_interior(grid)
    n, h = grid.n, grid.h
    D = sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1])
    I = sp.identity(n)
    return (sp.kron(I, D) / h).tocsr(), (sp.kron(D, I) / h).tocsr()


def gradient_backward(grid: Grid2D, u) -> tuple[np.ndarray, np.ndarray]:
    Dx, Dy = backward_difference_matrices(grid)
    u = np.asarray(u, dtype=float)
    return Dx @ u, Dy @ u


def laplacian_backward(grid: Grid2D) -> sp.csr_matrix:
    """``Dx^T Dx + Dy^T Dy``: the adjoint-of-gradient Laplacian."""
    Dx, Dy = backward_difference_matrices(grid)
    return (Dx.T @ Dx + Dy.T @ Dy).tocsr()


def _check_p(p):
    if p < 2:
        raise ContractError("p-Laplacian requires p >= 2")


def p_laplacian_apply(grid: Grid2D, u, p: float) -> np.ndarray:
    """Discrete ``-Delta_p u``; the gradient of ``(1/p) sum_i h^2 |grad u|_i^p``
    in the ``h^2``-weighted pairing."""
    _check_p(p)
    Dx, Dy = backward_difference_matrices(grid)
    u = np.asarray(u, dtype=float)
    gx, gy = Dx @ u, Dy @ u
    s = np.hypot(gx, gy) ** (p - 2)
    return Dx.T @ (s * gx) + Dy.T @ (s * gy)


def p_laplacian_energy(grid: Grid2D, u, p: float) -> float:
    _check_p(p)
    gx, gy = gradient_backward(grid, u)
    return float(np.sum(grid.h**2 * np.hypot(gx, gy) ** p) / p)


def p_laplacian_jacobian(grid: Grid2D, u, p: float) -> sp.csr_matrix:
    _check_p(p)
    Dx, Dy = backward_difference_matrices(grid)
    u = np.asarray(u, dtype=float)
    gx, gy = Dx @ u, Dy @ u
    r = np.hypot(gx, gy)
    s = r ** (p - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(r > 0, (p - 2) * r ** (p - 4), 0.0)
    bxx = s + c * gx * gx
    byy = s + c * gy * gy
    bxy = c * gx * gy
    J = (Dx.T @ sp.diags(bxx) @ Dx + Dy.T @ sp.diags(byy) @ Dy
         + Dx.T @ sp.diags(bxy) @ Dy + Dy.T @ sp.diags(bxy) @ Dx)
    return J.tocsr()


def integrate(grid: Grid2D, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ContractError("vector does not match grid")
    return float(np.dot(grid.quad_weights, u))


def trace_matrix(grid: Grid2D) -> sp.csr_matrix:
    b = grid.boundary_index_list
    return sp.csr_matrix((np.ones(b.size), (np.arange(b.size), b)), shape=(b.size, grid.size))


def normal_derivative_matrix(grid: Grid2D) -> sp.csr_matrix:
    """One-sided outward normal derivative ``(u_b - u_adj)/h`` on boundary nodes.

    Corners use the mean of their two edge neighbours.
    """
    if not grid.include_boundary:
        raise ContractError("normal derivative needs a boundary-inclusive grid")
    n, h = grid.n, grid.h
    rows, cols, vals = [], [], []
    for r, k in enumerate(grid.boundary_index_list):
        i, j = grid.coords(k)
        nbrs = []
        if i == 0:
            nbrs.append(grid.index(1, j))
        elif i == n - 1:
            nbrs.append(grid.index(n - 2, j))
        if j == 0:
            nbrs.append(grid.index(i, 1))
        elif j == n - 1:
            nbrs.append(grid.index(i, n - 2))
        rows.append(r)
        cols.append(k)
        vals.append(1.0 / h)
        for nb in nbrs:
            rows.append(r)
            cols.append(int(nb))
            vals.append(-1.0 / (h * len(nbrs)))
    m = grid.boundary_index_list.size
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, grid.size))


def trace_and_normal_derivative(grid: Grid2D, u) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    return trace_matrix(grid) @ u, normal_derivative_matrix(grid) @ u


def neumann_stiffness(grid: Grid2D) -> sp.csr_matrix:
    """Euclidean Hessian of ``1/2 int |grad u|^2`` on a boundary-inclusive grid.

    Every grid edge contributes ``w_e ((u_a - u_b)/h)^2`` with ``w_e = h*h``,
    halved for edges lying on the boundary.  No boundary condition is imposed.
    """
    if not grid.include_boundary:
        raise ContractError("needs a boundary-inclusive grid")
    n, h = grid.n, grid.h
    w_perp = np.full(n, h)
    w_perp[0] = w_perp[-1] = h / 2
    # 1-D difference operator along one axis, weighted by the cross-axis width
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h
    I = sp.identity(n)
    Dx = sp.kron(I, D)  # edges along x, grouped by row j
    Dy = sp.kron(D, I)
    wx = h * np.repeat(w_perp, n - 1)
    wy = h * np.tile(w_perp, n - 1)
    return (Dx.T @ sp.diags(wx) @ Dx + Dy.T @ sp.diags(wy) @ Dy).tocsr()


def helmholtz_operator(grid: Grid2D) -> sp.csr_matrix:
    """``u - Laplace u`` as the weighted-energy Hessian of ``1/2 int u^2 + |grad u|^2``,
    expressed in the quadrature-weighted pairing (``I + W^{-1} K``)."""
    K = neumann_stiffness(grid)
    return (sp.identity(grid.size) + sp.diags(1.0 / grid.quad_weights) @ K).tocsr()
