"""P1 Lagrange finite element machinery.

Assembly of the stiffness form integral(D grad u . grad v), weighted mass
matrices, load vectors, and the semilinear term integral(b(u_h) v), plus
nodal interpolation and symmetric Dirichlet elimination.  All point
functions are vectorized callables mapping an (k, d) array to (k,).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import SimplexMesh, cell_volumes
from .quadrature import MAX_DEGREE, QuadratureRule, quadrature_rule

__all__ = [
    "Nonlinearity",
    "ProblemSpec",
    "FeFunction",
    "QuadratureDegreeWarning",
    "cell_geometry",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "assemble_load",
    "assemble_nonlinear_term",
    "interpolate",
    "apply_dirichlet",
    "quadrature_points_physical",
    "fe_values_at_quadrature",
    "fe_cell_gradients",
    "validate_problem",
]


class QuadratureDegreeWarning(UserWarning):
    """Requested quadrature degree is too low for exact semilinear assembly."""


@dataclass
class Nonlinearity:
    """Scalar reaction term b with derivative and polynomial growth data.

    growth_order n and growth_bound K assert |b^(n)| <= K; monotone asserts
    b' >= 0.  barrier, when given, carries the (alpha, beta) constants of the
    sign condition b(s) - f >= 0 for s >= beta and <= 0 for s <= alpha.
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    growth_order: int
    growth_bound: float
    monotone: bool = True
    barrier: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.growth_order < 1:
            raise ValueError("growth_order must be >= 1")
        if self.growth_bound <= 0:
            raise ValueError("growth_bound must be positive")
        b0 = float(np.asarray(self.value(np.zeros(1)))[0])
        if abs(b0) > 1e-14:
            raise ValueError(f"b(0) must vanish, got {b0!r}")
        if self.monotone:
            grid = np.linspace(-10.0, 10.0, 201)
            dmin = float(np.min(self.derivative(grid)))
            if dmin < -1e-12:
                raise ValueError(f"b' attains {dmin:.3e} < 0 on [-10, 10]")
        if self.barrier is not None:
            alpha, beta = self.barrier
            if alpha > beta:
                raise ValueError("barrier requires alpha <= beta")


@dataclass
class ProblemSpec:
    """Problem data for -div(D grad u) + b(u) = f with Dirichlet data g."""

    dim: int
    diffusion: np.ndarray
    diffusion_bounds: tuple[float, float]
    nonlinearity: Nonlinearity
    source: Callable[[np.ndarray], np.ndarray]
    dirichlet: Callable[[np.ndarray], np.ndarray]
    exact_solution: Optional[tuple[Callable, Callable]] = None  # (u, grad u)

    def __post_init__(self):
        self.diffusion = np.asarray(self.diffusion, dtype=np.float64)
        m, M = self.diffusion_bounds
        if not (0 < m <= M):
            raise ValueError("diffusion bounds must satisfy 0 < m <= M")
        if self.diffusion.shape != (self.dim, self.dim):
            raise ValueError("diffusion tensor has wrong shape")
        if np.max(np.abs(self.diffusion - self.diffusion.T)) > 1e-14:
            raise ValueError("diffusion tensor must be symmetric")
        eigs = np.linalg.eigvalsh(self.diffusion)
        if eigs.min() < m - 1e-12 or eigs.max() > M + 1e-12:
            raise ValueError("declared (m, M) do not bound the diffusion spectrum")
        n = self.nonlinearity.growth_order
        if self.dim == 3 and n > 5:
            raise ValueError(f"growth order {n} exceeds the critical bound 5 in 3D")


@dataclass
class FeFunction:
    """P1 nodal coefficient vector bound to a mesh."""

    mesh: SimplexMesh
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape != (self.mesh.n_vertices,):
            raise ValueError("one coefficient per vertex required")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")


def cell_geometry(mesh: SimplexMesh):
    """Per-cell volume and barycentric basis gradients.

    Returns (volumes (m,), grads (m, d+1, d)) with sum_i grads[c, i] = 0.
    """
    vols = cell_volumes(mesh)
    edges = mesh.vertices[mesh.cells[:, 1:]] - mesh.vertices[mesh.cells[:, :1]]
    inv_t = np.linalg.inv(edges).transpose(0, 2, 1)  # rows are grad lambda_1..d
    grads = np.empty((mesh.n_cells, mesh.dim + 1, mesh.dim))
    grads[:, 1:, :] = inv_t
    grads[:, 0, :] = -inv_t.sum(axis=1)
    return vols, grads


def quadrature_points_physical(mesh: SimplexMesh, rule: QuadratureRule):
    """Physical coordinates of the rule's points on every cell: (m, n_q, d)."""
    return np.einsum("qi,cid->cqd", rule.points, mesh.vertices[mesh.cells])


def fe_values_at_quadrature(u_h: FeFunction, rule: QuadratureRule):
    """u_h evaluated at the rule's points on every cell: (m, n_q)."""
    return u_h.coefficients[u_h.mesh.cells] @ rule.points.T


def fe_cell_gradients(u_h: FeFunction):
    """Constant per-cell gradient of a P1 function: (m, d)."""
    _, grads = cell_geometry(u_h.mesh)
    return np.einsum("ci,cid->cd", u_h.coefficients[u_h.mesh.cells], grads)


def _scatter_matrix(mesh, local):
    nv = mesh.n_vertices
    k = mesh.dim + 1
    rows = np.repeat(mesh.cells, k, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, k)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh: SimplexMesh, diffusion) -> sp.csr_matrix:
    """A[i, j] = sum over cells of vol * (grad(l_j))^T D grad(l_i)."""
    D = np.asarray(diffusion, dtype=np.float64)
    vols, grads = cell_geometry(mesh)
    local = np.einsum("cid,de,cje,c->cij", grads, D, grads, vols)
    return _scatter_matrix(mesh, local)


def _weight_values(mesh, rule, weight):
    if np.isscalar(weight):
        return np.full((mesh.n_cells, rule.n_points), float(weight))
    if isinstance(weight, np.ndarray):
        if weight.shape != (mesh.n_cells, rule.n_points):
            raise ValueError("weight array must have shape (n_cells, n_points)")
        return weight
    pts = quadrature_points_physical(mesh, rule)
    return np.asarray(weight(pts.reshape(-1, mesh.dim))).reshape(
        mesh.n_cells, rule.n_points
    )


def assemble_weighted_mass(mesh: SimplexMesh, weight, degree: int) -> sp.csr_matrix:
    """M[i, j] = integral of weight * l_i * l_j by quadrature of given degree.

    weight may be a scalar, a vectorized point function, or a precomputed
    (n_cells, n_points) array matching the rule for this degree.
    """
    rule = quadrature_rule(mesh.dim, degree)
    W = _weight_values(mesh, rule, weight)
    vols = cell_volumes(mesh)
    jac = vols * math.factorial(mesh.dim)
    basis = np.einsum("q,qi,qj->qij", rule.weights, rule.points, rule.points)
    local = np.einsum("cq,qij->cij", W, basis.reshape(rule.n_points, -1).T.reshape(
        (mesh.dim + 1) ** 2, rule.n_points).T.reshape(rule.n_points, mesh.dim + 1, mesh.dim + 1))
    local = np.einsum("cq,qij,c->cij", W, basis, jac)
    return _scatter_matrix(mesh, local)


def assemble_load(mesh: SimplexMesh, f, degree: int) -> np.ndarray:
    """Load vector F[i] = integral of f * l_i by quadrature."""
    rule = quadrature_rule(mesh.dim, degree)
    pts = quadrature_points_physical(mesh, rule)
    fvals = np.asarray(f(pts.reshape(-1, mesh.dim))).reshape(mesh.n_cells, rule.n_points)
    return _scatter_vector(mesh, rule, fvals)


def _scatter_vector(mesh, rule, values):
    jac = cell_volumes(mesh) * math.factorial(mesh.dim)
    contrib = (values * rule.weights) @ rule.points * jac[:, None]
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.cells, contrib)
    return out


def assemble_nonlinear_term(
    mesh: SimplexMesh, nonlinearity: Nonlinearity, u_h: FeFunction, degree: int
) -> np.ndarray:
    """N[i] = integral of b(u_h) * l_i by quadrature.

    Warns when degree < n + 1, the exactness needed for a degree-n polynomial
    b composed with a P1 field against a P1 test function.
    """
    if degree < nonlinearity.growth_order + 1:
        warnings.warn(
            f"quadrature degree {degree} is below growth_order + 1 = "
            f"{nonlinearity.growth_order + 1}; the semilinear term is inexact",
            QuadratureDegreeWarning,
            stacklevel=2,
        )
    rule = quadrature_rule(mesh.dim, degree)
    uvals = fe_values_at_quadrature(u_h, rule)
    return _scatter_vector(mesh, rule, np.asarray(nonlinearity.value(uvals)))


def interpolate(mesh: SimplexMesh, u) -> FeFunction:
    """Nodal interpolant: coefficients are vertex values of u."""
    return FeFunction(mesh, np.asarray(u(mesh.vertices), dtype=np.float64))


def apply_dirichlet(A: sp.csr_matrix, rhs: np.ndarray, mesh: SimplexMesh, g):
    """Eliminate Dirichlet rows/columns symmetrically.

    Boundary rows become identity rows with rhs = g(vertex); boundary column
    contributions move to the interior right-hand side, so the interior block
    stays symmetric positive definite.
    """
    bnd = mesh.boundary_vertex
    gvals = np.zeros(mesh.n_vertices)
    gvals[bnd] = np.asarray(g(mesh.vertices[bnd]))
    interior = (~bnd).astype(np.float64)
    d_int = sp.diags(interior)
    a_out = (d_int @ A @ d_int + sp.diags(bnd.astype(np.float64))).tocsr()
    a_out.sum_duplicates()
    a_out.sort_indices()
    rhs_out = interior * (rhs - A @ gvals) + gvals * bnd
    return a_out, rhs_out


def validate_problem(spec: ProblemSpec, mesh: SimplexMesh) -> None:
    """Cross-checks that need a mesh: dimensions and boundary-trace match."""
    if spec.dim != mesh.dim:
        raise ValueError("problem and mesh dimensions differ")
    if spec.exact_solution is not None:
        pts = mesh.vertices[mesh.boundary_vertex]
        gap = np.max(np.abs(spec.dirichlet(pts) - spec.exact_solution[0](pts)))
        if gap > 1e-12:
            raise ValueError(
                f"dirichlet data differs from the exact boundary trace by {gap:.3e}"
            )


def residual_quadrature_degree(dim: int, growth_order: int) -> int:
    """Exact degree for the semilinear residual, clamped to the shipped maximum."""
    return min(growth_order + 1, MAX_DEGREE[dim])
