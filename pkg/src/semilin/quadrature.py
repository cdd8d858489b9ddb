"""Positive-weight symmetric quadrature rules on reference simplices.

Degrees 1 and 2 use the classical compact rules.  Higher degrees collapse a
Gauss-Legendre x Gauss-Jacobi tensor rule onto the simplex (Duffy map) and
symmetrize it over all barycentric permutations, which keeps weights positive
and exactness provable for any requested degree.  Points are stored as
barycentric coordinates; weights sum to the reference volume 1/d!.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["QuadratureRule", "quadrature_rule", "reference_monomial_integral", "MAX_DEGREE"]

MAX_DEGREE = {2: 12, 3: 8}


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    points: np.ndarray   # (n_points, dim + 1) barycentric coordinates
    weights: np.ndarray  # (n_points,), sum = 1/dim!
    exactness_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_points(self) -> int:
        return len(self.weights)


def reference_monomial_integral(dim, exponents) -> float:
    """Exact integral of prod(lambda_i^a_i) over the reference simplex.

    Equals prod(a_i!) / (sum(a_i) + d)! with the barycentric exponent of the
    0th coordinate included implicitly as 0 when fewer than d+1 exponents are
    given (i.e. plain x/y/z monomials).
    """
    total = sum(exponents)
    num = 1.0
    for a in exponents:
        num *= math.factorial(a)
    return num / math.factorial(total + dim)


def _gauss_legendre_01(q):
    t, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (t + 1.0), 0.5 * w


def _gauss_jacobi_01(q, alpha):
    # nodes/weights for int_0^1 f(x) (1-x)^alpha dx
    t, w = roots_jacobi(q, alpha, 0.0)
    return 0.5 * (t + 1.0), w / 2.0 ** (alpha + 1)


def _collapsed_rule(dim, degree):
    q = (degree + 2) // 2  # 2q - 1 >= degree
    xi, wx = _gauss_legendre_01(q)
    eta, we = _gauss_jacobi_01(q, 1.0)
    if dim == 2:
        x = np.outer(xi, 1.0 - eta).ravel()
        y = np.tile(eta, q)
        w = np.outer(wx, we).ravel()
        bary = np.column_stack([1.0 - x - y, x, y])
    else:
        zeta, wz = _gauss_jacobi_01(q, 2.0)
        xi3, eta3, zeta3 = (a.ravel() for a in np.meshgrid(xi, eta, zeta, indexing="ij"))
        w = (wx[:, None, None] * we[None, :, None] * wz[None, None, :]).ravel()
        x = xi3 * (1.0 - eta3) * (1.0 - zeta3)
        y = eta3 * (1.0 - zeta3)
        z = zeta3
        bary = np.column_stack([1.0 - x - y - z, x, y, z])
    return bary, w, 2 * q - 1


def _symmetrize(bary, weights):
    perms = list(permutations(range(bary.shape[1])))
    pts = np.concatenate([bary[:, p] for p in perms])
    w = np.tile(weights / len(perms), len(perms))
    return pts, w


_LOW_DEGREE = {
    (2, 1): (np.array([[1, 1, 1]]) / 3.0, np.array([0.5]), 1),
    (3, 1): (np.array([[1, 1, 1, 1]]) / 4.0, np.array([1.0 / 6.0]), 1),
}


def _three_point_triangle():
    a, b = 2.0 / 3.0, 1.0 / 6.0
    pts = np.array([[a, b, b], [b, a, b], [b, b, a]])
    return pts, np.full(3, 1.0 / 6.0), 2


def _four_point_tet():
    a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    b = (5.0 - math.sqrt(5.0)) / 20.0
    pts = np.full((4, 4), b)
    np.fill_diagonal(pts, a)
    return pts, np.full(4, 1.0 / 24.0), 2


@lru_cache(maxsize=None)
def quadrature_rule(dim: int, degree: int) -> QuadratureRule:
    """Rule on the reference simplex exact for polynomials of the given degree."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if degree > MAX_DEGREE[dim]:
        raise ValueError(
            f"degree {degree} exceeds the maximum shipped degree "
            f"{MAX_DEGREE[dim]} for dim {dim}"
        )
    if (dim, degree) in _LOW_DEGREE:
        pts, w, exact = _LOW_DEGREE[(dim, degree)]
    elif degree == 2:
        pts, w, exact = _three_point_triangle() if dim == 2 else _four_point_tet()
    else:
        bary, w0, exact = _collapsed_rule(dim, degree)
        pts, w = _symmetrize(bary, w0)
    return QuadratureRule(dim, np.ascontiguousarray(pts, dtype=np.float64),
                          np.ascontiguousarray(w, dtype=np.float64), exact)
