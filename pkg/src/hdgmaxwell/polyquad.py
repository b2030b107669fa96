"""Polynomial bases and quadrature on reference simplices.

Reference domains:

* ``seg``: the interval [0, 1]
* ``tri``: {x, y >= 0, x + y <= 1}
* ``tet``: {x, y, z >= 0, x + y + z <= 1}

Quadrature rules are collapsed-coordinate (Stroud conical) products of
Gauss-Legendre and Gauss-Jacobi rules, so every node is strictly interior
and every weight is positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

DOMAINS = ("seg", "tri", "tet")
DIMENSION = {"seg": 1, "tri": 2, "tet": 3}
MEASURE = {"seg": 1.0, "tri": 0.5, "tet": 1.0 / 6.0}
MAX_QUADRATURE_DEGREE = 40


def _check_domain(domain: str) -> None:
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")


def poly_dim(domain: str, k: int) -> int:
    """Dimension of the full polynomial space of degree ``k``."""
    _check_domain(domain)
    if k < 0:
        return 0
    d = DIMENSION[domain]
    return math.comb(k + d, d)


@dataclass(frozen=True)
class QuadratureRule:
    domain: str
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


def _gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _jacobi01(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    # weight (1 - v)^alpha on [0, 1]
    t, w = roots_jacobi(n, alpha, 0)
    return 0.5 * (t + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def make_quadrature(domain: str, degree: int) -> QuadratureRule:
    """Quadrature rule on the reference ``domain`` exact for total degree ``degree``."""
    _check_domain(domain)
    if degree < 0:
        raise ValueError("quadrature degree must be non-negative")
    if degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"quadrature degree {degree} exceeds the supported maximum "
            f"{MAX_QUADRATURE_DEGREE}"
        )
    n = degree // 2 + 1
    if domain == "seg":
        x, w = _gauss01(n)
        pts = x[:, None]
    elif domain == "tri":
        a, wa = _gauss01(n)
        b, wb = _jacobi01(n, 1)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.stack([A * (1.0 - B), B], axis=-1).reshape(-1, 2)
        w = np.outer(wa, wb).ravel()
    else:
        a, wa = _gauss01(n)
        b, wb = _jacobi01(n, 1)
        c, wc = _jacobi01(n, 2)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        pts = np.stack(
            [A * (1.0 - B) * (1.0 - C), B * (1.0 - C), C], axis=-1
        ).reshape(-1, 3)
        w = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(domain, degree, pts, w)


def monomial_exponents(dim: int, k: int) -> np.ndarray:
    """Exponent tuples of all monomials of total degree <= k, graded order."""
    exps = [
        e
        for deg in range(k + 1)
        for e in sorted(
            (e for e in product(range(deg + 1), repeat=dim) if sum(e) == deg),
            reverse=True,
        )
    ]
    return np.array(exps, dtype=int).reshape(-1, dim)


def _monomials(points: np.ndarray, exps: np.ndarray, center: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=float) - center
    out = np.ones(x.shape[:-1] + (len(exps),))
    for d in range(exps.shape[1]):
        out = out * x[..., d : d + 1] ** exps[:, d]
    return out


def _monomial_gradients(
    points: np.ndarray, exps: np.ndarray, center: np.ndarray
) -> np.ndarray:
    x = np.asarray(points, dtype=float) - center
    dim = exps.shape[1]
    grads = np.empty(x.shape[:-1] + (len(exps), dim))
    for c in range(dim):
        g = np.ones(x.shape[:-1] + (len(exps),))
        for d in range(dim):
            e = exps[:, d]
            if d == c:
                g = g * e * x[..., d : d + 1] ** np.maximum(e - 1, 0)
            else:
                g = g * x[..., d : d + 1] ** e
        grads[..., c] = g
    return grads


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal polynomial basis on a reference simplex.

    Basis functions are centroid-centred monomials orthonormalized against
    the reference measure, so the reference mass matrix is the identity.
    """

    domain: str
    degree: int
    exponents: np.ndarray = field(repr=False)
    center: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def values(self, points) -> np.ndarray:
        """Basis values, shape ``points.shape[:-1] + (dim,)``."""
        return _monomials(points, self.exponents, self.center) @ self.coeffs

    def gradients(self, points) -> np.ndarray:
        """Reference gradients, shape ``points.shape[:-1] + (dim, d)``."""
        g = _monomial_gradients(points, self.exponents, self.center)
        return np.einsum("...md,mn->...nd", g, self.coeffs)


@lru_cache(maxsize=None)
def make_basis(domain: str, k: int) -> BasisSet:
    _check_domain(domain)
    if k < 0:
        raise ValueError("basis degree must be non-negative")
    dim = DIMENSION[domain]
    exps = monomial_exponents(dim, k)
    center = np.full(dim, 1.0 / (dim + 1))
    quad = make_quadrature(domain, 2 * k + 2)
    coeffs = np.eye(len(exps))
    # two Cholesky passes: the second mops up round-off from the first
    for _ in range(2):
        V = _monomials(quad.points, exps, center) @ coeffs
        G = V.T @ (quad.weights[:, None] * V)
        L = np.linalg.cholesky(G)
        coeffs = coeffs @ np.linalg.inv(L).T
    coeffs.setflags(write=False)
    return BasisSet(domain, k, exps, center, coeffs)


@dataclass(frozen=True)
class DkFaceSpace:
    """The in-plane space [P_{k-1}]^2 + x P*_{k-1} on a face (2D coordinates)."""

    degree: int
    _vector_exps: np.ndarray = field(repr=False)
    _homog_exps: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 * len(self._vector_exps) + len(self._homog_exps)

    def values(self, points) -> np.ndarray:
        """Vector values, shape ``points.shape[:-1] + (dim, 2)``."""
        x = np.asarray(points, dtype=float)
        origin = np.zeros(2)
        m = _monomials(x, self._vector_exps, origin)
        h = _monomials(x, self._homog_exps, origin)
        zero = np.zeros_like(m)
        comps = [
            np.stack([m, zero], axis=-1),
            np.stack([zero, m], axis=-1),
            h[..., None] * x[..., None, :],
        ]
        return np.concatenate(comps, axis=-2)


@lru_cache(maxsize=None)
def make_dk_face_space(k: int) -> DkFaceSpace:
    if k < 1:
        raise ValueError("D_k is defined for k >= 1")
    exps = monomial_exponents(2, k - 1)
    homog = exps[exps.sum(axis=1) == k - 1]
    space = DkFaceSpace(k, exps, homog)
    expected = k * (k + 2)
    if space.dim != expected:
        raise AssertionError(f"D_{k} dimension {space.dim} != {expected}")
    return space


DEFAULT_GRADING_LEVELS = 40


def graded_segment_points(degree: int, levels: int, singular_end: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [0, 1] with panels shrinking by 1/2 toward ``singular_end``."""
    x, w = _gauss01(degree // 2 + 1)
    edges = np.concatenate([[0.0], 0.5 ** np.arange(levels, -1, -1)])
    a, b = edges[:-1], edges[1:]
    pts = (a[:, None] + (b - a)[:, None] * x).ravel()
    wts = ((b - a)[:, None] * w).ravel()
    if singular_end == 1:
        pts = 1.0 - pts
    return pts, wts


_REF_VERTS = {
    "tri": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "tet": np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
}


@lru_cache(maxsize=None)
def make_graded_quadrature(
    domain: str,
    degree: int,
    singular: tuple[int, ...],
    levels: int = DEFAULT_GRADING_LEVELS,
) -> QuadratureRule:
    """Quadrature for integrands singular at a reference vertex or edge.

    ``singular`` lists the local vertex indices of the singular entity: one
    index for a vertex singularity, two for an edge singularity. Integrable
    algebraic singularities are resolved by geometric grading (ratio 1/2,
    ``levels`` panels, Gauss of ``degree`` per panel) in the collapsed
    coordinate measuring distance to the singular entity. Polynomials of
    total degree <= ``degree`` are still integrated exactly.
    """
    _check_domain(domain)
    singular = tuple(sorted(singular))
    if domain == "seg":
        if len(singular) != 1:
            raise ValueError("segment singularities are vertex singularities")
        s, w = graded_segment_points(degree, levels, singular[0])
        return QuadratureRule("seg", degree, s[:, None], w)

    R = _REF_VERTS[domain]
    nv = len(R)
    if domain == "tri":
        if len(singular) == 1:
            apex, grade_end = singular[0], 0
        elif len(singular) == 2:
            apex, grade_end = (set(range(3)) - set(singular)).pop(), 1
        else:
            raise ValueError("bad singular entity for a triangle")
        j, l = [i for i in range(3) if i != apex]
        s, ws = graded_segment_points(degree + 1, levels, grade_end)
        e, we = _gauss01(degree // 2 + 1)
        S, E = np.meshgrid(s, e, indexing="ij")
        direction = (1.0 - E)[..., None] * (R[j] - R[apex]) + E[..., None] * (R[l] - R[apex])
        pts = R[apex] + S[..., None] * direction
        w = np.outer(ws, we) * S  # |det| of the reference edge pair is 1
        return QuadratureRule("tri", degree, pts.reshape(-1, 2), w.ravel())

    if len(singular) == 1:
        apex = singular[0]
        a, b, c = [i for i in range(nv) if i != apex]
        s, ws = graded_segment_points(degree + 2, levels, 0)
        tri = make_quadrature("tri", degree)
        y = R[a] + tri.points[:, :1] * (R[b] - R[a]) + tri.points[:, 1:] * (R[c] - R[a])
        pts = R[apex] + s[:, None, None] * (y[None] - R[apex])
        w = np.outer(ws * s**2, tri.weights)
        return QuadratureRule("tet", degree, pts.reshape(-1, 3), w.ravel())
    if len(singular) != 2:
        raise ValueError("bad singular entity for a tetrahedron")
    i, j = singular
    a, b = [v for v in range(nv) if v not in singular]
    s, ws = graded_segment_points(degree + 2, levels, 1)
    g, wg = _gauss01(degree // 2 + 1)
    S, A, B = np.meshgrid(s, g, g, indexing="ij")
    near = (1.0 - A)[..., None] * R[i] + A[..., None] * R[j]
    far = (1.0 - B)[..., None] * R[a] + B[..., None] * R[b]
    pts = (1.0 - S)[..., None] * far + S[..., None] * near
    det = abs(np.linalg.det(np.stack([R[i] - R[a], R[j] - R[i], R[b] - R[a]], axis=-1)))
    w = np.einsum("i,j,k->ijk", ws, wg, wg) * S * (1.0 - S) * det
    return QuadratureRule("tet", degree, pts.reshape(-1, 3), w.ravel())
