"""Element and face L2 projections and the boundary-face H(div) projection.

Tangential face fields are stored as coefficients ``c[a, j]`` of
``sum_j c[a, j] * psi_j * t_a`` where ``psi_j`` is the orthonormal
reference-triangle basis pulled back through the face's vertex ordering and
``(t1, t2)`` is the face frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .mesh import FACE_EDGES, MeshTopology, edge_frames
from .polyquad import make_basis, make_dk_face_space, make_quadrature

_REF_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class FaceTangentialField:
    face: int
    degree: int
    coeffs: np.ndarray  # (2, dim P_k(F))

    def evaluate(self, mesh: MeshTopology, ref_points) -> np.ndarray:
        psi = make_basis("tri", self.degree).values(ref_points)
        frame = np.stack([mesh.face_t1[self.face], mesh.face_t2[self.face]])
        return np.einsum("qj,aj,ai->qi", psi, self.coeffs, frame)


def face_map(mesh: MeshTopology, face: int, ref_points) -> np.ndarray:
    """Physical points of reference-triangle points on ``face``."""
    P = mesh.vertices[mesh.faces[face]]
    ref = np.asarray(ref_points, dtype=float)
    return P[0] + ref[..., :1] * (P[1] - P[0]) + ref[..., 1:2] * (P[2] - P[0])


def element_map(mesh: MeshTopology, elem: int, ref_points) -> np.ndarray:
    X = mesh.vertices[mesh.tets[elem]]
    return X[0] + np.asarray(ref_points, dtype=float) @ mesh.jacobians[elem].T


def l2_project_element(f, mesh: MeshTopology, elem: int, j: int, quad_degree=None) -> np.ndarray:
    """Coefficients of the L2 projection of ``f`` onto P_j(T), shape ``(dim, ncomp)``.

    ``f`` maps points ``(..., 3)`` to values ``(...)`` or ``(..., ncomp)``.
    """
    quad = make_quadrature("tet", quad_degree if quad_degree is not None else 2 * j + 2)
    phi = make_basis("tet", j).values(quad.points)
    vals = np.asarray(f(element_map(mesh, elem, quad.points)), dtype=float)
    vals = vals.reshape(len(quad), -1)
    # reference basis is orthonormal, so the physical mass matrix is |det J| * I
    return phi.T @ (quad.weights[:, None] * vals)


def l2_project_face(f, mesh: MeshTopology, face: int, j: int, quad=None) -> np.ndarray:
    """Coefficients of the L2 projection of ``f`` onto P_j(F), shape ``(dim, ncomp)``."""
    if quad is None:
        quad = make_quadrature("tri", 2 * j + 2)
    psi = make_basis("tri", j).values(quad.points)
    vals = np.asarray(f(face_map(mesh, face, quad.points)), dtype=float)
    vals = vals.reshape(len(quad), -1)
    return psi.T @ (quad.weights[:, None] * vals)


def l2_project_face_tangential(f, mesh: MeshTopology, face: int, k: int, quad=None) -> FaceTangentialField:
    """Componentwise face L2 projection of a tangential field, in the face frame."""
    c = l2_project_face(f, mesh, face, k, quad)  # (M, 3)
    frame = np.stack([mesh.face_t1[face], mesh.face_t2[face]])
    return FaceTangentialField(face, k, frame @ c.T)


def _face_local_2d(mesh: MeshTopology, face: int, x: np.ndarray) -> np.ndarray:
    P = mesh.vertices[mesh.faces[face]]
    centroid = P.mean(axis=0)
    frame = np.stack([mesh.face_t1[face], mesh.face_t2[face]])
    return (x - centroid) @ frame.T / mesh.h_F[face]


def hdiv_system_size(k: int) -> int:
    return (k + 1) * (k + 2)


def _edge_rule(degree: int):
    return make_quadrature("seg", degree)


def hdiv_moments(
    w,
    mesh: MeshTopology,
    face: int,
    k: int,
    edge_rules=None,
    face_rule=None,
    zero_edges=(),
) -> np.ndarray:
    """Edge-normal and interior moments of a tangential field ``w`` on ``face``.

    Ordering: for each local edge (``FACE_EDGES``) the moments of ``w . n_FE``
    against the orthonormal P_k(E) basis, then (k >= 2) the moments of
    ``w`` against ``n_F x d`` for ``d`` in the in-plane D_{k-1}(F) basis.

    ``w`` maps physical points ``(..., 3)`` to vectors ``(..., 3)``.
    ``edge_rules`` optionally gives a segment rule per local edge and
    ``face_rule`` a triangle rule; defaults are Gauss rules of degree 2k+4.
    Edges listed in ``zero_edges`` get exactly zero moments.
    """
    P = mesh.vertices[mesh.faces[face]]
    _, nfe = edge_frames(mesh, [face])
    nfe = nfe[0]
    seg_basis = make_basis("seg", k)
    out = []
    for e, (a, b) in enumerate(FACE_EDGES):
        if e in zero_edges:
            out.append(np.zeros(k + 1))
            continue
        rule = edge_rules[e] if edge_rules is not None else _edge_rule(2 * k + 4)
        s = rule.points[:, 0]
        x = P[a] + s[:, None] * (P[b] - P[a])
        length = np.linalg.norm(P[b] - P[a])
        q = seg_basis.values(rule.points)
        wn = np.asarray(w(x)) @ nfe[e]
        out.append(length * (q.T @ (rule.weights * wn)))
    if k >= 2:
        rule = face_rule if face_rule is not None else make_quadrature("tri", 2 * k + 4)
        x = face_map(mesh, face, rule.points)
        d = _rotated_dk_tests(mesh, face, k, x)  # (q, nd, 3)
        area2 = 2.0 * mesh.face_areas[face]
        wx = np.asarray(w(x))
        out.append(area2 * np.einsum("q,qni,qi->n", rule.weights, d, wx))
    return np.concatenate(out)


def _rotated_dk_tests(mesh: MeshTopology, face: int, k: int, x: np.ndarray) -> np.ndarray:
    """``n_F x d`` for the D_{k-1}(F) basis at physical points ``x``."""
    space = make_dk_face_space(k - 1)
    d2 = space.values(_face_local_2d(mesh, face, x))  # (q, nd, 2)
    t1, t2 = mesh.face_t1[face], mesh.face_t2[face]
    # n x (d1 t1 + d2 t2) = d1 t2 - d2 t1
    return d2[..., :1] * t2 - d2[..., 1:] * t1


def hdiv_moment_matrix(mesh: MeshTopology, face: int, k: int) -> np.ndarray:
    """Square matrix mapping tangential coefficients to their H(div) moments."""
    M = make_basis("tri", k).dim
    frame = (mesh.face_t1[face], mesh.face_t2[face])
    P = mesh.vertices[mesh.faces[face]]
    T = np.column_stack([P[1] - P[0], P[2] - P[0]])
    # (T^T T)^{-1} T^T maps a physical in-plane offset back to reference coordinates
    pinv = np.linalg.solve(T.T @ T, T.T)
    basis = make_basis("tri", k)
    cols = []
    for a in range(2):
        for j in range(M):
            def field(x, a=a, j=j):
                ref = (np.asarray(x) - P[0]) @ pinv.T
                return basis.values(ref)[..., j, None] * frame[a]
            cols.append(hdiv_moments(field, mesh, face, k))
    A = np.column_stack(cols)
    n = hdiv_system_size(k)
    if A.shape != (n, n):
        raise AssertionError(f"H(div) moment system is {A.shape}, expected {(n, n)}")
    return A


def hdiv_project_boundary_face(
    w, mesh: MeshTopology, face: int, k: int, moments=None
) -> FaceTangentialField:
    """Project a tangential field onto tangential [P_k(F)]^2 by matching H(div) moments.

    Pass precomputed ``moments`` (same ordering as :func:`hdiv_moments`) to
    skip the default Gauss integration of ``w``.
    """
    if k < 1:
        raise ValueError("H(div) face projection needs k >= 1")
    A = hdiv_moment_matrix(mesh, face, k)
    if moments is None:
        moments = hdiv_moments(w, mesh, face, k)
    lu, piv = scipy.linalg.lu_factor(A)
    if np.min(np.abs(np.diag(lu))) <= 1e-13 * np.max(np.abs(np.diag(lu))):
        raise np.linalg.LinAlgError(f"singular H(div) moment system on face {face}")
    c = scipy.linalg.lu_solve((lu, piv), moments)
    return FaceTangentialField(face, k, c.reshape(2, -1))


def trace_from_rotated_data(w: FaceTangentialField) -> FaceTangentialField:
    """Coefficients of ``u_hat = w x n_F``, so that ``n_F x u_hat = w``."""
    c1, c2 = w.coeffs
    # t1 x n = -t2, t2 x n = t1
    return FaceTangentialField(w.face, w.degree, np.stack([c2, -c1]))
