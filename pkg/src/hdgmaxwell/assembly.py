"""Element matrices, static condensation and the global trace system.

Interior unknowns per element are ordered ``[r (3 x dim P_m), u (3 x dim P_k),
p (dim P_k)]``, component-major. Trace unknowns per face are
``[u_hat (2 x dim P_k(F)), p_hat (dim P_k(F))]`` with ``u_hat`` in the face
frame ``(t1, t2)``. Each element meets its four faces in local order
(face ``i`` opposite vertex ``i``).

The element blocks realize the symmetric form

    (r, s) - (u, curl s) - <n x u_hat, s> - (v, curl r) - <n x v_hat, r>
    + (div v, p) - <n . v, p_hat> - <h^-1 n x (u - u_hat), n x (v - v_hat)>
    + (div u, q) - <n . u, q_hat> + <h^alpha (p - p_hat), q - q_hat>

with load ``-(f, v) + (g, q)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .manufactured import ManufacturedCase, boundary_data_moments
from .mesh import MeshTopology
from .polyquad import DEFAULT_GRADING_LEVELS, make_basis, make_quadrature, poly_dim
from .projections import (
    FaceTangentialField,
    hdiv_moment_matrix,
    l2_project_face,
    trace_from_rotated_data,
)

logger = logging.getLogger(__name__)

TRACE_PROJECTIONS = ("l2", "hdiv")

# Levi-Civita symbol
EPS = np.zeros((3, 3, 3))
EPS[0, 1, 2] = EPS[1, 2, 0] = EPS[2, 0, 1] = 1.0
EPS[0, 2, 1] = EPS[2, 1, 0] = EPS[1, 0, 2] = -1.0


@dataclass(frozen=True)
class DiscreteSpec:
    k: int = 1
    m: int = 0
    alpha: int = -1
    trace_projection: str = "l2"
    quad_inc: int = 0
    grading_levels: int = DEFAULT_GRADING_LEVELS

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k!r}")
        if self.m not in (self.k - 1, self.k):
            raise ValueError(f"m must be k-1 or k (k={self.k}), got {self.m!r}")
        if self.alpha not in (-1, 1):
            raise ValueError(f"alpha must be -1 or 1, got {self.alpha!r}")
        if self.trace_projection not in TRACE_PROJECTIONS:
            raise ValueError(
                f"trace_projection must be one of {TRACE_PROJECTIONS}, got {self.trace_projection!r}"
            )
        if self.quad_inc < 0:
            raise ValueError("quad_inc must be non-negative")

    @property
    def quad_degree(self) -> int:
        return 2 * self.k + 2 + self.quad_inc


@dataclass(frozen=True)
class Layout:
    k: int
    m: int

    @property
    def n_m(self) -> int:
        return poly_dim("tet", self.m)

    @property
    def n_k(self) -> int:
        return poly_dim("tet", self.k)

    @property
    def n_face(self) -> int:
        return poly_dim("tri", self.k)

    @property
    def n_r(self) -> int:
        return 3 * self.n_m

    @property
    def n_u(self) -> int:
        return 3 * self.n_k

    @property
    def n_p(self) -> int:
        return self.n_k

    @property
    def n_interior(self) -> int:
        return self.n_r + self.n_u + self.n_p

    @property
    def n_uhat(self) -> int:
        return 2 * self.n_face

    @property
    def n_phat(self) -> int:
        return self.n_face

    @property
    def face_dofs(self) -> int:
        return 3 * self.n_face

    @property
    def n_trace(self) -> int:
        return 4 * self.face_dofs

    @property
    def r_slice(self) -> slice:
        return slice(0, self.n_r)

    @property
    def u_slice(self) -> slice:
        return slice(self.n_r, self.n_r + self.n_u)

    @property
    def p_slice(self) -> slice:
        return slice(self.n_r + self.n_u, self.n_interior)


@dataclass
class ElementMatrices:
    """Dense local blocks for a batch of elements (leading axis = element)."""

    layout: Layout
    elements: np.ndarray
    K_II: np.ndarray
    K_IG: np.ndarray
    K_GG: np.ndarray
    b_I: np.ndarray
    b_G: np.ndarray

    def full(self) -> np.ndarray:
        top = np.concatenate([self.K_II, self.K_IG], axis=2)
        bottom = np.concatenate([np.swapaxes(self.K_IG, 1, 2), self.K_GG], axis=2)
        return np.concatenate([top, bottom], axis=1)


@dataclass
class CondensedElements:
    layout: Layout
    elements: np.ndarray
    S: np.ndarray  # (ne, nG, nG)
    g: np.ndarray  # (ne, nG)
    # interior recovery x_I = z - Z @ y_G
    Z: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)


@dataclass
class TraceSystem:
    """Condensed global system over interior-face trace DOFs."""

    A: sp.csr_matrix
    rhs: np.ndarray
    free_dofs: np.ndarray
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray
    n_dofs_total: int
    layout: Layout
    A_full: sp.csr_matrix = field(repr=False, default=None)
    rhs_full: np.ndarray = field(repr=False, default=None)

    def dof_index(self, face: int, local: int) -> int:
        return face * self.layout.face_dofs + local

    def expand(self, y_free: np.ndarray) -> np.ndarray:
        y = np.zeros(self.n_dofs_total)
        y[self.free_dofs] = y_free
        y[self.fixed_dofs] = self.fixed_values
        return y


@dataclass
class FieldSolution:
    layout: Layout
    r: np.ndarray  # (ne, 3, n_m)
    u: np.ndarray  # (ne, 3, n_k)
    p: np.ndarray  # (ne, n_k)
    uhat: np.ndarray  # (nf, 2, n_face)
    phat: np.ndarray  # (nf, n_face)

    @classmethod
    def from_vectors(cls, layout: Layout, x_I: np.ndarray, y: np.ndarray) -> "FieldSolution":
        ne = len(x_I)
        L = layout
        return cls(
            layout,
            x_I[:, L.r_slice].reshape(ne, 3, L.n_m),
            x_I[:, L.u_slice].reshape(ne, 3, L.n_k),
            x_I[:, L.p_slice].copy(),
            y.reshape(-1, 3, L.n_face)[:, :2, :].copy(),
            y.reshape(-1, 3, L.n_face)[:, 2, :].copy(),
        )

    def interior_vector(self) -> np.ndarray:
        ne = len(self.p)
        return np.concatenate(
            [self.r.reshape(ne, -1), self.u.reshape(ne, -1), self.p], axis=1
        )

    def trace_vector(self) -> np.ndarray:
        nf = len(self.phat)
        return np.concatenate([self.uhat, self.phat[:, None, :]], axis=1).reshape(nf * 3 * self.layout.n_face)


# ---------------------------------------------------------------------------
# element geometry helpers


def element_face_points(mesh: MeshTopology, elements: np.ndarray, ref_points: np.ndarray):
    """Physical and element-reference coordinates of face quadrature points.

    Returns ``(x, xhat)`` with shape ``(ne, 4, nq, 3)``; the points follow
    each global face's own reference map.
    """
    faces = mesh.tet_faces[elements]  # (ne, 4)
    P = mesh.vertices[mesh.faces[faces]]  # (ne, 4, 3, 3)
    x = (
        P[:, :, None, 0]
        + ref_points[None, None, :, :1] * (P[:, :, None, 1] - P[:, :, None, 0])
        + ref_points[None, None, :, 1:2] * (P[:, :, None, 2] - P[:, :, None, 0])
    )
    v0 = mesh.vertices[mesh.tets[elements, 0]]
    Jinv = np.linalg.inv(mesh.jacobians[elements])
    xhat = np.einsum("eij,efqj->efqi", Jinv, x - v0[:, None, None, :])
    return x, xhat


def _physical_gradients(mesh, elements, grad_ref):
    Jinv = np.linalg.inv(mesh.jacobians[elements])
    # grad_phys[c] = sum_d Jinv[d, c] * grad_ref[d]
    return np.einsum("edc,qid->eqic", Jinv, grad_ref)


# ---------------------------------------------------------------------------
# element matrices


def local_element_matrices(
    mesh: MeshTopology,
    spec: DiscreteSpec,
    case: ManufacturedCase | None = None,
    elements=None,
) -> ElementMatrices:
    """Dense local blocks of the HDG form for ``elements`` (default: all)."""
    if elements is None:
        elements = np.arange(mesh.n_tets)
    elements = np.asarray(elements)
    ne = len(elements)
    L = Layout(spec.k, spec.m)
    Nm, Nk, M = L.n_m, L.n_k, L.n_face
    basis_k = make_basis("tet", spec.k)
    basis_m = make_basis("tet", spec.m)
    face_basis = make_basis("tri", spec.k)

    quad = make_quadrature("tet", spec.quad_degree)
    detJ = np.abs(np.linalg.det(mesh.jacobians[elements]))
    W = quad.weights[None, :] * detJ[:, None]  # (ne, nq)
    phi_k = basis_k.values(quad.points)  # (nq, Nk)
    phi_m = basis_m.values(quad.points)
    dphi_k = _physical_gradients(mesh, elements, basis_k.gradients(quad.points))
    dphi_m = _physical_gradients(mesh, elements, basis_m.gradients(quad.points))

    K_II = np.zeros((ne, L.n_interior, L.n_interior))
    K_IG = np.zeros((ne, L.n_interior, L.n_trace))
    K_GG = np.zeros((ne, L.n_trace, L.n_trace))
    ro, uo, po = 0, L.n_r, L.n_r + L.n_u

    # (r, s): orthonormal reference basis -> |det J| * I
    K_II[:, ro : ro + L.n_r, ro : ro + L.n_r] = detJ[:, None, None] * np.eye(L.n_r)

    # -(u, curl s): s = psi_i e_b, u = phi_j e_a -> eps_{bac} (d_c psi_i, phi_j)
    CU = np.einsum("eq,eqic,qj->eijc", W, dphi_m, phi_k)
    curl_block = -np.einsum("bac,eijc->ebiaj", EPS, CU).reshape(ne, L.n_r, L.n_u)
    K_II[:, ro : ro + L.n_r, uo : uo + L.n_u] = curl_block
    K_II[:, uo : uo + L.n_u, ro : ro + L.n_r] = np.swapaxes(curl_block, 1, 2)

    # (div v, p): v = phi_j e_a
    DV = np.einsum("eq,eqja,ql->eajl", W, dphi_k, phi_k).reshape(ne, L.n_u, L.n_p)
    K_II[:, uo : uo + L.n_u, po:] = DV
    K_II[:, po:, uo : uo + L.n_u] = np.swapaxes(DV, 1, 2)

    # face terms
    fquad = make_quadrature("tri", spec.quad_degree)
    _, xhat = element_face_points(mesh, elements, fquad.points)
    fphi_k = basis_k.values(xhat)  # (ne, 4, nqf, Nk)
    fphi_m = basis_m.values(xhat)
    psi = face_basis.values(fquad.points)  # (nqf, M)
    faces = mesh.tet_faces[elements]
    sign = mesh.tet_face_sign[elements]
    area2 = 2.0 * mesh.face_areas[faces]  # (ne, 4)
    FW = fquad.weights[None, None, :] * area2[..., None]  # (ne, 4, nqf)
    nT = sign[..., None] * mesh.face_normal[faces]  # (ne, 4, 3)
    t1, t2 = mesh.face_t1[faces], mesh.face_t2[faces]
    tang = np.stack([t1, t2], axis=2)  # (ne, 4, 2, 3): t_a
    hF = mesh.h_F[faces]
    tau_u = 1.0 / hF
    tau_p = hF ** float(spec.alpha)

    Muu = np.einsum("efq,efqi,efqj->efij", FW, fphi_k, fphi_k)  # (ne,4,Nk,Nk)
    Mu_hat = np.einsum("efq,efqi,qj->efij", FW, fphi_k, psi)  # (ne,4,Nk,M)
    Mr_hat = np.einsum("efq,efqi,qj->efij", FW, fphi_m, psi)  # (ne,4,Nm,M)

    # -<h^-1 (u - u_hat)_t, (v - v_hat)_t>: uu part
    Pt = np.eye(3)[None, None] - np.einsum("efa,efb->efab", nT, nT)
    uu = -tau_u[..., None, None] * Pt  # (ne, 4, 3, 3)
    K_II[:, uo : uo + L.n_u, uo : uo + L.n_u] += np.einsum(
        "efba,efij->ebiaj", uu, Muu
    ).reshape(ne, L.n_u, L.n_u)
    # <h^alpha p, q>
    K_II[:, po:, po:] += np.einsum("ef,efij->eij", tau_p, Muu)

    n_cross_t = np.cross(nT[:, :, None, :], tang)  # (ne,4,2,3): n_T x t_a
    FD = L.face_dofs
    for f in range(4):
        g0 = f * FD
        uh = slice(g0, g0 + L.n_uhat)
        ph = slice(g0 + L.n_uhat, g0 + FD)
        # -<n x u_hat, s>
        K_IG[:, ro : ro + L.n_r, uh] = -np.einsum(
            "eab,eij->ebiaj", n_cross_t[:, f], Mr_hat[:, f]
        ).reshape(ne, L.n_r, L.n_uhat)
        # +<h^-1 u_hat, v_t>  (u_hat is tangential)
        K_IG[:, uo : uo + L.n_u, uh] = np.einsum(
            "e,eab,eij->ebiaj", tau_u[:, f], tang[:, f], Mu_hat[:, f]
        ).reshape(ne, L.n_u, L.n_uhat)
        # -<n . v, p_hat>
        K_IG[:, uo : uo + L.n_u, ph] = -np.einsum(
            "eb,eij->ebij", nT[:, f], Mu_hat[:, f]
        ).reshape(ne, L.n_u, L.n_phat)
        # -<h^alpha p_hat, q>
        K_IG[:, po:, ph] = -tau_p[:, f, None, None] * Mu_hat[:, f]
        # face mass of the orthonormal face basis is 2|F| * I
        K_GG[:, uh, uh] = -(tau_u[:, f] * area2[:, f])[:, None, None] * np.eye(L.n_uhat)
        K_GG[:, ph, ph] = (tau_p[:, f] * area2[:, f])[:, None, None] * np.eye(L.n_phat)

    b_I = np.zeros((ne, L.n_interior))
    if case is not None:
        x = mesh.vertices[mesh.tets[elements, 0]][:, None, :] + np.einsum(
            "eij,qj->eqi", mesh.jacobians[elements], quad.points
        )
        fval = case.f(x)  # (ne, nq, 3)
        gval = case.g(x)
        b_I[:, uo : uo + L.n_u] = -np.einsum("eq,eqb,qi->ebi", W, fval, phi_k).reshape(ne, L.n_u)
        b_I[:, po:] = np.einsum("eq,eq,qi->ei", W, gval, phi_k)
    b_G = np.zeros((ne, L.n_trace))
    return ElementMatrices(L, elements, K_II, K_IG, K_GG, b_I, b_G)


class SingularElementError(np.linalg.LinAlgError):
    def __init__(self, element: int):
        super().__init__(f"interior block K_II is singular on element {element}")
        self.element = element


def condense(em: ElementMatrices) -> CondensedElements:
    """Eliminate interior unknowns element by element (local Schur complements)."""
    rhs = np.concatenate([em.K_IG, em.b_I[..., None]], axis=2)
    try:
        sol = np.linalg.solve(em.K_II, rhs)
    except np.linalg.LinAlgError:
        for i, K in enumerate(em.K_II):
            try:
                np.linalg.solve(K, rhs[i])
            except np.linalg.LinAlgError:
                raise SingularElementError(int(em.elements[i])) from None
        raise
    bad = ~np.isfinite(sol).all(axis=(1, 2))
    if bad.any():
        raise SingularElementError(int(em.elements[np.flatnonzero(bad)[0]]))
    Z, z = sol[..., :-1], sol[..., -1]
    KGI = np.swapaxes(em.K_IG, 1, 2)
    S = em.K_GG - KGI @ Z
    g = em.b_G - np.einsum("egi,ei->eg", KGI, z)
    return CondensedElements(em.layout, em.elements, S, g, Z, z)


def element_trace_dofs(mesh: MeshTopology, layout: Layout, elements=None) -> np.ndarray:
    """Global trace DOF indices per element, shape ``(ne, 4 * face_dofs)``."""
    if elements is None:
        elements = np.arange(mesh.n_tets)
    faces = mesh.tet_faces[elements]
    FD = layout.face_dofs
    return (faces[:, :, None] * FD + np.arange(FD)).reshape(len(faces), -1)


# ---------------------------------------------------------------------------
# boundary data


def boundary_trace_values(
    mesh: MeshTopology, spec: DiscreteSpec, case: ManufacturedCase
) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet trace DOF indices and values on all boundary faces.

    ``u_hat`` is fixed so that ``n x u_hat`` equals the chosen projection of
    ``g_T``; ``p_hat`` is the face L2 projection of ``p`` (zero for the
    benchmark cases, whose multiplier vanishes on the boundary).
    """
    L = Layout(spec.k, spec.m)
    bfaces = mesh.boundary_faces
    FD = L.face_dofs
    values = np.zeros((len(bfaces), FD))
    deg = 2 * spec.k + 4 + spec.quad_inc
    for i, F in enumerate(bfaces):
        area2 = 2.0 * mesh.face_areas[F]
        if spec.trace_projection == "l2":
            c = boundary_data_moments(
                case, mesh, F, spec.k, "l2", spec.grading_levels, deg
            ) / area2
            frame = np.stack([mesh.face_t1[F], mesh.face_t2[F]])
            w = FaceTangentialField(F, spec.k, frame @ c.T)
        else:
            mom = boundary_data_moments(case, mesh, F, spec.k, "hdiv", spec.grading_levels, deg)
            A = hdiv_moment_matrix(mesh, F, spec.k)
            w = FaceTangentialField(F, spec.k, np.linalg.solve(A, mom).reshape(2, -1))
        uhat = trace_from_rotated_data(w)
        values[i, : L.n_uhat] = uhat.coeffs.ravel()
        values[i, L.n_uhat :] = l2_project_face(case.p, mesh, F, spec.k)[:, 0]
    dofs = (bfaces[:, None] * FD + np.arange(FD)).ravel()
    return dofs, values.ravel()


# ---------------------------------------------------------------------------
# global assembly


def _scatter_matrix(blocks: np.ndarray, dofs: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    A = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble_trace_system(
    mesh: MeshTopology,
    spec: DiscreteSpec,
    case: ManufacturedCase,
    condensed: CondensedElements | None = None,
) -> tuple[TraceSystem, CondensedElements]:
    """Assemble the condensed global trace system and impose boundary data."""
    t0 = time.perf_counter()
    if condensed is None:
        condensed = condense(local_element_matrices(mesh, spec, case))
    L = condensed.layout
    n = mesh.n_faces * L.face_dofs
    dofs = element_trace_dofs(mesh, L, condensed.elements)
    A = _scatter_matrix(condensed.S, dofs, n)
    rhs = np.bincount(dofs.ravel(), weights=condensed.g.ravel(), minlength=n)
    logger.debug("assembled %d trace dofs in %.2fs", n, time.perf_counter() - t0)
    system = TraceSystem(
        A=A, rhs=rhs, free_dofs=np.arange(n), fixed_dofs=np.array([], dtype=int),
        fixed_values=np.array([]), n_dofs_total=n, layout=L, A_full=A, rhs_full=rhs,
    )
    return impose_boundary(system, mesh, spec, case), condensed


def impose_boundary(
    system: TraceSystem, mesh: MeshTopology, spec: DiscreteSpec, case: ManufacturedCase
) -> TraceSystem:
    """Eliminate boundary trace DOFs symmetrically, moving them to the RHS."""
    fixed, values = boundary_trace_values(mesh, spec, case)
    n = system.n_dofs_total
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    A = system.A_full
    A_ff = A[free][:, free].tocsr()
    A_fb = A[free][:, fixed]
    rhs = system.rhs_full[free] - A_fb @ values
    return TraceSystem(
        A=A_ff, rhs=rhs, free_dofs=free, fixed_dofs=fixed, fixed_values=values,
        n_dofs_total=n, layout=system.layout, A_full=system.A_full, rhs_full=system.rhs_full,
    )


def recover_interior(
    system: TraceSystem, y_free: np.ndarray, condensed: CondensedElements, mesh: MeshTopology
) -> FieldSolution:
    """Back-substitute ``x_I = K_II^-1 (b_I - K_IG y)`` on every element."""
    y = system.expand(y_free)
    dofs = element_trace_dofs(mesh, condensed.layout, condensed.elements)
    x_I = condensed.z - np.einsum("eig,eg->ei", condensed.Z, y[dofs])
    return FieldSolution.from_vectors(condensed.layout, x_I, y)


# ---------------------------------------------------------------------------
# uncondensed oracle


def assemble_full_system(
    mesh: MeshTopology, spec: DiscreteSpec, case: ManufacturedCase, em: ElementMatrices | None = None
):
    """Full (r, u, p, u_hat, p_hat) system with boundary traces eliminated.

    Returns ``(A, rhs, n_interior_total, free_trace, fixed_trace, fixed_values)``;
    unknown ordering is all element interiors first, then free trace DOFs.
    """
    if em is None:
        em = local_element_matrices(mesh, spec, case)
    L = em.layout
    ne = len(em.elements)
    nI = ne * L.n_interior
    nT = mesh.n_faces * L.face_dofs
    idofs = np.arange(nI).reshape(ne, L.n_interior)
    tdofs = element_trace_dofs(mesh, L, em.elements) + nI
    dofs = np.concatenate([idofs, tdofs], axis=1)
    A = _scatter_matrix(em.full(), dofs, nI + nT)
    rhs = np.bincount(
        dofs.ravel(), weights=np.concatenate([em.b_I, em.b_G], axis=1).ravel(), minlength=nI + nT
    )
    fixed, values = boundary_trace_values(mesh, spec, case)
    mask = np.ones(nI + nT, dtype=bool)
    mask[fixed + nI] = False
    free = np.flatnonzero(mask)
    A_ff = A[free][:, free].tocsr()
    rhs_f = rhs[free] - A[free][:, fixed + nI] @ values
    free_trace = free[free >= nI] - nI
    return A_ff, rhs_f, nI, free_trace, fixed, values
