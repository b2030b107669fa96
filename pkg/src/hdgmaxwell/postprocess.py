"""Error norms, energy seminorms, convergence rates and table output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import DiscreteSpec, FieldSolution, element_face_points
from .manufactured import ManufacturedCase
from .mesh import TET_FACES, MeshTopology
from .polyquad import make_basis, make_graded_quadrature, make_quadrature

TIMING_COLUMNS = ("t_assembly", "t_condense", "t_solve")


@dataclass
class ErrorReport:
    h_inv: int
    dof: int
    dof_solved: int
    err_r: float
    err_u: float
    err_p: float
    energy_curl: float | None = None
    energy_div: float | None = None
    energy_p: float | None = None
    timings: dict = field(default_factory=dict)
    solver_residual: float | None = None


def _singular_groups(mesh: MeshTopology):
    """Elements touching the reentrant axis, grouped by their local singular entity."""
    on_axis = mesh.axis_vertices[mesh.tets]  # (ne, 4)
    groups: dict[tuple[int, ...], list[int]] = {}
    for e in np.flatnonzero(on_axis.any(axis=1)):
        key = tuple(int(i) for i in np.flatnonzero(on_axis[e]))
        groups.setdefault(key, []).append(int(e))
    return {key: np.array(v) for key, v in groups.items()}


def _element_rules(mesh: MeshTopology, case: ManufacturedCase, degree: int, levels: int):
    """Yield ``(elements, rule)`` pairs covering every element once."""
    if not case.singular or mesh.domain != "lshape":
        yield np.arange(mesh.n_tets), make_quadrature("tet", degree)
        return
    groups = _singular_groups(mesh)
    touched = np.zeros(mesh.n_tets, dtype=bool)
    for key, elems in groups.items():
        touched[elems] = True
        yield elems, make_graded_quadrature("tet", degree, key, levels)
    yield np.flatnonzero(~touched), make_quadrature("tet", degree)


def _physical_points(mesh, elements, ref):
    v0 = mesh.vertices[mesh.tets[elements, 0]]
    return v0[:, None, :] + np.einsum("eij,qj->eqi", mesh.jacobians[elements], ref)


def l2_errors(
    sol: FieldSolution,
    case: ManufacturedCase,
    mesh: MeshTopology,
    spec: DiscreteSpec,
    degree: int | None = None,
) -> ErrorReport:
    """L2 errors of r, u and p; graded rules on elements touching a singular edge."""
    deg = 2 * spec.k + 4 + spec.quad_inc if degree is None else degree
    basis_k = make_basis("tet", spec.k)
    basis_m = make_basis("tet", spec.m)
    sq = np.zeros(3)
    for elems, rule in _element_rules(mesh, case, deg, spec.grading_levels):
        if len(elems) == 0:
            continue
        x = _physical_points(mesh, elems, rule.points)
        W = rule.weights[None, :] * np.abs(np.linalg.det(mesh.jacobians[elems]))[:, None]
        phi_k = basis_k.values(rule.points)
        phi_m = basis_m.values(rule.points)
        rh = np.einsum("eaj,qj->eqa", sol.r[elems], phi_m)
        uh = np.einsum("eaj,qj->eqa", sol.u[elems], phi_k)
        ph = np.einsum("ej,qj->eq", sol.p[elems], phi_k)
        sq[0] += np.sum(W * np.sum((case.r(x) - rh) ** 2, axis=-1))
        sq[1] += np.sum(W * np.sum((case.u(x) - uh) ** 2, axis=-1))
        sq[2] += np.sum(W * (case.p(x) - ph) ** 2)
    e = np.sqrt(sq)
    return ErrorReport(
        h_inv=mesh.h_inv,
        dof=mesh.dof_count(spec.k),
        dof_solved=len(mesh.interior_faces) * 3 * (spec.k + 1) * (spec.k + 2) // 2,
        err_r=float(e[0]),
        err_u=float(e[1]),
        err_p=float(e[2]),
    )


def energy_seminorms(
    sol: FieldSolution,
    mesh: MeshTopology,
    spec: DiscreteSpec,
    case: ManufacturedCase | None = None,
) -> dict[str, float]:
    """The mesh-dependent seminorms ``|(v, v_hat)|_curl``, ``|(v, v_hat)|_div``, ``|(q, q_hat)|_P``.

    Without ``case`` they are evaluated on the discrete pair itself; with
    ``case`` on the error pair (exact minus discrete), where the exact trace
    is the exact field's restriction to the face. Only derivatives of the
    exact solution (``r``, ``g``, ``grad_p``) enter, since exact traces
    cancel in every face term.
    """
    k, alpha = spec.k, spec.alpha
    sgn = -1.0 if case is not None else 1.0
    basis = make_basis("tet", k)
    fbasis = make_basis("tri", k)
    deg = 2 * k + 4 + spec.quad_inc
    quad = make_quadrature("tet", deg)
    ne = mesh.n_tets
    elems = np.arange(ne)
    Jinv = np.linalg.inv(mesh.jacobians)
    detJ = np.abs(np.linalg.det(mesh.jacobians))
    W = quad.weights[None, :] * detJ[:, None]
    grads = np.einsum("edc,qid->eqic", Jinv, basis.gradients(quad.points))
    # (ne, nq, 3 comps, 3 derivs)
    du = np.einsum("eaj,eqjc->eqac", sol.u, grads)
    curl = np.stack(
        [du[..., 2, 1] - du[..., 1, 2], du[..., 0, 2] - du[..., 2, 0], du[..., 1, 0] - du[..., 0, 1]],
        axis=-1,
    )
    div = du[..., 0, 0] + du[..., 1, 1] + du[..., 2, 2]
    dp = np.einsum("ej,eqjc->eqc", sol.p, grads)
    curl, div, dp = sgn * curl, sgn * div, sgn * dp
    if case is not None:
        x = _physical_points(mesh, elems, quad.points)
        curl = curl + case.r(x)
        div = div + case.g(x)
        if case.grad_p is not None:
            dp = dp + case.grad_p(x)
    hT = mesh.h_T
    curl_sq = np.sum(W * np.sum(curl**2, axis=-1))
    div_sq = np.sum(hT ** (1 - alpha) * np.sum(W * div**2, axis=-1))
    p_sq = np.sum(hT ** (alpha + 1) * np.sum(W * np.sum(dp**2, axis=-1), axis=-1))

    fquad = make_quadrature("tri", deg)
    _, xhat = element_face_points(mesh, elems, fquad.points)
    phi = basis.values(xhat)  # (ne, 4, nq, Nk)
    psi = fbasis.values(fquad.points)  # (nq, M)
    faces = mesh.tet_faces
    FW = fquad.weights[None, None, :] * 2.0 * mesh.face_areas[faces][..., None]
    hF = mesh.h_F[faces]
    n = mesh.face_normal[faces][:, :, None, :]  # (ne, 4, 1, 3)
    u_face = np.einsum("eaj,efqj->efqa", sol.u, phi)
    frame = np.stack([mesh.face_t1, mesh.face_t2], axis=1)  # (nf, 2, 3)
    uhat = np.einsum("fbj,qj,fba->fqa", sol.uhat, psi, frame)[faces]  # (ne,4,nq,3)
    diff = u_face - uhat
    tang = diff - np.sum(diff * n, axis=-1, keepdims=True) * n
    curl_sq += np.sum(hF ** -1.0 * np.sum(FW * np.sum(tang**2, axis=-1), axis=-1))
    p_face = np.einsum("ej,efqj->efq", sol.p, phi)
    phat = np.einsum("fj,qj->fq", sol.phat, psi)[faces]
    p_sq += np.sum(hF**alpha * np.sum(FW * (p_face - phat) ** 2, axis=-1))

    # normal jump on interior faces: n_F . (v|owner - v|neighbor)
    normal_trace = np.sum(u_face * n, axis=-1)  # (ne, 4, nq), w.r.t. n_F
    interior = mesh.interior_faces
    slot = np.empty((mesh.n_faces, 2), dtype=int)
    flat = faces.ravel()
    owner_slot = np.flatnonzero(np.repeat(np.arange(ne), 4) == mesh.face_owner[flat])
    slot[flat[owner_slot], 0] = owner_slot
    nb_slot = np.setdiff1d(np.arange(flat.size), owner_slot)
    slot[flat[nb_slot], 1] = nb_slot
    nt = normal_trace.reshape(-1, normal_trace.shape[-1])
    fw = FW.reshape(-1, FW.shape[-1])
    jump = nt[slot[interior, 0]] - nt[slot[interior, 1]]
    div_sq += np.sum(mesh.h_F[interior] ** (-alpha) * np.sum(fw[slot[interior, 0]] * jump**2, axis=-1))
    return {
        "curl": float(np.sqrt(curl_sq)),
        "div": float(np.sqrt(div_sq)),
        "U": float(np.sqrt(curl_sq + div_sq)),
        "P": float(np.sqrt(p_sq)),
    }


def convergence_rates(errors) -> list[float | None]:
    """``log2(e_coarse / e_fine)`` per consecutive pair; first entry is ``None``.

    Non-positive or non-finite errors give ``nan`` instead of raising.
    """
    errors = list(errors)
    rates: list[float | None] = [None]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if not (coarse > 0 and fine > 0 and math.isfinite(coarse) and math.isfinite(fine)):
            rates.append(float("nan"))
        else:
            rates.append(math.log2(coarse / fine))
    return rates


def rate_table(reports: list[ErrorReport]) -> list[dict]:
    rows = []
    rates = {
        key: convergence_rates([getattr(r, key) for r in reports])
        for key in ("err_r", "err_u", "err_p")
    }
    for i, rep in enumerate(reports):
        row = {"h_inv": rep.h_inv}
        for key in ("err_r", "err_u", "err_p"):
            row[key] = getattr(rep, key)
            row["rate_" + key[4:]] = rates[key][i]
        row["dof"] = rep.dof
        row["dof_solved"] = rep.dof_solved
        for key in ("energy_curl", "energy_div", "energy_p", "solver_residual"):
            row[key] = getattr(rep, key)
        for key in TIMING_COLUMNS:
            row[key] = rep.timings.get(key)
        rows.append(row)
    return rows


CSV_COLUMNS = (
    "h_inv", "err_r", "rate_r", "err_u", "rate_u", "err_p", "rate_p", "dof", "dof_solved",
    "energy_curl", "energy_div", "energy_p", "solver_residual",
) + TIMING_COLUMNS


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def to_csv(reports: list[ErrorReport], timings: bool = True) -> str:
    """CSV with one row per refinement level; columns as in ``CSV_COLUMNS``."""
    cols = [c for c in CSV_COLUMNS if timings or c not in TIMING_COLUMNS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rate_table(reports):
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def to_markdown(reports: list[ErrorReport], title: str = "") -> str:
    """Paired Error/Rate columns for r, u, p plus the all-face DOF count."""
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| h^-1 | ‖r−r_h‖₀ | rate | ‖u−u_h‖₀ | rate | ‖p−p_h‖₀ | rate | DOF |")
    lines.append("|---:|---:|---:|---:|---:|---:|---:|---:|")
    for row in rate_table(reports):
        cells = [str(row["h_inv"])]
        for key in ("r", "u", "p"):
            cells.append(f"{row['err_' + key]:.2E}")
            rate = row["rate_" + key]
            cells.append("" if rate is None else ("nan" if math.isnan(rate) else f"{rate:.2f}"))
        cells.append(str(row["dof"]))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report_dict(report: ErrorReport) -> dict:
    return asdict(report)
