"""Manufactured benchmark solutions and their boundary data.

All evaluators are vectorized over points of shape ``(..., 3)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import FACE_EDGES, MeshTopology
from .polyquad import (
    DEFAULT_GRADING_LEVELS,
    make_graded_quadrature,
    make_quadrature,
    monomial_exponents,
)
from .projections import hdiv_moments, l2_project_face

Field = Callable[[np.ndarray], np.ndarray]

PI = np.pi


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution ``(u, r = curl u, p)`` with data ``f, g`` and ``g_T = n x u``.

    ``singular_exponent`` is set for solutions singular on the axis x = y = 0;
    integration near that axis then switches to graded rules.
    """

    name: str
    u: Field
    r: Field
    p: Field
    f: Field
    g: Field
    grad_p: Field | None = None
    singular_exponent: float | None = None
    params: dict = field(default_factory=dict, compare=False)

    @property
    def singular(self) -> bool:
        return self.singular_exponent is not None

    def g_T(self, x, n) -> np.ndarray:
        return np.cross(n, self.u(x))


def _stack(*comps):
    return np.stack(np.broadcast_arrays(*comps), axis=-1)


def smooth_case() -> ManufacturedCase:
    """u = (s, s, s), s = sin(pi y) sin(pi z); p = sin(pi x) sin(pi y) sin(pi z) / pi^2."""

    def u(x):
        s = np.sin(PI * x[..., 1]) * np.sin(PI * x[..., 2])
        return _stack(s, s, s)

    def r(x):
        y, z = x[..., 1], x[..., 2]
        return _stack(
            -PI * np.sin(PI * (y - z)),
            PI * np.sin(PI * y) * np.cos(PI * z),
            -PI * np.cos(PI * y) * np.sin(PI * z),
        )

    def p(x):
        return np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1]) * np.sin(PI * x[..., 2]) / PI**2

    def f(x):
        sx, sy, sz = (np.sin(PI * x[..., i]) for i in range(3))
        cx, cy, cz = (np.cos(PI * x[..., i]) for i in range(3))
        c = PI**2 * np.cos(PI * (x[..., 1] - x[..., 2]))
        return _stack(
            2 * PI**2 * sy * sz + cx * sy * sz / PI,
            c + sx * cy * sz / PI,
            c + sx * sy * cz / PI,
        )

    def g(x):
        return PI * np.sin(PI * (x[..., 1] + x[..., 2]))

    def grad_p(x):
        sx, sy, sz = (np.sin(PI * x[..., i]) for i in range(3))
        cx, cy, cz = (np.cos(PI * x[..., i]) for i in range(3))
        return _stack(cx * sy * sz, sx * cy * sz, sx * sy * cz) / PI

    return ManufacturedCase("smooth", u, r, p, f, g, grad_p)


def polar_angle(x) -> np.ndarray:
    """Angle about the z-axis, continuous on the L-domain: values in [-pi/2, pi]."""
    theta = np.arctan2(x[..., 1], x[..., 0])
    return np.where(theta < -PI / 2 - 1e-14, theta + 2 * PI, theta)


def singular_case(t: float) -> ManufacturedCase:
    """u = grad(r^t sin(t theta)) about the reentrant edge; r = 0, p = 0, f = 0, g = 0."""
    t = float(t)
    if not t > 0:
        raise ValueError(f"singular exponent must be positive, got {t}")

    def u(x):
        rad = np.hypot(x[..., 0], x[..., 1])
        if t < 1 and np.any(rad == 0):
            raise ValueError("singular solution evaluated on the reentrant edge")
        theta = polar_angle(x)
        amp = t * rad ** (t - 1)
        return _stack(amp * np.sin((t - 1) * theta), amp * np.cos((t - 1) * theta), 0.0)

    def zero_vec(x):
        return np.zeros(np.shape(x)[:-1] + (3,))

    def zero(x):
        return np.zeros(np.shape(x)[:-1])

    return ManufacturedCase(
        f"singular:t={t:g}", u, zero_vec, zero, zero_vec, zero, zero_vec,
        singular_exponent=t, params={"t": t},
    )


def potential(t: float, x) -> np.ndarray:
    """Harmonic potential r^t sin(t theta) whose gradient is the singular u."""
    rad = np.hypot(x[..., 0], x[..., 1])
    return rad**t * np.sin(t * polar_angle(x))


class _Poly:
    """Polynomial in x, y, z with monomial exponents and coefficients."""

    def __init__(self, exps: np.ndarray, coeffs: np.ndarray):
        self.exps = np.asarray(exps, dtype=int).reshape(-1, 3)
        self.coeffs = np.asarray(coeffs, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        mono = np.ones(x.shape[:-1] + (len(self.exps),))
        for d in range(3):
            mono = mono * x[..., d : d + 1] ** self.exps[:, d]
        return mono @ self.coeffs

    def diff(self, d: int) -> "_Poly":
        e = self.exps.copy()
        c = self.coeffs * e[:, d]
        e[:, d] = np.maximum(e[:, d] - 1, 0)
        return _Poly(e, c)


def polynomial_case(k: int, m: int, seed: int = 0, p_degree=None) -> ManufacturedCase:
    """Random polynomial solution with u in [P_min(k,m)]^3 and p in P_k.

    All data are exact polynomials, so a consistent scheme reproduces the
    solution up to round-off. ``p`` does not vanish on the boundary; its
    trace is imposed as Dirichlet data for the multiplier trace.
    """
    rng = np.random.default_rng(seed)
    q = min(k, m)
    pq = k if p_degree is None else p_degree
    ue = monomial_exponents(3, q)
    pe = monomial_exponents(3, pq)
    U = [_Poly(ue, rng.uniform(-1, 1, len(ue))) for _ in range(3)]
    P = _Poly(pe, rng.uniform(-1, 1, len(pe)))
    dU = [[U[i].diff(j) for j in range(3)] for i in range(3)]
    R = [
        _combine([(1, dU[2][1]), (-1, dU[1][2])]),
        _combine([(1, dU[0][2]), (-1, dU[2][0])]),
        _combine([(1, dU[1][0]), (-1, dU[0][1])]),
    ]
    dR = [[R[i].diff(j) for j in range(3)] for i in range(3)]
    dP = [P.diff(j) for j in range(3)]

    def u(x):
        return _stack(*(c(x) for c in U))

    def r(x):
        return _stack(*(c(x) for c in R))

    def f(x):
        return _stack(
            dR[2][1](x) - dR[1][2](x) + dP[0](x),
            dR[0][2](x) - dR[2][0](x) + dP[1](x),
            dR[1][0](x) - dR[0][1](x) + dP[2](x),
        )

    def g(x):
        return dU[0][0](x) + dU[1][1](x) + dU[2][2](x)

    def grad_p(x):
        return _stack(*(d(x) for d in dP))

    return ManufacturedCase(
        f"polynomial:k={k},m={m}", u, r, P, f, g, grad_p, params={"seed": seed}
    )


def _combine(terms) -> _Poly:
    exps = np.concatenate([p.exps for _, p in terms])
    coeffs = np.concatenate([s * p.coeffs for s, p in terms])
    return _Poly(exps, coeffs)


_SINGULAR_RE = re.compile(r"^singular:t=([0-9.eE+-]+)$")


def case_from_name(name: str) -> ManufacturedCase:
    """Resolve ``smooth`` or ``singular:t=<value>``."""
    if name == "smooth":
        return smooth_case()
    match = _SINGULAR_RE.match(name)
    if match:
        try:
            t = float(match.group(1))
        except ValueError:
            raise ValueError(f"bad exponent in case name {name!r}") from None
        return singular_case(t)
    raise ValueError(f"unknown case {name!r}; expected 'smooth' or 'singular:t=<value>'")


# ---------------------------------------------------------------------------
# boundary data moments


def _axis_entities(mesh: MeshTopology, face: int) -> tuple[int, ...]:
    """Local vertex indices of ``face`` lying on the reentrant axis."""
    on_axis = mesh.axis_vertices[mesh.faces[face]]
    return tuple(int(i) for i in np.flatnonzero(on_axis))


def boundary_data_moments(
    case: ManufacturedCase,
    mesh: MeshTopology,
    face: int,
    k: int,
    kind: str = "hdiv",
    levels: int = DEFAULT_GRADING_LEVELS,
    degree=None,
) -> np.ndarray:
    """Moments of ``g_T = n x u`` on boundary ``face``.

    ``kind="hdiv"`` returns the edge-normal and interior moments used by the
    H(div) face projection; ``kind="l2"`` returns the face L2 moments against
    the orthonormal P_k(F) basis, shape ``(dim P_k(F), 3)``.

    For singular cases, integration near the axis uses graded rules; edges
    lying on the axis carry exactly zero edge-normal moments, since there
    ``n x u`` is parallel to the edge.
    """
    if mesh.face_neighbor[face] >= 0:
        raise ValueError(f"face {face} is not a boundary face")
    n = mesh.face_normal[face]
    deg = 2 * k + 4 if degree is None else degree

    def gT(x):
        return case.g_T(x, n)

    axis = _axis_entities(mesh, face) if case.singular else ()
    if kind == "l2":
        rule = (
            make_graded_quadrature("tri", deg, axis, levels)
            if axis
            else make_quadrature("tri", deg)
        )
        return l2_project_face(gT, mesh, face, k, rule) * 2.0 * mesh.face_areas[face]
    if kind != "hdiv":
        raise ValueError(f"unknown moment kind {kind!r}")

    edge_rules, zero_edges = [], []
    for e, (a, b) in enumerate(FACE_EDGES):
        hits = [i for i, v in enumerate((a, b)) if v in axis]
        if len(hits) == 2:
            zero_edges.append(e)
            edge_rules.append(None)
        elif hits:
            edge_rules.append(make_graded_quadrature("seg", deg, (hits[0],), levels))
        else:
            edge_rules.append(make_quadrature("seg", deg))
    face_rule = (
        make_graded_quadrature("tri", deg, axis, levels) if axis else make_quadrature("tri", deg)
    )
    return hdiv_moments(gT, mesh, face, k, edge_rules, face_rule, tuple(zero_edges))
