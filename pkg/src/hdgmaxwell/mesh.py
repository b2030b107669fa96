"""Structured tetrahedral meshes of the unit cube and the 3D L-shaped domain.

Every hexahedral cell is split into six tetrahedra sharing the cell's main
diagonal (Kuhn subdivision). The same split in every cell makes the mesh
conforming.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from pathlib import Path

import numpy as np

# local tet faces: face i is opposite vertex i
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
# local face edges: edge j of a face joins its vertices FACE_EDGES[j]
FACE_EDGES = np.array([[0, 1], [1, 2], [0, 2]])

_AXIS_TOL = 1e-12


def _kuhn_offsets() -> np.ndarray:
    """Six tets of the unit cube as corner offsets, all along 000 -> 111."""
    tets = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] = 1
            path.append(corner.copy())
        tets.append(path)
    return np.array(tets)  # (6, 4, 3)


KUHN = _kuhn_offsets()


@dataclass(frozen=True)
class MeshTopology:
    """Immutable tetrahedral mesh with face connectivity and frames.

    Faces are stored once. ``face_owner`` is the lower-indexed adjacent
    element and ``face_normal`` points from owner to neighbour (outward on
    the boundary). ``face_neighbor`` is -1 on boundary faces.
    """

    domain: str
    h_inv: int
    vertices: np.ndarray
    tets: np.ndarray
    faces: np.ndarray
    face_owner: np.ndarray
    face_neighbor: np.ndarray
    tet_faces: np.ndarray = field(repr=False)
    tet_face_sign: np.ndarray = field(repr=False)
    face_normal: np.ndarray = field(repr=False)
    face_t1: np.ndarray = field(repr=False)
    face_t2: np.ndarray = field(repr=False)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_neighbor < 0)

    @cached_property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_neighbor >= 0)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians, columns ``v1 - v0, v2 - v0, v3 - v0``."""
        X = self.vertices[self.tets]
        return np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0], X[:, 3] - X[:, 0]], axis=-1)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) / 6.0

    @cached_property
    def h_T(self) -> np.ndarray:
        X = self.vertices[self.tets]
        d = np.linalg.norm(X[:, :, None, :] - X[:, None, :, :], axis=-1)
        return d.max(axis=(1, 2))

    @cached_property
    def h_F(self) -> np.ndarray:
        """Radius of the smallest circle containing each face.

        Half the longest edge for right or obtuse triangles, the circumradius
        otherwise. On Kuhn meshes every face is a right triangle.
        """
        X = self.vertices[self.faces]
        e = np.linalg.norm(X[:, [1, 2, 0]] - X[:, [2, 0, 1]], axis=-1)  # edge opposite each vertex
        longest = e.max(axis=1)
        sq = np.sort(e**2, axis=1)
        acute = sq[:, 2] < sq[:, 0] + sq[:, 1] - 1e-12 * sq[:, 2]
        circum = e.prod(axis=1) / (4.0 * self.face_areas)
        return np.where(acute, circum, 0.5 * longest)

    @cached_property
    def face_areas(self) -> np.ndarray:
        X = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=-1)

    @cached_property
    def inradii(self) -> np.ndarray:
        X = self.vertices[self.tets]
        area = np.zeros(self.n_tets)
        for f in TET_FACES:
            a, b, c = X[:, f[0]], X[:, f[1]], X[:, f[2]]
            area += 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)
        return 3.0 * self.volumes / area

    @cached_property
    def boundary_edge_frames(self) -> tuple[np.ndarray, np.ndarray]:
        """Per boundary face and local edge: unit tangent and outward in-plane normal.

        Returns arrays of shape ``(n_boundary, 3, 3)`` ordered like
        ``boundary_faces`` and ``FACE_EDGES``.
        """
        return edge_frames(self, self.boundary_faces)

    @cached_property
    def axis_vertices(self) -> np.ndarray:
        """Mask of vertices on the line x = y = 0."""
        v = self.vertices
        return (np.abs(v[:, 0]) < _AXIS_TOL) & (np.abs(v[:, 1]) < _AXIS_TOL)

    def dof_count(self, k: int) -> int:
        """All-face trace DOF count (boundary faces included)."""
        return self.n_faces * 3 * (k + 1) * (k + 2) // 2

    def dump(self, path) -> None:
        """Write the plain-text mesh dump (see README for the format)."""
        lines = [f"vertices {len(self.vertices)}"]
        lines += [" ".join(repr(float(c)) for c in v) for v in self.vertices]
        lines.append(f"tets {self.n_tets}")
        lines += [" ".join(str(i) for i in t) for t in self.tets]
        lines.append(f"faces {self.n_faces}")
        lines += [
            f"{a} {b} {c} {o} {n}"
            for (a, b, c), o, n in zip(self.faces, self.face_owner, self.face_neighbor)
        ]
        Path(path).write_text("\n".join(lines) + "\n")


def edge_frames(mesh: MeshTopology, faces) -> tuple[np.ndarray, np.ndarray]:
    faces = np.asarray(faces)
    X = mesh.vertices[mesh.faces[faces]]  # (nf, 3, 3)
    n = mesh.face_normal[faces]
    a = X[:, FACE_EDGES[:, 0]]
    b = X[:, FACE_EDGES[:, 1]]
    t = b - a
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    nfe = np.cross(t, n[:, None, :])
    opposite = X[:, [2, 0, 1]]
    mid = 0.5 * (a + b)
    flip = np.einsum("fei,fei->fe", nfe, mid - opposite) < 0
    nfe[flip] *= -1.0
    return t, nfe


def face_frames(mesh: MeshTopology):
    """Per-face ``(n_F, t1, t2)`` and per-boundary-face edge frames ``(t_E, n_FE)``."""
    return (
        (mesh.face_normal, mesh.face_t1, mesh.face_t2),
        mesh.boundary_edge_frames,
    )


def _build(domain: str, h_inv: int, vertices: np.ndarray, tets: np.ndarray) -> MeshTopology:
    X = vertices[tets]
    vol = np.einsum(
        "ti,ti->t", X[:, 1] - X[:, 0], np.cross(X[:, 2] - X[:, 0], X[:, 3] - X[:, 0])
    )
    neg = vol < 0
    tets = tets.copy()
    tets[neg, 2], tets[neg, 3] = tets[neg, 3], tets[neg, 2].copy()

    local = np.sort(tets[:, TET_FACES], axis=-1)  # (nt, 4, 3)
    flat = local.reshape(-1, 3)
    faces, inverse, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if counts.max() > 2:
        raise ValueError("non-manifold mesh: a face is shared by more than two tets")
    tet_faces = inverse.reshape(-1, 4)
    owner_of_slot = np.repeat(np.arange(len(tets)), 4)

    order = np.argsort(inverse, kind="stable")
    sorted_faces = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_faces[1:] != sorted_faces[:-1]
    face_owner = owner_of_slot[order[first]]
    face_neighbor = np.full(len(faces), -1)
    second = ~first
    face_neighbor[sorted_faces[second]] = owner_of_slot[order[second]]

    P = vertices[faces]
    cross = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
    norm = np.linalg.norm(cross, axis=-1)
    if np.any(norm <= 1e-14 * np.max(norm)):
        raise ValueError("degenerate (zero-area) face in mesh")
    n = cross / norm[:, None]
    # orient from owner outward: owner's opposite vertex must lie behind the face
    owner_centroid = vertices[tets[face_owner]].mean(axis=1)
    flip = np.einsum("fi,fi->f", n, P[:, 0] - owner_centroid) < 0
    n[flip] *= -1.0
    t1 = P[:, 1] - P[:, 0]
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(n, t1)

    sign = np.where(face_owner[tet_faces] == np.arange(len(tets))[:, None], 1.0, -1.0)
    for arr in (vertices, tets, faces, face_owner, face_neighbor, tet_faces, sign, n, t1, t2):
        arr.setflags(write=False)
    return MeshTopology(
        domain=domain,
        h_inv=h_inv,
        vertices=vertices,
        tets=tets,
        faces=faces,
        face_owner=face_owner,
        face_neighbor=face_neighbor,
        tet_faces=tet_faces,
        tet_face_sign=sign,
        face_normal=n,
        face_t1=t1,
        face_t2=t2,
    )


def _grid_mesh(n: int, lo: float, hi: float, keep_cell) -> tuple[np.ndarray, np.ndarray]:
    side = (hi - lo) / n
    idx = np.arange(n)
    I, J, K = np.meshgrid(idx, idx, idx, indexing="ij")
    cells = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=-1)
    centers = lo + (cells + 0.5) * side
    cells = cells[keep_cell(centers)]
    corners = cells[:, None, None, :] + KUHN[None]  # (nc, 6, 4, 3)
    lattice = corners.reshape(-1, 3)
    lin = (lattice[:, 0] * (n + 1) + lattice[:, 1]) * (n + 1) + lattice[:, 2]
    used, tets = np.unique(lin, return_inverse=True)
    tets = tets.reshape(-1, 4)
    ijk = np.stack([used // (n + 1) ** 2, (used // (n + 1)) % (n + 1), used % (n + 1)], axis=-1)
    vertices = lo + ijk * side
    return vertices.astype(float), tets


def build_box_mesh(n: int) -> MeshTopology:
    """Kuhn-split structured mesh of [0, 1]^3 with ``n`` cells per axis."""
    if int(n) != n or n < 1:
        raise ValueError(f"cube mesh needs a positive integer n, got {n!r}")
    n = int(n)
    vertices, tets = _grid_mesh(n, 0.0, 1.0, lambda c: np.ones(len(c), dtype=bool))
    return _build("cube", n, vertices, tets)


def build_lshape_mesh(n: int) -> MeshTopology:
    """Kuhn-split mesh of [-1,1]^3 minus (-1,0)x(-1,0)x(-1,1); ``n`` cells across."""
    if int(n) != n or n < 2 or n % 2:
        raise ValueError(
            f"L-shape mesh needs an even n >= 2 so the reentrant edge lies on mesh lines, got {n!r}"
        )
    n = int(n)
    vertices, tets = _grid_mesh(
        n, -1.0, 1.0, lambda c: ~((c[:, 0] < 0) & (c[:, 1] < 0))
    )
    return _build("lshape", n, vertices, tets)


def build_mesh(domain: str, n: int) -> MeshTopology:
    if domain == "cube":
        return build_box_mesh(n)
    if domain == "lshape":
        return build_lshape_mesh(n)
    raise ValueError(f"unknown domain {domain!r}; expected 'cube' or 'lshape'")
