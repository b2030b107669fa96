import itertools

import numpy as np
import pytest

from hdgmaxwell.mesh import (
    FACE_EDGES,
    TET_FACES,
    build_box_mesh,
    build_lshape_mesh,
    build_mesh,
    face_frames,
)


def brute_force_face_count(tets):
    faces = set()
    for t in tets:
        for f in itertools.combinations(sorted(t), 3):
            faces.add(f)
    return len(faces)


@pytest.mark.parametrize(
    "domain,n,tets,faces,interior",
    [("cube", 1, 6, 18, 6), ("cube", 2, 48, 120, 72), ("cube", 4, 384, 864, None),
     ("lshape", 2, 36, 94, 50), ("lshape", 4, 288, 664, None)],
)
def test_entity_counts(domain, n, tets, faces, interior):
    mesh = build_mesh(domain, n)
    assert mesh.n_tets == tets
    assert mesh.n_faces == faces == brute_force_face_count(mesh.tets)
    if interior is not None:
        assert len(mesh.interior_faces) == interior
    assert 4 * mesh.n_tets == 2 * len(mesh.interior_faces) + len(mesh.boundary_faces)


@pytest.mark.parametrize("domain,n,volume", [("cube", 3, 1.0), ("lshape", 2, 6.0), ("lshape", 6, 6.0)])
def test_positive_volumes_sum_to_domain(domain, n, volume):
    mesh = build_mesh(domain, n)
    assert np.all(mesh.volumes > 0)
    signed = np.linalg.det(mesh.jacobians) / 6
    assert np.all(signed > 0)
    assert mesh.volumes.sum() == pytest.approx(volume, rel=1e-12)


def test_refinement_multiplies_tets_by_eight():
    for n in (1, 2, 3):
        assert build_box_mesh(2 * n).n_tets == 8 * build_box_mesh(n).n_tets


@pytest.mark.parametrize("domain,n", [("cube", 1), ("cube", 4), ("lshape", 2), ("lshape", 8)])
def test_shape_regularity_bounded(domain, n):
    mesh = build_mesh(domain, n)
    assert np.max(mesh.h_T / mesh.inradii) <= 20


def test_lshape_rejects_odd_or_small():
    for n in (1, 3, 0):
        with pytest.raises(ValueError):
            build_lshape_mesh(n)
    with pytest.raises(ValueError):
        build_mesh("sphere", 2)


def test_lshape_excludes_removed_quadrant_and_resolves_axis():
    mesh = build_lshape_mesh(4)
    c = mesh.vertices[mesh.tets].mean(axis=1)
    assert not np.any((c[:, 0] < 0) & (c[:, 1] < 0))
    on_axis = mesh.axis_vertices
    assert on_axis.sum() == 5  # z = -1, -0.5, 0, 0.5, 1
    # consecutive axis vertices are joined by mesh edges
    edges = {tuple(sorted(e)) for t in mesh.tets for e in itertools.combinations(t, 2)}
    axis_ids = np.flatnonzero(on_axis)[np.argsort(mesh.vertices[on_axis, 2])]
    for a, b in zip(axis_ids[:-1], axis_ids[1:]):
        assert tuple(sorted((a, b))) in edges


def test_face_connectivity_consistent(cube2):
    mesh = cube2
    for e in range(mesh.n_tets):
        for i, f in enumerate(mesh.tet_faces[e]):
            assert sorted(mesh.tets[e][TET_FACES[i]]) == list(mesh.faces[f])
            assert e in (mesh.face_owner[f], mesh.face_neighbor[f])
    interior = mesh.interior_faces
    assert np.all(mesh.face_owner[interior] < mesh.face_neighbor[interior])


def test_normals_point_owner_to_neighbor_and_outward(lshape2):
    mesh = lshape2
    centroids = mesh.vertices[mesh.tets].mean(axis=1)
    fc = mesh.vertices[mesh.faces].mean(axis=1)
    away_from_owner = np.einsum("fi,fi->f", mesh.face_normal, fc - centroids[mesh.face_owner])
    assert np.all(away_from_owner > 0)
    assert np.all(mesh.face_neighbor[mesh.boundary_faces] == -1)


def test_unit_cube_bottom_face_normal(cube1):
    mesh = cube1
    X = mesh.vertices[mesh.faces]
    bottom = [f for f in mesh.boundary_faces if np.allclose(X[f, :, 2], 0)]
    assert bottom
    for f in bottom:
        np.testing.assert_allclose(mesh.face_normal[f], [0, 0, -1], atol=1e-14)


def test_frames_orthonormal_right_handed(cube2):
    (n, t1, t2), (tE, nFE) = face_frames(cube2)
    np.testing.assert_allclose(np.cross(t1, t2), n, atol=1e-14)
    np.testing.assert_allclose(np.einsum("fi,fi->f", t1, t2), 0, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(t1, axis=1), 1, atol=1e-14)
    # edge frames: n_FE in the face plane, orthogonal to the edge, pointing away from the face
    nb = n[cube2.boundary_faces][:, None, :]
    np.testing.assert_allclose(np.einsum("fei,fei->fe", nFE, tE), 0, atol=1e-14)
    np.testing.assert_allclose(np.einsum("fei,fei->fe", nFE, np.broadcast_to(nb, nFE.shape)), 0, atol=1e-14)
    X = cube2.vertices[cube2.faces[cube2.boundary_faces]]
    mids = 0.5 * (X[:, FACE_EDGES[:, 0]] + X[:, FACE_EDGES[:, 1]])
    centre = X.mean(axis=1)[:, None, :]
    assert np.all(np.einsum("fei,fei->fe", nFE, mids - centre) > 0)


def test_face_size_is_enclosing_circle_radius(cube2):
    X = cube2.vertices[cube2.faces]
    longest = np.linalg.norm(X[:, :, None] - X[:, None], axis=-1).max(axis=(1, 2))
    # Kuhn faces are right triangles
    np.testing.assert_allclose(cube2.h_F, 0.5 * longest, rtol=1e-14)


def test_dof_counts():
    assert build_box_mesh(2).dof_count(1) == 1080
    assert build_box_mesh(4).dof_count(2) == 15552
    assert build_lshape_mesh(4).dof_count(1) == 5976


def test_dump_format(tmp_path, cube1):
    path = tmp_path / "mesh.txt"
    cube1.dump(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "vertices 8"
    assert lines[9] == "tets 6"
    assert lines[16] == "faces 18"
    owners = [int(line.split()[3]) for line in lines[17:]]
    neighbors = [int(line.split()[4]) for line in lines[17:]]
    assert neighbors.count(-1) == 12 and max(owners) <= 5


def test_mesh_is_immutable(cube1):
    with pytest.raises(AttributeError):
        cube1.domain = "lshape"
