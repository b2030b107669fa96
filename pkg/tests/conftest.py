import numpy as np
import pytest

from hdgmaxwell.mesh import build_box_mesh, build_lshape_mesh
from hdgmaxwell.projections import l2_project_element, l2_project_face


@pytest.fixture(scope="session")
def cube1():
    return build_box_mesh(1)


@pytest.fixture(scope="session")
def cube2():
    return build_box_mesh(2)


@pytest.fixture(scope="session")
def lshape2():
    return build_lshape_mesh(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_tet(rng, min_volume=1e-2):
    """A random non-degenerate tetrahedron with positive orientation."""
    while True:
        X = rng.uniform(-1, 1, (4, 3))
        vol = np.linalg.det(np.stack([X[1] - X[0], X[2] - X[0], X[3] - X[0]], axis=1)) / 6
        if abs(vol) > min_volume:
            if vol < 0:
                X[[2, 3]] = X[[3, 2]]
            return X


def exact_traces(mesh, case, k):
    """Face-frame coefficients of the tangential part of u and of p on every face."""
    out = []
    for F in range(mesh.n_faces):
        cu = l2_project_face(case.u, mesh, F, k, None)  # (M, 3)
        ut = np.stack([cu @ mesh.face_t1[F], cu @ mesh.face_t2[F]])
        cp = l2_project_face(case.p, mesh, F, k)[:, 0]
        out.append(np.concatenate([ut.ravel(), cp]))
    return np.concatenate(out)


def exact_interior(mesh, case, k, m):
    rows = []
    for e in range(mesh.n_tets):
        r = l2_project_element(case.r, mesh, e, m, 2 * k + 2).T.ravel()
        u = l2_project_element(case.u, mesh, e, k, 2 * k + 2).T.ravel()
        p = l2_project_element(case.p, mesh, e, k, 2 * k + 2)[:, 0]
        rows.append(np.concatenate([r, u, p]))
    return np.array(rows)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance")
        for number in sorted(test_acceptance.VERDICTS):
            terminalreporter.write_line(test_acceptance.VERDICTS[number])
