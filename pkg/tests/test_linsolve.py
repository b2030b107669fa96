import numpy as np
import pytest
import scipy.sparse as sp

from hdgmaxwell.assembly import DiscreteSpec, assemble_trace_system
from hdgmaxwell.linsolve import (
    BACKENDS,
    SingularMatrixError,
    SparseSymmetric,
    solve_direct,
    solve_gmres,
)
from hdgmaxwell.manufactured import smooth_case


def random_spd(rng, n=50):
    B = sp.random(n, n, density=0.1, random_state=rng) + sp.eye(n)
    return (B @ B.T + n * sp.eye(n)).tocsr()


@pytest.fixture(scope="module")
def cube_system(request):
    from hdgmaxwell.mesh import build_box_mesh

    system, _ = assemble_trace_system(build_box_mesh(2), DiscreteSpec(), smooth_case())
    return system


@pytest.mark.parametrize("backend", BACKENDS)
def test_identity(backend):
    b = np.arange(1.0, 8.0)
    np.testing.assert_array_equal(solve_direct(sp.eye(7), b, backend), b)


@pytest.mark.parametrize("backend", BACKENDS)
def test_spd_matches_dense(backend, rng):
    A = random_spd(rng)
    b = rng.normal(size=50)
    np.testing.assert_allclose(solve_direct(A, b, backend), np.linalg.solve(A.toarray(), b), rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("backend", BACKENDS)
def test_indefinite_trace_system_residual(backend, cube_system):
    A, b = cube_system.A, cube_system.rhs
    x = solve_direct(A, b, backend)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    # symmetric matrix: the transposed solve agrees
    np.testing.assert_allclose(solve_direct(A.T, b, backend), x, rtol=1e-9, atol=1e-12)


def test_singular_matrix_reports_pivot():
    A = sp.diags([1.0, 2.0, 0.0, 4.0]).tocsc()
    with pytest.raises(SingularMatrixError) as info:
        solve_direct(A, np.ones(4), "superlu")
    assert info.value.pivot is not None


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve_direct(sp.eye(3), np.ones(3), "mumps")


def test_gmres_identity_one_iteration():
    out = solve_gmres(sp.eye(10), np.ones(10))
    assert out.converged and out.iterations == 1
    np.testing.assert_allclose(out.x, 1.0)


def test_gmres_matches_direct(cube_system):
    A, b = cube_system.A, cube_system.rhs
    tol = 1e-10
    out = solve_gmres(A, b, tol=tol, restart=200)
    assert out.converged and out.residual <= tol
    ref = solve_direct(A, b)
    # forward error bounded by cond(A) tol; the system is small and well conditioned
    assert np.linalg.norm(out.x - ref) <= 1e3 * tol * np.linalg.norm(ref)


def test_gmres_budget_and_validation(cube_system):
    out = solve_gmres(cube_system.A, cube_system.rhs, max_iters=0)
    assert not out.converged and out.residual == 1.0 and out.iterations == 0
    short = solve_gmres(cube_system.A, cube_system.rhs, tol=1e-14, restart=5, max_iters=5)
    assert not short.converged and short.iterations <= 5
    zero = solve_gmres(cube_system.A, np.zeros(cube_system.A.shape[0]))
    assert zero.converged and not zero.x.any()
    with pytest.raises(ValueError):
        solve_gmres(sp.eye(2), np.ones(2), tol=0)


def test_sparse_symmetric_stats(cube_system):
    S = SparseSymmetric.from_matrix(cube_system.A)
    assert S.dim == cube_system.A.shape[0] and S.nnz == cube_system.A.nnz
    assert 0 < S.bandwidth < S.dim
    assert S.asymmetry() <= 1e-12
    with pytest.raises(ValueError):
        SparseSymmetric.from_matrix(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        SparseSymmetric.from_matrix(sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]])))
    x = solve_direct(S, cube_system.rhs)
    assert np.all(np.isfinite(x))
