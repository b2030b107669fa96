"""Sparse direct and GMRES solvers for the condensed trace system."""

from __future__ import annotations

import glob
import logging
import math
import os
import re
import sys
import sysconfig
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)


def _locate_mkl_rt() -> None:
    # pypardiso only searches sys.prefix; system-wide pip installs put MKL elsewhere
    if os.environ.get("PYPARDISO_MKL_RT"):
        return
    roots = {sys.prefix, sysconfig.get_config_var("prefix") or "", "/usr/local"}
    for root in sorted(r for r in roots if r):
        hits = sorted(glob.glob(os.path.join(root, "lib*", "libmkl_rt.so*")), key=len)
        if hits:
            os.environ["PYPARDISO_MKL_RT"] = hits[0]
            return


def _pardiso_solver_class():
    try:
        _locate_mkl_rt()
        from pypardiso import PyPardisoSolver
    except (ImportError, OSError):
        return None
    return PyPardisoSolver


_PARDISO = _pardiso_solver_class()
BACKENDS = ("pardiso", "superlu") if _PARDISO is not None else ("superlu",)


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


@dataclass(frozen=True)
class SparseSymmetric:
    matrix: sp.csr_matrix

    @classmethod
    def from_matrix(cls, A) -> "SparseSymmetric":
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        # stored entries, so cancellation to an exact zero on one side is fine
        pattern = A.copy()
        pattern.data = np.ones_like(pattern.data, dtype=np.int8)
        if (pattern - pattern.T).count_nonzero():
            raise ValueError("matrix is not structurally symmetric")
        return cls(A)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def bandwidth(self) -> int:
        coo = self.matrix.tocoo()
        return int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0

    def asymmetry(self) -> float:
        """``max|A - A^T| / max|A|``."""
        A = self.matrix
        top = abs(A).max()
        return float(abs(A - A.T).max() / top) if top else 0.0


def _as_csc(A):
    if isinstance(A, SparseSymmetric):
        A = A.matrix
    return sp.csc_matrix(A)


def solve_direct(A, b, backend: str | None = None, refine: int = 3, info: dict | None = None) -> np.ndarray:
    """Sparse direct solve of a symmetric (indefinite) system.

    ``backend`` is ``"pardiso"`` (MKL, symmetric indefinite factorization with
    nested-dissection ordering) or ``"superlu"`` (LU with a symmetric
    minimum-degree ordering and diagonal pivoting preference). The default is
    PARDISO when available. A few steps of iterative refinement are applied
    if the relative residual exceeds 1e-12.
    """
    backend = backend or BACKENDS[0]
    if backend not in BACKENDS:
        raise ValueError(f"solver backend {backend!r} unavailable; have {BACKENDS}")
    M = _as_csc(A)
    b = np.asarray(b, dtype=float)
    solve = _pardiso_factor(M) if backend == "pardiso" else _superlu_factor(M)
    steps = 0
    try:
        x = solve(b)
        bnorm = np.linalg.norm(b) or 1.0
        for _ in range(refine):
            r = b - M @ x
            if np.linalg.norm(r) <= 1e-12 * bnorm:
                break
            x = x + solve(r)
            steps += 1
    finally:
        getattr(solve, "release", lambda: None)()
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("direct solve produced non-finite values")
    if info is not None:
        info.update(backend=backend, perturbed_pivots=getattr(solve, "perturbed", 0), refinement_steps=steps)
    return x


def _pardiso_factor(M):
    solver = _PARDISO(mtype=-2)
    upper = sp.triu(M, format="csr")
    upper.sort_indices()
    solver.factorize(upper)
    perturbed = int(solver.get_iparm(14))
    if perturbed:
        logger.warning("PARDISO perturbed %d pivots", perturbed)

    def solve(rhs):
        return solver.solve(upper, rhs)

    solve.perturbed = perturbed
    solve.release = lambda: solver.free_memory(everything=True)
    return solve


def _superlu_factor(M):
    try:
        lu = spla.splu(
            M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as err:
        match = re.search(r"(\d+)", str(err))
        pivot = int(match.group(1)) if match else _empty_line(M)
        raise SingularMatrixError(f"sparse LU failed: {err}", pivot) from err
    diag = np.abs(lu.U.diagonal())
    if diag.size and diag.min() <= 1e-14 * diag.max():
        pivot = int(np.argmin(diag))
        raise SingularMatrixError(f"numerically singular pivot at index {pivot}", pivot)
    return lu.solve


def _empty_line(M) -> int | None:
    # SuperLU does not always name the pivot; a zero row or column is the usual culprit
    absM = abs(M)
    lines = np.concatenate([np.flatnonzero(absM.max(axis=1).toarray().ravel() == 0),
                            np.flatnonzero(absM.max(axis=0).toarray().ravel() == 0)])
    return int(lines.min()) if lines.size else None


@dataclass(frozen=True)
class GMRESResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def solve_gmres(A, b, tol: float = 1e-10, restart: int = 200, max_iters: int = 5000) -> GMRESResult:
    """Restarted GMRES with a Jacobi preconditioner.

    Non-convergence is reported in the result, never raised. ``residual`` is
    the true relative residual ``|b - A x| / |b|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = sp.csr_matrix(A.matrix if isinstance(A, SparseSymmetric) else A)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0:
        return GMRESResult(x, 0, 0.0, True)
    if max_iters <= 0:
        return GMRESResult(x, 0, 1.0, False)
    d = M.diagonal()
    d = np.where(np.abs(d) > 0, d, 1.0)
    precond = spla.LinearOperator(M.shape, matvec=lambda v: v / d)
    count = 0

    def callback(_):
        nonlocal count
        count += 1

    restart = max(1, min(restart, max_iters))
    x, _ = spla.gmres(
        M, b, rtol=tol, atol=0.0, restart=restart,
        maxiter=math.ceil(max_iters / restart), M=precond,
        callback=callback, callback_type="pr_norm",
    )
    res = float(np.linalg.norm(b - M @ x) / bnorm)
    return GMRESResult(x, count, res, res <= tol)
