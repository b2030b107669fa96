"""Estimator-style front end: ``fit`` solves, ``predict`` evaluates, ``score`` measures."""

from __future__ import annotations

import time

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import linsolve
from ._validation import (
    check_case,
    check_choice,
    check_integer,
    check_mesh,
    check_points,
    check_positive_float,
)
from .assembly import (
    TRACE_PROJECTIONS,
    DiscreteSpec,
    assemble_trace_system,
    condense,
    local_element_matrices,
    recover_interior,
)
from .polyquad import DEFAULT_GRADING_LEVELS, make_basis
from .postprocess import ErrorReport, energy_seminorms, l2_errors

SOLVERS = ("direct", "gmres")


class SolverFailure(RuntimeError):
    """The linear solve did not produce an acceptable solution."""


class MaxwellHDG(BaseEstimator):
    """HDG discretization of the mixed curl-curl problem with a multiplier.

    Parameters
    ----------
    k : int
        Degree of ``u``, ``p`` and of both trace spaces.
    m : int
        Degree of ``r``; ``k - 1`` or ``k``.
    alpha : {-1, 1}
        Exponent of the ``h_F`` weight in the multiplier stabilization.
    trace_projection : {"l2", "hdiv"}
        How tangential boundary data enter: face L2 projection or the
        moment-based H(div) surface projection.
    solver : {"direct", "gmres"}
    backend : str or None
        Direct solver backend (``"pardiso"`` or ``"superlu"``); ``None`` picks
        the fastest available.
    gmres_tol, gmres_restart, gmres_max_iters
        GMRES controls, ignored by the direct solver.
    quad_inc : int
        Extra quadrature degree on top of the default ``2k + 2``.
    grading_levels : int
        Panels of the geometrically graded rules used near singular edges.

    Attributes set by ``fit``: ``solution_``, ``mesh_``, ``case_``,
    ``system_``, ``residual_``, ``iterations_``, ``timings_``, ``solver_info_``.
    """

    def __init__(
        self,
        k=1,
        m=0,
        alpha=-1,
        trace_projection="l2",
        solver="direct",
        backend=None,
        gmres_tol=1e-10,
        gmres_restart=200,
        gmres_max_iters=5000,
        quad_inc=0,
        grading_levels=DEFAULT_GRADING_LEVELS,
    ):
        self.k = k
        self.m = m
        self.alpha = alpha
        self.trace_projection = trace_projection
        self.solver = solver
        self.backend = backend
        self.gmres_tol = gmres_tol
        self.gmres_restart = gmres_restart
        self.gmres_max_iters = gmres_max_iters
        self.quad_inc = quad_inc
        self.grading_levels = grading_levels

    def _discrete_spec(self) -> DiscreteSpec:
        k = check_integer(self.k, "k", minimum=1)
        m = check_integer(self.m, "m", minimum=0)
        alpha = check_integer(self.alpha, "alpha")
        check_choice(self.trace_projection, "trace_projection", TRACE_PROJECTIONS)
        check_choice(self.solver, "solver", SOLVERS)
        if self.backend is not None:
            check_choice(self.backend, "backend", linsolve.BACKENDS)
        check_positive_float(self.gmres_tol, "gmres_tol")
        check_integer(self.gmres_restart, "gmres_restart", minimum=1)
        check_integer(self.gmres_max_iters, "gmres_max_iters", minimum=0)
        return DiscreteSpec(
            k=k, m=m, alpha=alpha, trace_projection=self.trace_projection,
            quad_inc=check_integer(self.quad_inc, "quad_inc", minimum=0),
            grading_levels=check_integer(self.grading_levels, "grading_levels", minimum=1),
        )

    def fit(self, mesh, case):
        """Assemble, condense, solve and recover on ``mesh`` for ``case``.

        ``mesh`` is a ``MeshTopology`` or ``(domain, n)``; ``case`` a
        ``ManufacturedCase`` or a case name. Raises ``SolverFailure`` when the
        direct factorization hits a singular pivot or GMRES stops short of
        its tolerance.
        """
        spec = self._discrete_spec()
        mesh = check_mesh(mesh)
        case = check_case(case)
        timings = {}

        t0 = time.perf_counter()
        em = local_element_matrices(mesh, spec, case)
        t1 = time.perf_counter()
        try:
            condensed = condense(em)
        except np.linalg.LinAlgError as err:
            raise SolverFailure(str(err)) from err
        t2 = time.perf_counter()
        system, condensed = assemble_trace_system(mesh, spec, case, condensed)
        t3 = time.perf_counter()
        timings["t_assembly"] = (t1 - t0) + (t3 - t2)
        timings["t_condense"] = t2 - t1

        solver_info = {}
        if self.solver == "direct":
            try:
                y = linsolve.solve_direct(system.A, system.rhs, backend=self.backend, info=solver_info)
            except linsolve.SingularMatrixError as err:
                raise SolverFailure(f"direct solve failed: {err}") from err
            iterations = None
        else:
            res = linsolve.solve_gmres(
                system.A, system.rhs, tol=self.gmres_tol,
                restart=self.gmres_restart, max_iters=self.gmres_max_iters,
            )
            if not res.converged:
                raise SolverFailure(
                    f"GMRES stopped at relative residual {res.residual:.3e} "
                    f"after {res.iterations} iterations (tol {self.gmres_tol:g})"
                )
            y, iterations = res.x, res.iterations
            solver_info = {"backend": "gmres", "residual": res.residual}
        timings["t_solve"] = time.perf_counter() - t3

        bnorm = np.linalg.norm(system.rhs)
        residual = float(np.linalg.norm(system.rhs - system.A @ y) / bnorm) if bnorm else 0.0
        self.spec_ = spec
        self.mesh_ = mesh
        self.case_ = case
        self.system_ = system
        self.solution_ = recover_interior(system, y, condensed, mesh)
        self.residual_ = residual
        self.iterations_ = iterations
        self.timings_ = timings
        self.solver_info_ = solver_info
        return self

    def error_report(self, energy: bool = True) -> ErrorReport:
        """L2 errors against the fitted case, optionally with energy seminorms of the error."""
        check_is_fitted(self, "solution_")
        rep = l2_errors(self.solution_, self.case_, self.mesh_, self.spec_)
        if energy:
            e = energy_seminorms(self.solution_, self.mesh_, self.spec_, self.case_)
            rep.energy_curl, rep.energy_div, rep.energy_p = e["curl"], e["div"], e["P"]
        rep.timings = dict(self.timings_)
        rep.solver_residual = self.residual_
        return rep

    def score(self, mesh=None, case=None) -> float:
        """Negative ``||u - u_h||_0``, so that larger is better.

        Arguments are accepted for API symmetry; they must match the fitted
        ones when given.
        """
        check_is_fitted(self, "solution_")
        if mesh is not None and check_mesh(mesh).n_tets != self.mesh_.n_tets:
            raise ValueError("score mesh differs from the fitted mesh")
        if case is not None and check_case(case).name != self.case_.name:
            raise ValueError("score case differs from the fitted case")
        return -self.error_report(energy=False).err_u

    def predict(self, X) -> dict[str, np.ndarray]:
        """Evaluate ``r_h``, ``u_h`` and ``p_h`` at points ``X`` of shape ``(n, 3)``.

        Points on shared faces take the value from the lowest-indexed
        containing element. Points outside the mesh raise ``ValueError``.
        """
        check_is_fitted(self, "solution_")
        X = check_points(X)
        elems = self._locate(X)
        mesh, sol = self.mesh_, self.solution_
        ref = np.einsum(
            "nij,nj->ni", np.linalg.inv(mesh.jacobians[elems]), X - mesh.vertices[mesh.tets[elems, 0]]
        )
        phi_k = make_basis("tet", self.spec_.k).values(ref)
        phi_m = make_basis("tet", self.spec_.m).values(ref)
        return {
            "r": np.einsum("naj,nj->na", sol.r[elems], phi_m),
            "u": np.einsum("naj,nj->na", sol.u[elems], phi_k),
            "p": np.einsum("nj,nj->n", sol.p[elems], phi_k),
        }

    def _locate(self, X: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        mesh = self.mesh_
        if not hasattr(self, "_tree"):
            self._centroids = mesh.vertices[mesh.tets].mean(axis=1)
            self._tree = cKDTree(self._centroids)
            self._Jinv = np.linalg.inv(mesh.jacobians)
        k = min(64, mesh.n_tets)
        _, cand = self._tree.query(X, k=k)
        cand = np.sort(cand.reshape(len(X), k), axis=1)
        v0 = mesh.vertices[mesh.tets[cand, 0]]
        lam = np.einsum("npij,npj->npi", self._Jinv[cand], X[:, None, :] - v0)
        inside = (lam.min(axis=-1) >= -tol) & (lam.sum(axis=-1) <= 1 + tol)
        if not inside.any(axis=1).all():
            bad = int(np.flatnonzero(~inside.any(axis=1))[0])
            raise ValueError(f"point {X[bad].tolist()} lies outside the mesh")
        return cand[np.arange(len(X)), inside.argmax(axis=1)]
