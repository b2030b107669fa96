"""Hybridizable discontinuous Galerkin solver for the mixed curl-curl problem."""

from .assembly import DiscreteSpec, FieldSolution
from .estimator import MaxwellHDG, SolverFailure
from .manufactured import ManufacturedCase, case_from_name, polynomial_case, singular_case, smooth_case
from .mesh import MeshTopology, build_box_mesh, build_lshape_mesh, build_mesh
from .postprocess import ErrorReport, convergence_rates, to_csv, to_markdown

__version__ = "0.1.0"

__all__ = [
    "DiscreteSpec",
    "ErrorReport",
    "FieldSolution",
    "ManufacturedCase",
    "MaxwellHDG",
    "MeshTopology",
    "SolverFailure",
    "build_box_mesh",
    "build_lshape_mesh",
    "build_mesh",
    "case_from_name",
    "convergence_rates",
    "polynomial_case",
    "singular_case",
    "smooth_case",
    "to_csv",
    "to_markdown",
]
