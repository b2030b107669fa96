"""Input checks shared by the estimator and the command line driver."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .manufactured import ManufacturedCase, case_from_name
from .mesh import MeshTopology, build_mesh

DOMAINS = ("cube", "lshape")


def check_integer(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_positive_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_choice(value, name: str, choices) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_levels(levels, domain: str) -> list[int]:
    """Refinement levels: non-empty, each double the previous; even on the L-domain."""
    levels = [check_integer(n, "level", minimum=1) for n in levels]
    if not levels:
        raise ValueError("levels must list at least one mesh parameter h^-1")
    for coarse, fine in zip(levels[:-1], levels[1:]):
        if fine != 2 * coarse:
            raise ValueError(f"levels must double between entries, got {coarse} then {fine}")
    if domain == "lshape" and any(n % 2 for n in levels):
        raise ValueError(f"lshape levels must be even, got {levels}")
    return levels


def check_mesh(mesh) -> MeshTopology:
    """Accept a ``MeshTopology`` or a ``(domain, n)`` pair."""
    if isinstance(mesh, MeshTopology):
        return mesh
    if isinstance(mesh, tuple) and len(mesh) == 2:
        domain, n = mesh
        check_choice(domain, "domain", DOMAINS)
        return build_mesh(domain, check_integer(n, "n", minimum=1))
    raise TypeError(f"expected a MeshTopology or (domain, n), got {type(mesh).__name__}")


def check_case(case) -> ManufacturedCase:
    if isinstance(case, ManufacturedCase):
        return case
    if isinstance(case, str):
        return case_from_name(case)
    raise TypeError(f"expected a ManufacturedCase or case name, got {type(case).__name__}")


def check_points(X) -> np.ndarray:
    """Finite float array of shape ``(n, 3)``."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 3:
        raise ValueError(f"points must have 3 columns, got shape {X.shape}")
    return X
