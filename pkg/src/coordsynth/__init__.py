"""Dimensional synthesis of planar truss mechanisms with nodal coordinates as design variables."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .model import (CoordSet, Mechanism, Node, Pin, PrecisionPoint, ProblemError, Ray,
                    SynthesisProblem, Truss, VariableOptions, ZeroLengthError, lengths,
                    load_problem, read_problem, save_problem)
from .synthesis import (SynthesisResult, evaluate_fitness_coords, evaluate_fitness_dims, optimize,
                        optimize_coordinates, optimize_dimensions)

__version__ = "0.1.0"

BUNDLED = ("truss_circle3", "truss_circle5", "fourbar", "fourbar_restricted", "butterfly")


def bundled_problem(name: str) -> SynthesisProblem:
    """Load one of the example problems shipped with the package."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled problem {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files(__package__).joinpath("problems", f"{name}.json").read_text()
    return load_problem(text)


def resolve_problem(source: str | Path) -> SynthesisProblem:
    """Read ``source`` as a file path, falling back to a bundled problem name."""
    path = Path(source)
    if path.exists():
        return read_problem(path)
    if str(source) in BUNDLED:
        return bundled_problem(str(source))
    raise FileNotFoundError(f"no problem file or bundled problem named {source!r}")


__all__ = [
    "BUNDLED", "CoordSet", "Mechanism", "Node", "Pin", "PrecisionPoint", "ProblemError", "Ray",
    "SynthesisProblem", "SynthesisResult", "Truss", "VariableOptions", "ZeroLengthError",
    "bundled_problem", "evaluate_fitness_coords", "evaluate_fitness_dims", "lengths", "load_problem",
    "optimize", "optimize_coordinates", "optimize_dimensions", "read_problem", "resolve_problem",
    "save_problem",
]
