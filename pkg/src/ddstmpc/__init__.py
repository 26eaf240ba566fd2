"""Data-driven ROSC sets and set-theoretic MPC for unknown constrained linear systems."""

from .setgeom import HPolytope, MatrixZonotope, VertexModels, Zonotope
from .sysid import ModelSet, Trajectory, compute_model_set, extract_vertex_models
from .rosc import AugmentedRosc, RoscFamily, compute_family, model_based_family
from .controller import ControllerState, step

__all__ = [
    "AugmentedRosc",
    "ControllerState",
    "HPolytope",
    "MatrixZonotope",
    "ModelSet",
    "RoscFamily",
    "Trajectory",
    "VertexModels",
    "Zonotope",
    "compute_family",
    "compute_model_set",
    "extract_vertex_models",
    "model_based_family",
    "step",
]

__version__ = "0.1.0"
