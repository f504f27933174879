"""Reference bases, quadrature, discrete spaces and assembly."""

from .assembly import (
    DirichletReduction,
    LoadAssembler,
    MaterialScalar,
    apply_dirichlet,
    assemble_interface_mass,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    evaluate,
    export_coo,
    interpolate,
    scatter,
)
from .basis import lagrange_basis, shape_eval
from .quadrature import face_rule, volume_rule
from .space import DiscreteSpace

__all__ = [
    "DirichletReduction",
    "DiscreteSpace",
    "LoadAssembler",
    "MaterialScalar",
    "apply_dirichlet",
    "assemble_interface_mass",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "evaluate",
    "export_coo",
    "face_rule",
    "interpolate",
    "lagrange_basis",
    "scatter",
    "shape_eval",
    "volume_rule",
]
