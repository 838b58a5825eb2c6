"""Element families, DOF maps, assembly and finite element functions."""
from .assembly import (
    FeFunction,
    SymmetricPair,
    assemble,
    assemble_full,
    dump_coo,
    element_matrices,
    eval_basis,
    eval_fe,
    interpolate,
    locate,
)
from .families import ElementFamily, Functional, family_names, get_family, registry
from .space import CellRule, DofMap, FESpace, build_dofmap, cell_rule, chunks, reference_rule

__all__ = [
    "CellRule",
    "DofMap",
    "ElementFamily",
    "FESpace",
    "FeFunction",
    "Functional",
    "SymmetricPair",
    "assemble",
    "assemble_full",
    "build_dofmap",
    "cell_rule",
    "chunks",
    "dump_coo",
    "element_matrices",
    "eval_basis",
    "eval_fe",
    "family_names",
    "get_family",
    "interpolate",
    "locate",
    "reference_rule",
    "registry",
]
