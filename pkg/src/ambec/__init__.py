"""Exact stationary states of coupled atomic-molecular condensates in 1-D.

Modules: grid/model (fields, operators, conserved quantities), catalog
(closed-form families), constraints (numerical consistency conditions),
propagator (time evolution), diagnostics, cli.
"""

from .catalog import AnsatzParams, FamilyId, eval_family, get_preset
from .grid import Grid, make_grid
from .model import Couplings, FieldPair, Potential, energy, particle_numbers

__version__ = "0.1.0"

__all__ = [
    "AnsatzParams", "Couplings", "FamilyId", "FieldPair", "Grid", "Potential",
    "energy", "eval_family", "get_preset", "make_grid", "particle_numbers",
]
