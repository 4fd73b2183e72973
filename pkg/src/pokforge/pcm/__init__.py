"""Simplified electro-thermal model of the three-contact PCM key cell."""

from .cell import (LEFT, PULSE_DT, PULSE_STEPS, RIGHT, V_PROG, V_READ, Geometry, MaterialParams,
                   PcmCell, Phase, ProgramResult, TransientTrace, program_pulse, read_bit, read_word,
                   solve_potentials)
from .grains import GrainMap, boundary_mask, generate_grain_map, nearest_nucleus
from .network import GridNetwork, GridSolution, laplacian, solve_network

__all__ = [
    "LEFT", "RIGHT", "V_PROG", "V_READ", "PULSE_STEPS", "PULSE_DT", "Geometry", "MaterialParams",
    "PcmCell", "Phase", "ProgramResult", "TransientTrace", "program_pulse", "read_bit", "read_word", "solve_potentials",
    "GrainMap", "boundary_mask", "generate_grain_map", "nearest_nucleus",
    "GridNetwork", "GridSolution", "laplacian", "solve_network",
]
