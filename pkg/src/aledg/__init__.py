"""Interior-penalty DG for advection-diffusion on a moving (ALE) mesh.

The mesh follows a prescribed smooth velocity Vt; only the remaining
advection V - Vt is upwinded. Geometry enters through the flow map F, J.
"""
from .mesh import build_structured_unit_square
from .space import DGSpace
from .flowmap import EntanglementError
from .integrator import TimeLoopConfig, run
from .scenarios import boundary_layer_scenario, smooth_scenario
from .io import RunConfig, parse_config, write_outputs

__all__ = ["build_structured_unit_square", "DGSpace", "EntanglementError", "TimeLoopConfig",
           "run", "boundary_layer_scenario", "smooth_scenario", "RunConfig", "parse_config",
           "write_outputs"]
