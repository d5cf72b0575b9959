"""stefanlab: a desk-scale numerical laboratory for regularized two-phase
Stefan problems driven by p-Laplacian diffusion.

The package solves the enthalpy form of the phase-change equation on small
uniform grids (each implicit step is a convex minimization), provides the
intrinsic space-time geometry used to measure oscillation decay, evaluates
the explicit constant chains of the continuity analysis, and runs an
inequality harness that measures energy, Harnack-type and positivity-decay
estimates on the computed solutions.
"""

from .graphs import BetaMap, RegularizedGraph
from .solver import Grid, Scenario, Trajectory, run_simulation
from .geometry import IntrinsicCylinder, ModulusParams, OscillationProfile
from .constants import ConstantsLedger, fix_constants

__all__ = [
    "BetaMap",
    "RegularizedGraph",
    "Grid",
    "Scenario",
    "Trajectory",
    "run_simulation",
    "IntrinsicCylinder",
    "ModulusParams",
    "OscillationProfile",
    "ConstantsLedger",
    "fix_constants",
]

__version__ = "0.1.0"
