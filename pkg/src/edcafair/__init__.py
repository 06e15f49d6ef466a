"""EDCA uplink/downlink weighted-fairness toolkit.

Analytical saturation model, slotted MAC simulator, AP-side parameter
adaptation, and an experiment harness with a CLI front end.
"""

from .analytics import (
    ApParameterPlan,
    FixedPointSolution,
    PhyTiming,
    TrafficClassParams,
    compute_ap_parameters,
    solve_fixed_point,
)

__all__ = [
    "ApParameterPlan",
    "FixedPointSolution",
    "PhyTiming",
    "TrafficClassParams",
    "compute_ap_parameters",
    "solve_fixed_point",
]
