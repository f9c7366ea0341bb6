"""Per-pixel decomposition of polarized-illumination captures into unpolarized,
forward-rotation and reverse-rotation components."""

from .decompose import (
    ANGLE_PRESETS,
    AngleSet,
    Decomposition,
    DegenerateAngleSet,
    angle_preset,
    build_design_matrix,
    condition_number,
    decompose_frames,
    decompose_stack,
    extract_components,
    solve_linear,
    validate_angle_set,
)
from .model import ComponentParams, PolarizedRay, PolarizerPair, mixture_intensity

__all__ = [
    "ANGLE_PRESETS",
    "AngleSet",
    "ComponentParams",
    "Decomposition",
    "DegenerateAngleSet",
    "PolarizedRay",
    "PolarizerPair",
    "angle_preset",
    "build_design_matrix",
    "condition_number",
    "decompose_frames",
    "decompose_stack",
    "extract_components",
    "mixture_intensity",
    "solve_linear",
    "validate_angle_set",
]
