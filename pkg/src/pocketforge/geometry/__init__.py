"""SO(3) and rigid-frame kernels"""

from .rigid import (
    ANGSTROM_TO_MODEL,
    MODEL_TO_ANGSTROM,
    ResidueFrame,
    Rigid,
    backbone_atoms,
    backbone_atoms_from_frame,
    backbone_template,
    frames_from_backbone,
    sample_frame_prior,
    sample_frames_prior,
)
from .so3 import (
    geodesic_interpolate,
    relative_angle,
    rotation_angle,
    so3_exp,
    so3_log,
    translation_interpolate,
)

__all__ = [
    "ANGSTROM_TO_MODEL",
    "MODEL_TO_ANGSTROM",
    "ResidueFrame",
    "Rigid",
    "backbone_atoms",
    "backbone_atoms_from_frame",
    "backbone_template",
    "frames_from_backbone",
    "geodesic_interpolate",
    "relative_angle",
    "rotation_angle",
    "sample_frame_prior",
    "sample_frames_prior",
    "so3_exp",
    "so3_log",
    "translation_interpolate",
]
