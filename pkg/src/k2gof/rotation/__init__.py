"""Unitary rotation of projected processes from a reference model to a candidate"""

from k2gof.rotation.k2 import (
    RotationPlan,
    UPair,
    apply_K,
    apply_U,
    apply_U_pair,
    build_rotation_plan,
    isometry_field,
    phi_tilde_field,
    rotated_process,
)

__all__ = [
    "RotationPlan",
    "UPair",
    "apply_K",
    "apply_U",
    "apply_U_pair",
    "build_rotation_plan",
    "isometry_field",
    "phi_tilde_field",
    "rotated_process",
]
