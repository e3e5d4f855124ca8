"""Classical, plug-in and projected empirical processes"""

from k2gof.process.projection import (
    ProcessField,
    ProjectionPlan,
    build_projection_plan,
    empirical_process,
    plugin_fit,
    plugin_process,
    projected_process,
    psi,
    psi_field,
)

__all__ = [
    "ProcessField",
    "ProjectionPlan",
    "build_projection_plan",
    "empirical_process",
    "plugin_fit",
    "plugin_process",
    "projected_process",
    "psi",
    "psi_field",
]
