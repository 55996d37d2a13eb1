"""Numerical probes for the outer Lipschitz geometry of singular graph
surfaces z = f(x, y) near an isolated singular point at the origin."""

from .exprs import ExprError, ParseError, parse
from .fibers import (
    FiberClass,
    RayFiber,
    check_plane_cone,
    ray_at,
    ray_fiber,
    sweep_exceptional_rays,
)
from .pieces import (
    PieceClass,
    PlaneReason,
    PlaneTag,
    PlaneVerdict,
    SeparationKind,
    check_well_separated,
    partition_wedge,
    plane_verdict,
)

__version__ = "0.1.0"

__all__ = [
    "ExprError",
    "FiberClass",
    "ParseError",
    "PieceClass",
    "PlaneReason",
    "PlaneTag",
    "PlaneVerdict",
    "RayFiber",
    "SeparationKind",
    "check_plane_cone",
    "check_well_separated",
    "parse",
    "partition_wedge",
    "plane_verdict",
    "ray_at",
    "ray_fiber",
    "sweep_exceptional_rays",
    "__version__",
]
