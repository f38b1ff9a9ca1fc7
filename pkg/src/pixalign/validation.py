"""Parameter and input checks shared by the estimators and the CLI."""
from __future__ import annotations

import math

from .errors import InputError
from .placement import DEFAULT_FOV, CubePlacement, auto_place


def check_grid(R):
    if isinstance(R, bool) or int(R) != R or R < 1:
        raise InputError(f"grid resolution must be a positive integer, got {R!r}")
    return int(R)


def check_views(views, reference, kind="view"):
    views = list(views)
    if not views:
        raise InputError(f"at least one {kind} is required")
    if isinstance(reference, bool) or int(reference) != reference or not 0 <= reference < len(views):
        raise InputError(f"reference index {reference!r} out of range for {len(views)} {kind}s")
    return views


def implied_fov(intr):
    """FoV of a square, centered camera; None when auto-placement is not applicable."""
    if not intr.is_square or intr.fx != intr.fy:
        return None
    if not (math.isclose(intr.cx, intr.width / 2.0) and math.isclose(intr.cy, intr.height / 2.0)):
        return None
    return intr.fov_deg()


def resolve_placement(grid, intrinsics=None, fov=None, distance=None, scale=1.0):
    """Cube placement from explicit ``(distance, scale)`` or by auto-placement.

    Auto-placement uses ``fov`` when given, else the FoV implied by a square
    centered camera, else the default FoV.
    """
    grid = check_grid(grid)
    if distance is not None:
        if fov is not None:
            raise InputError("give either a field of view or an explicit distance, not both")
        return CubePlacement(float(distance), float(scale), grid)
    if fov is None and intrinsics is not None:
        if not intrinsics.is_square:
            raise InputError("auto-placement needs a square image; pass distance and scale explicitly")
        fov = implied_fov(intrinsics)
    return auto_place(DEFAULT_FOV if fov is None else float(fov), float(scale), grid)
