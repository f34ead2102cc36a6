"""Great-circle geometry on a spherical Earth.

Distances use the haversine formula and bearings the standard forward-azimuth
formula, both on a sphere of mean radius ``EARTH_RADIUS_KM``. Accuracy against
a real ellipsoid is within ~0.5%, which is ample for storm-motion features.
"""

from __future__ import annotations

import math

EARTH_RADIUS_KM = 6371.0

Point = tuple[float, float]  # (lat_deg, lon_deg)


def _check_finite(p: Point, q: Point) -> None:
    for v in (*p, *q):
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate: {v!r}")


def haversine_distance(p: Point, q: Point) -> float:
    """Great-circle distance in kilometers between two (lat, lon) points in degrees."""
    _check_finite(p, q)
    lat1, lon1 = p
    lat2, lon2 = q
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    a = min(1.0, max(0.0, a))  # rounding can push a just outside [0, 1]
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def is_degenerate_pair(p: Point, q: Point) -> bool:
    """True when p and q are the same position, leaving the bearing undefined."""
    return p[0] == q[0] and p[1] == q[1]


def initial_bearing(p: Point, q: Point) -> float:
    """Forward azimuth from p to q in degrees clockwise from true north, in [0, 360).

    Coincident points have no defined bearing and return 0.0 by convention;
    use :func:`is_degenerate_pair` to detect that case.
    """
    _check_finite(p, q)
    if is_degenerate_pair(p, q):
        return 0.0
    lat1, lon1 = p
    lat2, lon2 = q
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dlam = math.radians(lon2 - lon1)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    theta = math.degrees(math.atan2(y, x)) % 360.0
    # atan2 of a half-turn can round to exactly 360.0; keep the interval half-open
    return 0.0 if theta == 360.0 else theta
