"""Seeded synthetic cyclone benchmark for tests and demos.

Each synthetic storm follows a noisy logistic rise-then-decay intensity
curve: with s(z) = 1/(1+exp(-z)) the clean curve over fix index t is

    w(t) = floor + (peak - floor) * s((t - t_up)/r_up) * s((t_dn - t)/r_dn)

(t_up/t_dn are the rise and decay midpoints, r_up/r_dn their time scales)
plus Gaussian observation noise. Central pressure is anti-correlated with
intensity, and storm centres drift on a jittered northwest heading from a
random genesis point in the 5-18N, 60-92E box.

The matching SST field is a smooth function of latitude, longitude and
month sampled onto a regular 1-degree grid with a sprinkling of missing
nodes, so the nearest-node fallback path gets exercised.

Everything is a pure function of the seed.
"""

from __future__ import annotations

import math
from datetime import date, datetime, timedelta

import numpy as np

from .ingest import STEP, CycloneTrack, RawFix
from .sst import SstGrid

LAT_RANGE = (2.0, 28.0)
LON_RANGE = (52.0, 98.0)


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def make_track(storm_index: int, rng: np.random.Generator, year: int = 2010) -> CycloneTrack:
    """One synthetic storm; consumes a deterministic number of rng draws per fix."""
    length = int(rng.integers(30, 61))
    floor = float(rng.uniform(12.0, 22.0))
    peak = float(rng.uniform(55.0, 115.0))
    t_up = float(rng.uniform(0.20, 0.45)) * length
    r_up = float(rng.uniform(2.5, 6.0))
    t_dn = float(rng.uniform(0.60, 0.85)) * length
    r_dn = float(rng.uniform(3.0, 8.0))
    noise = rng.normal(0.0, 1.0, size=length)

    start_day = int(rng.integers(0, 300))
    start = datetime(year, 1, 1) + timedelta(days=start_day, hours=3 * int(rng.integers(0, 8)))

    lat = float(rng.uniform(5.0, 18.0))
    lon = float(rng.uniform(60.0, 92.0))
    heading = float(rng.uniform(280.0, 350.0))  # degrees clockwise from north

    storm_id = f"SYN{storm_index:03d}"
    name = f"SYN-{storm_index:03d}"
    fixes = []
    for t in range(length):
        w = floor + (peak - floor) * _logistic((t - t_up) / r_up) * _logistic((t_dn - t) / r_dn)
        msws = max(0.0, w + float(noise[t]))
        ecp = 1008.0 - 0.75 * (msws - floor) + float(rng.normal(0.0, 0.8))
        fixes.append(
            RawFix(
                storm_id=storm_id,
                timestamp=start + STEP * t,
                lat=round(lat, 4),
                lon=round(lon, 4),
                ecp=round(ecp, 1),
                msws=round(msws, 1),
                name=name,
                basin="AS" if lon < 78.0 else "BOB",
            )
        )
        # drift to the next centre
        heading = (heading + float(rng.normal(0.0, 6.0))) % 360.0
        step_km = float(rng.uniform(25.0, 55.0))
        lat_new = lat + step_km * math.cos(math.radians(heading)) / 111.195
        lon_new = lon + step_km * math.sin(math.radians(heading)) / (
            111.195 * max(0.2, math.cos(math.radians(lat)))
        )
        if not LAT_RANGE[0] < lat_new < LAT_RANGE[1] or not LON_RANGE[0] < lon_new < LON_RANGE[1]:
            heading = (heading + 180.0) % 360.0  # bounce off the box edge
            lat_new, lon_new = lat, lon
        lat, lon = lat_new, lon_new
    return CycloneTrack(storm_id=storm_id, fixes=tuple(fixes), name=name)


def make_tracks(n_storms: int, seed: int, year: int = 2010) -> list[CycloneTrack]:
    rng = np.random.default_rng(seed)
    return [make_track(i, rng, year=year) for i in range(n_storms)]


def make_sst_grid(seed: int, year: int = 2010) -> SstGrid:
    """Smooth monthly SST field over the synthetic basin, ~2% nodes missing."""
    rng = np.random.default_rng(seed + 1_000_003)
    lats = np.arange(0.0, 31.0, 1.0)
    lons = np.arange(50.0, 101.0, 1.0)
    dates = tuple(date(year, m, 1) for m in range(1, 13))
    values = np.empty((len(dates), len(lats), len(lons)))
    for k, d in enumerate(dates):
        seasonal = 0.8 * math.sin(2.0 * math.pi * (d.month - 4) / 12.0)
        grid_lat = lats[:, None]
        grid_lon = lons[None, :]
        values[k] = (
            29.2
            - 0.010 * (grid_lat - 10.0) ** 2
            - 0.0015 * (grid_lon - 75.0) ** 2
            + seasonal
        )
    missing = rng.random(values.shape) < 0.02
    values[missing] = np.nan
    return SstGrid(dates=dates, lats=lats, lons=lons, values=values)


def make_benchmark(n_storms: int, seed: int, year: int = 2010) -> tuple[list[CycloneTrack], SstGrid]:
    """Matched (tracks, SST grid) pair, fully determined by the seed."""
    return make_tracks(n_storms, seed, year=year), make_sst_grid(seed, year=year)
