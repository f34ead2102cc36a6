"""Sea-surface temperature grids and nearest-node lookup.

Grid file format: delimited text with header ``date,lat_deg,lon_deg,sst_c``,
one node sample per row, empty field for missing values. The loader assembles
a dense (date, lat, lon) array and validates that the spatial axes are
strictly ascending and uniformly spaced.

Lookups are nearest-neighbor in latitude, longitude, and date (dates outside
the grid range clamp to its ends). When the nearest node is missing, the
nearest non-missing node within two grid cells in each spatial direction is
used instead, and the sample is flagged as a fallback.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError, SstUnavailableError, ValidationError

SST_COLUMNS = ("date", "lat_deg", "lon_deg", "sst_c")
DATE_FORMAT = "%Y-%m-%d"
NEIGHBORHOOD_CELLS = 2


@dataclass(frozen=True)
class SstGrid:
    """Regular (date, lat, lon) grid of sea-surface temperatures in Celsius."""

    dates: tuple[date, ...]
    lats: np.ndarray  # ascending, uniform spacing
    lons: np.ndarray  # ascending, uniform spacing
    values: np.ndarray  # shape (n_dates, n_lats, n_lons), NaN = missing

    def __post_init__(self) -> None:
        expected = (len(self.dates), len(self.lats), len(self.lons))
        if self.values.shape != expected:
            raise ValidationError(
                f"grid shape {self.values.shape} does not match axes {expected}"
            )


class SstSample(NamedTuple):
    value: float
    fallback: bool  # True when the nearest node was missing


def _check_axis(name: str, axis: np.ndarray) -> None:
    if len(axis) == 0:
        raise FormatError(f"{name} axis is empty")
    diffs = np.diff(axis)
    if len(diffs) == 0:
        return
    if not np.all(diffs > 0):
        raise FormatError(f"{name} axis is not strictly ascending")
    if not np.allclose(diffs, diffs[0], rtol=1e-9, atol=1e-9):
        raise FormatError(f"{name} axis spacing is irregular")


def load_sst_csv(source) -> SstGrid:
    """Assemble an SstGrid from a node-sample CSV (see module docstring)."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_sst_csv(io.StringIO(fh.read()))
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("SST file has no header row") from None
    missing = [c for c in SST_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"SST header is missing column(s): {', '.join(missing)}")
    idx = {c: header.index(c) for c in SST_COLUMNS}

    samples: dict[tuple[date, float, float], float] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            d = datetime.strptime(row[idx["date"]].strip(), DATE_FORMAT).date()
            lat = float(row[idx["lat_deg"]])
            lon = float(row[idx["lon_deg"]])
        except (ValueError, IndexError) as exc:
            raise FormatError(f"SST row {line_no}: {exc}") from None
        raw = row[idx["sst_c"]].strip()
        value = float("nan") if not raw else float(raw)
        key = (d, lat, lon)
        if key in samples and not (math.isnan(samples[key]) and math.isnan(value)):
            raise ValidationError(f"SST row {line_no}: duplicate node {key}")
        samples[key] = value

    if not samples:
        raise FormatError("SST file has no data rows")

    dates = tuple(sorted({k[0] for k in samples}))
    lats = np.array(sorted({k[1] for k in samples}), dtype=np.float64)
    lons = np.array(sorted({k[2] for k in samples}), dtype=np.float64)
    _check_axis("lat", lats)
    _check_axis("lon", lons)

    values = np.full((len(dates), len(lats), len(lons)), np.nan, dtype=np.float64)
    date_index = {d: i for i, d in enumerate(dates)}
    lat_index = {v: i for i, v in enumerate(lats.tolist())}
    lon_index = {v: i for i, v in enumerate(lons.tolist())}
    for (d, lat, lon), value in samples.items():
        values[date_index[d], lat_index[lat], lon_index[lon]] = value
    return SstGrid(dates=dates, lats=lats, lons=lons, values=values)


def sst_grid_to_csv(grid: SstGrid) -> str:
    """Serialize a grid back to the node-sample CSV format (NaN -> empty field)."""
    lines = [",".join(SST_COLUMNS)]
    for k, d in enumerate(grid.dates):
        for i, lat in enumerate(grid.lats):
            for j, lon in enumerate(grid.lons):
                value = grid.values[k, i, j]
                cell = "" if math.isnan(value) else repr(float(value))
                lines.append(f"{d.isoformat()},{float(lat)!r},{float(lon)!r},{cell}")
    return "\n".join(lines) + "\n"


def _nearest_index(axis: np.ndarray, value: float) -> int:
    return int(np.argmin(np.abs(axis - value)))


def _nearest_date_index(dates: tuple[date, ...], when: date) -> int:
    deltas = [abs((d - when).days) for d in dates]
    return deltas.index(min(deltas))


def lookup_sst(grid: SstGrid, lat: float, lon: float, when: date | datetime) -> SstSample:
    """Nearest-node SST in Celsius; falls back within a 2-cell neighborhood.

    Raises SstUnavailableError when the nearest node and its whole 2-cell
    neighborhood are missing.
    """
    if isinstance(when, datetime):
        when = when.date()
    k = _nearest_date_index(grid.dates, when)
    i = _nearest_index(grid.lats, lat)
    j = _nearest_index(grid.lons, lon)
    value = grid.values[k, i, j]
    if math.isfinite(value):
        return SstSample(float(value), False)

    best: tuple[float, float] | None = None  # (squared degree distance, value)
    for di in range(-NEIGHBORHOOD_CELLS, NEIGHBORHOOD_CELLS + 1):
        for dj in range(-NEIGHBORHOOD_CELLS, NEIGHBORHOOD_CELLS + 1):
            if di == 0 and dj == 0:
                continue
            ii, jj = i + di, j + dj
            if not (0 <= ii < len(grid.lats) and 0 <= jj < len(grid.lons)):
                continue
            candidate = grid.values[k, ii, jj]
            if not math.isfinite(candidate):
                continue
            dist = (grid.lats[ii] - lat) ** 2 + (grid.lons[jj] - lon) ** 2
            if best is None or dist < best[0]:
                best = (dist, float(candidate))
    if best is None:
        raise SstUnavailableError(
            f"no SST within {NEIGHBORHOOD_CELLS} cells of ({lat}, {lon}) on {when.isoformat()}"
        )
    return SstSample(best[1], True)
