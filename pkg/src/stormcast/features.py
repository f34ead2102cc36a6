"""Per-fix feature engineering and invertible min-max scaling.

Every fix is described by seven features, in this fixed column order::

    lat, lon, msws, ecp, distance, direction, sst

``distance`` (km) and ``direction`` (degrees clockwise from north) describe
the storm's motion since the previous fix; the first fix gets distance 0 and
borrows the next step's direction. All features except MSWS are rescaled to
[-1, +1] by a min-max transform fitted on training storms only; MSWS stays
in knots so the network regresses intensity directly.

Direction is scaled as a plain scalar: the 0/360 wrap-around is a known
modeling limitation, accepted deliberately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DegenerateFeatureError, ValidationError
from .geo import haversine_distance, initial_bearing
from .ingest import CycloneTrack
from .sst import SstGrid, lookup_sst

FEATURE_NAMES = ("lat", "lon", "msws", "ecp", "distance", "direction", "sst")
MSWS_INDEX = FEATURE_NAMES.index("msws")
SCALED_FEATURES = tuple(n for n in FEATURE_NAMES if n != "msws")
_SCALED_INDICES = np.array([FEATURE_NAMES.index(n) for n in SCALED_FEATURES])

#: IMD grade bands: lower edges in knots; values at an edge take the upper band.
GRADE_EDGES = (17.0, 28.0, 34.0, 48.0, 64.0, 90.0, 120.0)

GRADE_LABELS = (
    "Low Pressure Area (LP)",
    "Depression (D)",
    "Deep Depression (DD)",
    "Cyclonic Storm (CS)",
    "Severe Cyclonic Storm (SCS)",
    "Very Severe Cyclonic Storm (VSCS)",
    "Extremely Severe Cyclonic Storm (ESCS)",
    "Super Cyclonic Storm (SS)",
)


@dataclass(frozen=True)
class FeatureFrame:
    """Per-fix feature matrix for one storm, aligned with its timestamps."""

    storm_id: str
    timestamps: tuple[datetime, ...]
    values: np.ndarray  # shape (n_fixes, 7), float64
    scaled: bool = False
    out_of_range: int = 0  # scaled values outside the fit range, informational
    sst_fallbacks: int = 0

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(FEATURE_NAMES):
            raise ValidationError(
                f"feature matrix must be (n, {len(FEATURE_NAMES)}), got {self.values.shape}"
            )
        if self.values.shape[0] != len(self.timestamps):
            raise ValidationError("feature rows do not match timestamps")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def msws(self) -> np.ndarray:
        return self.values[:, MSWS_INDEX]


@dataclass(frozen=True)
class ScalerParams:
    """Fitted min-max parameters mapping [min, max] -> [a, b] per scaled feature."""

    mins: np.ndarray  # aligned with SCALED_FEATURES
    maxs: np.ndarray
    a: float = -1.0
    b: float = 1.0

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "features": {
                name: {"min": float(self.mins[i]), "max": float(self.maxs[i])}
                for i, name in enumerate(SCALED_FEATURES)
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "ScalerParams":
        features = payload["features"]
        missing = [n for n in SCALED_FEATURES if n not in features]
        if missing:
            raise ValidationError(f"scaler file is missing feature(s): {', '.join(missing)}")
        mins = np.array([features[n]["min"] for n in SCALED_FEATURES], dtype=np.float64)
        maxs = np.array([features[n]["max"] for n in SCALED_FEATURES], dtype=np.float64)
        return cls(mins=mins, maxs=maxs, a=float(payload["a"]), b=float(payload["b"]))


def save_scaler(params: ScalerParams, path) -> None:
    Path(path).write_text(params.to_json() + "\n", encoding="utf-8")


def load_scaler(path) -> ScalerParams:
    return ScalerParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def derive_motion_features(track: CycloneTrack) -> np.ndarray:
    """Per-fix (distance_km, direction_deg) from the previous fix.

    Fix 0 gets distance 0 and the direction of the first step (0 for a
    single-fix track). Coincident consecutive fixes yield direction 0.
    """
    if not track.is_complete:
        raise ValidationError(f"storm {track.storm_id}: motion features need a gap-free track")
    n = len(track)
    out = np.zeros((n, 2), dtype=np.float64)
    positions = [(f.lat, f.lon) for f in track.fixes]
    for i in range(1, n):
        out[i, 0] = haversine_distance(positions[i - 1], positions[i])
        out[i, 1] = initial_bearing(positions[i - 1], positions[i])
    if n > 1:
        out[0, 1] = out[1, 1]
    return out


def build_frame(track: CycloneTrack, grid: SstGrid) -> FeatureFrame:
    """Assemble the unscaled seven-feature frame for one gap-free track."""
    if not track.is_complete:
        raise ValidationError(f"storm {track.storm_id}: cannot build features with missing values")
    motion = derive_motion_features(track)
    n = len(track)
    values = np.empty((n, len(FEATURE_NAMES)), dtype=np.float64)
    fallbacks = 0
    for i, fix in enumerate(track.fixes):
        sample = lookup_sst(grid, fix.lat, fix.lon, fix.timestamp)
        fallbacks += int(sample.fallback)
        values[i] = (fix.lat, fix.lon, fix.msws, fix.ecp, motion[i, 0], motion[i, 1], sample.value)
    return FeatureFrame(
        storm_id=track.storm_id,
        timestamps=track.timestamps,
        values=values,
        scaled=False,
        sst_fallbacks=fallbacks,
    )


def fit_scaler(frames: Iterable[FeatureFrame]) -> ScalerParams:
    """Observed min/max per scaled feature over the supplied frames only."""
    frames = list(frames)
    if not frames:
        raise ValidationError("cannot fit a scaler on zero frames")
    if any(f.scaled for f in frames):
        raise ValidationError("fit_scaler expects unscaled frames")
    stacked = np.concatenate([f.values for f in frames], axis=0)
    sub = stacked[:, _SCALED_INDICES]
    mins = sub.min(axis=0)
    maxs = sub.max(axis=0)
    for i, name in enumerate(SCALED_FEATURES):
        if mins[i] == maxs[i]:
            raise DegenerateFeatureError(
                f"feature {name!r} is constant ({mins[i]!r}) over the fit population"
            )
    return ScalerParams(mins=mins, maxs=maxs)


def apply_scaler(params: ScalerParams, frame: FeatureFrame) -> FeatureFrame:
    """Map scaled features into [a, b]; MSWS passes through unchanged.

    Values outside the fit range map outside [a, b] by design; they are
    counted in ``out_of_range``, not rejected.
    """
    if frame.scaled:
        raise ValidationError("frame is already scaled")
    values = frame.values.copy()
    sub = values[:, _SCALED_INDICES]
    span = params.maxs - params.mins
    scaled = params.a + (params.b - params.a) / span * (sub - params.mins)
    outside = int(np.count_nonzero((sub < params.mins) | (sub > params.maxs)))
    values[:, _SCALED_INDICES] = scaled
    return replace(frame, values=values, scaled=True, out_of_range=outside)


def invert_scaler(params: ScalerParams, frame: FeatureFrame) -> FeatureFrame:
    """Exact algebraic inverse of apply_scaler."""
    if not frame.scaled:
        raise ValidationError("frame is not scaled")
    values = frame.values.copy()
    sub = values[:, _SCALED_INDICES]
    span = params.maxs - params.mins
    values[:, _SCALED_INDICES] = params.mins + (sub - params.a) * span / (params.b - params.a)
    return replace(frame, values=values, scaled=False, out_of_range=0)


def scale_value(params: ScalerParams, feature: str, x: float) -> float:
    """Scale a single value of one feature (helper mirroring apply_scaler)."""
    i = SCALED_FEATURES.index(feature)
    return params.a + (params.b - params.a) / (params.maxs[i] - params.mins[i]) * (x - params.mins[i])


def unscale_value(params: ScalerParams, feature: str, y: float) -> float:
    i = SCALED_FEATURES.index(feature)
    return params.mins[i] + (y - params.a) * (params.maxs[i] - params.mins[i]) / (params.b - params.a)


def classify_grade(msws: float) -> int:
    """IMD grade 0..7 for an MSWS in knots. Band edges belong to the upper band."""
    if not math.isfinite(msws) or msws < 0.0:
        raise ValueError(f"msws must be finite and non-negative, got {msws!r}")
    grade = 0
    for edge in GRADE_EDGES:
        if msws >= edge:
            grade += 1
    return grade
