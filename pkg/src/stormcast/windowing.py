"""Supervised-window construction and storm-level data partitioning.

A window pairs t1 consecutive scaled feature rows with the next t2 MSWS
values (unscaled knots). Windows never cross storm boundaries. Folds and
holdouts are assigned at storm granularity so near-duplicate windows of one
storm can never leak between training and validation.

Window datasets can be cached as a flat binary file: an 8-field header
(magic ``TCWD``, version, t1, t2, feature count, sample count as uint32 LE)
followed by the input matrices and target vectors as little-endian 32-bit
floats in row-major order, then a JSON trailer with per-sample identities.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import FormatError, InsufficientDataError, ValidationError
from .features import FEATURE_NAMES, MSWS_INDEX, FeatureFrame
from .ingest import CycloneTrack

MAGIC = b"TCWD"
CACHE_VERSION = 1


@dataclass(frozen=True)
class WindowSpec:
    """t1 observed input steps and t2 forecast steps, both at 3-hour spacing."""

    t1: int
    t2: int

    def __post_init__(self) -> None:
        if self.t1 < 1 or self.t2 < 1:
            raise ValueError(f"t1 and t2 must be >= 1, got ({self.t1}, {self.t2})")

    @property
    def length(self) -> int:
        return self.t1 + self.t2


@dataclass(frozen=True)
class WindowSample:
    """One training example: t1 x 7 scaled inputs and t2 unscaled MSWS targets."""

    storm_id: str
    start: int
    input: np.ndarray  # (t1, 7) float64
    target: np.ndarray  # (t2,) float64, knots


@dataclass(frozen=True)
class FoldPlan:
    """Storm-level fold assignment; holdout storms belong to no fold."""

    k: int
    assignment: dict[str, int]
    holdout: frozenset[str] = frozenset()

    def fold_members(self, fold: int) -> tuple[str, ...]:
        return tuple(sorted(s for s, f in self.assignment.items() if f == fold))

    def training_members(self, fold: int) -> tuple[str, ...]:
        return tuple(sorted(s for s, f in self.assignment.items() if f != fold))


def build_windows(frame: FeatureFrame, spec: WindowSpec) -> list[WindowSample]:
    """All max(0, L - (t1 + t2) + 1) windows of a scaled frame, in start order."""
    if not frame.scaled:
        raise ValidationError(f"storm {frame.storm_id}: build_windows needs a scaled frame")
    n = len(frame)
    samples: list[WindowSample] = []
    for start in range(n - spec.length + 1):
        inputs = frame.values[start : start + spec.t1].copy()
        target = frame.values[start + spec.t1 : start + spec.length, MSWS_INDEX].copy()
        samples.append(
            WindowSample(storm_id=frame.storm_id, start=start, input=inputs, target=target)
        )
    return samples


def window_count(length: int, spec: WindowSpec) -> int:
    return max(0, length - spec.length + 1)


def count_windows(tracks: Iterable[CycloneTrack | FeatureFrame], spec: WindowSpec) -> tuple[int, int]:
    """(total window count, number of storms contributing at least one window)."""
    total = 0
    contributing = 0
    for track in tracks:
        count = window_count(len(track), spec)
        total += count
        contributing += int(count > 0)
    return total, contributing


def kfold_split(
    storm_ids: Sequence[str], k: int, seed: int, holdout: Iterable[str] = ()
) -> FoldPlan:
    """Deterministic storm-level folds: seeded shuffle, round-robin assignment.

    Storm ids are sorted before shuffling, so the plan depends only on the id
    set, k, and seed, never on input order. Fold sizes differ by at most one.
    """
    ids = sorted(storm_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("storm_ids contains duplicates")
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if len(ids) < k:
        raise InsufficientDataError(f"cannot split {len(ids)} storms into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    assignment = {ids[int(pos)]: i % k for i, pos in enumerate(order)}
    return FoldPlan(k=k, assignment=assignment, holdout=frozenset(holdout))


def holdout_by_name(
    tracks: Sequence[CycloneTrack], names: Iterable[str]
) -> tuple[list[CycloneTrack], list[CycloneTrack], list[str]]:
    """Split off named storms (case-insensitive) for held-out testing.

    Returns (remaining, holdout, unmatched_names); an unmatched name is a
    warning for the caller's report, not an error.
    """
    wanted = {n.strip().upper() for n in names if n.strip()}
    remaining: list[CycloneTrack] = []
    holdout: list[CycloneTrack] = []
    matched: set[str] = set()
    for track in tracks:
        key = (track.name or "").upper()
        if key and key in wanted:
            holdout.append(track)
            matched.add(key)
        else:
            remaining.append(track)
    unmatched = sorted(wanted - matched)
    return remaining, holdout, unmatched


def write_window_file(destination, samples: Sequence[WindowSample], spec: WindowSpec) -> None:
    """Serialize windows to the flat binary cache format (float32 payload)."""
    n = len(samples)
    inputs = np.zeros((n, spec.t1, len(FEATURE_NAMES)), dtype="<f4")
    targets = np.zeros((n, spec.t2), dtype="<f4")
    for i, sample in enumerate(samples):
        if sample.input.shape != (spec.t1, len(FEATURE_NAMES)) or sample.target.shape != (spec.t2,):
            raise ValidationError(f"sample {i} does not match spec ({spec.t1}, {spec.t2})")
        inputs[i] = sample.input
        targets[i] = sample.target
    identities = json.dumps(
        [{"storm_id": s.storm_id, "start": s.start} for s in samples],
        sort_keys=True,
    ).encode("utf-8")

    own = isinstance(destination, (str, Path))
    fh: IO[bytes] = open(destination, "wb") if own else destination
    try:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", CACHE_VERSION, spec.t1, spec.t2, len(FEATURE_NAMES), n))
        fh.write(inputs.tobytes())
        fh.write(targets.tobytes())
        fh.write(struct.pack("<I", len(identities)))
        fh.write(identities)
    finally:
        if own:
            fh.close()


def read_window_file(source) -> tuple[list[WindowSample], WindowSpec]:
    """Inverse of write_window_file. Values come back as float64 (exact upcast)."""
    own = isinstance(source, (str, Path))
    fh: IO[bytes] = open(source, "rb") if own else source
    try:
        blob = fh.read()
    finally:
        if own:
            fh.close()
    if blob[:4] != MAGIC:
        raise FormatError("not a window cache file (bad magic)")
    version, t1, t2, n_features, n = struct.unpack_from("<5I", blob, 4)
    if version != CACHE_VERSION:
        raise FormatError(f"unsupported window cache version {version}")
    if n_features != len(FEATURE_NAMES):
        raise FormatError(f"window cache has {n_features} features, expected {len(FEATURE_NAMES)}")
    offset = 4 + 5 * 4
    n_in = n * t1 * n_features
    n_tg = n * t2
    inputs = np.frombuffer(blob, dtype="<f4", count=n_in, offset=offset).reshape(n, t1, n_features)
    offset += n_in * 4
    targets = np.frombuffer(blob, dtype="<f4", count=n_tg, offset=offset).reshape(n, t2)
    offset += n_tg * 4
    (trailer_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    identities = json.loads(blob[offset : offset + trailer_len].decode("utf-8"))
    if len(identities) != n:
        raise FormatError("window cache trailer does not match sample count")
    spec = WindowSpec(t1=t1, t2=t2)
    samples = [
        WindowSample(
            storm_id=meta["storm_id"],
            start=int(meta["start"]),
            input=inputs[i].astype(np.float64),
            target=targets[i].astype(np.float64),
        )
        for i, meta in enumerate(identities)
    ]
    return samples, spec


def stack_windows(samples: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Batch a window list into (inputs (N, t1, 7), targets (N, t2)) arrays."""
    if not samples:
        raise InsufficientDataError("no windows to stack")
    inputs = np.stack([s.input for s in samples]).astype(np.float64)
    targets = np.stack([s.target for s in samples]).astype(np.float64)
    return inputs, targets
