"""Best-track file ingestion: parsing, gap filling, validation.

Input format
------------
Delimited text (comma by default), one row per fix, header row required.
Canonical columns::

    storm_id,name,datetime_utc,lat_deg,lon_deg,ecp_hpa,msws_kt

Missing values are empty fields; datetimes are ``YYYY-MM-DD HH:MM`` in UTC.
A :class:`ColumnMap` adapts files whose columns carry different names.

Timestamps are snapped to the 3-hourly synoptic grid when within 30 minutes
of a grid point; rows further off the grid are dropped with a reason. Tracks
with missing rows or missing values are completed by :func:`impute_linear`,
which inserts absent grid stamps and linearly interpolates each field in
time (edges are back-/forward-filled).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .errors import EmptyInputError, FormatError, UnimputableFieldError, ValidationError

STEP = timedelta(hours=3)
STEP_MINUTES = 180
SNAP_TOLERANCE_MINUTES = 30
DATETIME_FORMAT = "%Y-%m-%d %H:%M"

#: Fields of a fix that hold physical values and take part in imputation.
VALUE_FIELDS = ("lat", "lon", "ecp", "msws")

BASINS = ("AS", "BOB", "OTHER")


@dataclass(frozen=True)
class ColumnMap:
    """Names of the input columns holding each fix field.

    ``name`` and ``basin`` may be None when the file has no such column.
    Basin falls back to a storm-id prefix match (AS/BOB) and then OTHER.
    """

    storm_id: str = "storm_id"
    name: str | None = "name"
    datetime_utc: str = "datetime_utc"
    lat: str = "lat_deg"
    lon: str = "lon_deg"
    ecp: str = "ecp_hpa"
    msws: str = "msws_kt"
    basin: str | None = None
    delimiter: str = ","

    def required_columns(self) -> tuple[str, ...]:
        return (self.storm_id, self.datetime_utc, self.lat, self.lon, self.ecp, self.msws)


CANONICAL_COLUMNS = ("storm_id", "name", "datetime_utc", "lat_deg", "lon_deg", "ecp_hpa", "msws_kt")


@dataclass(frozen=True)
class RawFix:
    """One recorded observation of a storm. None marks a missing value."""

    storm_id: str
    timestamp: datetime  # naive UTC, on the 3-hour grid
    lat: float | None
    lon: float | None
    ecp: float | None
    msws: float | None
    name: str | None = None
    basin: str = "OTHER"

    def value(self, field_name: str) -> float | None:
        return getattr(self, field_name)


@dataclass(frozen=True)
class CycloneTrack:
    """Time-ordered fixes of one storm. May contain gaps before imputation."""

    storm_id: str
    fixes: tuple[RawFix, ...]
    name: str | None = None

    def __len__(self) -> int:
        return len(self.fixes)

    @property
    def timestamps(self) -> tuple[datetime, ...]:
        return tuple(f.timestamp for f in self.fixes)

    @property
    def is_complete(self) -> bool:
        """True when no fix is missing any value field."""
        return all(
            f.value(name) is not None for f in self.fixes for name in VALUE_FIELDS
        )


@dataclass(frozen=True)
class DroppedRecord:
    row: int  # 1-based line number in the input (header is row 1)
    reason: str


@dataclass
class IngestReport:
    """Accounting of one ingest run: every input row is either parsed or dropped."""

    rows_total: int = 0
    storms_parsed: int = 0
    fixes_parsed: int = 0
    fixes_inserted: int = 0
    records_dropped: list[DroppedRecord] = field(default_factory=list)
    values_imputed: dict[str, int] = field(
        default_factory=lambda: {name: 0 for name in VALUE_FIELDS}
    )
    storms_dropped: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def dropped_count(self) -> int:
        return len(self.records_dropped)

    def to_dict(self) -> dict:
        return {
            "rows_total": self.rows_total,
            "storms_parsed": self.storms_parsed,
            "fixes_parsed": self.fixes_parsed,
            "fixes_inserted": self.fixes_inserted,
            "records_dropped": [
                {"row": d.row, "reason": d.reason} for d in self.records_dropped
            ],
            "values_imputed": dict(self.values_imputed),
            "storms_dropped": list(self.storms_dropped),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class TrackViolation:
    index: int
    message: str


def _as_text_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            yield from fh
        return
    if isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8"))
        return
    first = source.read(0)
    if isinstance(first, bytes):
        yield from io.TextIOWrapper(source, encoding="utf-8", newline="")
    else:
        yield from source


def _snap_timestamp(dt: datetime) -> datetime | None:
    """Snap to the nearest 3-hour grid point, or None when more than 30 min off."""
    minutes = dt.hour * 60 + dt.minute
    k = round(minutes / STEP_MINUTES)
    delta = abs(minutes - k * STEP_MINUTES)
    if delta > SNAP_TOLERANCE_MINUTES:
        return None
    midnight = dt.replace(hour=0, minute=0, second=0, microsecond=0)
    return midnight + timedelta(minutes=k * STEP_MINUTES)


def _parse_float(raw: str) -> float | None:
    """Empty string means missing; anything unparseable or non-finite raises."""
    text = raw.strip()
    if not text:
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _basin_for(storm_id: str, explicit: str | None) -> str:
    if explicit:
        token = explicit.strip().upper()
        return token if token in ("AS", "BOB") else "OTHER"
    upper = storm_id.upper()
    for prefix in ("AS", "BOB"):
        if upper.startswith(prefix):
            return prefix
    return "OTHER"


def parse_btd(source, columns: ColumnMap | None = None) -> tuple[list[CycloneTrack], IngestReport]:
    """Parse a best-track file into one (possibly gappy) track per storm.

    ``source`` may be a path, bytes, or an open text/binary stream. Rows that
    cannot be used are counted in the report with a reason, never silently
    dropped. Duplicate (storm_id, timestamp) pairs raise ValidationError.
    """
    columns = columns or ColumnMap()
    lines = _as_text_lines(source)
    reader = csv.reader(lines, delimiter=columns.delimiter)

    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError("input has no header row") from None
    header = [h.strip() for h in header]
    missing = [c for c in columns.required_columns() if c not in header]
    if missing:
        raise FormatError(f"header is missing required column(s): {', '.join(missing)}")
    idx = {name: header.index(name) for name in header}

    def cell(row: list[str], col: str | None) -> str:
        if col is None or col not in idx:
            return ""
        return row[idx[col]]

    report = IngestReport()
    fixes_by_storm: dict[str, list[RawFix]] = {}
    names: dict[str, str] = {}
    seen: dict[tuple[str, datetime], int] = {}

    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue  # blank lines are not data rows
        report.rows_total += 1
        if len(row) != len(header):
            report.records_dropped.append(
                DroppedRecord(line_no, f"wrong field count (got {len(row)}, expected {len(header)})")
            )
            continue

        storm_id = cell(row, columns.storm_id).strip()
        if not storm_id:
            report.records_dropped.append(DroppedRecord(line_no, "missing storm_id"))
            continue

        raw_dt = cell(row, columns.datetime_utc).strip()
        try:
            dt = datetime.strptime(raw_dt, DATETIME_FORMAT)
        except ValueError:
            report.records_dropped.append(
                DroppedRecord(line_no, f"bad datetime {raw_dt!r} (expected YYYY-MM-DD HH:MM)")
            )
            continue
        snapped = _snap_timestamp(dt)
        if snapped is None:
            report.records_dropped.append(
                DroppedRecord(line_no, f"timestamp {raw_dt!r} more than 30 min off the 3-hour grid")
            )
            continue

        values: dict[str, float | None] = {}
        bad_reason = None
        for field_name, col in (("lat", columns.lat), ("lon", columns.lon),
                                ("ecp", columns.ecp), ("msws", columns.msws)):
            try:
                values[field_name] = _parse_float(cell(row, col))
            except ValueError:
                bad_reason = f"non-numeric {field_name} {cell(row, col)!r}"
                break
        if bad_reason is None:
            lat, lon, ecp, msws = values["lat"], values["lon"], values["ecp"], values["msws"]
            if lat is not None and not -90.0 <= lat <= 90.0:
                bad_reason = "lat out of range"
            elif lon is not None and not 0.0 <= lon < 360.0:
                bad_reason = "lon out of range"
            elif ecp is not None and ecp <= 0.0:
                bad_reason = "ecp out of range"
            elif msws is not None and msws < 0.0:
                bad_reason = "msws out of range"
        if bad_reason is not None:
            report.records_dropped.append(DroppedRecord(line_no, bad_reason))
            continue

        key = (storm_id, snapped)
        if key in seen:
            raise ValidationError(
                f"duplicate fix for storm {storm_id} at {snapped.strftime(DATETIME_FORMAT)} "
                f"(rows {seen[key]} and {line_no})"
            )
        seen[key] = line_no

        name = cell(row, columns.name).strip() or None
        fix = RawFix(
            storm_id=storm_id,
            timestamp=snapped,
            lat=values["lat"],
            lon=values["lon"],
            ecp=values["ecp"],
            msws=values["msws"],
            name=name,
            basin=_basin_for(storm_id, cell(row, columns.basin)),
        )
        fixes_by_storm.setdefault(storm_id, []).append(fix)
        if name and storm_id not in names:
            names[storm_id] = name
        report.fixes_parsed += 1

    if report.rows_total == 0:
        raise EmptyInputError("input has no data rows")

    tracks = []
    for storm_id, fixes in fixes_by_storm.items():
        fixes.sort(key=lambda f: f.timestamp)
        tracks.append(
            CycloneTrack(storm_id=storm_id, fixes=tuple(fixes), name=names.get(storm_id))
        )
    report.storms_parsed = len(tracks)
    return tracks, report


def impute_linear(track: CycloneTrack, report: IngestReport | None = None) -> CycloneTrack:
    """Return a gap-free copy of ``track`` on the uniform 3-hour grid.

    Absent grid stamps between the first and last fix are inserted as
    all-missing rows first; each field is then linearly interpolated in time
    between its nearest present neighbors. Leading/trailing missing values
    take the first/last present value. Counts go into ``report`` when given.

    Raises UnimputableFieldError when a field is missing in every fix.
    """
    if not track.fixes:
        raise ValidationError(f"storm {track.storm_id}: empty track cannot be imputed")
    for field_name in VALUE_FIELDS:
        if all(f.value(field_name) is None for f in track.fixes):
            raise UnimputableFieldError(
                f"storm {track.storm_id}: field {field_name!r} is missing in every fix"
            )

    t0 = track.fixes[0].timestamp
    span = track.fixes[-1].timestamp - t0
    n_steps = int(round(span / STEP)) + 1
    by_time = {f.timestamp: f for f in track.fixes}
    grid = [t0 + STEP * i for i in range(n_steps)]
    inserted = sum(1 for ts in grid if ts not in by_time)

    columns: dict[str, np.ndarray] = {}
    imputed: dict[str, int] = {}
    for field_name in VALUE_FIELDS:
        raw = [
            by_time[ts].value(field_name) if ts in by_time else None for ts in grid
        ]
        present = np.array([v is not None for v in raw])
        values = np.array([v if v is not None else np.nan for v in raw], dtype=np.float64)
        missing = int((~present).sum())
        if missing:
            xp = np.nonzero(present)[0]
            values = np.interp(np.arange(len(grid)), xp, values[xp])
        columns[field_name] = values
        imputed[field_name] = missing

    fixes = tuple(
        RawFix(
            storm_id=track.storm_id,
            timestamp=ts,
            lat=float(columns["lat"][i]),
            lon=float(columns["lon"][i]),
            ecp=float(columns["ecp"][i]),
            msws=float(columns["msws"][i]),
            name=by_time[ts].name if ts in by_time else track.name,
            basin=by_time[ts].basin if ts in by_time else track.fixes[0].basin,
        )
        for i, ts in enumerate(grid)
    )
    if report is not None:
        report.fixes_inserted += inserted
        for field_name, count in imputed.items():
            report.values_imputed[field_name] += count
    return replace(track, fixes=fixes)


def validate_track(track: CycloneTrack) -> list[TrackViolation]:
    """Report every invariant violation (ordering, spacing, ranges, gaps)."""
    violations: list[TrackViolation] = []
    for i, fix in enumerate(track.fixes):
        if i > 0:
            dt = fix.timestamp - track.fixes[i - 1].timestamp
            if dt == timedelta(0):
                violations.append(TrackViolation(i, f"duplicate timestamp at index {i}"))
            elif dt < timedelta(0):
                violations.append(TrackViolation(i, f"non-increasing timestamp at index {i}"))
            elif dt != STEP:
                violations.append(TrackViolation(i, f"spacing != 3h at index {i}"))
        for field_name in VALUE_FIELDS:
            value = fix.value(field_name)
            if value is None:
                violations.append(TrackViolation(i, f"missing {field_name} at index {i}"))
        if fix.lat is not None and not -90.0 <= fix.lat <= 90.0:
            violations.append(TrackViolation(i, f"lat out of range at index {i}"))
        if fix.lon is not None and not 0.0 <= fix.lon < 360.0:
            violations.append(TrackViolation(i, f"lon out of range at index {i}"))
        if fix.ecp is not None and fix.ecp <= 0.0:
            violations.append(TrackViolation(i, f"ecp out of range at index {i}"))
        if fix.msws is not None and fix.msws < 0.0:
            violations.append(TrackViolation(i, f"msws out of range at index {i}"))
    return violations


def _format_value(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_tracks_csv(tracks: Sequence[CycloneTrack], destination) -> None:
    """Write tracks in the canonical input format (floats round-trip exactly)."""
    own = isinstance(destination, (str, Path))
    fh: IO[str] = open(destination, "w", encoding="utf-8", newline="") if own else destination
    try:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_COLUMNS)
        for track in tracks:
            for fix in track.fixes:
                writer.writerow(
                    [
                        fix.storm_id,
                        fix.name or "",
                        fix.timestamp.strftime(DATETIME_FORMAT),
                        _format_value(fix.lat),
                        _format_value(fix.lon),
                        _format_value(fix.ecp),
                        _format_value(fix.msws),
                    ]
                )
    finally:
        if own:
            fh.close()


def tracks_to_csv(tracks: Sequence[CycloneTrack]) -> str:
    buf = io.StringIO()
    write_tracks_csv(tracks, buf)
    return buf.getvalue()


def ingest(source, columns: ColumnMap | None = None) -> tuple[list[CycloneTrack], IngestReport]:
    """Parse, impute and validate: the full ingest pipeline for one file.

    Storms with a field missing in every fix are dropped with a warning in
    the report rather than failing the whole run.
    """
    tracks, report = parse_btd(source, columns)
    complete: list[CycloneTrack] = []
    for track in tracks:
        try:
            filled = impute_linear(track, report)
        except UnimputableFieldError as exc:
            report.storms_dropped.append({"storm_id": track.storm_id, "reason": str(exc)})
            report.warnings.append(f"storm {track.storm_id} dropped: {exc}")
            continue
        problems = validate_track(filled)
        if problems:
            # impute_linear output should always validate; treat anything else as data corruption
            raise ValidationError(
                f"storm {track.storm_id}: invalid after imputation: {problems[0].message}"
            )
        complete.append(filled)
    report.storms_parsed = len(complete)
    return complete, report
