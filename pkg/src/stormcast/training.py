"""Training, cross-validation, held-out testing, and forecasting.

Scalers are always fitted on training storms only; validation folds and
held-out storms never influence scaler fitting or gradients (they do drive
early stopping where a validation set exists, which is their declared job).
Metrics are pooled: MAE/RMSE over every predicted value of every window
(window count x t2 values), in knots.

Everything is deterministic for a fixed config: fold assignment depends only
on the storm-id set, per-fold training seeds derive as seed + fold index,
and the batch shuffle and dropout draws come from one seeded stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, TrainingDivergedError
from .features import (
    MSWS_INDEX,
    FeatureFrame,
    ScalerParams,
    apply_scaler,
    build_frame,
    fit_scaler,
)
from .ingest import STEP, CycloneTrack, DATETIME_FORMAT
from .network import NetworkParams, backward, init_params, mse_loss, stacked_forward
from .optim import AdamState, adam_step
from .sst import SstGrid
from .windowing import (
    WindowSample,
    WindowSpec,
    build_windows,
    count_windows,
    holdout_by_name,
    kfold_split,
    stack_windows,
)

EVAL_CHUNK = 512  # windows per eval-mode forward, keeps cache memory bounded


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run (defaults follow the model recipe)."""

    t1: int = 4
    t2: int = 1
    hidden_size: int = 64
    layers: int = 4
    learning_rate: float = 0.01
    dropout: float = 0.02
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    folds: int = 5

    def __post_init__(self) -> None:
        for name in ("t1", "t2", "hidden_size", "layers", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(t1=self.t1, t2=self.t2)


@dataclass
class TrainHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)  # NaN entries when no val set
    best_epoch: int = 0
    stopped_epoch: int = 0


def predict(net: NetworkParams, inputs: np.ndarray, chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Eval-mode predictions (N, t2) for a window batch, chunked for memory."""
    inputs = np.asarray(inputs, dtype=np.float64)
    outs = []
    for lo in range(0, inputs.shape[0], chunk):
        pred, _ = stacked_forward(net, inputs[lo : lo + chunk], train=False)
        outs.append(pred)
    return np.concatenate(outs, axis=0)


def _pooled(preds: np.ndarray, targets: np.ndarray) -> tuple[float, float, int, float, float]:
    err = preds - targets
    n = err.size
    sum_abs = float(np.sum(np.abs(err)))
    sum_sq = float(np.sum(err**2))
    return sum_abs / n, math.sqrt(sum_sq / n), n, sum_abs, sum_sq


def train(
    config: TrainConfig,
    train_windows: Sequence[WindowSample],
    val_windows: Sequence[WindowSample] = (),
) -> tuple[NetworkParams, TrainHistory]:
    """Mini-batch Adam on MSE with early stopping.

    Selection metric is the validation MAE when ``val_windows`` is non-empty,
    otherwise the training MSE; the returned parameters are from the best
    epoch under that metric. Raises TrainingDivergedError naming the epoch
    and batch if the loss goes non-finite.
    """
    if not train_windows:
        raise InsufficientDataError("training set is empty")
    x, y = stack_windows(train_windows)
    has_val = len(val_windows) > 0
    if has_val:
        xv, yv = stack_windows(val_windows)

    net = init_params(
        hidden_size=config.hidden_size,
        layer_count=config.layers,
        t1=config.t1,
        t2=config.t2,
        dropout=config.dropout,
        seed=config.seed,
        input_size=x.shape[2],
    )
    adam = AdamState.for_params(net, learning_rate=config.learning_rate)
    rng = np.random.default_rng([config.seed, 0x5EED])  # shuffle + dropout stream

    history = TrainHistory()
    best_metric = math.inf
    best_params = net.copy()
    best_epoch = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(x.shape[0])
        for batch_no, lo in enumerate(range(0, x.shape[0], config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            pred, cache = stacked_forward(net, x[idx], train=True, rng=rng)
            loss, dpred = mse_loss(pred, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch} batch {batch_no}"
                )
            grads = backward(net, cache, dpred)
            adam_step(adam, net, grads)

        train_pred = predict(net, x)
        train_mse = float(np.mean((train_pred - y) ** 2))
        if not math.isfinite(train_mse):
            raise TrainingDivergedError(f"training MSE became non-finite at epoch {epoch}")
        history.train_mse.append(train_mse)
        if has_val:
            val_pred = predict(net, xv)
            val_mae = float(np.mean(np.abs(val_pred - yv)))
            history.val_mae.append(val_mae)
            metric = val_mae
        else:
            history.val_mae.append(float("nan"))
            metric = train_mse

        if metric < best_metric:
            best_metric = metric
            best_params = net.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= config.patience:
            break

    history.best_epoch = best_epoch
    history.stopped_epoch = len(history.train_mse) - 1
    return best_params, history


def evaluate(net: NetworkParams, windows: Sequence[WindowSample]) -> tuple[float, float]:
    """(MAE, RMSE) pooled over all predicted values, in knots."""
    if not windows:
        raise InsufficientDataError("cannot evaluate on zero windows")
    x, y = stack_windows(windows)
    mae, rmse, _, _, _ = _pooled(predict(net, x), y)
    return mae, rmse


def persistence_baseline(windows: Sequence[WindowSample]) -> tuple[float, float]:
    """Repeat the last observed MSWS for every horizon step; pooled (MAE, RMSE)."""
    if not windows:
        raise InsufficientDataError("cannot evaluate on zero windows")
    x, y = stack_windows(windows)
    base = x[:, -1, MSWS_INDEX][:, None]
    mae, rmse, _, _, _ = _pooled(np.broadcast_to(base, y.shape), y)
    return mae, rmse


@dataclass
class FoldResult:
    fold: int
    train_storms: int
    val_storms: int
    train_windows: int
    val_windows: int
    mae: float
    rmse: float
    persistence_mae: float
    persistence_rmse: float
    n_values: int
    sum_abs_error: float
    sum_sq_error: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HoldoutResult:
    storm_id: str
    name: str | None
    windows: int
    skipped: bool
    mae: float | None = None
    rmse: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    """Cross-validation and held-out-storm metrics for one (t1, t2) pair."""

    t1: int
    t2: int
    config: dict
    folds: list[FoldResult] = field(default_factory=list)
    mean_mae: float = float("nan")
    mean_rmse: float = float("nan")
    persistence_mae: float = float("nan")
    persistence_rmse: float = float("nan")
    total_windows: int = 0
    contributing_storms: int = 0
    holdout: list[HoldoutResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "t1": self.t1,
            "t2": self.t2,
            "config": self.config,
            "folds": [f.to_dict() for f in self.folds],
            "mean_mae": self.mean_mae,
            "mean_rmse": self.mean_rmse,
            "persistence_mae": self.persistence_mae,
            "persistence_rmse": self.persistence_rmse,
            "total_windows": self.total_windows,
            "contributing_storms": self.contributing_storms,
            "holdout": [h.to_dict() for h in self.holdout],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class ForecastResult:
    """One issued forecast: t2 predicted MSWS values after the anchor time."""

    storm_id: str
    anchor: datetime
    valid_times: tuple[datetime, ...]
    predicted: tuple[float, ...]
    baseline: tuple[float, ...]
    actual: tuple[float, ...] | None = None


def _scaled_frames(
    frames: dict[str, FeatureFrame], scaler: ScalerParams, ids: Iterable[str]
) -> list[FeatureFrame]:
    return [apply_scaler(scaler, frames[sid]) for sid in sorted(ids)]


def _windows_for(frames: Sequence[FeatureFrame], spec: WindowSpec) -> list[WindowSample]:
    out: list[WindowSample] = []
    for frame in frames:
        out.extend(build_windows(frame, spec))
    return out


def build_frames(tracks: Sequence[CycloneTrack], grid: SstGrid) -> dict[str, FeatureFrame]:
    return {t.storm_id: build_frame(t, grid) for t in tracks}


def prepare_windows(
    spec: WindowSpec,
    tracks: Sequence[CycloneTrack],
    grid: SstGrid,
    scaler: ScalerParams,
) -> list[WindowSample]:
    """Scale every track's frame with ``scaler`` and window it, in storm-id order."""
    frames = build_frames(tracks, grid)
    return _windows_for(_scaled_frames(frames, scaler, frames.keys()), spec)


def cross_validate(
    config: TrainConfig, tracks: Sequence[CycloneTrack], grid: SstGrid
) -> EvalReport:
    """k-fold cross-validation split by storm; per-fold scaler fit on training storms."""
    spec = config.window
    total_windows, contributing = count_windows(tracks, spec)
    if contributing < config.folds:
        raise InsufficientDataError(
            f"need at least {config.folds} storms with windows, have {contributing}"
        )
    frames = build_frames(tracks, grid)
    plan = kfold_split(sorted(frames), config.folds, config.seed)

    report = EvalReport(
        t1=config.t1,
        t2=config.t2,
        config=asdict(config),
        total_windows=total_windows,
        contributing_storms=contributing,
    )
    sums = {"abs": 0.0, "sq": 0.0, "n": 0, "p_abs": 0.0, "p_sq": 0.0}
    for fold in range(config.folds):
        train_ids = plan.training_members(fold)
        val_ids = plan.fold_members(fold)
        scaler = fit_scaler([frames[sid] for sid in train_ids])
        train_windows = _windows_for(_scaled_frames(frames, scaler, train_ids), spec)
        val_windows = _windows_for(_scaled_frames(frames, scaler, val_ids), spec)
        if not train_windows or not val_windows:
            raise InsufficientDataError(
                f"fold {fold}: {len(train_windows)} training / {len(val_windows)} validation windows"
            )
        fold_config = replace(config, seed=config.seed + fold)
        net, _ = train(fold_config, train_windows, val_windows)
        xv, yv = stack_windows(val_windows)
        mae, rmse, n, sum_abs, sum_sq = _pooled(predict(net, xv), yv)
        p_mae, p_rmse = persistence_baseline(val_windows)
        report.folds.append(
            FoldResult(
                fold=fold,
                train_storms=len(train_ids),
                val_storms=len(val_ids),
                train_windows=len(train_windows),
                val_windows=len(val_windows),
                mae=mae,
                rmse=rmse,
                persistence_mae=p_mae,
                persistence_rmse=p_rmse,
                n_values=n,
                sum_abs_error=sum_abs,
                sum_sq_error=sum_sq,
            )
        )
        sums["abs"] += sum_abs
        sums["sq"] += sum_sq
        sums["n"] += n
        sums["p_abs"] += p_mae * n
        sums["p_sq"] += p_rmse**2 * n
    report.mean_mae = sums["abs"] / sums["n"]
    report.mean_rmse = math.sqrt(sums["sq"] / sums["n"])
    report.persistence_mae = sums["p_abs"] / sums["n"]
    report.persistence_rmse = math.sqrt(sums["p_sq"] / sums["n"])
    return report


def fit_full(
    config: TrainConfig, tracks: Sequence[CycloneTrack], grid: SstGrid
) -> tuple[NetworkParams, ScalerParams, int, TrainHistory]:
    """Fit the scaler and train one model on every window of the given storms."""
    spec = config.window
    frames = build_frames(tracks, grid)
    if not frames:
        raise InsufficientDataError("no storms to train on")
    scaler = fit_scaler(frames.values())
    windows = _windows_for(_scaled_frames(frames, scaler, frames.keys()), spec)
    if not windows:
        raise InsufficientDataError(
            f"0 training windows: no storm reaches {spec.length} fixes for t1={spec.t1}, t2={spec.t2}"
        )
    net, history = train(config, windows, ())
    return net, scaler, len(windows), history


def evaluate_holdout(
    net: NetworkParams,
    scaler: ScalerParams,
    tracks: Sequence[CycloneTrack],
    grid: SstGrid,
) -> tuple[list[HoldoutResult], list[ForecastResult]]:
    """Per-storm metrics on held-out storms, plus every window's forecast."""
    spec = WindowSpec(t1=net.t1, t2=net.t2)
    results: list[HoldoutResult] = []
    forecasts: list[ForecastResult] = []
    for track in tracks:
        frame = apply_scaler(scaler, build_frame(track, grid))
        windows = build_windows(frame, spec)
        if not windows:
            results.append(
                HoldoutResult(
                    storm_id=track.storm_id, name=track.name, windows=0, skipped=True
                )
            )
            continue
        x, y = stack_windows(windows)
        preds = predict(net, x)
        mae, rmse, _, _, _ = _pooled(preds, y)
        results.append(
            HoldoutResult(
                storm_id=track.storm_id,
                name=track.name,
                windows=len(windows),
                skipped=False,
                mae=mae,
                rmse=rmse,
            )
        )
        for w, pred in zip(windows, preds):
            anchor = frame.timestamps[w.start + spec.t1 - 1]
            forecasts.append(
                ForecastResult(
                    storm_id=track.storm_id,
                    anchor=anchor,
                    valid_times=tuple(anchor + STEP * (j + 1) for j in range(spec.t2)),
                    predicted=tuple(float(v) for v in pred),
                    baseline=tuple([float(w.input[-1, MSWS_INDEX])] * spec.t2),
                    actual=tuple(float(v) for v in w.target),
                )
            )
    return results, forecasts


def forecast(
    net: NetworkParams, scaler: ScalerParams, track: CycloneTrack, grid: SstGrid
) -> ForecastResult:
    """Forecast t2 future MSWS values from the last t1 fixes of a track prefix."""
    t1 = net.t1
    if len(track) < t1:
        raise InsufficientDataError(
            f"forecast needs at least {t1} observed fixes, got {len(track)}"
        )
    frame = apply_scaler(scaler, build_frame(track, grid))
    window = frame.values[-t1:]
    pred, _ = stacked_forward(net, window, train=False)
    if not np.all(np.isfinite(pred)):
        raise TrainingDivergedError(f"non-finite forecast for storm {track.storm_id}")
    anchor = track.timestamps[-1]
    last_msws = float(track.fixes[-1].msws)
    return ForecastResult(
        storm_id=track.storm_id,
        anchor=anchor,
        valid_times=tuple(anchor + STEP * (j + 1) for j in range(net.t2)),
        predicted=tuple(float(v) for v in pred),
        baseline=tuple([last_msws] * net.t2),
        actual=None,
    )


def evaluate_pair(
    config: TrainConfig,
    tracks: Sequence[CycloneTrack],
    grid: SstGrid,
    holdout_names: Iterable[str] = (),
) -> EvalReport:
    """Full protocol for one (t1, t2): holdout split, k-fold CV, holdout test."""
    remaining, held, unmatched = holdout_by_name(tracks, holdout_names)
    report = cross_validate(config, remaining, grid)
    for name in unmatched:
        report.warnings.append(f"holdout name {name!r} matched no storm")
    if held:
        net, scaler, _, _ = fit_full(config, remaining, grid)
        holdout_rows, _ = evaluate_holdout(net, scaler, held, grid)
        report.holdout = holdout_rows
    return report


FORECAST_HEADER = "storm_id,anchor_time,step,valid_time,predicted_kt,actual_kt,baseline_kt"


def forecast_table(results: Sequence[ForecastResult]) -> str:
    """Delimited forecast export, one row per horizon step (floats round-trip)."""
    lines = [FORECAST_HEADER]
    for r in results:
        for j in range(len(r.predicted)):
            actual = repr(r.actual[j]) if r.actual is not None else ""
            lines.append(
                ",".join(
                    (
                        r.storm_id,
                        r.anchor.strftime(DATETIME_FORMAT),
                        str(j + 1),
                        r.valid_times[j].strftime(DATETIME_FORMAT),
                        repr(r.predicted[j]),
                        actual,
                        repr(r.baseline[j]),
                    )
                )
            )
    return "\n".join(lines) + "\n"


def parse_forecast_table(text: str) -> list[ForecastResult]:
    """Inverse of forecast_table (used for round-trip verification)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FORECAST_HEADER:
        raise ValueError("not a forecast table")
    grouped: dict[tuple[str, str], list[list[str]]] = {}
    order: list[tuple[str, str]] = []
    for line in lines[1:]:
        parts = line.split(",")
        key = (parts[0], parts[1])
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(parts)
    results = []
    for key in order:
        rows = sorted(grouped[key], key=lambda p: int(p[2]))
        has_actual = rows[0][5] != ""
        results.append(
            ForecastResult(
                storm_id=key[0],
                anchor=datetime.strptime(key[1], DATETIME_FORMAT),
                valid_times=tuple(datetime.strptime(p[3], DATETIME_FORMAT) for p in rows),
                predicted=tuple(float(p[4]) for p in rows),
                baseline=tuple(float(p[6]) for p in rows),
                actual=tuple(float(p[5]) for p in rows) if has_actual else None,
            )
        )
    return results


def report_table(reports: Sequence[EvalReport]) -> str:
    """Delimited results table: one row per (t1, t2) pair.

    Columns: t1, t2, window and storm counts, validation MAE, per-holdout
    MAE, validation RMSE, per-holdout RMSE (empty cells for skipped storms).
    """
    names: list[str] = []
    for report in reports:
        for row in report.holdout:
            label = row.name or row.storm_id
            if label not in names:
                names.append(label)
    header = ["t1", "t2", "windows", "storms", "val_mae"]
    header += [f"{n}_mae" for n in names]
    header += ["val_rmse"]
    header += [f"{n}_rmse" for n in names]
    lines = [",".join(header)]
    for report in reports:
        by_label = {(row.name or row.storm_id): row for row in report.holdout}

        def cell(label: str, attr: str) -> str:
            row = by_label.get(label)
            if row is None or row.skipped:
                return ""
            return f"{getattr(row, attr):.4f}"

        fields = [
            str(report.t1),
            str(report.t2),
            str(report.total_windows),
            str(report.contributing_storms),
            f"{report.mean_mae:.4f}",
        ]
        fields += [cell(n, "mae") for n in names]
        fields += [f"{report.mean_rmse:.4f}"]
        fields += [cell(n, "rmse") for n in names]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"
