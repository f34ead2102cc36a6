"""Command-line front end.

Commands: ``ingest``, ``train``, ``cv``, ``evaluate``, ``forecast``,
``export-plot-data``. All behavior is driven by a JSON config file (see
README for the schema); flags override config values. Exit codes are a
stable scripting contract: 0 success, 1 domain/data error, 2 usage/IO error.

Every command is deterministic: identical inputs, config, and seed produce
byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, StormcastError
from .features import load_scaler, save_scaler
from .ingest import (
    DATETIME_FORMAT,
    ColumnMap,
    CycloneTrack,
    ingest,
    write_tracks_csv,
)
from .network import load_checkpoint, save_checkpoint
from .sst import load_sst_csv
from .training import (
    TrainConfig,
    evaluate_holdout,
    evaluate_pair,
    fit_full,
    forecast,
    forecast_table,
    persistence_baseline,
    predict,
    prepare_windows,
    report_table,
)
from .windowing import holdout_by_name, read_window_file, stack_windows, write_window_file

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad invocation or missing input file; maps to exit code 2."""


@dataclass
class RunConfig:
    btd_path: str | None = None
    sst_path: str | None = None
    out_dir: str = "out"
    checkpoint: str = "model.ckpt"
    scaler_file: str = "scaler.json"
    track_cache: str = "tracks_clean.csv"
    train: TrainConfig = field(default_factory=TrainConfig)
    holdout_names: list[str] = field(default_factory=list)
    columns: ColumnMap = field(default_factory=ColumnMap)
    cv_grid: list[tuple[int, int]] = field(default_factory=list)

    def out_path(self, name: str) -> Path:
        return Path(self.out_dir) / name

    def grid(self) -> list[tuple[int, int]]:
        return self.cv_grid or [(self.train.t1, self.train.t2)]


_CONFIG_KEYS = {"paths", "window", "train", "holdout_names", "columns", "cv_grid"}
_PATH_KEYS = {"btd", "sst", "out", "checkpoint", "scaler", "track_cache"}


def load_config(path: str | None) -> RunConfig:
    """Build a RunConfig from a JSON file, with full defaulting."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from None
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")

    paths = payload.get("paths", {})
    bad = set(paths) - _PATH_KEYS
    if bad:
        raise UsageError(f"unknown paths key(s): {', '.join(sorted(bad))}")
    cfg.btd_path = paths.get("btd", cfg.btd_path)
    cfg.sst_path = paths.get("sst", cfg.sst_path)
    cfg.out_dir = paths.get("out", cfg.out_dir)
    cfg.checkpoint = paths.get("checkpoint", cfg.checkpoint)
    cfg.scaler_file = paths.get("scaler", cfg.scaler_file)
    cfg.track_cache = paths.get("track_cache", cfg.track_cache)

    train_kwargs = dict(payload.get("train", {}))
    window = payload.get("window", {})
    if "t1" in window:
        train_kwargs["t1"] = window["t1"]
    if "t2" in window:
        train_kwargs["t2"] = window["t2"]
    try:
        cfg.train = TrainConfig(**train_kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train/window config: {exc}") from None

    cfg.holdout_names = [str(n) for n in payload.get("holdout_names", [])]
    if "columns" in payload:
        try:
            cfg.columns = ColumnMap(**payload["columns"])
        except TypeError as exc:
            raise UsageError(f"bad columns config: {exc}") from None
    cfg.cv_grid = [(int(a), int(b)) for a, b in payload.get("cv_grid", [])]
    return cfg


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"no {what} configured")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _load_cached_tracks(cfg: RunConfig) -> list[CycloneTrack]:
    cache = cfg.out_path(cfg.track_cache)
    if not cache.is_file():
        raise UsageError(f"track cache not found: {cache} (run `stormcast ingest` first)")
    tracks, _ = ingest(str(cache))  # cache is canonical format
    return tracks


def _load_model(cfg: RunConfig):
    ckpt = cfg.out_path(cfg.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"checkpoint not found: {ckpt} (run `stormcast train` first)")
    net, header = load_checkpoint(ckpt)
    scaler_path = cfg.out_path(header.get("scaler_file") or cfg.scaler_file)
    if not scaler_path.is_file():
        raise UsageError(f"scaler file not found: {scaler_path}")
    return net, load_scaler(scaler_path)


def cmd_ingest(cfg: RunConfig, args: argparse.Namespace) -> int:
    source = _require_file(cfg.btd_path, "best-track input")
    tracks, report = ingest(str(source), cfg.columns)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tracks_csv(tracks, cfg.out_path(cfg.track_cache))
    cfg.out_path("ingest_report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    _say(
        args.quiet,
        f"ingested {report.storms_parsed} storms / {report.fixes_parsed} fixes "
        f"({report.dropped_count} rows dropped, "
        f"{sum(report.values_imputed.values())} values imputed) -> {cfg.out_path(cfg.track_cache)}",
    )
    return EXIT_OK


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    tracks = _load_cached_tracks(cfg)
    grid = load_sst_csv(str(_require_file(cfg.sst_path, "SST input")))
    remaining, held, unmatched = holdout_by_name(tracks, cfg.holdout_names)
    for name in unmatched:
        _say(args.quiet, f"warning: holdout name {name!r} matched no storm")
    net, scaler, n_windows, history = fit_full(cfg.train, remaining, grid)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_scaler(scaler, cfg.out_path(cfg.scaler_file))
    save_checkpoint(
        cfg.out_path(cfg.checkpoint), net, seed=cfg.train.seed, scaler_file=cfg.scaler_file
    )
    _say(
        args.quiet,
        f"trained on {n_windows} windows from {len(remaining)} storms "
        f"({len(held)} held out); final train MSE {history.train_mse[-1]:.4f} "
        f"-> {cfg.out_path(cfg.checkpoint)}",
    )
    if args.dump_windows:
        windows = prepare_windows(cfg.train.window, remaining, grid, scaler)
        write_window_file(args.dump_windows, windows, cfg.train.window)
        _say(args.quiet, f"wrote {len(windows)} windows -> {args.dump_windows}")
    return EXIT_OK


def cmd_cv(cfg: RunConfig, args: argparse.Namespace) -> int:
    tracks = _load_cached_tracks(cfg)
    grid = load_sst_csv(str(_require_file(cfg.sst_path, "SST input")))
    reports = []
    for t1, t2 in cfg.grid():
        pair_config = replace(cfg.train, t1=t1, t2=t2)
        _say(args.quiet, f"cross-validating t1={t1} t2={t2} ...")
        reports.append(evaluate_pair(pair_config, tracks, grid, cfg.holdout_names))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.out_path("cv_report.json").write_text(
        json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    table = report_table(reports)
    cfg.out_path("cv_report.csv").write_text(table, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(table)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> int:
    net, scaler = _load_model(cfg)
    if args.windows:
        samples, spec = read_window_file(_require_file(args.windows, "window cache"))
        if (spec.t1, spec.t2) != (net.t1, net.t2):
            raise StormcastError(
                f"window cache is ({spec.t1}, {spec.t2}) but the model expects "
                f"({net.t1}, {net.t2})"
            )
        x, y = stack_windows(samples)
        err = predict(net, x) - y
        mae = float(np.mean(np.abs(err)))
        rmse = float(np.sqrt(np.mean(err**2)))
        p_mae, p_rmse = persistence_baseline(samples)
        payload = {
            "windows": len(samples),
            "mae": mae,
            "rmse": rmse,
            "persistence_mae": p_mae,
            "persistence_rmse": p_rmse,
        }
    else:
        if args.data:
            tracks, _ = ingest(str(_require_file(args.data, "evaluation input")), cfg.columns)
        else:
            tracks = _load_cached_tracks(cfg)
        grid = load_sst_csv(str(_require_file(cfg.sst_path, "SST input")))
        rows, forecasts = evaluate_holdout(net, scaler, tracks, grid)
        usable = [r for r in rows if not r.skipped]
        if not usable:
            raise InsufficientDataError(
                f"no storm long enough for one ({net.t1}+{net.t2})-fix window"
            )
        total_abs = 0.0
        total_sq = 0.0
        total_n = 0
        for r in forecasts:
            for p, a in zip(r.predicted, r.actual):
                total_abs += abs(p - a)
                total_sq += (p - a) ** 2
                total_n += 1
        payload = {
            "storms": [r.to_dict() for r in rows],
            "pooled_mae": total_abs / total_n,
            "pooled_rmse": (total_sq / total_n) ** 0.5,
            "windows": sum(r.windows for r in rows),
        }
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.out_path("evaluate_report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _say(args.quiet, json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_forecast(cfg: RunConfig, args: argparse.Namespace) -> int:
    net, scaler = _load_model(cfg)
    grid = load_sst_csv(str(_require_file(cfg.sst_path, "SST input")))
    tracks, _ = ingest(str(_require_file(args.storm_file, "storm input")), cfg.columns)
    if args.storm_id:
        matches = [t for t in tracks if t.storm_id == args.storm_id]
        if not matches:
            raise StormcastError(f"storm {args.storm_id!r} not found in {args.storm_file}")
        track = matches[0]
    elif len(tracks) == 1:
        track = tracks[0]
    else:
        raise UsageError(
            f"{args.storm_file} contains {len(tracks)} storms; pick one with --storm-id"
        )
    if args.anchor:
        try:
            anchor = datetime.strptime(args.anchor, DATETIME_FORMAT)
        except ValueError:
            raise UsageError(f"bad --anchor {args.anchor!r} (expected YYYY-MM-DD HH:MM)") from None
        fixes = tuple(f for f in track.fixes if f.timestamp <= anchor)
        if not fixes:
            raise InsufficientDataError(f"no fixes at or before {args.anchor}")
        track = replace(track, fixes=fixes)
    result = forecast(net, scaler, track, grid)
    table = forecast_table([result])
    sys.stdout.write(table)
    if args.out_file:
        Path(args.out_file).write_text(table, encoding="utf-8")
    return EXIT_OK


def cmd_export_plot_data(cfg: RunConfig, args: argparse.Namespace) -> int:
    net, scaler = _load_model(cfg)
    grid = load_sst_csv(str(_require_file(cfg.sst_path, "SST input")))
    tracks = _load_cached_tracks(cfg)
    if args.storm_id:
        chosen = [t for t in tracks if t.storm_id in set(args.storm_id)]
    elif cfg.holdout_names:
        _, chosen, unmatched = holdout_by_name(tracks, cfg.holdout_names)
        for name in unmatched:
            _say(args.quiet, f"warning: holdout name {name!r} matched no storm")
    else:
        chosen = tracks
    if not chosen:
        raise InsufficientDataError("no storms selected for plot export")
    _, forecasts = evaluate_holdout(net, scaler, chosen, grid)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    destination = cfg.out_path(args.name)
    destination.write_text(forecast_table(forecasts), encoding="utf-8")
    _say(args.quiet, f"wrote {len(forecasts)} forecast curves -> {destination}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormcast",
        description="Tropical-cyclone intensity forecasting toolkit",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the training seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="parse + impute the best-track file into the cache")

    p_train = sub.add_parser("train", help="train on all non-holdout storms")
    p_train.add_argument("--dump-windows", help="also write the training windows to this file")

    sub.add_parser("cv", help="k-fold cross-validation over the configured (t1, t2) grid")

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on tracks or cached windows")
    p_eval.add_argument("--data", help="best-track file to evaluate on (default: track cache)")
    p_eval.add_argument("--windows", help="window cache file to evaluate on")

    p_fc = sub.add_parser("forecast", help="forecast from the last observed fixes of one storm")
    p_fc.add_argument("storm_file", help="best-track file holding the storm")
    p_fc.add_argument("--storm-id", help="storm to forecast when the file has several")
    p_fc.add_argument("--anchor", help="issue time YYYY-MM-DD HH:MM (default: last fix)")
    p_fc.add_argument("--out-file", help="also write the forecast table here")

    p_plot = sub.add_parser("export-plot-data", help="export forecast curves for plotting")
    p_plot.add_argument("--storm-id", action="append", help="storm id (repeatable)")
    p_plot.add_argument("--name", default="plot_data.csv", help="output file name")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "cv": cmd_cv,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
    "export-plot-data": cmd_export_plot_data,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.train = replace(cfg.train, seed=args.seed)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StormcastError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
