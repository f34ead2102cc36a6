"""Tropical-cyclone intensity forecasting toolkit.

Ingests best-track records, engineers seven per-fix features (position,
intensity, pressure, motion, sea-surface temperature), and trains a stacked
bidirectional LSTM, written from scratch on numpy, to forecast maximum
sustained surface wind speed several 3-hour steps ahead.
"""

from .errors import StormcastError
from .features import ScalerParams, apply_scaler, classify_grade, fit_scaler, invert_scaler
from .geo import haversine_distance, initial_bearing
from .ingest import ColumnMap, CycloneTrack, IngestReport, RawFix, impute_linear, ingest, parse_btd
from .network import NetworkParams, init_params, load_checkpoint, save_checkpoint
from .sst import SstGrid, load_sst_csv, lookup_sst
from .training import TrainConfig, cross_validate, evaluate, forecast, train
from .windowing import FoldPlan, WindowSample, WindowSpec, build_windows, kfold_split

__version__ = "0.1.0"

__all__ = [
    "ColumnMap",
    "CycloneTrack",
    "FoldPlan",
    "IngestReport",
    "NetworkParams",
    "RawFix",
    "ScalerParams",
    "SstGrid",
    "StormcastError",
    "TrainConfig",
    "WindowSample",
    "WindowSpec",
    "apply_scaler",
    "build_windows",
    "classify_grade",
    "cross_validate",
    "evaluate",
    "fit_scaler",
    "forecast",
    "haversine_distance",
    "impute_linear",
    "ingest",
    "init_params",
    "initial_bearing",
    "invert_scaler",
    "kfold_split",
    "load_checkpoint",
    "load_sst_csv",
    "lookup_sst",
    "parse_btd",
    "save_checkpoint",
    "train",
    "__version__",
]
