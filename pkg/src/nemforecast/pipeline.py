"""From 5-minute prices to scaled, windowed supervised datasets.

Steps: half-hour block averaging, chronological train/val/test split, calendar
covariates, min-max scaling fitted on training rows, and stride-1 sliding
windows built inside each split segment so no window crosses a boundary.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from .errors import AlignmentError, DegenerateColumnWarning, RangeError, SegmentTooShort
from .market_data import MARKET_TZ, RawPriceSeries, Region, market_midnight

HALF_HOUR = 1800
BLOCK = 6
INTERVALS_PER_DAY = 48
PRICE = "price"
TIME_FEATURES = ("hour_of_day", "day_of_week", "day_of_month", "month_of_year")
FEATURE_COLUMNS = (PRICE, *TIME_FEATURES)
SETTINGS = {"24h": (336, 48), "48h": (672, 96)}
_UTC_OFFSET = int(MARKET_TZ.utcoffset(None).total_seconds())


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _as_epoch(instant: datetime | date | int) -> int:
    if isinstance(instant, (int, np.integer)):
        return int(instant)
    if isinstance(instant, datetime):
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=MARKET_TZ)
        return int(instant.timestamp())
    return int(market_midnight(instant).timestamp())


@dataclass(frozen=True)
class HalfHourlySeries:
    region: Region
    start: datetime
    prices: np.ndarray
    step_seconds: int = HALF_HOUR

    def __post_init__(self):
        object.__setattr__(self, "prices", _frozen(self.prices))

    def __len__(self) -> int:
        return self.prices.size

    @property
    def start_epoch(self) -> int:
        return int(self.start.timestamp())

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_epoch + self.step_seconds * np.arange(len(self), dtype=np.int64)

    def index_of(self, instant: datetime | date | int) -> int:
        """Index of the interval starting at ``instant`` (may lie outside the series)."""
        offset = _as_epoch(instant) - self.start_epoch
        if offset % self.step_seconds:
            raise AlignmentError(f"{instant} is not on a half-hour boundary")
        return offset // self.step_seconds


def downsample_to_30min(raw: RawPriceSeries) -> HalfHourlySeries:
    """Average each block of six consecutive 5-minute prices."""
    n = len(raw)
    if n % BLOCK:
        raise AlignmentError(f"series length {n} is not a multiple of {BLOCK}")
    if raw.start_epoch % HALF_HOUR:
        raise AlignmentError("series does not start on a half-hour boundary")
    return HalfHourlySeries(raw.region, raw.start, raw.prices.reshape(-1, BLOCK).mean(axis=1))


@dataclass(frozen=True)
class DatasetSplit:
    train: range
    val: range
    test: range

    def __post_init__(self):
        if not (self.train.stop <= self.val.start and self.val.stop <= self.test.start):
            raise RangeError("split segments must be ordered train < val < test")

    def segment(self, name: str) -> range:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {k: [getattr(self, k).start, getattr(self, k).stop] for k in ("train", "val", "test")}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(*(range(*d[k]) for k in ("train", "val", "test")))


def chronological_split(series: HalfHourlySeries, test_start, train_fraction: float = 0.7) -> DatasetSplit:
    """Hold out everything from ``test_start`` on; split the rest train/val by ``train_fraction``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    k = series.index_of(test_start)
    if not 0 < k < len(series):
        raise RangeError(f"test_start {test_start} is not strictly inside the series")
    n_train = int(np.floor(train_fraction * k))
    if n_train == 0 or n_train == k:
        raise RangeError("pre-test segment too short for the requested fraction")
    return DatasetSplit(range(0, n_train), range(n_train, k), range(k, len(series)))


def calendar_fields(timestamps: np.ndarray) -> dict[str, np.ndarray]:
    """Market-time calendar fields; day_of_week has Monday = 0."""
    local = np.asarray(timestamps, dtype=np.int64) + _UTC_OFFSET
    dt = local.astype("datetime64[s]")
    days = dt.astype("datetime64[D]")
    months = dt.astype("datetime64[M]")
    return {
        "hour_of_day": ((local // 3600) % 24).astype(np.int64),
        # 1970-01-01 was a Thursday
        "day_of_week": ((days.astype(np.int64) + 3) % 7).astype(np.int64),
        "day_of_month": (days - months.astype("datetime64[D]")).astype(np.int64) + 1,
        "month_of_year": (months.astype(np.int64) % 12) + 1,
    }


@dataclass(frozen=True)
class FeatureMatrix:
    columns: tuple[str, ...]
    values: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise ValueError("values must be a 2-D array with one column per name")
        if values.shape[0] != len(self.timestamps):
            raise ValueError("one timestamp per row required")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", _frozen(self.timestamps, np.int64))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, names) -> "FeatureMatrix":
        idx = [self.columns.index(n) for n in names]
        return FeatureMatrix(tuple(names), self.values[:, idx], self.timestamps)


def add_time_features(series: HalfHourlySeries) -> FeatureMatrix:
    ts = series.timestamps
    cal = calendar_fields(ts)
    values = np.column_stack([series.prices] + [cal[c].astype(np.float64) for c in TIME_FEATURES])
    return FeatureMatrix(FEATURE_COLUMNS, values, ts)


def feature_columns(uses_time_features: bool) -> tuple[str, ...]:
    return FEATURE_COLUMNS if uses_time_features else (PRICE,)


@dataclass(frozen=True)
class ScalerParams:
    columns: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    fitted_on: str = "train"
    degenerate: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mins", _frozen(self.mins))
        object.__setattr__(self, "maxs", _frozen(self.maxs))
        if np.any(self.maxs < self.mins):
            raise ValueError("scaler max must be >= min for every column")

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mins": self.mins.tolist(), "maxs": self.maxs.tolist(),
                "fitted_on": self.fitted_on, "degenerate": list(self.degenerate)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["columns"]), np.array(d["mins"]), np.array(d["maxs"]),
                   d.get("fitted_on", "train"), tuple(d.get("degenerate", ())))


def fit_scaler(matrix: FeatureMatrix, split: DatasetSplit, fit_on: str = "train") -> ScalerParams:
    """Per-column min/max over the training rows (or ``"train+val"``)."""
    if fit_on == "train":
        rows = slice(split.train.start, split.train.stop)
    elif fit_on == "train+val":
        rows = slice(split.train.start, split.val.stop)
    else:
        raise ValueError(f"fit_on must be 'train' or 'train+val', got {fit_on!r}")
    block = matrix.values[rows]
    mins, maxs = block.min(axis=0), block.max(axis=0)
    degenerate = tuple(c for c, lo, hi in zip(matrix.columns, mins, maxs) if hi == lo)
    if degenerate:
        warnings.warn(f"constant columns on fit rows mapped to 0: {degenerate}", DegenerateColumnWarning, stacklevel=2)
    return ScalerParams(matrix.columns, mins, maxs, fit_on, degenerate)


def _span(params: ScalerParams) -> np.ndarray:
    span = params.maxs - params.mins
    return np.where(span == 0, 1.0, span)


def apply_scaler(matrix: FeatureMatrix, params: ScalerParams) -> FeatureMatrix:
    """Map each column affinely so fit rows land in [0, 1]; other rows are not clipped."""
    if matrix.columns != params.columns:
        raise ValueError("matrix columns differ from the fitted scaler columns")
    scaled = (matrix.values - params.mins) / _span(params)
    for c in params.degenerate:
        scaled[:, params.columns.index(c)] = 0.0
    return FeatureMatrix(matrix.columns, scaled, matrix.timestamps)


def invert_prices(values, params: ScalerParams, column: str = PRICE) -> np.ndarray:
    """Scaled price values back to A$/MWh."""
    i = params.columns.index(column)
    return np.asarray(values, dtype=np.float64) * _span(params)[i] + params.mins[i]


@dataclass(frozen=True)
class WindowSet:
    """Stride-1 supervised windows over one segment.

    ``inputs`` is a read-only sliding view ``[n, L, C]``; ``targets`` holds the
    scaled price for the ``H`` steps following each input window.
    """

    lookback: int
    horizon: int
    columns: tuple[str, ...]
    inputs: np.ndarray
    targets: np.ndarray
    target_timestamps: np.ndarray
    segment: range

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_timestamps_end(self) -> np.ndarray:
        """Timestamp of the last input step of each window."""
        return self.target_timestamps[:, 0] - HALF_HOUR


def build_windows(matrix: FeatureMatrix, segment: range, lookback: int, horizon: int,
                  target: str = PRICE) -> WindowSet:
    seg_len = len(segment)
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be positive")
    if seg_len < lookback + horizon:
        raise SegmentTooShort(f"segment of {seg_len} steps cannot hold L+H={lookback + horizon}")
    rows = slice(segment.start, segment.stop)
    values = np.ascontiguousarray(matrix.values[rows], dtype=np.float32)
    ts = matrix.timestamps[rows]
    tgt = matrix.values[rows, matrix.columns.index(target)]
    n = seg_len - lookback - horizon + 1
    view = np.lib.stride_tricks.sliding_window_view
    inputs = view(values, lookback, axis=0)[:n].transpose(0, 2, 1)
    targets = view(tgt, horizon)[lookback:lookback + n]
    target_ts = view(ts, horizon)[lookback:lookback + n]
    return WindowSet(lookback, horizon, matrix.columns, inputs, targets, target_ts, segment)


@dataclass(frozen=True)
class PreparedDataset:
    """Everything needed to train and evaluate one (region, setting) cell."""

    series: HalfHourlySeries
    scaled: FeatureMatrix
    split: DatasetSplit
    scaler: ScalerParams
    lookback: int
    horizon: int
    meta: dict = field(default_factory=dict)

    def windows(self, part: str, uses_time_features: bool = True) -> WindowSet:
        matrix = self.scaled.select(feature_columns(uses_time_features))
        return build_windows(matrix, self.split.segment(part), self.lookback, self.horizon)

    def actual_prices(self, part: str = "test") -> np.ndarray:
        seg = self.split.segment(part)
        return self.series.prices[seg.start:seg.stop]

    def manifest(self) -> dict:
        return {
            "region": self.series.region.value,
            "start": self.series.start.isoformat(),
            "lookback": self.lookback,
            "horizon": self.horizon,
            "split": self.split.to_dict(),
            "scaler": self.scaler.to_dict(),
            "meta": self.meta,
        }

    def save(self, directory: str | os.PathLike) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        cols = {"timestamp": self.scaled.timestamps, "raw_price": self.series.prices}
        cols.update({c: self.scaled.column(c) for c in self.scaled.columns})
        pq.write_table(pa.table(cols), directory / "features.parquet")
        (directory / "manifest.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "PreparedDataset":
        directory = Path(directory)
        man = json.loads((directory / "manifest.json").read_text())
        table = pq.read_table(directory / "features.parquet")
        scaler = ScalerParams.from_dict(man["scaler"])
        ts = table.column("timestamp").to_numpy()
        series = HalfHourlySeries(Region(man["region"]), datetime.fromisoformat(man["start"]),
                                  table.column("raw_price").to_numpy())
        values = np.column_stack([table.column(c).to_numpy() for c in scaler.columns])
        return cls(series, FeatureMatrix(scaler.columns, values, ts), DatasetSplit.from_dict(man["split"]),
                   scaler, man["lookback"], man["horizon"], man.get("meta", {}))


def prepare(raw: RawPriceSeries, test_start, lookback: int, horizon: int,
            train_fraction: float = 0.7, fit_on: str = "train") -> PreparedDataset:
    """Downsample, split, featurise and scale one raw series."""
    half = downsample_to_30min(raw)
    split = chronological_split(half, test_start, train_fraction)
    matrix = add_time_features(half)
    scaler = fit_scaler(matrix, split, fit_on)
    return PreparedDataset(half, apply_scaler(matrix, scaler), split, scaler, lookback, horizon,
                           {"train_fraction": train_fraction, "fit_on": fit_on})
