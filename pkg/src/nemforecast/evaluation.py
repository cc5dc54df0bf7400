"""Forecast dumps and the three evaluation tiers.

Overall point metrics (MAE, RMSE, sMAPE, rMAE, MDA), tail and negative-price
subsets, and per half-hour intraday profiles with diurnal diagnostics of the
actual prices. All values are in A$/MWh.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from .errors import EmptyDump, EmptySubset, HorizonTooShort, SeriesTooShort, ZeroBenchmark
from .market_data import MARKET_TZ

WEEKLY_LAG = 336
INTERVALS = 48
_UTC_OFFSET = int(MARKET_TZ.utcoffset(None).total_seconds())
METRICS = ("mae", "rmse", "smape", "rmae", "mda")


def interval_of_day(timestamps) -> np.ndarray:
    """Half-hour interval index 0..47 of market time."""
    return ((np.asarray(timestamps, dtype=np.int64) + _UTC_OFFSET) % 86400) // 1800


@dataclass(frozen=True)
class ForecastDump:
    """Row-per-(window, step) forecasts, sorted by window then step (steps start at 1)."""

    window_id: np.ndarray
    step: np.ndarray
    target_timestamp: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    region: str = ""
    setting: str = ""
    family: str = ""
    seed: int | None = None

    def __post_init__(self):
        for name, dtype in (("window_id", np.int64), ("step", np.int64), ("target_timestamp", np.int64),
                            ("y_true", np.float64), ("y_pred", np.float64)):
            arr = np.array(getattr(self, name), dtype=dtype, copy=True).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.y_true.size
        if any(getattr(self, k).size != n for k in ("window_id", "step", "target_timestamp", "y_pred")):
            raise ValueError("all dump columns must have the same length")

    def __len__(self) -> int:
        return self.y_true.size

    @classmethod
    def from_windows(cls, y_true, y_pred, target_timestamps, **meta) -> "ForecastDump":
        y_true = np.asarray(y_true, dtype=np.float64)
        n, h = y_true.shape
        return cls(
            window_id=np.repeat(np.arange(n), h),
            step=np.tile(np.arange(1, h + 1), n),
            target_timestamp=np.asarray(target_timestamps).reshape(-1),
            y_true=y_true.reshape(-1),
            y_pred=np.asarray(y_pred, dtype=np.float64).reshape(-1),
            **meta,
        )

    def meta(self) -> dict:
        return {"region": self.region, "setting": self.setting, "family": self.family, "seed": self.seed}

    def subset(self, mask: np.ndarray) -> "ForecastDump":
        mask = np.asarray(mask, dtype=bool)
        return ForecastDump(self.window_id[mask], self.step[mask], self.target_timestamp[mask],
                            self.y_true[mask], self.y_pred[mask], **self.meta())

    def to_parquet(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = pa.table({
            "window_id": self.window_id, "step": self.step, "target_timestamp": self.target_timestamp,
            "y_true": self.y_true, "y_pred": self.y_pred,
        }).replace_schema_metadata({"nemforecast": json.dumps(self.meta())})
        pq.write_table(table, path)
        return path

    @classmethod
    def from_parquet(cls, path: str | os.PathLike) -> "ForecastDump":
        table = pq.read_table(path)
        meta = json.loads((table.schema.metadata or {}).get(b"nemforecast", b"{}"))
        return cls(*(table.column(c).to_numpy() for c in
                     ("window_id", "step", "target_timestamp", "y_true", "y_pred")), **meta)


# ---------------------------------------------------------------- point metrics

def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y_true, dtype=np.float64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise EmptyDump("no forecast points")
    return y, p


def mae(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    return float(np.mean(np.abs(y - p)))


def rmse(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((y - p) ** 2)))


def smape(y_true, y_pred) -> float:
    """Two-sided sMAPE on the 0-200 scale; 0/0 terms count as 0."""
    y, p = _pair(y_true, y_pred)
    denom = np.abs(y) + np.abs(p)
    num = 2.0 * np.abs(p - y)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(100.0 * np.mean(terms))


@dataclass(frozen=True)
class PointMetrics:
    mae: float
    rmse: float
    smape: float
    n: int


def point_metrics(dump: ForecastDump) -> PointMetrics:
    return PointMetrics(mae(dump.y_true, dump.y_pred), rmse(dump.y_true, dump.y_pred),
                        smape(dump.y_true, dump.y_pred), len(dump))


@dataclass(frozen=True)
class NaiveBenchmark:
    lag: int
    n_obs: int
    benchmark_mae: float


def seasonal_naive(series, lag: int = WEEKLY_LAG, allow_zero: bool = False) -> NaiveBenchmark:
    """MAE of the ``y[t-lag]`` forecast over an out-of-sample price series.

    Raises SeriesTooShort when ``len(series) <= lag`` and ZeroBenchmark when
    the benchmark error is zero (unless ``allow_zero``).
    """
    y = np.asarray(getattr(series, "prices", series), dtype=np.float64)
    m = y.size
    if m <= lag:
        raise SeriesTooShort(f"need more than {lag} observations, got {m}")
    bench = float(np.mean(np.abs(y[lag:] - y[:-lag])))
    if bench == 0.0 and not allow_zero:
        raise ZeroBenchmark("seasonal naive forecast is exact; rMAE is undefined")
    return NaiveBenchmark(lag, m, bench)


def rmae(dump_or_mae, bench: NaiveBenchmark) -> float:
    if bench.benchmark_mae <= 0:
        raise ZeroBenchmark("benchmark MAE must be positive")
    model_mae = dump_or_mae if np.isscalar(dump_or_mae) else mae(dump_or_mae.y_true, dump_or_mae.y_pred)
    return float(model_mae) / bench.benchmark_mae


def _direction_pairs(dump: ForecastDump) -> tuple[np.ndarray, np.ndarray]:
    """(match flags, row index of the later step) for within-window consecutive pairs."""
    same = dump.window_id[1:] == dump.window_id[:-1]
    dy = np.sign(np.diff(dump.y_true))
    dp = np.sign(np.diff(dump.y_pred))
    later = np.nonzero(same)[0] + 1
    return (dy == dp)[same], later


def mda(dump: ForecastDump) -> float:
    """Directional accuracy (%) per window, averaged over windows.

    sign(0) = 0, so a flat step only matches another flat step.
    """
    if len(dump) == 0:
        raise EmptyDump("no forecast points")
    ids, counts = np.unique(dump.window_id, return_counts=True)
    if counts.min() < 2:
        raise HorizonTooShort("every window needs at least two steps")
    match, later = _direction_pairs(dump)
    wid = dump.window_id[later]
    hits = np.bincount(np.searchsorted(ids, wid), weights=match.astype(np.float64), minlength=ids.size)
    return float(np.mean(hits / (counts - 1)) * 100.0)


# ---------------------------------------------------------------- subsets

@dataclass(frozen=True)
class SubsetMasks:
    upper: np.ndarray
    lower: np.ndarray
    negative: np.ndarray
    upper_threshold: float
    lower_threshold: float

    @property
    def extreme(self) -> np.ndarray:
        return self.upper | self.lower


def tail_thresholds(test_prices, tail_pct: float = 5.0) -> tuple[float, float]:
    y = np.asarray(getattr(test_prices, "prices", test_prices), dtype=np.float64)
    return float(np.percentile(y, tail_pct)), float(np.percentile(y, 100.0 - tail_pct))


def subset_masks(dump: ForecastDump, test_prices, tail_pct: float = 5.0) -> SubsetMasks:
    """Row masks for the upper/lower price tails of the test period and for negative actuals."""
    lo, hi = tail_thresholds(test_prices, tail_pct)
    y = dump.y_true
    return SubsetMasks(y >= hi, y <= lo, y < 0, hi, lo)


def subset_metrics(dump: ForecastDump, mask: np.ndarray) -> PointMetrics:
    if not np.any(mask):
        raise EmptySubset("subset has no rows")
    sub = dump.subset(mask)
    return point_metrics(sub)


# ---------------------------------------------------------------- intraday

@dataclass(frozen=True)
class IntradayProfile:
    counts: np.ndarray
    mae: np.ndarray
    rmse: np.ndarray
    smape: np.ndarray
    mda: np.ndarray

    def as_rows(self) -> list[dict]:
        return [{"interval": k, "time": f"{k // 2:02d}:{30 * (k % 2):02d}", "count": int(self.counts[k]),
                 "mae": self.mae[k], "rmse": self.rmse[k], "smape": self.smape[k], "mda": self.mda[k]}
                for k in range(INTERVALS)]


def intraday_profile(dump: ForecastDump) -> IntradayProfile:
    """Point metrics grouped by the half-hour of each target timestamp.

    ``mda[k]`` is the match rate (%) of within-window step pairs whose later
    step falls in interval ``k``. Empty groups hold NaN.
    """
    k = interval_of_day(dump.target_timestamp)
    err = dump.y_pred - dump.y_true
    denom = np.abs(dump.y_true) + np.abs(dump.y_pred)
    sterm = np.divide(2.0 * np.abs(err), denom, out=np.zeros_like(denom), where=denom > 0)
    counts = np.bincount(k, minlength=INTERVALS).astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        mae_k = np.bincount(k, np.abs(err), INTERVALS) / counts
        rmse_k = np.sqrt(np.bincount(k, err**2, INTERVALS) / counts)
        smape_k = 100.0 * np.bincount(k, sterm, INTERVALS) / counts
        match, later = _direction_pairs(dump)
        kl = k[later]
        mda_k = 100.0 * np.bincount(kl, match.astype(np.float64), INTERVALS) / np.bincount(kl, minlength=INTERVALS)
    return IntradayProfile(counts, mae_k, rmse_k, smape_k, mda_k)


@dataclass(frozen=True)
class DiurnalDiagnostics:
    price_change_std: np.ndarray
    mean_price: np.ndarray
    pct_negative: np.ndarray
    pct_directional_shift: np.ndarray

    def as_rows(self) -> list[dict]:
        return [{"interval": k, "time": f"{k // 2:02d}:{30 * (k % 2):02d}",
                 "price_change_std": self.price_change_std[k], "mean_price": self.mean_price[k],
                 "pct_negative": self.pct_negative[k], "pct_directional_shift": self.pct_directional_shift[k]}
                for k in range(INTERVALS)]


def diurnal_diagnostics(prices, timestamps=None) -> DiurnalDiagnostics:
    """Per-interval statistics of actual prices across days.

    Price changes are taken between consecutive half-hours, wrapping across
    midnight; a directional shift at ``k`` means the sign of the change into
    ``k`` differs from the sign of the change into ``k - 1``.
    """
    if timestamps is None:
        timestamps = prices.timestamps
        prices = prices.prices
    y = np.asarray(prices, dtype=np.float64)
    k = interval_of_day(timestamps)
    if y.size < 2 * INTERVALS:
        raise SeriesTooShort("diurnal diagnostics need at least two days")
    counts = np.bincount(k, minlength=INTERVALS)
    mean_k = np.bincount(k, y, INTERVALS) / counts
    neg_k = 100.0 * np.bincount(k, (y < 0).astype(np.float64), INTERVALS) / counts

    dy = np.diff(y)
    kd = k[1:]
    n_d = np.bincount(kd, minlength=INTERVALS)
    m1 = np.bincount(kd, dy, INTERVALS) / n_d
    std_k = np.sqrt(np.bincount(kd, (dy - m1[kd]) ** 2, INTERVALS) / n_d)

    s = np.sign(dy)
    shift = (s[1:] != s[:-1]).astype(np.float64)
    ks = k[2:]
    shift_k = 100.0 * np.bincount(ks, shift, INTERVALS) / np.bincount(ks, minlength=INTERVALS)
    return DiurnalDiagnostics(std_k, mean_k, neg_k, shift_k)


# ---------------------------------------------------------------- aggregation

@dataclass(frozen=True)
class DumpEvaluation:
    """All tiers for one forecast dump."""

    overall: dict
    subsets: dict
    intraday: IntradayProfile
    meta: dict = field(default_factory=dict)


def evaluate_dump(dump: ForecastDump, bench: NaiveBenchmark, test_prices, tail_pct: float = 5.0) -> DumpEvaluation:
    pm = point_metrics(dump)
    overall = {"mae": pm.mae, "rmse": pm.rmse, "smape": pm.smape, "rmae": rmae(pm.mae, bench), "mda": mda(dump)}
    masks = subset_masks(dump, test_prices, tail_pct)
    subsets = {}
    for name, mask in (("extreme", masks.extreme), ("upper", masks.upper), ("lower", masks.lower),
                       ("negative", masks.negative)):
        try:
            m = subset_metrics(dump, mask)
            subsets[name] = {"mae": m.mae, "rmse": m.rmse, "smape": m.smape, "n": m.n}
        except EmptySubset:
            subsets[name] = None
    return DumpEvaluation(overall, subsets, intraday_profile(dump), dump.meta())


@dataclass(frozen=True)
class MetricReport:
    """Seed-mean metrics with the per-seed values kept alongside."""

    mae: float
    rmse: float
    smape: float
    rmae: float
    mda: float
    per_seed: tuple[dict, ...]

    def as_dict(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


def aggregate_seeds(per_seed: list[dict]) -> MetricReport:
    if not per_seed:
        raise EmptyDump("no seed results to aggregate")
    means = {m: float(np.mean([r[m] for r in per_seed])) for m in METRICS}
    return MetricReport(**means, per_seed=tuple(dict(r) for r in per_seed))


def mean_profile(profiles: list[IntradayProfile]) -> IntradayProfile:
    stack = {f: np.mean([getattr(p, f) for p in profiles], axis=0) for f in ("mae", "rmse", "smape", "mda")}
    return IntradayProfile(profiles[0].counts, **stack)
