"""Regional reference price series: types, synthetic generator and summary statistics.

All timestamps are NEM market time (AEST, UTC+10, no daylight saving), so every
calendar day has exactly 288 five-minute intervals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .errors import EmptySeries, IntegrityError, SpecError

MARKET_TZ = timezone(timedelta(hours=10), name="AEST")
FIVE_MINUTES = 300
INTERVALS_PER_DAY = 288
PRICE_FLOOR = -1000.0
PRICE_CAP = 17500.0


class Region(str, enum.Enum):
    QLD = "QLD"
    NSW = "NSW"
    VIC = "VIC"
    SA = "SA"
    TAS = "TAS"

    @property
    def aemo_id(self) -> str:
        return f"{self.value}1"

    @classmethod
    def parse(cls, value: "str | Region") -> "Region":
        if isinstance(value, Region):
            return value
        code = str(value).upper().removesuffix("1")
        try:
            return cls(code)
        except ValueError:
            raise ValueError(f"unknown region {value!r}; expected one of {[r.value for r in cls]}") from None


def market_midnight(day: date) -> datetime:
    return datetime(day.year, day.month, day.day, tzinfo=MARKET_TZ)


def _readonly(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RawPriceSeries:
    """One region's gap-free 5-minute RRP sequence.

    ``start`` is the beginning of the first interval. Prices are stored in a
    read-only float64 array so instances can be shared freely.
    """

    region: Region
    start: datetime
    prices: np.ndarray
    step_seconds: int = FIVE_MINUTES

    def __post_init__(self):
        if self.start.tzinfo is None:
            raise IntegrityError("start timestamp must be timezone aware")
        prices = _readonly(self.prices)
        if prices.ndim != 1:
            raise IntegrityError("prices must be one-dimensional")
        if not np.all(np.isfinite(prices)):
            raise IntegrityError("series contains missing or non-finite prices")
        if prices.size and (prices.min() < PRICE_FLOOR or prices.max() > PRICE_CAP):
            raise IntegrityError(
                f"price outside market bounds [{PRICE_FLOOR}, {PRICE_CAP}]: "
                f"min={prices.min()}, max={prices.max()}"
            )
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "region", Region.parse(self.region))

    def __len__(self) -> int:
        return self.prices.size

    @property
    def start_epoch(self) -> int:
        return int(self.start.timestamp())

    @property
    def timestamps(self) -> np.ndarray:
        """Interval start times as int64 epoch seconds."""
        return self.start_epoch + self.step_seconds * np.arange(len(self), dtype=np.int64)

    @property
    def end(self) -> datetime:
        return self.start + timedelta(seconds=self.step_seconds * len(self))


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the desk-scale synthetic price generator.

    Bands are inclusive ranges of 5-minute interval-of-day indices (0..287).
    ``negative_band`` is ``(start, end, probability)``; ``volatility_band`` is
    ``(start, end, extra_std)``.
    """

    n_days: int = 120
    base_level: float = 100.0
    daily_amplitude: float = 40.0
    weekly_amplitude: float = 15.0
    noise_std: float = 5.0
    spike_rate: float = 0.0
    spike_scale: float = 500.0
    negative_band: tuple[int, int, float] | None = None
    volatility_band: tuple[int, int, float] | None = None
    start_date: date = date(2023, 1, 1)
    daily_peak_interval: int = 216  # 18:00

    def __post_init__(self):
        if int(self.n_days) < 1:
            raise SpecError("n_days must be at least 1")
        for name in ("daily_amplitude", "weekly_amplitude", "noise_std", "spike_scale"):
            if getattr(self, name) < 0:
                raise SpecError(f"{name} must be non-negative")
        if not 0.0 <= self.spike_rate <= 1.0:
            raise SpecError("spike_rate must lie in [0, 1]")
        if not 0 <= self.daily_peak_interval < INTERVALS_PER_DAY:
            raise SpecError("daily_peak_interval must lie in [0, 287]")
        for name in ("negative_band", "volatility_band"):
            band = getattr(self, name)
            if band is None:
                continue
            if len(band) != 3:
                raise SpecError(f"{name} must be (start, end, value)")
            lo, hi, value = band
            if not (0 <= lo <= hi < INTERVALS_PER_DAY):
                raise SpecError(f"{name} bounds must satisfy 0 <= start <= end <= 287, got {band}")
            if value < 0:
                raise SpecError(f"{name} value must be non-negative")
            if name == "negative_band" and value > 1:
                raise SpecError("negative_band probability must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        for key in ("negative_band", "volatility_band"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if isinstance(d.get("start_date"), str):
            d["start_date"] = date.fromisoformat(d["start_date"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise SpecError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "n_days": self.n_days,
            "base_level": self.base_level,
            "daily_amplitude": self.daily_amplitude,
            "weekly_amplitude": self.weekly_amplitude,
            "noise_std": self.noise_std,
            "spike_rate": self.spike_rate,
            "spike_scale": self.spike_scale,
            "negative_band": list(self.negative_band) if self.negative_band else None,
            "volatility_band": list(self.volatility_band) if self.volatility_band else None,
            "start_date": self.start_date.isoformat(),
            "daily_peak_interval": self.daily_peak_interval,
        }


def generate_synthetic(spec: SyntheticSpec, seed: int, region: Region | str = Region.QLD) -> RawPriceSeries:
    """Draw a synthetic 5-minute series with daily/weekly seasonality.

    Negative-price events are drawn once per (day, half-hour block) and applied
    to every band interval inside that block, so each band interval is
    negative with the configured probability while half-hour averages inherit
    the event. Values are clipped to the market floor and cap.
    """
    rng = np.random.default_rng(seed)
    n_days = int(spec.n_days)
    n = n_days * INTERVALS_PER_DAY
    j = np.tile(np.arange(INTERVALS_PER_DAY), n_days)
    day = np.repeat(np.arange(n_days), INTERVALS_PER_DAY)
    t_days = day + j / INTERVALS_PER_DAY

    prices = (
        spec.base_level
        + spec.daily_amplitude * np.cos(2 * np.pi * (j - spec.daily_peak_interval) / INTERVALS_PER_DAY)
        + spec.weekly_amplitude * np.cos(2 * np.pi * t_days / 7.0)
    )

    # fixed draw order keeps (spec, seed) -> series bit-stable
    noise = rng.standard_normal(n)
    vol_noise = rng.standard_normal(n)
    spike_u = rng.random(n)
    spike_mag = rng.exponential(1.0, n)
    neg_u = rng.random((n_days, INTERVALS_PER_DAY // 6))
    neg_mag = rng.exponential(1.0, n)

    prices = prices + spec.noise_std * noise
    if spec.volatility_band is not None:
        lo, hi, extra = spec.volatility_band
        in_band = (j >= lo) & (j <= hi)
        prices = prices + np.where(in_band, extra * vol_noise, 0.0)
    if spec.spike_rate > 0:
        prices = prices + np.where(spike_u < spec.spike_rate, spec.spike_scale * spike_mag, 0.0)
    if spec.negative_band is not None:
        lo, hi, prob = spec.negative_band
        in_band = (j >= lo) & (j <= hi)
        event = neg_u[day, j // 6] < prob
        depth = max(0.2 * abs(spec.base_level), spec.noise_std, 1.0)
        negative = -(depth * neg_mag + 1e-3)
        prices = np.where(in_band & event, negative, prices)

    prices = np.clip(prices, PRICE_FLOOR, PRICE_CAP)
    return RawPriceSeries(Region.parse(region), market_midnight(spec.start_date), prices)


@dataclass(frozen=True)
class SeriesSummary:
    count: int
    mean: float
    std: float
    min: float
    median: float
    max: float
    skewness: float
    kurtosis: float
    degenerate: bool = field(default=False)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize(series: RawPriceSeries | np.ndarray) -> SeriesSummary:
    """Moments over the full series.

    Standard deviation is the population value; skewness and kurtosis are the
    standardised third and fourth central moments (plain, not excess,
    kurtosis). A zero-variance series has undefined shape moments, reported as
    NaN with ``degenerate=True``.
    """
    x = np.asarray(getattr(series, "prices", series), dtype=np.float64)
    if x.size == 0:
        raise EmptySeries("cannot summarise an empty series")
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev**2)
    std = float(np.sqrt(m2))
    if m2 == 0.0:
        skew = kurt = float("nan")
        degenerate = True
    else:
        skew = float(np.mean(dev**3) / m2**1.5)
        kurt = float(np.mean(dev**4) / m2**2)
        degenerate = False
    return SeriesSummary(
        count=int(x.size),
        mean=float(mean),
        std=std,
        min=float(x.min()),
        median=float(np.median(x)),
        max=float(x.max()),
        skewness=skew,
        kurtosis=kurt,
        degenerate=degenerate,
    )
