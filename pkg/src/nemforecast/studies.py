"""Scaled-down synthetic studies that exercise the whole stack on a laptop CPU.

``forecasting_study`` checks that small models beat the weekly naive forecast
on a seasonal series. ``intraday_study`` checks that injected evening
volatility and midday negative prices show up where they should in the
interval-level diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from .evaluation import (
    DiurnalDiagnostics,
    ForecastDump,
    IntradayProfile,
    diurnal_diagnostics,
    intraday_profile,
    point_metrics,
    rmae,
    seasonal_naive,
)
from .market_data import SyntheticSpec, generate_synthetic
from .models import ModelFamily, build_model
from .pipeline import PreparedDataset, prepare
from .training import TrainingConfig, config_for, make_dump, train

# 5-minute noise of 30 A$/MWh is ~12 after half-hour averaging, a third of the daily swing
FORECAST_SPEC = SyntheticSpec(n_days=120, noise_std=30.0)
FORECAST_TRAINING = TrainingConfig(learning_rate=0.005, batch_size=32, max_epochs=10)
TINY = {"model_dim": 32, "n_layers": 1}

# evening band 16:00-20:59 at 5-minute resolution, midday negatives 10:00-13:59
INTRADAY_SPEC = SyntheticSpec(n_days=120, noise_std=10.0, volatility_band=(192, 251, 300.0),
                              negative_band=(120, 167, 0.5))
VOLATILE_INTERVALS = range(32, 42)
NEGATIVE_INTERVALS = range(20, 28)


def synthetic_dataset(spec: SyntheticSpec, seed: int = 0, test_days: int = 20, lookback: int = 336,
                      horizon: int = 48) -> PreparedDataset:
    """Prepared dataset whose last ``test_days`` days form the test segment."""
    test_start = spec.start_date + timedelta(days=spec.n_days - test_days)
    return prepare(generate_synthetic(spec, seed), test_start, lookback, horizon)


@dataclass
class ForecastingResult:
    rmae: dict[str, float]
    mae: dict[str, float]
    benchmark_mae: float
    best_epochs: dict[str, int] = field(default_factory=dict)

    @property
    def all_beat_naive(self) -> bool:
        return all(v < 1.0 for v in self.rmae.values())


def forecasting_study(families=("dlinear", "lstm", "timexer"), *, spec: SyntheticSpec = FORECAST_SPEC,
                      data_seed: int = 0, seed: int = 1, training: TrainingConfig = FORECAST_TRAINING
                      ) -> ForecastingResult:
    data = synthetic_dataset(spec, data_seed)
    bench = seasonal_naive(data.actual_prices("test"))
    out = ForecastingResult({}, {}, bench.benchmark_mae)
    for name in families:
        family = ModelFamily.parse(name)
        params = {} if family is ModelFamily.DLINEAR else dict(TINY)
        cfg = config_for(family, params, data)
        marks = cfg.n_features > 1
        run = train(build_model(cfg, seed), data.windows("train", marks), data.windows("val", marks), training, seed)
        m = point_metrics(make_dump(run.model, data, seed=seed)).mae
        out.mae[family.value] = m
        out.rmae[family.value] = rmae(m, bench)
        out.best_epochs[family.value] = run.best_epoch
    return out


@dataclass
class IntradayResult:
    profile: IntradayProfile
    diagnostics: DiurnalDiagnostics
    dump: ForecastDump

    @property
    def peak_rmse_interval(self) -> int:
        return int(np.argmax(self.profile.rmse))

    @property
    def peak_negative_interval(self) -> int:
        return int(np.argmax(self.diagnostics.pct_negative))

    def band_smape_excess(self) -> tuple[float, float]:
        """(smallest in-band smape_k, median out-of-band smape_k)."""
        inside = np.isin(np.arange(len(self.profile.smape)), list(NEGATIVE_INTERVALS))
        return float(self.profile.smape[inside].min()), float(np.median(self.profile.smape[~inside]))


def intraday_study(*, spec: SyntheticSpec = INTRADAY_SPEC, data_seed: int = 0, seed: int = 1,
                   training: TrainingConfig = TrainingConfig(learning_rate=0.005, batch_size=32, max_epochs=5)
                   ) -> IntradayResult:
    data = synthetic_dataset(spec, data_seed)
    cfg = config_for(ModelFamily.DLINEAR, {}, data)
    marks = cfg.n_features > 1
    run = train(build_model(cfg, seed), data.windows("train", marks), data.windows("val", marks), training, seed)
    dump = make_dump(run.model, data, seed=seed)
    seg = data.split.test
    diag = diurnal_diagnostics(data.actual_prices("test"), data.series.timestamps[seg.start:seg.stop])
    return IntradayResult(intraday_profile(dump), diag, dump)
