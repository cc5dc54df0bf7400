"""Acceptance gate: one test per criterion, summarised at the end of the run."""

import hashlib
import time
from datetime import date

import numpy as np
import pytest
import torch

import oracles
from nemforecast.evaluation import ForecastDump, aggregate_seeds, mda, point_metrics, rmae, seasonal_naive
from nemforecast.experiment import Experiment, ExperimentConfig
from nemforecast.market_data import Region, SyntheticSpec, generate_synthetic, market_midnight
from nemforecast.models import ModelConfig, ModelFamily, build_model, forecast, gradient_check
from nemforecast.pipeline import (
    HalfHourlySeries,
    add_time_features,
    build_windows,
    chronological_split,
    downsample_to_30min,
    prepare,
)
from nemforecast.studies import NEGATIVE_INTERVALS, VOLATILE_INTERVALS, forecasting_study, intraday_study
from nemforecast.training import EpochController, GridSpec, TrainingConfig, config_for, train

T0 = int(market_midnight(date(2024, 1, 1)).timestamp())


@pytest.fixture
def criterion(record_property):
    def tag(number, title):
        record_property("criterion", number)
        record_property("title", title)
    return tag


def close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def test_criterion_1_metric_oracles(criterion):
    criterion(1, "metrics match loop oracles on 1000 random dumps")
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for _ in range(1000):
        h = int(rng.integers(2, 97))
        n = int(rng.integers(1, 1000 // h + 1))
        scale = 10.0 ** rng.uniform(-1, 4)
        y = rng.normal(50, scale, (n, h))
        p = y + rng.normal(0, scale, (n, h))
        if rng.random() < 0.2:
            y[rng.random((n, h)) < 0.3] = 0.0
            p[rng.random((n, h)) < 0.3] = 0.0
            p = np.where(rng.random((n, h)) < 0.2, np.roll(p, 1, axis=1), p)
        ts = T0 + 1800 * (np.arange(n)[:, None] + np.arange(h)[None, :])
        d = ForecastDump.from_windows(y, p, ts)
        series = rng.normal(50, scale, int(rng.integers(337, 1000)))
        pm = point_metrics(d)
        fy, fp = y.ravel().tolist(), p.ravel().tolist()
        assert close(pm.mae, oracles.mae(fy, fp))
        assert close(pm.rmse, oracles.rmse(fy, fp))
        assert close(pm.smape, oracles.smape(fy, fp))
        assert close(mda(d), oracles.mda(y.tolist(), p.tolist()))
        assert close(rmae(d, seasonal_naive(series)), oracles.mae(fy, fp) / oracles.naive_mae(series.tolist(), 336))
    assert time.perf_counter() - t0 < 60


def test_criterion_2_pipeline_invariants(criterion):
    criterion(2, "pipeline counts, mean preservation, split ordering, window counts")
    t0 = time.perf_counter()
    # (a) 912 days of 5-minute data
    raw = generate_synthetic(SyntheticSpec(n_days=912), 0)
    half = downsample_to_30min(raw)
    assert (len(raw), len(half)) == (262_656, 43_776)
    # (b) mean preserved
    assert close(float(np.mean(raw.prices)), float(np.mean(half.prices)))
    # (c) chronological, disjoint, covering
    split = chronological_split(half, date(2025, 1, 1))
    assert split.train.stop == split.val.start and split.val.stop == split.test.start
    assert split.train.start == 0 and split.test.stop == len(half)
    assert not set(split.train) & set(split.val) and not set(split.val) & set(split.test)
    ts = half.timestamps
    assert ts[split.train.stop - 1] < ts[split.val.start] and ts[split.val.stop - 1] < ts[split.test.start]
    # (d) window counts
    rng = np.random.default_rng(7)
    m = add_time_features(HalfHourlySeries(Region.QLD, market_midnight(date(2024, 1, 1)), rng.normal(80, 30, 3000)))
    checked = 0
    while checked < 100:
        lookback, horizon = int(rng.integers(1, 400)), int(rng.integers(1, 100))
        n = int(rng.integers(lookback + horizon, 3001))
        w = build_windows(m, range(0, n), lookback, horizon)
        assert len(w) == oracles.count_windows(n, lookback, horizon) == n - lookback - horizon + 1
        checked += 1
    assert time.perf_counter() - t0 < 60


def test_criterion_3_naive_self_consistency(criterion):
    criterion(3, "weekly naive forecaster scores rMAE 1 on aligned test points")
    half = downsample_to_30min(generate_synthetic(SyntheticSpec(n_days=60, noise_std=20.0), 0))
    y = half.prices[-20 * 48:]
    ts = half.timestamps[-20 * 48:]
    naive = ForecastDump.from_windows(y[336:, None], y[:-336, None], ts[336:, None])
    assert abs(rmae(naive, seasonal_naive(y)) - 1.0) <= 1e-9


def test_criterion_4_model_contracts(criterion):
    criterion(4, "all families finite [B x H]; DLinear size; gradient checks")
    t0 = time.perf_counter()
    torch.manual_seed(0)
    for family in ModelFamily:
        for lookback, horizon in ((336, 48), (672, 96)):
            for width in (1, 5):
                extra = {"cnn_filters": 32, "cnn_kernel": 3} if family is ModelFamily.CNN_LSTM else {}
                model = build_model(ModelConfig(family, lookback, horizon, width, **extra), 0)
                out = forecast(model, torch.rand(3, lookback, width))
                assert out.shape == (3, horizon) and np.isfinite(out).all()
        if family is ModelFamily.DLINEAR:
            for lookback, horizon in ((336, 48), (672, 96)):
                size = build_model(ModelConfig(family, lookback, horizon), 0).parameter_count
                assert size == 2 * (lookback * horizon + horizon)
    rng = np.random.default_rng(0)
    dlin = build_model(ModelConfig(ModelFamily.DLINEAR, 96, 24, 1), 0)
    assert gradient_check(dlin, rng.random((2, 96, 1)), rng.random((2, 24))) < 1e-4
    lstm = build_model(ModelConfig(ModelFamily.LSTM, 48, 12, 1, model_dim=16, n_layers=1), 0)
    assert gradient_check(lstm, rng.random((2, 48, 1)), rng.random((2, 12))) < 1e-3
    assert time.perf_counter() - t0 < 300


def test_criterion_5_scaled_down_forecasting(criterion):
    criterion(5, "DLinear, LSTM and TimeXer beat the weekly naive on synthetic data")
    t0 = time.perf_counter()
    result = forecasting_study()
    print("rMAE", result.rmae, "best epochs", result.best_epochs)
    assert set(result.rmae) == {"DLINEAR", "LSTM", "TIMEXER"}
    assert result.all_beat_naive, result.rmae
    assert time.perf_counter() - t0 < 600


def test_criterion_6_intraday_diagnostics(criterion):
    criterion(6, "evening volatility and midday negatives located by interval diagnostics")
    t0 = time.perf_counter()
    result = intraday_study()
    assert result.peak_rmse_interval in VOLATILE_INTERVALS
    assert result.peak_negative_interval in NEGATIVE_INTERVALS
    inside_min, outside_median = result.band_smape_excess()
    assert inside_min > outside_median
    assert time.perf_counter() - t0 < 600


def test_criterion_7_protocol_conformance(criterion, tmp_path):
    criterion(7, "grid sizes 50/5/375, patience bound, seed aggregation")
    grid = GridSpec()
    for family in ModelFamily:
        expected = {ModelFamily.DLINEAR: 5, ModelFamily.CNN_LSTM: 375}.get(family, 50)
        assert len(grid.combinations(family)) == expected
    # patience: random validation curves never run more than 10 epochs past the best
    rng = np.random.default_rng(3)
    for _ in range(500):
        ctl = EpochController(1e-3)
        best_epoch, best = 0, np.inf
        for epoch in range(1, 200):
            loss = float(rng.choice([rng.uniform(0, 2), best]))
            if loss < best:
                best_epoch, best = epoch, loss
            _, stop = ctl.step(epoch, loss)
            if stop:
                break
        assert epoch - best_epoch <= 10
    # and an actual training run that stalls
    data = prepare(generate_synthetic(SyntheticSpec(n_days=60), 0), date(2023, 2, 10), 336, 48)
    cfg = config_for(ModelFamily.DLINEAR, {}, data)
    run = train(build_model(cfg, 0), data.windows("train", False), data.windows("val", False),
                TrainingConfig(learning_rate=1e-12, max_epochs=40, max_batches_per_epoch=2), 0)
    assert run.stopped_epoch - run.best_epoch <= 10 and run.stopped_epoch < 40
    # five seeds
    per_seed = [{m: float(v) for m, v in zip(("mae", "rmse", "smape", "rmae", "mda"), rng.random(5) * 100)}
                for _ in range(5)]
    report = aggregate_seeds(per_seed)
    for m in ("mae", "rmse", "smape", "rmae", "mda"):
        assert close(getattr(report, m), sum(r[m] for r in per_seed) / 5)


SMOKE = {
    "regions": ["QLD"], "settings": ["24h"], "families": ["dlinear", "lstm"],
    "synthetic": {"n_days": 60, "noise_std": 20, "negative_band": [120, 167, 0.3]}, "test_start": "2023-02-10",
    "training": {"max_epochs": 2, "max_batches_per_epoch": 10, "seeds": [1, 2]},
    "grid": {"learning_rates": [0.001, 0.005], "dims": [16], "layers": [1]},
}


def test_criterion_8_determinism(criterion, tmp_path):
    criterion(8, "smoke pipeline rerun gives bit-identical reports")
    digests = []
    for name in ("first", "second"):
        exp = Experiment(ExperimentConfig.from_dict({**SMOKE, "output_dir": str(tmp_path / name)}))
        exp.run()
        assert exp.status() == 0
        files = sorted((exp.root / "report").iterdir())
        assert {f.name for f in files} >= {"table_overall.csv", "summary.json", "intraday_QLD_24h.png"}
        digests.append({f.name: hashlib.sha256(f.read_bytes()).hexdigest() for f in files})
    assert digests[0] == digests[1]
