"""
From 5-minute prices to scored forecasts
========================================

A synthetic region is generated, averaged to half-hours, split in time and
cut into windows. The weekly naive forecast is then scored with the same
metrics every model gets.
"""

from datetime import date

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from nemforecast.evaluation import ForecastDump, mda, point_metrics, rmae, seasonal_naive
from nemforecast.market_data import SyntheticSpec, generate_synthetic, summarize
from nemforecast.pipeline import add_time_features, build_windows, chronological_split, downsample_to_30min

# 90 days of 5-minute prices with daily and weekly cycles and a few midday negatives
raw = generate_synthetic(SyntheticSpec(n_days=90, noise_std=20.0, negative_band=(120, 167, 0.3)), seed=0)
half = downsample_to_30min(raw)
print(len(raw), "five-minute intervals ->", len(half), "half-hours")
print("mean before and after averaging:", np.mean(raw.prices), np.mean(half.prices))
print(summarize(half.prices))

# the last 20 days are held out; the rest is split 70/30 into train and validation
split = chronological_split(half, date(2023, 3, 12))
print({name: len(seg) for name, seg in zip(("train", "val", "test"), (split.train, split.val, split.test))})

# one week of lookback, one day ahead
features = add_time_features(half)
windows = build_windows(features, split.test, lookback=336, horizon=48)
print("test windows:", len(windows), "inputs", windows.inputs.shape, "targets", windows.targets.shape)

# the weekly naive forecast: every target repeats the price one week earlier
test = half.prices[split.test.start:split.test.stop]
lag = 336
start = split.test.start
y = np.stack([half.prices[start + i + lag:start + i + lag + 48] for i in range(len(windows))])
p = np.stack([half.prices[start + i:start + i + 48] for i in range(len(windows))])
dump = ForecastDump.from_windows(y, p, windows.target_timestamps)
bench = seasonal_naive(test)
pm = point_metrics(dump)
print(f"MAE {pm.mae:.2f}  RMSE {pm.rmse:.2f}  sMAPE {pm.smape:.2f}  rMAE {rmae(pm.mae, bench):.3f}  MDA {mda(dump):.1f}")

fig, ax = plt.subplots(figsize=(10, 3))
ax.plot(np.arange(48 * 7), test[-48 * 7:], lw=1, label="actual")
ax.plot(np.arange(48 * 7), half.prices[split.test.stop - 48 * 14:split.test.stop - 48 * 7], lw=1, label="week before")
ax.set_xlabel("half-hour")
ax.set_ylabel("A$/MWh")
ax.legend()
fig.tight_layout()
fig.savefig("pipeline_last_week.png", dpi=100)
