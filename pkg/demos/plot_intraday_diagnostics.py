"""
Where in the day do forecasts fail?
===================================

Two small studies on synthetic data. First, three compact models are
trained and compared against the weekly naive forecast. Second, evening
volatility and a midday negative-price band are injected, and the
interval-of-day error profile shows where they land.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from nemforecast.studies import NEGATIVE_INTERVALS, VOLATILE_INTERVALS, forecasting_study, intraday_study

# takes a minute or so on one CPU core
study = forecasting_study()
for family, value in study.rmae.items():
    print(f"{family:10s} rMAE {value:.3f}  (best epoch {study.best_epochs[family]})")
print("all below the naive benchmark:", study.all_beat_naive)

result = intraday_study()
print("largest RMSE at interval", result.peak_rmse_interval, "expected within", VOLATILE_INTERVALS)
print("most negative prices at interval", result.peak_negative_interval, "expected within", NEGATIVE_INTERVALS)
inside, outside = result.band_smape_excess()
print(f"smallest sMAPE inside the negative band {inside:.1f} vs median outside {outside:.1f}")

k = np.arange(48)
fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
axes[0].plot(k, result.profile.rmse)
axes[0].axvspan(VOLATILE_INTERVALS.start, VOLATILE_INTERVALS.stop - 1, alpha=0.2)
axes[0].set_ylabel("RMSE")
axes[1].plot(k, result.profile.smape)
axes[1].axvspan(NEGATIVE_INTERVALS.start, NEGATIVE_INTERVALS.stop - 1, alpha=0.2, color="g")
axes[1].set_ylabel("sMAPE")
axes[2].bar(k, result.diagnostics.pct_negative)
axes[2].set_ylabel("% negative")
axes[2].set_xlabel("half-hour interval of day")
fig.tight_layout()
fig.savefig("intraday_profile.png", dpi=100)
