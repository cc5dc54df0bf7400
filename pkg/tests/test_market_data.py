from datetime import date, datetime

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from nemforecast.errors import EmptySeries, IntegrityError, SpecError
from nemforecast.market_data import (
    INTERVALS_PER_DAY,
    MARKET_TZ,
    PRICE_CAP,
    PRICE_FLOOR,
    RawPriceSeries,
    Region,
    SyntheticSpec,
    generate_synthetic,
    market_midnight,
    summarize,
)


def test_region_parse_and_aemo_ids():
    assert Region.parse("qld") is Region.QLD
    assert Region.parse("NSW1") is Region.NSW
    assert [r.aemo_id for r in Region] == ["QLD1", "NSW1", "VIC1", "SA1", "TAS1"]
    with pytest.raises(ValueError):
        Region.parse("WA")


def test_market_midnight_is_utc_plus_10_all_year():
    winter = market_midnight(date(2024, 7, 1))
    summer = market_midnight(date(2024, 1, 1))
    assert winter.utcoffset() == summer.utcoffset()
    assert winter.utcoffset().total_seconds() == 36000


def test_calendar_arithmetic_of_the_study_range():
    days = (date(2025, 6, 30) - date(2023, 1, 1)).days + 1
    assert days == 365 + 366 + 181 == 912
    assert days * INTERVALS_PER_DAY == 262_656
    assert days * 48 == 43_776


def test_raw_series_rejects_out_of_bound_and_non_finite():
    start = market_midnight(date(2024, 1, 1))
    with pytest.raises(IntegrityError):
        RawPriceSeries(Region.QLD, start, [10.0, PRICE_CAP + 1])
    with pytest.raises(IntegrityError):
        RawPriceSeries(Region.QLD, start, [PRICE_FLOOR - 1])
    with pytest.raises(IntegrityError):
        RawPriceSeries(Region.QLD, start, [np.nan])
    s = RawPriceSeries(Region.QLD, start, [PRICE_FLOOR, PRICE_CAP])
    assert not s.prices.flags.writeable


def test_raw_series_timestamps_step_five_minutes():
    s = RawPriceSeries(Region.SA, market_midnight(date(2024, 3, 1)), np.zeros(10))
    assert np.all(np.diff(s.timestamps) == 300)
    assert datetime.fromtimestamp(int(s.timestamps[0]), MARKET_TZ).hour == 0


def test_synthetic_is_deterministic_per_seed():
    spec = SyntheticSpec(n_days=3, spike_rate=0.01, negative_band=(100, 150, 0.3))
    a, b = generate_synthetic(spec, 7), generate_synthetic(spec, 7)
    assert np.array_equal(a.prices, b.prices)
    assert not np.array_equal(a.prices, generate_synthetic(spec, 8).prices)
    assert len(a) == 3 * INTERVALS_PER_DAY


def test_synthetic_without_noise_is_the_closed_form():
    spec = SyntheticSpec(n_days=2, noise_std=0.0, daily_amplitude=40, weekly_amplitude=0)
    s = generate_synthetic(spec, 0)
    j = np.arange(2 * INTERVALS_PER_DAY) % INTERVALS_PER_DAY
    expected = 100 + 40 * np.cos(2 * np.pi * (j - 216) / INTERVALS_PER_DAY)
    assert np.allclose(s.prices, expected, atol=1e-12)
    assert np.argmax(s.prices[:INTERVALS_PER_DAY]) == 216


def test_negative_band_lands_inside_band_only():
    spec = SyntheticSpec(n_days=60, noise_std=5, negative_band=(168, 191, 0.5))
    s = generate_synthetic(spec, 1)
    j = np.arange(len(s)) % INTERVALS_PER_DAY
    neg = s.prices < 0
    assert np.all((j[neg] >= 168) & (j[neg] <= 191))
    share = neg[(j >= 168) & (j <= 191)].mean()
    assert 0.35 < share < 0.65


def test_volatility_band_raises_in_band_spread():
    spec = SyntheticSpec(n_days=40, noise_std=5, daily_amplitude=0, weekly_amplitude=0,
                         volatility_band=(192, 251, 50.0))
    s = generate_synthetic(spec, 2)
    j = np.arange(len(s)) % INTERVALS_PER_DAY
    inside = (j >= 192) & (j <= 251)
    assert s.prices[inside].std() > 5 * s.prices[~inside].std()


@pytest.mark.parametrize("bad", [
    {"n_days": 0}, {"noise_std": -1}, {"spike_rate": 1.5},
    {"negative_band": (10, 5, 0.5)}, {"negative_band": (0, 10, 1.5)}, {"volatility_band": (0, 300, 1.0)},
])
def test_spec_validation(bad):
    with pytest.raises(SpecError):
        SyntheticSpec(**bad)


def test_spec_dict_round_trip():
    spec = SyntheticSpec(n_days=9, negative_band=(1, 2, 0.1), start_date=date(2024, 2, 3))
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(SpecError):
        SyntheticSpec.from_dict({"nonsense": 1})


def test_summary_constant_series_is_degenerate():
    s = summarize(np.full(10, 42.0))
    assert s.mean == 42.0 and s.std == 0.0 and s.degenerate
    assert np.isnan(s.skewness) and np.isnan(s.kurtosis)


def test_summary_empty_raises():
    with pytest.raises(EmptySeries):
        summarize(np.array([]))


@given(st.lists(st.floats(-1000, 17500, allow_nan=False), min_size=10, max_size=10).filter(
    lambda v: max(v) - min(v) > 1e-3))
def test_summary_matches_loop_oracle(values):
    s = summarize(np.array(values))
    ref = oracles.moments(values)
    for key in ("mean", "std", "skewness", "kurtosis"):
        assert getattr(s, key) == pytest.approx(ref[key], rel=1e-9, abs=1e-9)
    assert s.median == pytest.approx(sorted(values)[4] / 2 + sorted(values)[5] / 2)
