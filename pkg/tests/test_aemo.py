import urllib.error
from datetime import date, timedelta

import numpy as np
import pyarrow.parquet as pq
import pytest

from nemforecast.aemo import (
    CACHE_SCHEMA,
    PriceCache,
    archive_urls,
    fetch_rrp,
    format_mms_csv,
    parse_mms_csv,
    seed_cache_from_series,
)
from nemforecast.errors import IntegrityError, NetworkUnavailable, RangeError
from nemforecast.market_data import Region, SyntheticSpec, generate_synthetic

TODAY = date(2026, 1, 1)


def month_series(region, start, days, seed=0):
    spec = SyntheticSpec(n_days=days, start_date=start, spike_rate=0.01)
    return generate_synthetic(spec, seed, region)


class FakeArchive:
    """Serves MMS CSVs for the months it holds; counts calls."""

    def __init__(self, series_by_region):
        self.text = format_mms_csv(series_by_region)
        self.calls = []

    def __call__(self, url):
        self.calls.append(url)
        if "PUBLIC_ARCHIVE" in url:
            raise urllib.error.HTTPError(url, 404, "not found", None, None)
        return self.text.encode()


def test_archive_urls_name_the_month():
    urls = archive_urls(2024, 3)
    assert len(urls) == 2
    assert all("MMSDM_2024_03" in u and "DISPATCHPRICE" in u for u in urls)


def test_mms_round_trip_shifts_settlement_to_interval_start():
    s = month_series(Region.QLD, date(2024, 2, 1), 1)
    parsed = parse_mms_csv(format_mms_csv({Region.QLD: s}))
    ts, rrp = parsed["QLD1"]
    assert np.array_equal(ts, s.timestamps)
    assert np.array_equal(rrp, s.prices)


def test_mms_parser_skips_intervention_rows_and_other_tables():
    text = "\n".join([
        "C,header",
        "I,DISPATCH,PRICE,5,SETTLEMENTDATE,RUNNO,REGIONID,DISPATCHINTERVAL,INTERVENTION,RRP",
        'D,DISPATCH,PRICE,5,"2024/01/01 00:05:00",1,QLD1,1,0,50.5',
        'D,DISPATCH,PRICE,5,"2024/01/01 00:05:00",1,QLD1,1,1,999',
        "I,DISPATCH,REGIONSUM,5,SETTLEMENTDATE,REGIONID,RRP",
        'D,DISPATCH,REGIONSUM,5,"2024/01/01 00:05:00",QLD1,777',
    ])
    ts, rrp = parse_mms_csv(text)["QLD1"]
    assert rrp.tolist() == [50.5]


def test_cache_round_trip_is_bit_exact(tmp_path):
    cache = PriceCache(tmp_path)
    ts = np.arange(5, dtype=np.int64) * 300
    rrp = np.array([0.1, -1000.0, 17500.0, 1e-300, 3.14159])
    cache.write(Region.VIC, 2024, 5, ts, rrp)
    t2, r2 = cache.read(Region.VIC, 2024, 5)
    assert np.array_equal(t2, ts) and r2.tobytes() == rrp.tobytes()
    assert pq.read_schema(cache.path(Region.VIC, 2024, 5)).remove_metadata() == CACHE_SCHEMA
    assert not list(tmp_path.rglob("*.tmp"))


def test_fetch_downloads_once_then_reads_cache(tmp_path):
    feb = {r: month_series(r, date(2024, 2, 1), 29, i) for i, r in enumerate(Region)}
    archive = FakeArchive(feb)
    a = fetch_rrp("SA", date(2024, 2, 3), date(2024, 2, 10), tmp_path, opener=archive, today=TODAY)
    assert len(a) == 8 * 288
    assert archive.calls and len(archive.calls) == 2  # 404 then fallback name
    b = fetch_rrp("SA", date(2024, 2, 3), date(2024, 2, 10), tmp_path, opener=archive, today=TODAY)
    assert len(archive.calls) == 2
    assert np.array_equal(a.prices, b.prices)
    # every region of the month was cached from the one archive
    assert all(PriceCache(tmp_path).has(r, 2024, 2) for r in Region)
    offset = (date(2024, 2, 3) - date(2024, 2, 1)).days * 288
    assert np.array_equal(a.prices, feb[Region.SA].prices[offset:offset + 8 * 288])


def test_fetch_detects_gaps(tmp_path):
    s = month_series(Region.QLD, date(2024, 4, 1), 30)
    seed_cache_from_series(tmp_path, [s])
    cache = PriceCache(tmp_path)
    ts, rrp = cache.read(Region.QLD, 2024, 4)
    cache.write(Region.QLD, 2024, 4, np.delete(ts, 100), np.delete(rrp, 100))
    with pytest.raises(IntegrityError):
        fetch_rrp("QLD", date(2024, 4, 1), date(2024, 4, 2), tmp_path, today=TODAY)


def test_fetch_range_errors(tmp_path):
    with pytest.raises(RangeError):
        fetch_rrp("QLD", date(2024, 5, 2), date(2024, 5, 1), tmp_path, today=TODAY)
    with pytest.raises(RangeError):
        fetch_rrp("QLD", date(2001, 1, 1), date(2001, 1, 2), tmp_path, today=TODAY)
    with pytest.raises(RangeError):
        fetch_rrp("QLD", date(2025, 12, 1), TODAY + timedelta(days=3), tmp_path, today=TODAY)


def test_fetch_offline_without_cache_raises_network_unavailable(tmp_path):
    def offline(url):
        raise urllib.error.URLError("no route to host")

    with pytest.raises(NetworkUnavailable):
        fetch_rrp("TAS", date(2024, 1, 1), date(2024, 1, 2), tmp_path, opener=offline, today=TODAY)


def test_seeded_cache_serves_offline_fetch(tmp_path):
    s = month_series(Region.NSW, date(2024, 1, 30), 5)
    seed_cache_from_series(tmp_path, [s])
    got = fetch_rrp("NSW", date(2024, 1, 30), date(2024, 2, 3), tmp_path, opener=None, today=TODAY)
    assert np.array_equal(got.prices, s.prices)


def test_cache_dir_env_override(tmp_path, monkeypatch):
    from nemforecast.aemo import CACHE_ENV, default_cache_dir

    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    assert default_cache_dir() == tmp_path
