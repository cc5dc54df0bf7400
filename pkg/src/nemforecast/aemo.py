"""AEMO dispatch-price client with a per-(region, month) parquet cache.

Prices come from the public MMSDM monthly archives of the ``DISPATCHPRICE``
table. Files use the MMS CSV report format: ``C`` comment rows, ``I`` header
rows and ``D`` data rows. ``SETTLEMENTDATE`` marks the *end* of a 5-minute
dispatch interval; the cache stores interval start times.
"""

from __future__ import annotations

import calendar
import csv
import io
import logging
import os
import tempfile
import urllib.error
import urllib.request
import zipfile
from concurrent.futures import ThreadPoolExecutor
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from .errors import IntegrityError, NetworkUnavailable, RangeError
from .market_data import FIVE_MINUTES, INTERVALS_PER_DAY, MARKET_TZ, RawPriceSeries, Region, market_midnight

log = logging.getLogger(__name__)

CACHE_ENV = "NEMFORECAST_CACHE"
ARCHIVE_ROOT = "https://nemweb.com.au/Data_Archive/Wholesale_Electricity/MMSDM"
# earliest month of the MMSDM historical archive
AVAILABLE_FROM = date(2009, 7, 1)

Opener = Callable[[str], bytes]

CACHE_SCHEMA = pa.schema([("timestamp", pa.int64()), ("rrp", pa.float64())])


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "nemforecast"))


def archive_urls(year: int, month: int) -> list[str]:
    """Candidate archive URLs for one month, newest naming convention first."""
    base = f"{ARCHIVE_ROOT}/{year}/MMSDM_{year}_{month:02d}/MMSDM_Historical_Data_SQLLoader/DATA"
    stamp = f"{year}{month:02d}010000"
    return [
        f"{base}/PUBLIC_ARCHIVE%23DISPATCHPRICE%23FILE01%23{stamp}.zip",
        f"{base}/PUBLIC_DVD_DISPATCHPRICE_{stamp}.zip",
    ]


def _parse_settlement(value: str) -> int:
    dt = datetime.strptime(value.strip().strip('"'), "%Y/%m/%d %H:%M:%S").replace(tzinfo=MARKET_TZ)
    return int(dt.timestamp())


def parse_mms_csv(text: str | bytes, table: tuple[str, str] = ("DISPATCH", "PRICE")) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Extract ``(interval_start_epoch, rrp)`` arrays per AEMO region id.

    Only rows of ``table`` are read. When an ``INTERVENTION`` column exists,
    only the non-intervention pricing run (``INTERVENTION == 0``) is kept.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8-sig")
    header: list[str] | None = None
    rows: dict[str, list[tuple[int, float]]] = {}
    for row in csv.reader(io.StringIO(text)):
        if not row:
            continue
        kind = row[0]
        if kind == "I":
            header = [c.upper() for c in row] if tuple(c.upper() for c in row[1:3]) == table else None
            continue
        if kind != "D" or header is None or tuple(c.upper() for c in row[1:3]) != table:
            continue
        rec = dict(zip(header, row))
        if rec.get("INTERVENTION", "0").strip() not in ("0", "0.0", ""):
            continue
        ts = _parse_settlement(rec["SETTLEMENTDATE"]) - FIVE_MINUTES
        rows.setdefault(rec["REGIONID"].strip(), []).append((ts, float(rec["RRP"])))
    out = {}
    for region_id, pairs in rows.items():
        pairs.sort()
        ts = np.array([p[0] for p in pairs], dtype=np.int64)
        rrp = np.array([p[1] for p in pairs], dtype=np.float64)
        out[region_id] = (ts, rrp)
    return out


def format_mms_csv(region_prices: dict[Region, RawPriceSeries]) -> str:
    """Render series as an MMS ``DISPATCH,PRICE`` report (used for fixtures and offline mirrors)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["C", "NEMP.WORLD", "DISPATCHPRICE", "AEMO", "PUBLIC"])
    w.writerow(["I", "DISPATCH", "PRICE", "5", "SETTLEMENTDATE", "RUNNO", "REGIONID", "DISPATCHINTERVAL", "INTERVENTION", "RRP"])
    for region, series in region_prices.items():
        for ts, price in zip(series.timestamps, series.prices):
            end = datetime.fromtimestamp(int(ts) + FIVE_MINUTES, MARKET_TZ)
            w.writerow(["D", "DISPATCH", "PRICE", "5", end.strftime("%Y/%m/%d %H:%M:%S"), "1",
                        region.aemo_id, end.strftime("%Y%m%d%H%M"), "0", repr(float(price))])
    w.writerow(["C", "END OF REPORT", "1"])
    return buf.getvalue()


def _default_opener(url: str) -> bytes:
    with urllib.request.urlopen(url, timeout=120) as resp:
        return resp.read()


def _unpack(payload: bytes) -> str:
    if payload[:2] == b"PK":
        with zipfile.ZipFile(io.BytesIO(payload)) as zf:
            name = next(n for n in zf.namelist() if n.upper().endswith(".CSV"))
            return zf.read(name).decode("utf-8-sig")
    return payload.decode("utf-8-sig")


def _month_bounds(year: int, month: int) -> tuple[int, int]:
    first = market_midnight(date(year, month, 1))
    ndays = calendar.monthrange(year, month)[1]
    return int(first.timestamp()), int((first + timedelta(days=ndays)).timestamp())


class PriceCache:
    """Parquet files laid out as ``<root>/<REGION>/<YYYY-MM>.parquet``.

    Writes go through a temporary file and an atomic rename, so concurrent
    fetches of the same month never expose a partial file.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path(self, region: Region, year: int, month: int) -> Path:
        return self.root / region.value / f"{year:04d}-{month:02d}.parquet"

    def has(self, region: Region, year: int, month: int) -> bool:
        return self.path(region, year, month).exists()

    def read(self, region: Region, year: int, month: int) -> tuple[np.ndarray, np.ndarray]:
        table = pq.read_table(self.path(region, year, month))
        return (table.column("timestamp").to_numpy().astype(np.int64),
                table.column("rrp").to_numpy().astype(np.float64))

    def write(self, region: Region, year: int, month: int, ts: np.ndarray, rrp: np.ndarray) -> Path:
        path = self.path(region, year, month)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = pa.table({"timestamp": np.asarray(ts, dtype="<i8"), "rrp": np.asarray(rrp, dtype="<f8")},
                         schema=CACHE_SCHEMA)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        os.close(fd)
        try:
            pq.write_table(table, tmp, compression="zstd")
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return path


def _months(start: date, end: date) -> list[tuple[int, int]]:
    out = []
    y, m = start.year, start.month
    while (y, m) <= (end.year, end.month):
        out.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


def _download_month(cache: PriceCache, year: int, month: int, opener: Opener) -> None:
    payload = None
    not_found = []
    for url in archive_urls(year, month):
        try:
            payload = opener(url)
            break
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                not_found.append(url)
                continue
            raise NetworkUnavailable(f"{url}: HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise NetworkUnavailable(f"cannot reach AEMO archive ({exc})") from exc
    if payload is None:
        raise RangeError(f"no dispatch-price archive published for {year}-{month:02d}")
    lo, hi = _month_bounds(year, month)
    for region_id, (ts, rrp) in parse_mms_csv(_unpack(payload)).items():
        try:
            region = Region.parse(region_id)
        except ValueError:
            continue
        keep = (ts >= lo) & (ts < hi)
        cache.write(region, year, month, ts[keep], rrp[keep])
    log.info("cached dispatch prices for %d-%02d", year, month)


def fetch_rrp(
    region: Region | str,
    start_date: date,
    end_date: date,
    cache_dir: str | os.PathLike | None = None,
    *,
    opener: Opener | None = None,
    max_workers: int = 4,
    today: date | None = None,
) -> RawPriceSeries:
    """Return the gap-free 5-minute RRP series covering ``[start_date, end_date]`` inclusive.

    Months already in the cache are read locally; missing months are
    downloaded (all regions of a month are cached from one archive).

    Raises:
        RangeError: dates reversed, before the archive starts, or in the future.
        NetworkUnavailable: a month is missing from the cache and the archive is unreachable.
        IntegrityError: the assembled series has gaps, duplicates or out-of-bound prices.
    """
    region = Region.parse(region)
    if start_date > end_date:
        raise RangeError(f"start_date {start_date} is after end_date {end_date}")
    if start_date < AVAILABLE_FROM:
        raise RangeError(f"dispatch prices are archived from {AVAILABLE_FROM}, requested {start_date}")
    today = today or datetime.now(MARKET_TZ).date()
    if end_date >= today:
        raise RangeError(f"end_date {end_date} is not in the past")

    cache = PriceCache(cache_dir if cache_dir is not None else default_cache_dir())
    months = _months(start_date, end_date)
    missing = [ym for ym in months if not cache.has(region, *ym)]
    if missing:
        opener = opener or _default_opener
        with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(missing)))) as pool:
            for fut in [pool.submit(_download_month, cache, y, m, opener) for y, m in missing]:
                fut.result()

    parts = [cache.read(region, y, m) for y, m in months if cache.has(region, y, m)]
    if len(parts) != len(months):
        raise IntegrityError(f"archive for {region.value} lacks some months in {start_date}..{end_date}")
    ts = np.concatenate([p[0] for p in parts])
    rrp = np.concatenate([p[1] for p in parts])
    lo = int(market_midnight(start_date).timestamp())
    hi = int(market_midnight(end_date + timedelta(days=1)).timestamp())
    keep = (ts >= lo) & (ts < hi)
    ts, rrp = ts[keep], rrp[keep]
    expected = (end_date - start_date).days + 1
    _check_gap_free(ts, lo, expected * INTERVALS_PER_DAY)
    return RawPriceSeries(region, market_midnight(start_date), rrp)


def _check_gap_free(ts: np.ndarray, lo: int, expected_len: int) -> None:
    if ts.size and np.any(np.diff(ts) <= 0):
        raise IntegrityError("duplicate or unordered timestamps after assembly")
    if ts.size != expected_len or (ts.size and (ts[0] != lo or np.any(np.diff(ts) != FIVE_MINUTES))):
        raise IntegrityError(f"expected {expected_len} gap-free intervals, assembled {ts.size}")


def seed_cache_from_series(cache_dir: str | os.PathLike, series: Iterable[RawPriceSeries]) -> list[Path]:
    """Write series into the cache layout, e.g. to run the pipeline offline."""
    cache = PriceCache(cache_dir)
    written = []
    for s in series:
        ts = s.timestamps
        first = s.start.date()
        last = (s.end - timedelta(seconds=1)).date()
        for y, m in _months(first, last):
            lo, hi = _month_bounds(y, m)
            keep = (ts >= lo) & (ts < hi)
            written.append(cache.write(s.region, y, m, ts[keep], s.prices[keep]))
    return written
