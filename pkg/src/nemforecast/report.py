"""Tables and figures from per-cell evaluation summaries.

Tables are CSV with values at three decimals. Each figure is drawn only from
the CSV written next to it, so the data files alone can re-render any plot.
"""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import NothingToReport
from .evaluation import METRICS
from .market_data import Region
from .models import ModelFamily

AVERAGE = "Average"
HIGHER_IS_BETTER = {"mda"}
SUBSET_METRICS = ("mae", "rmse", "smape")
INTRADAY_METRICS = ("mae", "rmse", "smape", "mda")
DIAGNOSTICS = ("price_change_std", "mean_price", "pct_negative", "pct_directional_shift")


def fmt(value) -> str:
    """Three-decimal rendering used in every table; missing values render as ``absent``."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "absent"
    return f"{value:.3f}"


def rank_flags(values: dict[str, float], higher_is_better: bool = False) -> dict[str, str]:
    """``best`` for the top value and ``second`` for the runner-up; equal values share a flag."""
    distinct = sorted({v for v in values.values() if v is not None and np.isfinite(v)}, reverse=higher_is_better)
    labels = dict(zip(distinct[:2], ("best", "second")))
    return {k: labels.get(v, "") for k, v in values.items()}


def _order(values, enum):
    known = [x.value for x in enum]
    return sorted(values, key=lambda v: (known.index(v) if v in known else len(known), v))


def _region_order(regions):
    return _order(regions, Region)


def _family_order(families):
    return _order(families, ModelFamily)


def _cell_key(e: dict) -> tuple:
    regions, families = [r.value for r in Region], [f.value for f in ModelFamily]
    return (e["setting"], regions.index(e["region"]) if e["region"] in regions else len(regions), e["region"],
            families.index(e["family"]) if e["family"] in families else len(families))


def overall_rows(evaluations: list[dict]) -> list[dict]:
    """Region x family rows per setting, followed by each setting's Average block."""
    by_cell = defaultdict(dict)
    for e in evaluations:
        by_cell[(e["setting"], e["region"])][e["family"]] = e["metrics"]
    settings = sorted({s for s, _ in by_cell})
    rows = []
    for setting in settings:
        regions = _region_order([r for s, r in by_cell if s == setting])
        blocks = [(r, by_cell[(setting, r)]) for r in regions]
        families = _family_order({f for _, fams in blocks for f in fams})
        # unweighted mean across regions, over the regions where the family ran
        avg = {}
        for f in families:
            present = [fams[f] for _, fams in blocks if f in fams]
            avg[f] = {m: float(np.mean([p[m] for p in present])) for m in METRICS}
        for region, fams in blocks + [(AVERAGE, avg)]:
            flags = {m: rank_flags({f: fams[f][m] for f in fams}, m in HIGHER_IS_BETTER) for m in METRICS}
            for f in _family_order(fams):
                row = {"setting": setting, "region": region, "model": ModelFamily.parse(f).display_name}
                for m in METRICS:
                    row[m] = fams[f][m]
                    row[f"{m}_flag"] = flags[m][f]
                rows.append(row)
    return rows


def subset_rows(evaluations: list[dict], subset: str) -> list[dict]:
    """Table rows for one subset (``extreme`` or ``negative``); absent subsets keep n = 0."""
    rows = []
    for e in sorted(evaluations, key=_cell_key):
        stats = e["subsets"].get(subset)
        row = {"setting": e["setting"], "region": e["region"], "model": ModelFamily.parse(e["family"]).display_name}
        for m in SUBSET_METRICS:
            row[m] = None if stats is None else stats[m]
        row["n"] = 0 if stats is None else stats["n"]
        rows.append(row)
    return rows


def _write_csv(path: Path, rows: list[dict], formatted: set[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if not rows:
            return path
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: fmt(v) if k in formatted else v for k, v in r.items()})
    return path


def intraday_table(evaluations: list[dict], region: str, setting: str) -> list[dict]:
    """48 rows: per-family interval metrics plus the actual-price diagnostics."""
    cells = sorted((e for e in evaluations if e["region"] == region and e["setting"] == setting), key=_cell_key)
    diag = cells[0]["diagnostics"]
    rows = []
    for k in range(len(diag)):
        row = {"interval": k}
        for d in DIAGNOSTICS:
            row[d] = diag[k][d]
        for e in cells:
            for m in INTRADAY_METRICS:
                row[f"{e['family']}:{m}"] = e["intraday"][k][m]
        rows.append(row)
    return rows


def render_intraday(csv_path: str | os.PathLike, png_path: str | os.PathLike) -> Path:
    """Per-interval error curves (top) and actual-price diagnostics (bottom) from one intraday CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    k = np.array([int(r["interval"]) for r in rows])
    families = list(dict.fromkeys(c.split(":")[0] for c in rows[0] if ":" in c))
    fig, axes = plt.subplots(2, 4, figsize=(16, 7), sharex=True)
    for ax, m in zip(axes[0], INTRADAY_METRICS):
        for f in families:
            ax.plot(k, [float(r[f"{f}:{m}"]) for r in rows], label=ModelFamily.parse(f).display_name, lw=1)
        ax.set_title(m.upper() if m != "smape" else "sMAPE")
    axes[0][0].legend(fontsize=7)
    for ax, d in zip(axes[1], DIAGNOSTICS):
        ax.plot(k, [float(r[d]) for r in rows], color="k", lw=1)
        ax.set_title(d.replace("_", " "))
        ax.set_xlabel("half-hour interval")
    fig.tight_layout()
    png_path = Path(png_path)
    fig.savefig(png_path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return png_path


def emit_report(evaluations: list[dict], out_dir: str | os.PathLike, config_hash: str = "") -> list[Path]:
    """Write the overall, extreme and negative tables, a JSON summary and
    per-(region, setting) intraday data and figures. Returns the written paths."""
    if not evaluations:
        raise NothingToReport("no evaluated cells to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _write_csv(out / "table_overall.csv", overall_rows(evaluations), set(METRICS)),
        _write_csv(out / "table_extreme.csv", subset_rows(evaluations, "extreme"), set(SUBSET_METRICS)),
        _write_csv(out / "table_negative.csv", subset_rows(evaluations, "negative"), set(SUBSET_METRICS)),
    ]
    summary = {
        "config_hash": config_hash,
        "cells": sorted(
            ({k: e[k] for k in ("region", "setting", "family", "metrics", "per_seed", "benchmark_mae", "subsets")}
             for e in evaluations),
            key=lambda c: (c["setting"], c["region"], c["family"]),
        ),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    written.append(out / "summary.json")
    for region, setting in sorted({(e["region"], e["setting"]) for e in evaluations}):
        stem = f"intraday_{region}_{setting}"
        data = _write_csv(out / f"{stem}.csv", intraday_table(evaluations, region, setting), set())
        written += [data, render_intraday(data, out / f"{stem}.png")]
    return written
