import csv
import hashlib

import numpy as np
import pytest

from nemforecast.errors import NothingToReport
from nemforecast.evaluation import METRICS
from nemforecast.market_data import Region
from nemforecast.models import ModelFamily
from nemforecast.report import AVERAGE, emit_report, fmt, overall_rows, rank_flags, render_intraday, subset_rows


def fake_evaluations(seed=0, regions=None, families=None, settings=("24h", "48h")):
    rng = np.random.default_rng(seed)
    regions = regions or [r.value for r in Region]
    families = families or [f.value for f in ModelFamily]
    out = []
    for s in settings:
        for r in regions:
            for f in families:
                metrics = {m: float(rng.uniform(0, 100)) for m in METRICS}
                out.append({
                    "region": r, "setting": s, "family": f, "metrics": metrics, "per_seed": [metrics],
                    "benchmark_mae": 50.0,
                    "subsets": {"extreme": {"mae": 1.0, "rmse": 2.0, "smape": 3.0, "n": 10}, "negative": None},
                    "intraday": [{m: float(rng.uniform()) for m in ("mae", "rmse", "smape", "mda")} for _ in range(48)],
                    "diagnostics": [{"price_change_std": 1.0, "mean_price": 2.0, "pct_negative": 0.0,
                                     "pct_directional_shift": 50.0} for _ in range(48)],
                })
    return out


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fmt():
    assert fmt(200 / 3) == "66.667"
    assert fmt(None) == "absent" and fmt(float("nan")) == "absent"


def test_rank_flags():
    assert rank_flags({"a": 3.0, "b": 1.0, "c": 2.0}) == {"a": "", "b": "best", "c": "second"}
    assert rank_flags({"a": 3.0, "b": 1.0, "c": 2.0}, higher_is_better=True)["a"] == "best"
    assert rank_flags({"a": 1.0, "b": 1.0, "c": 2.0}) == {"a": "best", "b": "best", "c": "second"}


def test_overall_table_shape_and_average():
    evals = fake_evaluations()
    rows = overall_rows(evals)
    assert len(rows) == 90 + 18
    avg = [r for r in rows if r["region"] == AVERAGE]
    assert len(avg) == 18
    qld = next(r for r in rows if r["region"] == AVERAGE and r["setting"] == "24h" and r["model"] == "DLinear")
    expected = np.mean([e["metrics"]["mae"] for e in evals if e["setting"] == "24h" and e["family"] == "DLINEAR"])
    assert qld["mae"] == pytest.approx(expected, rel=1e-12)


def test_mda_flag_prefers_higher():
    evals = fake_evaluations(regions=["QLD"], families=["DLINEAR", "LSTM"], settings=("24h",))
    evals[0]["metrics"]["mda"], evals[1]["metrics"]["mda"] = 60.0, 40.0
    evals[0]["metrics"]["mae"], evals[1]["metrics"]["mae"] = 60.0, 40.0
    rows = {r["model"]: r for r in overall_rows(evals) if r["region"] == "QLD"}
    assert rows["DLinear"]["mda_flag"] == "best" and rows["LSTM"]["mae_flag"] == "best"


def test_absent_negative_subset_renders_absent(tmp_path):
    evals = fake_evaluations(regions=["QLD"], families=["DLINEAR"], settings=("24h",))
    emit_report(evals, tmp_path)
    row = read(tmp_path / "table_negative.csv")[0]
    assert row["mae"] == "absent" and row["n"] == "0"
    assert read(tmp_path / "table_extreme.csv")[0]["mae"] == "1.000"
    assert subset_rows(evals, "negative")[0]["mae"] is None


def test_nothing_to_report(tmp_path):
    with pytest.raises(NothingToReport):
        emit_report([], tmp_path)


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def test_report_is_byte_identical_and_order_free(tmp_path):
    evals = fake_evaluations(regions=["QLD", "SA"], families=["DLINEAR", "LSTM"])
    emit_report(evals, tmp_path / "a", "h")
    emit_report(list(reversed(evals)), tmp_path / "b", "h")
    assert digest(tmp_path / "a") == digest(tmp_path / "b")


def test_figure_rerenders_from_csv_alone(tmp_path):
    evals = fake_evaluations(regions=["QLD"], families=["DLINEAR"], settings=("24h",))
    emit_report(evals, tmp_path)
    png = render_intraday(tmp_path / "intraday_QLD_24h.csv", tmp_path / "again.png")
    assert png.read_bytes() == (tmp_path / "intraday_QLD_24h.png").read_bytes()
    rows = read(tmp_path / "intraday_QLD_24h.csv")
    assert len(rows) == 48 and "DLINEAR:mae" in rows[0]
