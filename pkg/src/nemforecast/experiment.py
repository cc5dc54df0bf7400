"""Declarative experiment runner with an append-only run ledger.

An experiment walks fetch -> prepare -> tune -> train -> evaluate -> report
over the (region, setting, family) cells of its config. Every stage output
lands under ``output_dir`` and is recorded in ``ledger.jsonl`` together with
the config hash, so rerunning an unchanged config skips finished work.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.parquet as pq

from .errors import ConfigError, NemForecastError, SpecError
from .evaluation import (
    ForecastDump,
    aggregate_seeds,
    diurnal_diagnostics,
    evaluate_dump,
    mean_profile,
    seasonal_naive,
)
from .market_data import RawPriceSeries, Region, SyntheticSpec, generate_synthetic, market_midnight
from .models import ModelConfig, ModelFamily, load_checkpoint, save_checkpoint
from .pipeline import SETTINGS, PreparedDataset, prepare
from .training import GridResult, GridSpec, TrainingConfig, config_for, grid_search, run_seeds

log = logging.getLogger(__name__)

STAGES = ("fetch", "prepare", "tune", "train", "evaluate", "report")
SOURCES = ("synthetic", "aemo")


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs. Defaults follow the full-scale protocol
    except ``source``, which defaults to synthetic data so that a bare
    config runs offline."""

    regions: tuple[str, ...] = tuple(r.value for r in Region)
    settings: tuple[str, ...] = ("24h", "48h")
    families: tuple[str, ...] = tuple(f.value for f in ModelFamily)
    source: str = "synthetic"
    synthetic: dict = field(default_factory=dict)
    data_seed: int = 0
    start_date: str = "2023-01-01"
    end_date: str = "2025-06-30"
    test_start: str | None = None
    train_fraction: float = 0.7
    scaler_fit: str = "train"
    cache_dir: str | None = None
    training: dict = field(default_factory=dict)
    tune: bool = True
    budget: int | None = None
    grid: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    baseline_time_features: bool = False
    tail_pct: float = 5.0
    tail_scope: str = "region"
    output_dir: str = "runs/experiment"
    n_workers: int = 1

    def __post_init__(self):
        for name in ("regions", "settings", "families"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        try:
            object.__setattr__(self, "regions", tuple(Region.parse(r).value for r in self.regions))
            object.__setattr__(self, "families", tuple(ModelFamily.parse(f).value for f in self.families))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.regions or not self.families or not self.settings:
            raise ConfigError("regions, settings and families must be non-empty")
        bad = [s for s in self.settings if s not in SETTINGS]
        if bad:
            raise ConfigError(f"unknown settings {bad}; choose from {sorted(SETTINGS)}")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}")
        if self.scaler_fit not in ("train", "train+val"):
            raise ConfigError("scaler_fit must be 'train' or 'train+val'")
        if self.tail_scope not in ("region", "global"):
            raise ConfigError("tail_scope must be 'region' or 'global'")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be a positive integer")
        try:
            self.synthetic_spec()
            self.training_config()
            self.grid_spec()
            start, end, test = self.dates()
        except (SpecError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not start < test <= end:
            raise ConfigError("need start_date < test_start <= end_date")
        _check_keys(self.model_options, ("dropout", "extra"), "model_options")

    def dates(self) -> tuple[date, date, date]:
        """(first day, last day, test start). Synthetic data takes its range from
        the generator spec and, without an explicit ``test_start``, tests on the
        last sixth of its days; AEMO data defaults to a 2025-01-01 test start."""
        if self.source == "synthetic":
            spec = self.synthetic_spec()
            start = spec.start_date
            end = start + timedelta(days=spec.n_days - 1)
            default_test = end + timedelta(days=1 - max(1, spec.n_days // 6))
        else:
            start, end = date.fromisoformat(self.start_date), date.fromisoformat(self.end_date)
            default_test = date(2025, 1, 1)
        test = date.fromisoformat(self.test_start) if self.test_start else default_test
        return start, end, test

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec.from_dict(self.synthetic)

    def training_config(self) -> TrainingConfig:
        _check_keys(self.training, [f.name for f in fields(TrainingConfig)], "training")
        return TrainingConfig(**self.training)

    def grid_spec(self) -> GridSpec:
        _check_keys(self.grid, [f.name for f in fields(GridSpec)], "grid")
        return GridSpec(**{k: tuple(v) for k, v in self.grid.items()})

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("regions", "settings", "families"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys(d, [f.name for f in fields(cls)], "experiment")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, OSError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def with_(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})

    def config_hash(self) -> str:
        """Hash of everything that affects results (output_dir and n_workers excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("n_workers")
        d["resolved_dates"] = [x.isoformat() for x in self.dates()]
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- ledger

@dataclass
class LedgerRecord:
    config_hash: str
    stage: str
    key: str
    status: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    error: str | None = None
    info: dict = field(default_factory=dict)


class RunLedger:
    """Append-only JSON-lines log of stage outcomes, one line per (stage, key) attempt."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.records: list[LedgerRecord] = []
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self.records.append(LedgerRecord(**json.loads(line)))

    def append(self, record: LedgerRecord) -> LedgerRecord:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")
        self.records.append(record)
        return record

    def latest(self, config_hash: str, stage: str, key: str) -> LedgerRecord | None:
        for r in reversed(self.records):
            if (r.config_hash, r.stage, r.key) == (config_hash, stage, key):
                return r
        return None

    def done(self, config_hash: str, stage: str, key: str, root: Path) -> bool:
        r = self.latest(config_hash, stage, key)
        return r is not None and r.status == "ok" and all((root / p).exists() for p in r.outputs)

    def failed(self, config_hash: str) -> list[LedgerRecord]:
        latest = {}
        for r in self.records:
            if r.config_hash == config_hash:
                latest[(r.stage, r.key)] = r
        return [r for r in latest.values() if r.status == "failed"]

    def stage_records(self, config_hash: str, stage: str) -> list[LedgerRecord]:
        latest = {}
        for r in self.records:
            if r.config_hash == config_hash and r.stage == stage:
                latest[r.key] = r
        return list(latest.values())


# ---------------------------------------------------------------- stages

class Experiment:
    """Stage runner bound to one config and output directory."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.root = Path(config.output_dir)
        self.hash = config.config_hash()
        self.ledger = RunLedger(self.root / "ledger.jsonl")

    # paths are relative to root so the ledger stays relocatable
    def raw_path(self, region):
        return Path("raw") / f"{region}.parquet"

    def prepared_path(self, region, setting):
        return Path("prepared") / f"{region}_{setting}"

    def tune_path(self, region, setting, family):
        return Path("tune") / f"{region}_{setting}_{family}.json"

    def run_path(self, region, setting, family, seed):
        return Path("runs") / f"{region}_{setting}" / family / f"seed_{seed}"

    def eval_path(self, region, setting, family):
        return Path("evaluation") / f"{region}_{setting}_{family}.json"

    def _stage(self, stage: str, key: str, fn, inputs=(), force: bool = False) -> LedgerRecord:
        if not force and self.ledger.done(self.hash, stage, key, self.root):
            log.info("%s %s up to date", stage, key)
            return self.ledger.latest(self.hash, stage, key)
        t0 = time.perf_counter()
        try:
            outputs, info = fn()
            rec = LedgerRecord(self.hash, stage, key, "ok", [str(p) for p in inputs], [str(p) for p in outputs],
                               time.perf_counter() - t0, info=info or {})
        except (NemForecastError, ValueError, RuntimeError, OSError) as exc:
            log.error("%s %s failed: %s", stage, key, exc)
            log.debug("%s", traceback.format_exc())
            rec = LedgerRecord(self.hash, stage, key, "failed", [str(p) for p in inputs], [],
                               time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
        return self.ledger.append(rec)

    def _ok(self, stage, key) -> bool:
        r = self.ledger.latest(self.hash, stage, key)
        return r is not None and r.status == "ok"

    def write_config(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {"config_hash": self.hash, "config": self.config.to_dict()}
        (self.root / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True))

    # -- fetch
    def fetch(self, force=False) -> None:
        cfg = self.config
        start, end, _ = cfg.dates()
        for i, region in enumerate(cfg.regions):
            def work(region=region, i=i):
                if cfg.source == "synthetic":
                    raw = generate_synthetic(cfg.synthetic_spec(), cfg.data_seed + i, region)
                else:
                    from .aemo import fetch_rrp
                    raw = fetch_rrp(region, start, end, cfg.cache_dir)
                path = self.raw_path(region)
                (self.root / path).parent.mkdir(parents=True, exist_ok=True)
                table = pa.table({"timestamp": raw.timestamps, "rrp": raw.prices})
                pq.write_table(table.replace_schema_metadata({"config_hash": self.hash}), self.root / path)
                return [path], {"n": len(raw)}
            self._stage("fetch", region, work, force=force)

    def load_raw(self, region) -> RawPriceSeries:
        table = pq.read_table(self.root / self.raw_path(region))
        ts = table.column("timestamp").to_numpy()
        start = market_midnight(self.config.dates()[0])
        if ts.size and int(ts[0]) != int(start.timestamp()):
            raise ConfigError(f"raw series for {region} does not start at {start}")
        return RawPriceSeries(Region(region), start, table.column("rrp").to_numpy())

    # -- prepare
    def prepare(self, force=False) -> None:
        cfg = self.config
        _, _, test = cfg.dates()
        for region in cfg.regions:
            if not self._ok("fetch", region):
                continue
            for setting in cfg.settings:
                L, H = SETTINGS[setting]

                def work(region=region, L=L, H=H, setting=setting):
                    data = prepare(self.load_raw(region), test, L, H, cfg.train_fraction, cfg.scaler_fit)
                    data.meta["config_hash"] = self.hash
                    path = self.prepared_path(region, setting)
                    data.save(self.root / path)
                    return [path / "features.parquet", path / "manifest.json"], {"split": data.split.to_dict()}
                self._stage("prepare", f"{region}/{setting}", work, [self.raw_path(region)], force)

    def load_prepared(self, region, setting) -> PreparedDataset:
        return PreparedDataset.load(self.root / self.prepared_path(region, setting))

    # -- tune
    def tune(self, force=False) -> None:
        cfg = self.config
        for region, setting, family in self.cells("prepare"):
            def work(region=region, setting=setting, family=family):
                data = self.load_prepared(region, setting)
                fam = ModelFamily.parse(family)
                training = cfg.training_config()
                if cfg.tune:
                    result = grid_search(fam, cfg.grid_spec(), data, training, cfg.budget,
                                         n_workers=cfg.n_workers, model_options=cfg.model_options,
                                         time_features=cfg.baseline_time_features)
                    payload = result.manifest()
                else:
                    mc = config_for(fam, {}, data, time_features=cfg.baseline_time_features, **cfg.model_options)
                    payload = GridResult(fam, mc, training.learning_rate).manifest()
                payload["config_hash"] = self.hash
                path = self.tune_path(region, setting, family)
                (self.root / path).parent.mkdir(parents=True, exist_ok=True)
                (self.root / path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
                return [path], {"best_learning_rate": payload["best_learning_rate"]}
            self._stage("tune", f"{region}/{setting}/{family}", work,
                        [self.prepared_path(region, setting) / "manifest.json"], force)

    def cells(self, after: str):
        """(region, setting, family) cells whose upstream stage ``after`` succeeded."""
        cfg = self.config
        for region in cfg.regions:
            for setting in cfg.settings:
                for family in cfg.families:
                    key = {"prepare": f"{region}/{setting}"}.get(after, f"{region}/{setting}/{family}")
                    if self._ok(after, key):
                        yield region, setting, family

    # -- train
    def train(self, force=False) -> None:
        cfg = self.config
        training = cfg.training_config()
        for region, setting, family in self.cells("tune"):
            def work(region=region, setting=setting, family=family):
                tuned = json.loads((self.root / self.tune_path(region, setting, family)).read_text())
                mc = ModelConfig.from_dict(tuned["best_config"])
                data = self.load_prepared(region, setting)
                runs = run_seeds(mc, data, training.with_(learning_rate=tuned["best_learning_rate"]),
                                 setting=setting, n_workers=cfg.n_workers)
                outputs = []
                for sr in runs:
                    d = self.run_path(region, setting, family, sr.run.seed)
                    save_checkpoint(sr.run.model, self.root / d)
                    manifest = sr.run.manifest()
                    manifest["config_hash"] = self.hash
                    (self.root / d / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
                    sr.dump.to_parquet(self.root / d / "forecast.parquet")
                    outputs += [d / "forecast.parquet", d / "parameters.npy", d / "run.json"]
                return outputs, {"best_epochs": [sr.run.best_epoch for sr in runs]}
            self._stage("train", f"{region}/{setting}/{family}", work,
                        [self.tune_path(region, setting, family)], force)

    def load_dumps(self, region, setting, family) -> list[ForecastDump]:
        seeds = self.config.training_config().seeds
        return [ForecastDump.from_parquet(self.root / self.run_path(region, setting, family, s) / "forecast.parquet")
                for s in seeds]

    def load_model(self, region, setting, family, seed):
        return load_checkpoint(self.root / self.run_path(region, setting, family, seed))

    def tail_reference(self, region, setting, test_prices) -> np.ndarray:
        """Prices whose percentiles define the tails: this region's test period,
        or every prepared region's test period pooled."""
        if self.config.tail_scope == "region":
            return test_prices
        pooled = [self.load_prepared(r, setting).actual_prices("test")
                  for r in self.config.regions if self._ok("prepare", f"{r}/{setting}")]
        return np.concatenate(pooled)

    # -- evaluate
    def evaluate(self, force=False) -> None:
        cfg = self.config
        for region, setting, family in self.cells("train"):
            def work(region=region, setting=setting, family=family):
                data = self.load_prepared(region, setting)
                test_prices = data.actual_prices("test")
                bench = seasonal_naive(test_prices)
                tails = self.tail_reference(region, setting, test_prices)
                evals = [evaluate_dump(d, bench, tails, cfg.tail_pct) for d in self.load_dumps(region, setting, family)]
                report = aggregate_seeds([e.overall for e in evals])
                subsets = {}
                for name in evals[0].subsets:
                    present = [e.subsets[name] for e in evals if e.subsets[name] is not None]
                    subsets[name] = None if not present else {
                        m: float(np.mean([p[m] for p in present])) for m in ("mae", "rmse", "smape")
                    } | {"n": present[0]["n"]}
                seg = data.split.test
                profile = mean_profile([e.intraday for e in evals])
                diag = diurnal_diagnostics(test_prices, data.series.timestamps[seg.start:seg.stop])
                payload = {
                    "config_hash": self.hash, "region": region, "setting": setting, "family": family,
                    "benchmark_mae": bench.benchmark_mae, "metrics": report.as_dict(),
                    "per_seed": list(report.per_seed), "seeds": list(cfg.training_config().seeds),
                    "subsets": subsets, "intraday": profile.as_rows(), "diagnostics": diag.as_rows(),
                }
                path = self.eval_path(region, setting, family)
                (self.root / path).parent.mkdir(parents=True, exist_ok=True)
                (self.root / path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
                return [path], {}
            inputs = [self.run_path(region, setting, family, s) / "forecast.parquet"
                      for s in cfg.training_config().seeds]
            self._stage("evaluate", f"{region}/{setting}/{family}", work, inputs, force)

    def evaluations(self) -> list[dict]:
        out = []
        for region, setting, family in self.cells("evaluate"):
            out.append(json.loads((self.root / self.eval_path(region, setting, family)).read_text()))
        return out

    # -- report
    def report(self, force=False) -> None:
        from .report import emit_report

        def work():
            files = emit_report(self.evaluations(), self.root / "report", self.hash)
            return [p.relative_to(self.root) for p in files], {}
        inputs = [self.eval_path(*c) for c in self.cells("evaluate")]
        self._stage("report", "all", work, inputs, force)

    def run(self, stages=STAGES, force: bool = False) -> RunLedger:
        self.write_config()
        for stage in stages:
            getattr(self, stage)(force=force)
        return self.ledger

    def status(self) -> int:
        """0 when every cell succeeded, 1 when some failed."""
        return 1 if self.ledger.failed(self.hash) else 0


def _json_default(o):
    if isinstance(o, float | np.floating):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, date):
        return o.isoformat()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def run_experiment(config: ExperimentConfig, stages=STAGES, force: bool = False) -> RunLedger:
    """Run ``stages`` for every cell; failures are recorded per cell and never abort other cells."""
    return Experiment(config).run(stages, force)
