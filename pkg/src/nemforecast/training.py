"""Training protocol: Adam on MSE, plateau LR reduction, early stopping,
grid search over the tuning grid and multi-seed replication."""

from __future__ import annotations

import itertools
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import BudgetZero, ConfigError, DivergenceError, EmptyDataset
from .evaluation import ForecastDump
from .models import Forecaster, ModelConfig, ModelFamily, build_model, forecast
from .pipeline import PreparedDataset, WindowSet, invert_prices

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 30
    early_stop_patience: int = 10
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    min_lr: float = 1e-6
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    max_batches_per_epoch: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("learning_rate, batch_size and max_epochs must be positive")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError("plateau_factor must lie in (0, 1)")

    def with_(self, **changes) -> "TrainingConfig":
        return TrainingConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


class EpochController:
    """Plateau LR reduction and early stopping, both counted in epochs.

    An epoch improves only if its validation loss is strictly below the best
    so far. After ``plateau_patience`` non-improving epochs in a row the LR is
    multiplied by ``factor`` (floored at ``min_lr``) and the count restarts.
    Training stops once ``stop_patience`` epochs pass without improvement.
    """

    def __init__(self, lr, factor=0.5, plateau_patience=3, min_lr=1e-6, stop_patience=10):
        self.lr = lr
        self.factor = factor
        self.plateau_patience = plateau_patience
        self.min_lr = min_lr
        self.stop_patience = stop_patience
        self.best = math.inf
        self.best_epoch = 0
        self.since_best = 0
        self._plateau = 0

    def step(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Record one epoch; returns ``(improved, should_stop)`` and updates ``lr``."""
        if val_loss < self.best:
            self.best, self.best_epoch = val_loss, epoch
            self.since_best = self._plateau = 0
            return True, False
        self.since_best += 1
        self._plateau += 1
        if self._plateau >= self.plateau_patience:
            # the floor never raises an LR that started below it
            self.lr = min(self.lr, max(self.lr * self.factor, self.min_lr))
            self._plateau = 0
        return False, self.since_best >= self.stop_patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainedRun:
    config: ModelConfig
    training: TrainingConfig
    seed: int
    model: Forecaster
    best_val_loss: float
    best_epoch: int
    stopped_epoch: int
    history: list[EpochRecord]
    wall_time: float

    @property
    def best_parameters(self) -> np.ndarray:
        return torch.nn.utils.parameters_to_vector(self.model.parameters()).detach().numpy().copy()

    def manifest(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "training": self.training.to_dict(),
            "seed": self.seed,
            "best_val_loss": self.best_val_loss,
            "best_epoch": self.best_epoch,
            "stopped_epoch": self.stopped_epoch,
            "history": [asdict(h) for h in self.history],
            "wall_time": self.wall_time,
            "platform": {"python": platform.python_version(), "torch": torch.__version__,
                         "machine": platform.machine()},
        }


def _batch(windows: WindowSet, idx) -> tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.ascontiguousarray(windows.inputs[idx], dtype=np.float32))
    y = torch.from_numpy(np.ascontiguousarray(windows.targets[idx], dtype=np.float32))
    return x, y


def evaluate_loss(model: Forecaster, windows: WindowSet, batch_size: int = 256) -> float:
    """Mean squared error over every target value of ``windows`` (eval mode)."""
    if len(windows) == 0:
        raise EmptyDataset("no windows to evaluate")
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            x, y = _batch(windows, slice(i, i + batch_size))
            err = (model(x) - y).double()
            total += float((err * err).sum())
            count += err.numel()
    model.train(was_training)
    return total / count


def train(model: Forecaster, train_windows: WindowSet, val_windows: WindowSet, cfg: TrainingConfig,
          seed: int) -> TrainedRun:
    """Fit ``model`` in place and return it restored to its best-validation epoch.

    Raises EmptyDataset for empty window sets and DivergenceError when a loss
    turns non-finite.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise EmptyDataset("training and validation windows must be non-empty")
    t0 = time.perf_counter()
    ctrl = EpochController(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr,
                           cfg.early_stop_patience)
    history: list[EpochRecord] = []
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    n = len(train_windows)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        gen = torch.Generator().manual_seed(seed)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        for epoch in range(1, cfg.max_epochs + 1):
            lr = ctrl.lr
            for group in opt.param_groups:
                group["lr"] = lr
            model.train()
            order = torch.randperm(n, generator=gen).numpy()
            batches = range(0, n, cfg.batch_size)
            if cfg.max_batches_per_epoch is not None:
                batches = batches[: cfg.max_batches_per_epoch]
            total, count = 0.0, 0
            for i in batches:
                x, y = _batch(train_windows, np.sort(order[i:i + cfg.batch_size]))
                opt.zero_grad(set_to_none=True)
                loss = F.mse_loss(model(x), y)
                if not torch.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}")
                loss.backward()
                opt.step()
                total += float(loss.detach()) * x.shape[0]
                count += x.shape[0]
            val_loss = evaluate_loss(model, val_windows)
            if not math.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
            history.append(EpochRecord(epoch, total / count, val_loss, lr))
            improved, stop = ctrl.step(epoch, val_loss)
            if improved:
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            log.debug("epoch %d train %.6g val %.6g lr %.3g", epoch, total / count, val_loss, lr)
            if stop:
                break

    model.load_state_dict(best_state)
    model.eval()
    return TrainedRun(model.config, cfg, seed, model, ctrl.best, ctrl.best_epoch, len(history), history,
                      time.perf_counter() - t0)


# ---------------------------------------------------------------- grid search

@dataclass(frozen=True)
class GridSpec:
    learning_rates: tuple[float, ...] = (0.001, 0.005, 0.01, 0.05, 0.1)
    dims: tuple[int, ...] = (32, 64, 128, 256, 512)
    layers: tuple[int, ...] = (1, 2)
    cnn_kernels: tuple[int, ...] = (3, 5, 7)
    cnn_filters: tuple[int, ...] = (32, 64, 128, 256, 512)

    def combinations(self, family: ModelFamily | str) -> list[dict]:
        """All combinations for ``family`` in lexicographic order of
        (learning rate, dim, layers) or, for CNN-LSTM, (learning rate, dim,
        kernel, filters), each axis ascending."""
        family = ModelFamily.parse(family)
        lrs = sorted(self.learning_rates)
        if family is ModelFamily.DLINEAR:
            return [{"learning_rate": lr} for lr in lrs]
        if family is ModelFamily.CNN_LSTM:
            return [{"learning_rate": lr, "model_dim": d, "cnn_kernel": k, "cnn_filters": f}
                    for lr, d, k, f in itertools.product(lrs, sorted(self.dims), sorted(self.cnn_kernels),
                                                         sorted(self.cnn_filters))]
        return [{"learning_rate": lr, "model_dim": d, "n_layers": n}
                for lr, d, n in itertools.product(lrs, sorted(self.dims), sorted(self.layers))]

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


def _tie_key(entry: "LeaderboardEntry") -> tuple:
    p = entry.params
    return (entry.val_loss, p["learning_rate"], p.get("model_dim") or 0, p.get("n_layers") or 0,
            p.get("cnn_kernel") or 0, p.get("cnn_filters") or 0)


@dataclass
class LeaderboardEntry:
    params: dict
    val_loss: float
    status: str
    wall_time: float = 0.0


@dataclass
class GridResult:
    family: ModelFamily
    best_config: ModelConfig
    best_learning_rate: float
    leaderboard: list[LeaderboardEntry] = field(default_factory=list)

    def manifest(self) -> dict:
        return {"family": self.family.value, "best_config": self.best_config.to_dict(),
                "best_learning_rate": self.best_learning_rate,
                "leaderboard": [asdict(e) for e in self.leaderboard]}


def config_for(family: ModelFamily, params: dict, data: PreparedDataset, *, time_features: bool = False,
               **base) -> ModelConfig:
    """Model config for one grid point. Baseline families see the price only
    unless ``time_features`` gives every family the calendar columns."""
    arch = {k: v for k, v in params.items() if k != "learning_rate"}
    n_features = 5 if family.uses_time_features or time_features else 1
    return ModelConfig(family, lookback=data.lookback, horizon=data.horizon, n_features=n_features, **arch, **base)


def _evaluate_combination(family, params, data, cfg, seed, base) -> LeaderboardEntry:
    t0 = time.perf_counter()
    model_cfg = config_for(family, params, data, **base)
    tr = data.windows("train", model_cfg.n_features > 1)
    va = data.windows("val", model_cfg.n_features > 1)
    try:
        run = train(build_model(model_cfg, seed), tr, va, cfg.with_(learning_rate=params["learning_rate"]), seed)
        return LeaderboardEntry(params, run.best_val_loss, "ok", time.perf_counter() - t0)
    except DivergenceError as exc:
        log.warning("%s %s diverged: %s", family.value, params, exc)
        return LeaderboardEntry(params, math.inf, "diverged", time.perf_counter() - t0)


def grid_search(family: ModelFamily | str, grid: GridSpec, data: PreparedDataset, cfg: TrainingConfig,
                budget: int | None = None, *, seed: int | None = None, n_workers: int = 1,
                model_options: dict | None = None, time_features: bool = False) -> GridResult:
    """Train every grid combination once (single seed) and pick the lowest validation loss.

    Ties go to the lower learning rate, then smaller dim, then fewer layers.
    ``budget`` truncates the documented enumeration order. Diverged
    combinations enter the leaderboard with an infinite loss.
    """
    family = ModelFamily.parse(family)
    combos = grid.combinations(family)
    if budget is not None:
        if budget < 1:
            raise BudgetZero("search budget must be at least one combination")
        combos = combos[:budget]
    seed = cfg.seeds[0] if seed is None else seed
    base = dict(model_options or {}, time_features=time_features)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            futs = [pool.submit(_evaluate_combination, family, p, data, cfg, seed, base) for p in combos]
            board = [f.result() for f in futs]
    else:
        board = [_evaluate_combination(family, p, data, cfg, seed, base) for p in combos]
    best = min(board, key=_tie_key)
    return GridResult(family, config_for(family, best.params, data, **base), best.params["learning_rate"], board)


# ---------------------------------------------------------------- seeds

def make_dump(model: Forecaster, data: PreparedDataset, part: str = "test", *, setting: str = "",
              seed: int | None = None) -> ForecastDump:
    """Forecast every window of ``part`` and denormalise into a dump."""
    fam = model.config.family
    windows = data.windows(part, model.config.n_features > 1)
    pred = invert_prices(forecast(model, windows.inputs), data.scaler)
    seg = data.split.segment(part)
    actual = data.series.prices[seg.start:seg.stop]
    true = np.lib.stride_tricks.sliding_window_view(actual, data.horizon)[data.lookback:data.lookback + len(windows)]
    return ForecastDump.from_windows(true, pred, windows.target_timestamps, region=data.series.region.value,
                                     setting=setting, family=fam.value, seed=seed)


@dataclass
class SeedRun:
    run: TrainedRun
    dump: ForecastDump


def _train_seed(config, data, cfg, seed, setting) -> SeedRun:
    marks = config.n_features > 1
    run = train(build_model(config, seed), data.windows("train", marks), data.windows("val", marks), cfg, seed)
    return SeedRun(run, make_dump(run.model, data, "test", setting=setting, seed=seed))


def run_seeds(config: ModelConfig, data: PreparedDataset, cfg: TrainingConfig, *, setting: str = "",
              n_workers: int = 1) -> list[SeedRun]:
    """Train ``config`` once per seed in ``cfg.seeds`` and forecast the test segment."""
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            futs = [pool.submit(_train_seed, config, data, cfg, s, setting) for s in cfg.seeds]
            return [f.result() for f in futs]
    return [_train_seed(config, data, cfg, s, setting) for s in cfg.seeds]
