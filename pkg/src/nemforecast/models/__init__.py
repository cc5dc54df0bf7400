"""Nine direct multi-horizon forecasters behind one contract.

>>> cfg = ModelConfig(ModelFamily.DLINEAR, lookback=336, horizon=48)
>>> build_model(cfg, seed=0).parameter_count
32352
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import NonFiniteOutput, ShapeError
from .attention import ITransformer, TimeXer
from .base import Forecaster
from .config import BASELINES, REFERENCE_DEFAULTS, ModelConfig, ModelFamily
from .linear import DLinear
from .mamba import Mamba
from .recurrent import CNNLSTMForecaster, LSTMForecaster, TransformerForecaster
from .timemixer import TimeMixer
from .timesnet import TimesNet, fft_periods

__all__ = [
    "BASELINES", "REFERENCE_DEFAULTS", "Forecaster", "ModelConfig", "ModelFamily",
    "build_model", "forecast", "gradient_check", "loss_gradient", "fft_periods",
    "save_checkpoint", "load_checkpoint",
]

REGISTRY: dict[ModelFamily, type[Forecaster]] = {
    ModelFamily.LSTM: LSTMForecaster,
    ModelFamily.CNN_LSTM: CNNLSTMForecaster,
    ModelFamily.TRANSFORMER: TransformerForecaster,
    ModelFamily.DLINEAR: DLinear,
    ModelFamily.ITRANSFORMER: ITransformer,
    ModelFamily.TIMESNET: TimesNet,
    ModelFamily.MAMBA: Mamba,
    ModelFamily.TIMEMIXER: TimeMixer,
    ModelFamily.TIMEXER: TimeXer,
}

CHECKPOINT_VERSION = 1


def build_model(config: ModelConfig, seed: int) -> Forecaster:
    """Instantiate ``config.family`` with parameters drawn from ``seed``.

    The global torch RNG state is left untouched.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = REGISTRY[config.family](config)
    return model


def _check_batch(model: Forecaster, batch: torch.Tensor) -> None:
    cfg = model.config
    if batch.ndim != 3 or batch.shape[1] != cfg.lookback or batch.shape[2] != cfg.n_features:
        raise ShapeError(
            f"expected batch [B, {cfg.lookback}, {cfg.n_features}] for {cfg.family.value}, got {tuple(batch.shape)}"
        )


def _param_dtype(model: Forecaster) -> torch.dtype:
    return next(model.parameters()).dtype


def forecast(model: Forecaster, batch, batch_size: int = 512) -> np.ndarray:
    """Scaled ``[B, H]`` forecasts in eval mode.

    Raises ShapeError for a mismatched batch and NonFiniteOutput if any
    forecast is NaN or infinite.
    """
    x = batch if torch.is_tensor(batch) else np.asarray(batch)
    _check_batch(model, x)
    was_training = model.training
    model.eval()
    outs = []
    try:
        with torch.no_grad():
            for i in range(0, x.shape[0], batch_size):
                chunk = x[i:i + batch_size]
                if not torch.is_tensor(chunk):
                    chunk = torch.from_numpy(np.array(chunk, dtype=np.float64))
                chunk = chunk.to(_param_dtype(model))
                outs.append(model(chunk).double().numpy())
    finally:
        model.train(was_training)
    out = np.concatenate(outs, axis=0) if outs else np.empty((0, model.config.horizon))
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput(f"{model.config.family.value} produced non-finite forecasts")
    return out


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(pred, target)


def loss_gradient(model: Forecaster, batch, targets, loss: Callable = mse_loss) -> np.ndarray:
    """Flat float64 gradient of ``loss`` w.r.t. all parameters."""
    m = copy.deepcopy(model).double().eval()
    x = torch.as_tensor(np.asarray(batch), dtype=torch.float64)
    y = torch.as_tensor(np.asarray(targets), dtype=torch.float64)
    m.zero_grad()
    loss(m(x), y).backward()
    return torch.cat([p.grad.reshape(-1) for p in m.parameters()]).numpy()


def gradient_check(model: Forecaster, batch, targets, loss: Callable = mse_loss, *, step: float = 1e-4,
                   max_probes: int | None = 400, seed: int = 0, atol: float = 1e-6) -> float:
    """Largest relative error between autograd and central finite differences.

    Runs in float64 on a copy of ``model``. Probes every parameter entry and
    every input entry, or a seeded random subset of ``max_probes`` of each.
    The error of one entry is ``|a - n| / max(|a|, |n|, atol)``.
    """
    m = copy.deepcopy(model).double().eval()
    x = torch.as_tensor(np.asarray(batch), dtype=torch.float64).clone().requires_grad_(True)
    y = torch.as_tensor(np.asarray(targets), dtype=torch.float64)
    _check_batch(m, x)
    params = [p for p in m.parameters() if p.requires_grad]

    m.zero_grad()
    loss(m(x), y).backward()
    analytic_p = torch.cat([p.grad.reshape(-1) for p in params]).detach().numpy()
    analytic_x = x.grad.reshape(-1).detach().numpy()
    rng = np.random.default_rng(seed)

    def probes(n):
        if max_probes is None or n <= max_probes:
            return np.arange(n)
        return np.sort(rng.choice(n, size=max_probes, replace=False))

    def value():
        with torch.no_grad():
            return float(loss(m(x), y))

    flat_params = torch.nn.utils.parameters_to_vector(params).detach()

    def numeric_param(i):
        out = []
        for sign in (1, -1):
            v = flat_params.clone()
            v[i] += sign * step
            torch.nn.utils.vector_to_parameters(v, params)
            out.append(value())
        torch.nn.utils.vector_to_parameters(flat_params, params)
        return (out[0] - out[1]) / (2 * step)

    def numeric_input(i):
        flat = x.data.view(-1)
        orig = flat[i].item()
        out = []
        for sign in (1, -1):
            flat[i] = orig + sign * step
            out.append(value())
        flat[i] = orig
        return (out[0] - out[1]) / (2 * step)

    worst = 0.0
    for analytic, numeric_fn in ((analytic_p, numeric_param), (analytic_x, numeric_input)):
        for i in probes(analytic.size):
            a, n = analytic[i], numeric_fn(int(i))
            worst = max(worst, abs(a - n) / max(abs(a), abs(n), atol))
    return worst


def save_checkpoint(model: Forecaster, directory: str | os.PathLike) -> Path:
    """Flat float parameter vector plus a JSON config manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vec = torch.nn.utils.parameters_to_vector(model.parameters()).detach().cpu().numpy()
    np.save(directory / "parameters.npy", vec)
    manifest = {"version": CHECKPOINT_VERSION, "config": model.config.to_dict(), "parameter_count": int(vec.size),
                "dtype": str(vec.dtype)}
    (directory / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_checkpoint(directory: str | os.PathLike) -> Forecaster:
    directory = Path(directory)
    manifest = json.loads((directory / "model.json").read_text())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')}")
    model = build_model(ModelConfig.from_dict(manifest["config"]), seed=0)
    vec = torch.as_tensor(np.load(directory / "parameters.npy"))
    torch.nn.utils.vector_to_parameters(vec.to(_param_dtype(model)), model.parameters())
    return model
