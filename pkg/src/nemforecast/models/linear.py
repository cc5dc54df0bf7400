"""DLinear: moving-average trend/seasonal split with one linear head per part."""

from __future__ import annotations

import torch
import torch.nn as nn

from .base import Forecaster
from .layers import SeriesDecomposition, split_inputs


class DLinear(Forecaster):
    def __init__(self, config):
        super().__init__(config)
        L, H = config.lookback, config.horizon
        self.decomposition = SeriesDecomposition(config.option("moving_avg"))
        self.linear_seasonal = nn.Linear(L, H)
        self.linear_trend = nn.Linear(L, H)
        with torch.no_grad():
            self.linear_seasonal.weight.fill_(1.0 / L)
            self.linear_trend.weight.fill_(1.0 / L)

    def decompose(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Seasonal and trend parts of the price channel, each ``[B, L]``."""
        price, _ = split_inputs(x)
        seasonal, trend = self.decomposition(price)
        return seasonal[..., 0], trend[..., 0]

    def predict(self, x):
        seasonal, trend = self.decompose(x)
        return self.linear_seasonal(seasonal) + self.linear_trend(trend)
