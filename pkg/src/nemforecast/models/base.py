from __future__ import annotations

import torch
import torch.nn as nn

from .config import ModelConfig


class Forecaster(nn.Module):
    """Direct multi-horizon forecaster: ``[B, L, C]`` scaled inputs -> ``[B, H]`` scaled prices.

    Subclasses implement :meth:`predict`; :meth:`forward` only checks shapes.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.predict(x)
        return out.reshape(x.shape[0], self.config.horizon)

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError
