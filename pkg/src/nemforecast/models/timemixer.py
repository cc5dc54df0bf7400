"""TimeMixer: multiscale past-decomposable mixing and future multipredictor mixing."""

from __future__ import annotations

import torch.nn as nn

from ..errors import ConfigError
from .base import Forecaster
from .layers import DataEmbedding, InstanceNorm, SeriesDecomposition, split_inputs


def _mlp(t_in, t_out):
    return nn.Sequential(nn.Linear(t_in, t_out), nn.GELU(), nn.Linear(t_out, t_out))


class PastDecomposableMixing(nn.Module):
    """Seasonal parts mix fine -> coarse, trend parts coarse -> fine."""

    def __init__(self, lengths, dim, hidden, moving_avg, dropout):
        super().__init__()
        self.decomposition = SeriesDecomposition(moving_avg)
        self.down = nn.ModuleList(_mlp(lengths[i], lengths[i + 1]) for i in range(len(lengths) - 1))
        self.up = nn.ModuleList(_mlp(lengths[i + 1], lengths[i]) for i in range(len(lengths) - 1))
        self.out_cross = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        self.dropout = nn.Dropout(dropout)

    def forward(self, xs):
        seasons, trends = zip(*(self.decomposition(x) for x in xs))
        seasons = [s.transpose(1, 2) for s in seasons]
        trends = [t.transpose(1, 2) for t in trends]

        mixed_season = [seasons[0]]
        for i, layer in enumerate(self.down):
            mixed_season.append(seasons[i + 1] + layer(mixed_season[-1]))

        mixed_trend = [trends[-1]]
        for i in reversed(range(len(self.up))):
            mixed_trend.insert(0, trends[i] + self.up[i](mixed_trend[0]))

        return [x + self.dropout(self.out_cross((s + t).transpose(1, 2)))
                for x, s, t in zip(xs, mixed_season, mixed_trend)]


class TimeMixer(Forecaster):
    def __init__(self, config):
        super().__init__(config)
        d, L, H = config.model_dim, config.lookback, config.horizon
        self.levels = config.option("down_sampling_layers")
        self.window = config.option("down_sampling_window")
        if L % (self.window ** self.levels):
            raise ConfigError(f"lookback {L} must be divisible by {self.window}^{self.levels} for TimeMixer")
        lengths = [L // self.window ** i for i in range(self.levels + 1)]
        self.pool = nn.AvgPool1d(self.window)
        self.embed = DataEmbedding(1, config.n_features - 1, d, config.dropout, positional=False)
        hidden = config.option("ff_mult") * d
        self.mixing = nn.ModuleList(
            PastDecomposableMixing(lengths, d, hidden, config.option("moving_avg"), config.dropout)
            for _ in range(config.n_layers)
        )
        self.predictors = nn.ModuleList(nn.Linear(t, H) for t in lengths)
        self.projection = nn.Linear(d, 1)

    def _scales(self, price, marks):
        prices, mark_list = [price], [marks]
        for _ in range(self.levels):
            prices.append(self.pool(prices[-1].transpose(1, 2)).transpose(1, 2))
            mark_list.append(None if marks is None else mark_list[-1][:, ::self.window])
        return prices, mark_list

    def predict(self, x):
        price, marks = split_inputs(x)
        norm = InstanceNorm(price)
        prices, mark_list = self._scales(norm.normalize(price), marks)
        hs = [self.embed(p, m) for p, m in zip(prices, mark_list)]
        for block in self.mixing:
            hs = block(hs)
        # future multipredictor mixing: one temporal predictor per scale, summed
        out = sum(self.projection(pred(h.transpose(1, 2)).transpose(1, 2))[..., 0]
                  for pred, h in zip(self.predictors, hs))
        return norm.denormalize(out)
