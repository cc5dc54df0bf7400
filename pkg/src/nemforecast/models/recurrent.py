"""Baseline sequence models: LSTM, CNN-LSTM and an encoder-only Transformer."""

from __future__ import annotations

import torch
import torch.nn as nn

from .base import Forecaster
from .layers import EncoderLayer


class LSTMForecaster(Forecaster):
    """Stacked LSTM; the final hidden state is projected to all ``H`` steps."""

    def __init__(self, config):
        super().__init__(config)
        d, n = config.model_dim, config.n_layers
        self.lstm = nn.LSTM(config.n_features, d, num_layers=n, batch_first=True,
                            dropout=config.dropout if n > 1 else 0.0)
        self.head = nn.Linear(d, config.horizon)

    def predict(self, x):
        out, _ = self.lstm(x)
        return self.head(out[:, -1])


class CNNLSTMForecaster(Forecaster):
    """Conv1d feature extractor, max-pooling, then an LSTM and a linear head."""

    def __init__(self, config):
        super().__init__(config)
        k = config.cnn_kernel
        self.conv = nn.Sequential(
            nn.Conv1d(config.n_features, config.cnn_filters, kernel_size=k, padding=k // 2),
            nn.ReLU(),
            nn.MaxPool1d(config.option("pool")),
        )
        self.lstm = nn.LSTM(config.cnn_filters, config.model_dim, num_layers=config.n_layers, batch_first=True,
                            dropout=config.dropout if config.n_layers > 1 else 0.0)
        self.dropout = nn.Dropout(config.dropout)
        self.head = nn.Linear(config.model_dim, config.horizon)

    def predict(self, x):
        feats = self.conv(x.transpose(1, 2)).transpose(1, 2)
        out, _ = self.lstm(feats)
        return self.head(self.dropout(out[:, -1]))


class TransformerForecaster(Forecaster):
    """Encoder-only Transformer with learned positions and a flattened linear head."""

    def __init__(self, config):
        super().__init__(config)
        d, L = config.model_dim, config.lookback
        self.embed = nn.Linear(config.n_features, d)
        self.position = nn.Parameter(torch.randn(1, L, d) * 0.02)
        self.dropout = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList(
            EncoderLayer(d, config.option("n_heads"), config.option("ff_mult") * d, config.dropout)
            for _ in range(config.n_layers)
        )
        self.head = nn.Linear(L * d, config.horizon)

    def predict(self, x):
        h = self.dropout(self.embed(x) + self.position)
        for layer in self.layers:
            h = layer(h)
        return self.head(h.flatten(1))
