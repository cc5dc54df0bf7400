"""TimesNet: FFT period discovery, 1-D -> 2-D folding and inception convolutions."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .base import Forecaster
from .layers import DataEmbedding, InstanceNorm, split_inputs


def fft_periods(x: torch.Tensor, k: int) -> tuple[list[int], torch.Tensor, list[int]]:
    """Top-``k`` periods of ``x`` ``[B, T, C]`` by batch/channel-averaged amplitude.

    Returns ``(periods, per-sample weights [B, k], frequency indices)`` where
    ``period = T // frequency``. The zero frequency is never selected.
    """
    T = x.shape[1]
    amp = torch.fft.rfft(x, dim=1).abs()
    spectrum = amp.mean(0).mean(-1).detach().clone()
    spectrum[0] = 0
    k = min(k, spectrum.numel() - 1)
    freqs = torch.topk(spectrum, k).indices.tolist()
    periods = [max(1, T // f) for f in freqs]
    return periods, amp.mean(-1)[:, freqs], freqs


class InceptionBlock(nn.Module):
    """Average of 2-D convolutions with kernel sizes 1, 3, ..., 2n-1."""

    def __init__(self, c_in, c_out, num_kernels):
        super().__init__()
        self.kernels = nn.ModuleList(nn.Conv2d(c_in, c_out, kernel_size=2 * i + 1, padding=i) for i in range(num_kernels))
        for conv in self.kernels:
            nn.init.kaiming_normal_(conv.weight, mode="fan_out", nonlinearity="relu")
            nn.init.zeros_(conv.bias)

    def forward(self, x):
        return torch.stack([conv(x) for conv in self.kernels], dim=-1).mean(-1)


class TimesBlock(nn.Module):
    def __init__(self, length, dim, hidden, top_k, num_kernels):
        super().__init__()
        self.length = length
        self.top_k = top_k
        self.conv = nn.Sequential(InceptionBlock(dim, hidden, num_kernels), nn.GELU(),
                                  InceptionBlock(hidden, dim, num_kernels))

    def forward(self, x):
        B, T, N = x.shape
        periods, weights, _ = fft_periods(x, self.top_k)
        outs = []
        for p in periods:
            length = -(-T // p) * p
            padded = F.pad(x, (0, 0, 0, length - T))
            grid = padded.reshape(B, length // p, p, N).permute(0, 3, 1, 2)
            grid = self.conv(grid)
            outs.append(grid.permute(0, 2, 3, 1).reshape(B, -1, N)[:, :T])
        res = torch.stack(outs, dim=-1)
        w = F.softmax(weights, dim=1).unsqueeze(1).unsqueeze(1)
        return (res * w).sum(-1) + x


class TimesNet(Forecaster):
    def __init__(self, config):
        super().__init__(config)
        d, L, H = config.model_dim, config.lookback, config.horizon
        self.embed = DataEmbedding(1, config.n_features - 1, d, config.dropout)
        self.predict_linear = nn.Linear(L, L + H)
        hidden = max(1, config.option("ff_mult") * d)
        self.blocks = nn.ModuleList(
            TimesBlock(L + H, d, hidden, config.option("top_k"), config.option("num_kernels"))
            for _ in range(config.n_layers)
        )
        self.norm = nn.LayerNorm(d)
        self.projection = nn.Linear(d, 1)

    def predict(self, x):
        price, marks = split_inputs(x)
        norm = InstanceNorm(price)
        h = self.embed(norm.normalize(price), marks)
        h = self.predict_linear(h.transpose(1, 2)).transpose(1, 2)
        for block in self.blocks:
            h = self.norm(block(h))
        out = self.projection(h)[:, -self.config.horizon:, 0]
        return norm.denormalize(out)
