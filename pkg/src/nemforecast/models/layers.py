"""Building blocks shared by several forecasters."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def head_count(dim: int, preferred: int) -> int:
    """Largest head count <= ``preferred`` that divides ``dim``."""
    for h in range(min(preferred, dim), 0, -1):
        if dim % h == 0:
            return h
    return 1


class MovingAverage(nn.Module):
    """Centred moving average along time with edge replication."""

    def __init__(self, kernel_size: int):
        super().__init__()
        self.kernel_size = kernel_size

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: [B, T, C]
        k = self.kernel_size
        front = x[:, :1, :].repeat(1, (k - 1) // 2, 1)
        back = x[:, -1:, :].repeat(1, k // 2, 1)
        padded = torch.cat([front, x, back], dim=1)
        return F.avg_pool1d(padded.transpose(1, 2), kernel_size=k, stride=1).transpose(1, 2)


class SeriesDecomposition(nn.Module):
    """Split a series into moving-average trend and residual seasonal part."""

    def __init__(self, kernel_size: int):
        super().__init__()
        self.moving_avg = MovingAverage(kernel_size)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        trend = self.moving_avg(x)
        return x - trend, trend


class PositionalEmbedding(nn.Module):
    def __init__(self, dim: int, max_len: int = 5000):
        super().__init__()
        pe = torch.zeros(max_len, dim)
        position = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
        div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32) * -(math.log(10000.0) / dim))
        pe[:, 0::2] = torch.sin(position * div)
        pe[:, 1::2] = torch.cos(position * div[: dim // 2])
        self.register_buffer("pe", pe.unsqueeze(0), persistent=False)

    def forward(self, length: int) -> torch.Tensor:
        return self.pe[:, :length]


class TokenEmbedding(nn.Module):
    """Circular 1-D convolution (kernel 3) from input channels to ``dim``."""

    def __init__(self, c_in: int, dim: int):
        super().__init__()
        self.conv = nn.Conv1d(c_in, dim, kernel_size=3, padding=1, padding_mode="circular", bias=False)
        nn.init.kaiming_normal_(self.conv.weight, mode="fan_in", nonlinearity="leaky_relu")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x.transpose(1, 2)).transpose(1, 2)


class DataEmbedding(nn.Module):
    """Value embedding + optional positional and linear calendar-mark embeddings."""

    def __init__(self, c_in: int, n_marks: int, dim: int, dropout: float, positional: bool = True):
        super().__init__()
        self.value = TokenEmbedding(c_in, dim)
        self.position = PositionalEmbedding(dim) if positional else None
        self.temporal = nn.Linear(n_marks, dim, bias=False) if n_marks else None
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, marks: torch.Tensor | None) -> torch.Tensor:
        out = self.value(x)
        if self.position is not None:
            out = out + self.position(x.shape[1])
        if self.temporal is not None and marks is not None:
            out = out + self.temporal(marks)
        return self.dropout(out)


def split_inputs(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Column 0 is the price; any further columns are calendar marks."""
    price = x[:, :, :1]
    marks = x[:, :, 1:] if x.shape[-1] > 1 else None
    return price, marks


class InstanceNorm:
    """Per-window standardisation of the price channel, undone on the output."""

    eps = 1e-5

    def __init__(self, x: torch.Tensor):
        self.mean = x.mean(dim=1, keepdim=True).detach()
        self.std = torch.sqrt(x.var(dim=1, keepdim=True, unbiased=False) + self.eps).detach()

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.mean) / self.std

    def denormalize(self, y: torch.Tensor) -> torch.Tensor:
        # y: [B, H] forecasts of the price channel
        return y * self.std[:, :, 0] + self.mean[:, :, 0]


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Dropout(dropout), nn.Linear(hidden, dim))
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.dropout(self.net(x))


class EncoderLayer(nn.Module):
    """Post-norm self-attention layer."""

    def __init__(self, dim: int, n_heads: int, ff_hidden: int, dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, head_count(dim, n_heads), dropout=dropout, batch_first=True)
        self.ff = FeedForward(dim, ff_hidden, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        attn, _ = self.attn(x, x, x, need_weights=False)
        x = self.norm1(x + self.dropout(attn))
        return self.norm2(x + self.ff(x))
