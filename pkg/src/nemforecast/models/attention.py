"""Variate-token Transformers: iTransformer and TimeXer."""

from __future__ import annotations

import torch
import torch.nn as nn

from .base import Forecaster
from .layers import EncoderLayer, FeedForward, InstanceNorm, PositionalEmbedding, head_count, split_inputs


class ITransformer(Forecaster):
    """Each variate's whole lookback becomes one token; attention mixes variates.

    Calendar marks enter as additional variate tokens, so the token count
    equals the number of input columns.
    """

    def __init__(self, config):
        super().__init__(config)
        d = config.model_dim
        self.embed = nn.Linear(config.lookback, d)
        self.dropout = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList(
            EncoderLayer(d, config.option("n_heads"), config.option("ff_mult") * d, config.dropout)
            for _ in range(config.n_layers)
        )
        self.norm = nn.LayerNorm(d)
        self.projector = nn.Linear(d, config.horizon)

    def _encode(self, x: torch.Tensor) -> tuple[torch.Tensor, InstanceNorm]:
        price, marks = split_inputs(x)
        norm = InstanceNorm(price)
        series = norm.normalize(price)
        if marks is not None:
            series = torch.cat([series, marks], dim=-1)
        h = self.dropout(self.embed(series.transpose(1, 2)))
        for layer in self.layers:
            h = layer(h)
        return self.norm(h), norm

    def tokens(self, x: torch.Tensor) -> torch.Tensor:
        """Encoded variate tokens ``[B, C, d]`` (price token first)."""
        return self._encode(x)[0]

    def predict(self, x):
        h, norm = self._encode(x)
        return norm.denormalize(self.projector(h[:, 0]))


class TimeXerLayer(nn.Module):
    """Patch self-attention, then the global token cross-attends to variate tokens."""

    def __init__(self, dim, n_heads, ff_hidden, dropout):
        super().__init__()
        heads = head_count(dim, n_heads)
        self.self_attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.ff = FeedForward(dim, ff_hidden, dropout)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, exo):
        attn, _ = self.self_attn(x, x, x, need_weights=False)
        x = self.norm1(x + self.dropout(attn))
        glb = x[:, -1:]
        cross, _ = self.cross_attn(glb, exo, exo, need_weights=False)
        glb = self.norm2(glb + self.dropout(cross))
        x = torch.cat([x[:, :-1], glb], dim=1)
        return self.norm3(x + self.ff(x))


class TimeXer(Forecaster):
    """Endogenous price patches plus a learnable global token; exogenous
    series (calendar marks and the price itself) become inverted variate
    tokens that the global token queries."""

    def __init__(self, config):
        super().__init__(config)
        d, L = config.model_dim, config.lookback
        self.patch_len = min(config.option("patch_len"), L)
        self.n_patches = L // self.patch_len
        self.patch_embed = nn.Linear(self.patch_len, d, bias=False)
        self.position = PositionalEmbedding(d)
        self.global_token = nn.Parameter(torch.randn(1, 1, d))
        self.exo_embed = nn.Linear(L, d)
        self.dropout = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList(
            TimeXerLayer(d, config.option("n_heads"), config.option("ff_mult") * d, config.dropout)
            for _ in range(config.n_layers)
        )
        self.norm = nn.LayerNorm(d)
        self.head = nn.Sequential(nn.Flatten(1), nn.Linear(d * (self.n_patches + 1), config.horizon),
                                  nn.Dropout(config.dropout))

    def predict(self, x):
        price, marks = split_inputs(x)
        norm = InstanceNorm(price)
        series = norm.normalize(price)[..., 0]
        B = x.shape[0]
        start = series.shape[1] - self.n_patches * self.patch_len
        patches = series[:, start:].unfold(-1, self.patch_len, self.patch_len)
        endo = self.patch_embed(patches) + self.position(self.n_patches)
        endo = self.dropout(torch.cat([endo, self.global_token.expand(B, -1, -1)], dim=1))
        exo_series = series.unsqueeze(-1) if marks is None else torch.cat([series.unsqueeze(-1), marks], dim=-1)
        exo = self.dropout(self.exo_embed(exo_series.transpose(1, 2)))
        for layer in self.layers:
            endo = layer(endo, exo)
        return norm.denormalize(self.head(self.norm(endo)))
