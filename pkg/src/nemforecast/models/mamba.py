"""Mamba: selective state-space blocks with input-dependent discretisation."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .base import Forecaster
from .layers import DataEmbedding, InstanceNorm, split_inputs


def selective_scan(u, delta, A, B, C, D):
    """Sequential scan of the discretised selective SSM.

    u, delta: ``[b, L, d]``; A: ``[d, n]``; B, C: ``[b, L, n]``; D: ``[d]``.
    ``h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t``, ``y_t = C_t h_t + D u_t``.
    """
    dA = torch.exp(delta.unsqueeze(-1) * A)
    dBu = delta.unsqueeze(-1) * B.unsqueeze(2) * u.unsqueeze(-1)
    h = u.new_zeros(u.shape[0], u.shape[2], A.shape[1])
    ys = []
    for t in range(u.shape[1]):
        h = dA[:, t] * h + dBu[:, t]
        ys.append((h * C[:, t].unsqueeze(1)).sum(-1))
    return torch.stack(ys, dim=1) + u * D


class RMSNorm(nn.Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))

    def forward(self, x):
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps) * self.weight


class MambaMixer(nn.Module):
    def __init__(self, dim, d_state, d_conv, expand):
        super().__init__()
        inner = expand * dim
        self.dt_rank = math.ceil(dim / 16)
        self.d_state = d_state
        self.in_proj = nn.Linear(dim, 2 * inner, bias=False)
        self.conv = nn.Conv1d(inner, inner, kernel_size=d_conv, groups=inner, padding=d_conv - 1)
        self.x_proj = nn.Linear(inner, self.dt_rank + 2 * d_state, bias=False)
        self.dt_proj = nn.Linear(self.dt_rank, inner)
        self.out_proj = nn.Linear(inner, dim, bias=False)
        A = torch.arange(1, d_state + 1, dtype=torch.float32).repeat(inner, 1)
        self.A_log = nn.Parameter(torch.log(A))
        self.D = nn.Parameter(torch.ones(inner))
        # dt initialised log-uniformly in [1e-3, 1e-1]
        dt = torch.exp(torch.rand(inner) * (math.log(0.1) - math.log(1e-3)) + math.log(1e-3)).clamp(min=1e-4)
        with torch.no_grad():
            self.dt_proj.bias.copy_(dt + torch.log(-torch.expm1(-dt)))

    def forward(self, x):
        L = x.shape[1]
        u, z = self.in_proj(x).chunk(2, dim=-1)
        u = F.silu(self.conv(u.transpose(1, 2))[..., :L].transpose(1, 2))
        dt, B, C = self.x_proj(u).split([self.dt_rank, self.d_state, self.d_state], dim=-1)
        delta = F.softplus(self.dt_proj(dt))
        y = selective_scan(u, delta, -torch.exp(self.A_log), B, C, self.D)
        return self.out_proj(y * F.silu(z))


class MambaBlock(nn.Module):
    def __init__(self, dim, **kw):
        super().__init__()
        self.norm = RMSNorm(dim)
        self.mixer = MambaMixer(dim, **kw)

    def forward(self, x):
        return x + self.mixer(self.norm(x))


class Mamba(Forecaster):
    """Embedded price (+ calendar marks) through residual Mamba blocks; a
    linear map over time turns the ``L`` per-step outputs into ``H`` forecasts."""

    def __init__(self, config):
        super().__init__(config)
        d = config.model_dim
        self.embed = DataEmbedding(1, config.n_features - 1, d, config.dropout)
        self.blocks = nn.ModuleList(
            MambaBlock(d, d_state=config.option("d_state"), d_conv=config.option("d_conv"),
                       expand=config.option("expand"))
            for _ in range(config.n_layers)
        )
        self.norm = RMSNorm(d)
        self.out = nn.Linear(d, 1)
        self.temporal = nn.Linear(config.lookback, config.horizon)

    def predict(self, x):
        price, marks = split_inputs(x)
        norm = InstanceNorm(price)
        h = self.embed(norm.normalize(price), marks)
        for block in self.blocks:
            h = block(h)
        steps = self.out(self.norm(h))[..., 0]
        return norm.denormalize(self.temporal(steps))
