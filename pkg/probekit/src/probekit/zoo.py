"""Toy model zoo: tiny fixed-seed architectures with hand-verifiable sizes.

Parameter counts, for the record:
  linear8x3   8*3 + 3                                   =  27
  mlp4x5x2    4*5 + 5 + 5*2 + 2                         =  37
  conv_small  conv 1->2, 3x3: 2*9 + 2 = 20; head 72*4+4 = 292; total 312
  attn_small  q/k/v/out Linear(4,4): 4 * (16+4) = 80; head 4*2+2 = 10; total 90
"""
from __future__ import annotations

import torch
from torch import nn


class _AttentionBlock(nn.Module):
    """Single-head dot-product attention built from plain linear maps."""

    def __init__(self, dim: int = 4, classes: int = 2):
        super().__init__()
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim)
        self.value = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.act = nn.ReLU()
        self.head = nn.Linear(dim, classes)

    def forward(self, x):
        # x: (batch, tokens, dim)
        q, k, v = self.query(x), self.key(x), self.value(x)
        weights = torch.softmax(q @ k.transpose(-2, -1) / x.shape[-1] ** 0.5, dim=-1)
        mixed = self.act(self.out(weights @ v))
        return self.head(mixed.mean(dim=1))


def _seeded(seed: int, builder):
    torch.manual_seed(seed)
    return builder()


def linear8x3() -> nn.Module:
    return _seeded(101, lambda: nn.Linear(8, 3))


def mlp4x5x2() -> nn.Module:
    return _seeded(102, lambda: nn.Sequential(
        nn.Linear(4, 5), nn.ReLU(), nn.Linear(5, 2)))


def conv_small() -> nn.Module:
    return _seeded(103, lambda: nn.Sequential(
        nn.Conv2d(1, 2, kernel_size=3), nn.ReLU(), nn.Flatten(),
        nn.Linear(2 * 6 * 6, 4)))


def attn_small() -> nn.Module:
    return _seeded(104, _AttentionBlock)


# name -> (builder, default input shape without batch, documented param count)
ZOO = {
    "linear8x3": (linear8x3, (8,), 27),
    "mlp4x5x2": (mlp4x5x2, (4,), 37),
    "conv_small": (conv_small, (1, 8, 8), 312),
    "attn_small": (attn_small, (3, 4), 90),
}


def build(name: str) -> tuple[nn.Module, tuple[int, ...]]:
    """Construct a zoo model; returns (model, per-sample input shape)."""
    try:
        builder, input_shape, _ = ZOO[name]
    except KeyError:
        raise KeyError(f"unknown zoo model {name!r}; have {sorted(ZOO)}") from None
    return builder(), input_shape
