"""Training-free model scores: parameter count, multiply-accumulates, an
activation-overlap kernel score, and a synaptic-saliency score.

Every probe runs at most one forward pass (plus one backward for saliency);
nothing here trains. The MAC convention counts multiply-accumulate pairs of
linear and convolution layers over the given batch and ignores activations,
normalization, and biases.
"""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

NASWOT_SINGULAR_SENTINEL = -1e10  # documented minimum score for singular kernels

_IGNORED_PARAM_MODULES = (nn.BatchNorm1d, nn.BatchNorm2d, nn.BatchNorm3d,
                          nn.LayerNorm, nn.GroupNorm)


class UnsupportedLayerError(ValueError):
    def __init__(self, module: nn.Module):
        super().__init__(f"no counting rule for layer {type(module).__name__}")
        self.layer = type(module).__name__


def probe_params(model: nn.Module) -> int:
    """Exact trainable-parameter count."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def probe_flops(model: nn.Module, batch: torch.Tensor) -> float:
    """Multiply-accumulate count of one forward pass over the batch."""
    macs = 0.0
    unsupported: list[UnsupportedLayerError] = []

    def hook(module, inputs, output):
        nonlocal macs
        if isinstance(module, nn.Linear):
            rows = inputs[0].numel() // inputs[0].shape[-1]
            macs += rows * module.in_features * module.out_features
        elif isinstance(module, nn.Conv2d):
            positions = output.numel() // output.shape[1]  # N * H_out * W_out
            kernel = module.in_channels // module.groups * \
                module.kernel_size[0] * module.kernel_size[1]
            macs += positions * kernel * module.out_channels
        elif any(p.requires_grad for p in module.parameters(recurse=False)) \
                and not isinstance(module, _IGNORED_PARAM_MODULES):
            unsupported.append(UnsupportedLayerError(module))

    handles = [m.register_forward_hook(hook) for m in model.modules()]
    try:
        with torch.no_grad():
            model(batch)
    finally:
        for handle in handles:
            handle.remove()
    if unsupported:
        raise unsupported[0]
    return float(macs)


def probe_naswot(model: nn.Module, batch: torch.Tensor) -> float:
    """Log-determinant of the binary activation-pattern kernel over the batch.

    Per sample, the sign pattern of every rectifier unit forms a binary code;
    the kernel counts agreements between samples. A singular kernel (for
    example, identical inputs) returns the documented sentinel.
    """
    if batch.shape[0] < 2:
        raise ValueError("activation-overlap score needs a batch of >= 2")
    patterns: list[torch.Tensor] = []

    def hook(module, inputs, output):
        patterns.append((output > 0).flatten(start_dim=1))

    handles = [m.register_forward_hook(hook) for m in model.modules()
               if isinstance(m, nn.ReLU)]
    if not handles:
        raise ValueError("model has no rectifier activations to observe")
    try:
        with torch.no_grad():
            model(batch)
    finally:
        for handle in handles:
            handle.remove()
    codes = torch.cat(patterns, dim=1).double()
    kernel = codes @ codes.T + (1.0 - codes) @ (1.0 - codes.T)
    sign, logdet = torch.linalg.slogdet(kernel)
    if sign.item() <= 0 or not math.isfinite(logdet.item()):
        return NASWOT_SINGULAR_SENTINEL
    return float(logdet.item())


def synflow_saliencies(model: nn.Module, input_shape: tuple[int, ...]
                       ) -> list[torch.Tensor]:
    """Per-parameter saliency |theta * dR/dtheta| on the absolute-valued
    network, where R is the summed output of the all-ones forward pass."""
    model = model.double()
    signs = []
    for p in model.parameters():
        signs.append(torch.sign(p.data))
        p.data = p.data.abs()
        if p.grad is not None:
            p.grad = None
    ones = torch.ones((1, *input_shape), dtype=torch.float64)
    output = model(ones)
    output.sum().backward()
    saliencies = []
    for p, sign in zip(model.parameters(), signs):
        grad = p.grad if p.grad is not None else torch.zeros_like(p)
        saliencies.append((p.data * grad).abs().detach().clone())
        p.data = p.data * sign  # restore original weights
        p.grad = None
    return saliencies


def probe_synflow(model: nn.Module, input_shape: tuple[int, ...]) -> float:
    """Total synaptic saliency of the network."""
    return float(sum(s.sum().item() for s in synflow_saliencies(model, input_shape)))
