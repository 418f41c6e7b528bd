"""Low-rank adapters on the attention query/value projections.

A LoRALinear wraps a frozen base projection with a rank-r update
(alpha/r scaling, B initialized to zero so training starts at the base
model).  ``merge_adapters`` folds the update back into the base weights so
the exported graph has no adapter machinery.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int = 8, alpha: int = 16):
        super().__init__()
        self.base = base
        for param in self.base.parameters():
            param.requires_grad_(False)
        self.rank = rank
        self.alpha = alpha
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    def forward(self, x):
        return self.base(x) + (x @ self.lora_a.T @ self.lora_b.T) * self.scale

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight.data + self.scale * (self.lora_b @ self.lora_a)


def _attention_modules(model):
    for module in model.modules():
        if module.__class__.__name__ in ("T5Attention", "T5LayerSelfAttention"):
            if hasattr(module, "q") and hasattr(module, "v"):
                yield module


def apply_lora(model, rank: int = 8, alpha: int = 16) -> int:
    """Freeze the model and wrap every attention q/v projection.

    Returns the number of wrapped projections.
    """
    for param in model.parameters():
        param.requires_grad_(False)
    wrapped = 0
    for attention in _attention_modules(model):
        if isinstance(attention.q, LoRALinear):
            continue
        attention.q = LoRALinear(attention.q, rank, alpha)
        attention.v = LoRALinear(attention.v, rank, alpha)
        wrapped += 2
    if wrapped == 0:
        raise ValueError("no attention q/v projections found to adapt")
    return wrapped


def trainable_parameters(model):
    return [p for p in model.parameters() if p.requires_grad]


def merge_adapters(model) -> int:
    """Fold every adapter into its base projection, in place."""
    merged = 0
    for attention in _attention_modules(model):
        for name in ("q", "v"):
            layer = getattr(attention, name)
            if isinstance(layer, LoRALinear):
                layer.base.weight.data = layer.merged_weight()
                setattr(attention, name, layer.base)
                merged += 1
    return merged
