"""Fusion of the encoded context with the weighted strategy memory.

All variants take the context matrix C [n_turns, d] and the memory matrix
M [n_strategies, d] and return a distribution over strategies.

  * ``mlp``: mean-pool both, concatenate, push through a bottleneck MLP,
    then a single linear classifier.
  * ``double_head``: separate classifier per source; each head's softmax
    distribution is computed first and the two distributions are summed,
    then renormalized through an outer softmax.  The outer logits live in
    [0, 2], so this variant never saturates.
  * ``co_attention``: scores = C @ M^T; softmax over strategies gives each
    turn a memory summary, softmax over turns gives each strategy a context
    summary; both summaries are mean-pooled and fed to the mlp-style stack.

The ``none`` variant is the ablation bypass: one linear layer on the pooled
concatenation.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import ContractViolation
from .labels import NUM_STRATEGIES


def _check_inputs(context: torch.Tensor, memory: torch.Tensor, n_strategies: int):
    if context.ndim != 2 or context.shape[0] == 0:
        raise ContractViolation(f"context must be [n_turns, d], got {tuple(context.shape)}")
    if memory.shape != (n_strategies, context.shape[1]):
        raise ContractViolation(
            f"memory must be [{n_strategies}, {context.shape[1]}], "
            f"got {tuple(memory.shape)}"
        )


class MlpFusion(nn.Module):
    def __init__(self, d_model: int, n_strategies: int = NUM_STRATEGIES):
        super().__init__()
        self.n_strategies = n_strategies
        self.squeeze = nn.Linear(2 * d_model, d_model)
        self.expand = nn.Linear(d_model, 2 * d_model)
        self.classify = nn.Linear(2 * d_model, n_strategies)

    def forward(self, context: torch.Tensor, memory: torch.Tensor):
        _check_inputs(context, memory, self.n_strategies)
        joint = torch.cat([context.mean(dim=0), memory.mean(dim=0)])
        gate = self.expand(torch.tanh(self.squeeze(joint)))
        logits = self.classify(gate)
        return torch.softmax(logits, dim=-1), logits


class DoubleHeadFusion(nn.Module):
    def __init__(self, d_model: int, n_strategies: int = NUM_STRATEGIES):
        super().__init__()
        self.n_strategies = n_strategies
        self.context_head = nn.Sequential(
            nn.Linear(d_model, d_model), nn.Tanh(), nn.Linear(d_model, n_strategies)
        )
        self.memory_head = nn.Sequential(
            nn.Linear(d_model, d_model), nn.Tanh(), nn.Linear(d_model, n_strategies)
        )

    def forward(self, context: torch.Tensor, memory: torch.Tensor):
        _check_inputs(context, memory, self.n_strategies)
        context_probs = torch.softmax(self.context_head(context.mean(dim=0)), dim=-1)
        memory_probs = torch.softmax(self.memory_head(memory.mean(dim=0)), dim=-1)
        # sum of the two distributions feeds an outer softmax; the double
        # normalization is deliberate, not a bug
        combined = context_probs + memory_probs
        return torch.softmax(combined, dim=-1), combined


class CoAttentionFusion(nn.Module):
    def __init__(self, d_model: int, n_strategies: int = NUM_STRATEGIES):
        super().__init__()
        self.n_strategies = n_strategies
        self.squeeze = nn.Linear(2 * d_model, d_model)
        self.expand = nn.Linear(d_model, 2 * d_model)
        self.classify = nn.Linear(2 * d_model, n_strategies)

    def forward(self, context: torch.Tensor, memory: torch.Tensor):
        _check_inputs(context, memory, self.n_strategies)
        scores = context @ memory.T                      # [n_turns, n_strategies]
        over_strategies = torch.softmax(scores, dim=1)
        over_turns = torch.softmax(scores, dim=0)
        memory_view = over_strategies @ memory           # per-turn memory summary
        context_view = over_turns.T @ context            # per-strategy context summary
        joint = torch.cat([memory_view.mean(dim=0), context_view.mean(dim=0)])
        gate = self.expand(torch.tanh(self.squeeze(joint)))
        logits = self.classify(gate)
        return torch.softmax(logits, dim=-1), logits


class LinearFusion(nn.Module):
    """Ablation bypass: no learned interaction, one linear map."""

    def __init__(self, d_model: int, n_strategies: int = NUM_STRATEGIES):
        super().__init__()
        self.n_strategies = n_strategies
        self.classify = nn.Linear(2 * d_model, n_strategies)

    def forward(self, context: torch.Tensor, memory: torch.Tensor):
        _check_inputs(context, memory, self.n_strategies)
        logits = self.classify(torch.cat([context.mean(dim=0), memory.mean(dim=0)]))
        return torch.softmax(logits, dim=-1), logits


FUSION_VARIANTS = {
    "mlp": MlpFusion,
    "double_head": DoubleHeadFusion,
    "co_attention": CoAttentionFusion,
}


def build_fusion(variant: str, d_model: int,
                 n_strategies: int = NUM_STRATEGIES) -> nn.Module:
    if variant not in FUSION_VARIANTS:
        raise ContractViolation(
            f"unknown fusion variant {variant!r}; have {sorted(FUSION_VARIANTS)}"
        )
    return FUSION_VARIANTS[variant](d_model, n_strategies)
