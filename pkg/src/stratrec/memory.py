"""Feedback-aware strategy memory.

Holds a trainable embedding per strategy plus two small heads:

  * a selector that maps the encoded context to a distribution over
    strategies, used only to pick which embedding rows enter the memory;
  * an emotion head that reads the context rows before the target turn and
    predicts the persuadee's reaction (pos/neu/neg).

Per dialogue, a bounded FIFO pool collects row-masked copies of the embedding
table (top-k rows of the selector distribution survive, the rest are zeroed),
and a per-strategy weight vector is nudged up on positive reactions and down
on negative ones, scaled by the emotion head's confidence.  The pooled,
weighted matrix is what the fusion stage consumes.

Mask selection is a hard, non-differentiable choice: masks are constants, and
gradients reach the embedding table only through the surviving rows.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import ContractViolation
from .labels import NUM_EMOTIONS, NUM_STRATEGIES

# pos reinforces, neu leaves the weights alone, neg suppresses
_EMOTION_DIRECTION = (1, 0, -1)


def make_masks(probs, top_k: int, forced_top: int | None = None):
    """Select memory rows from a strategy distribution.

    Returns (pool_mask, feedback_mask) as 0/1 float64 arrays.  The pool mask
    keeps the ``top_k`` highest-probability rows; the feedback mask keeps only
    the single best row.  Ties break toward the lower index.  ``forced_top``
    pins the best row (teacher forcing) and the remaining pool slots go to the
    best of the others.
    """
    p = np.asarray(probs.detach().cpu() if torch.is_tensor(probs) else probs,
                   dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ContractViolation(f"probs must be a non-empty vector, got shape {p.shape}")
    n = p.size
    if not 1 <= top_k <= n:
        raise ContractViolation(f"top_k must be in 1..{n}, got {top_k}")
    if forced_top is not None and not 0 <= forced_top < n:
        raise ContractViolation(f"forced_top out of range: {forced_top}")

    order = sorted(range(n), key=lambda j: (-p[j], j))
    if forced_top is None:
        chosen = order[:top_k]
        best = order[0]
    else:
        best = forced_top
        rest = [j for j in order if j != forced_top]
        chosen = [forced_top] + rest[: top_k - 1]
    pool_mask = np.zeros(n, dtype=np.float64)
    pool_mask[chosen] = 1.0
    feedback_mask = np.zeros(n, dtype=np.float64)
    feedback_mask[best] = 1.0
    return pool_mask, feedback_mask


def masked_strategy_matrix(table: torch.Tensor, mask) -> torch.Tensor:
    """Zero out non-selected rows. Gradient flows only into kept rows."""
    m = torch.as_tensor(mask, dtype=table.dtype, device=table.device)
    if m.shape != (table.shape[0],):
        raise ContractViolation(f"mask shape {tuple(m.shape)} vs table {tuple(table.shape)}")
    return table * m.unsqueeze(1)


@dataclass
class MemoryState:
    """Per-dialogue mutable state. Create via :func:`new_state`."""

    dialogue_id: str
    feedback_weights: torch.Tensor           # float64 [n_strategies]
    strategy_pool: deque                     # FIFO of [n_strategies, d] tensors
    feedback_events: list = field(default_factory=list)  # (strategy, emotion, confidence)
    last_turn_index: int = -1


def new_state(dialogue_id: str, pool_capacity: int,
              n_strategies: int = NUM_STRATEGIES) -> MemoryState:
    if pool_capacity < 1:
        raise ContractViolation(f"pool_capacity must be >= 1, got {pool_capacity}")
    return MemoryState(
        dialogue_id=dialogue_id,
        feedback_weights=torch.ones(n_strategies, dtype=torch.float64),
        strategy_pool=deque(maxlen=pool_capacity),
    )


def update_feedback_weights(state: MemoryState, feedback_mask, emotion_id: int,
                            confidence: float, step: float,
                            weight_min: float, weight_max: float) -> torch.Tensor:
    """Nudge the masked strategy's weight by the emotion direction.

    The nudge is ``step * exp(confidence - 1)``: full step at confidence 1,
    shrinking toward ``step/e`` as confidence drops to 0.  Neutral reactions
    leave the vector untouched (bitwise).  Results clamp to the configured
    bounds.
    """
    if not 0 <= emotion_id < NUM_EMOTIONS:
        raise ContractViolation(f"emotion_id out of range: {emotion_id}")
    if not 0.0 <= confidence <= 1.0:
        raise ContractViolation(f"confidence must be in [0, 1], got {confidence}")
    direction = _EMOTION_DIRECTION[emotion_id]
    if direction == 0:
        return state.feedback_weights
    delta = step * math.exp(-(1.0 - confidence))
    mask = torch.as_tensor(feedback_mask, dtype=torch.float64)
    if mask.shape != state.feedback_weights.shape:
        raise ContractViolation(
            f"mask shape {tuple(mask.shape)} vs weights {tuple(state.feedback_weights.shape)}"
        )
    state.feedback_weights = torch.clamp(
        state.feedback_weights + direction * delta * mask,
        min=weight_min, max=weight_max,
    )
    return state.feedback_weights


def aggregate_pool(state: MemoryState, n_strategies: int, d_model: int,
                   how: str, dtype, device) -> torch.Tensor:
    """Reduce the pooled masked matrices to one [n_strategies, d] matrix."""
    if how not in ("mean", "max"):
        raise ContractViolation(f"aggregation must be mean or max, got {how!r}")
    if not state.strategy_pool:
        return torch.zeros(n_strategies, d_model, dtype=dtype, device=device)
    stacked = torch.stack(list(state.strategy_pool))
    return stacked.mean(dim=0) if how == "mean" else stacked.amax(dim=0)


def apply_feedback_weights(weights: torch.Tensor, pooled: torch.Tensor) -> torch.Tensor:
    """Row-scale the pooled matrix by the per-strategy weights."""
    if weights.shape[0] != pooled.shape[0]:
        raise ContractViolation(
            f"{weights.shape[0]} weights for {pooled.shape[0]} strategy rows"
        )
    scale = weights.detach().to(dtype=pooled.dtype, device=pooled.device)
    return pooled * scale.unsqueeze(1)


class FeedbackMemory(nn.Module):
    """Trainable pieces: the strategy embedding table and the two heads."""

    def __init__(self, d_model: int, n_strategies: int = NUM_STRATEGIES,
                 n_emotions: int = NUM_EMOTIONS):
        super().__init__()
        self.n_strategies = n_strategies
        self.d_model = d_model
        self.strategy_embeddings = nn.Parameter(torch.empty(n_strategies, d_model))
        nn.init.normal_(self.strategy_embeddings, std=0.1)
        self.selector = nn.Sequential(
            nn.Linear(d_model, d_model), nn.Tanh(), nn.Linear(d_model, n_strategies)
        )
        self.emotion_head = nn.Sequential(
            nn.Linear(d_model, d_model), nn.Tanh(), nn.Linear(d_model, n_emotions)
        )

    def strategy_distribution(self, context_matrix: torch.Tensor) -> torch.Tensor:
        """Distribution over strategies from the mean-pooled context rows."""
        if context_matrix.ndim != 2 or context_matrix.shape[0] == 0:
            raise ContractViolation(
                f"context must be [n_turns, d], got {tuple(context_matrix.shape)}"
            )
        pooled = context_matrix.mean(dim=0)
        return torch.softmax(self.selector(pooled), dim=-1)

    def predict_emotion(self, context_matrix: torch.Tensor) -> torch.Tensor:
        """Reaction distribution from the rows before the target turn."""
        if context_matrix.ndim != 2 or context_matrix.shape[0] < 2:
            raise ContractViolation(
                "emotion prediction needs at least one turn before the target"
            )
        pooled = context_matrix[:-1].mean(dim=0)
        return torch.softmax(self.emotion_head(pooled), dim=-1)
