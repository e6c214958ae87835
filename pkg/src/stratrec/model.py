"""End-to-end model: encode a context window, update the per-dialogue memory,
fuse, and emit a strategy distribution.

Turns of one dialogue must be processed in order against the same state
object; the state carries the strategy pool, the feedback weights, and the
recorded feedback events.  ``run_dialogue`` is the fast path: it encodes all
utterances of a dialogue with a single packed LSTM call and reuses the cached
vectors for every context window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .corpus import PERSUADEE, PERSUADER, Dialogue, StrategyExample, Vocab, make_examples
from .encoder import HierarchicalEncoder
from .errors import ContractViolation
from .fusion import LinearFusion, build_fusion
from .labels import EMOTION_IDS, NUM_STRATEGIES
from .memory import (
    FeedbackMemory,
    MemoryState,
    aggregate_pool,
    apply_feedback_weights,
    make_masks,
    masked_strategy_matrix,
    new_state,
    update_feedback_weights,
)

_ROLE_IDS = {PERSUADER: 0, PERSUADEE: 1}


@dataclass
class TurnOutput:
    example: StrategyExample
    strategy_probs: torch.Tensor
    selector_probs: torch.Tensor | None = None
    emotion_probs: torch.Tensor | None = None
    pool_mask: np.ndarray | None = None
    feedback_mask: np.ndarray | None = None

    @property
    def predicted_strategy(self) -> int:
        return int(torch.argmax(self.strategy_probs).item())

    @property
    def predicted_emotion(self) -> int | None:
        if self.emotion_probs is None:
            return None
        return int(torch.argmax(self.emotion_probs).item())


class StrategyModel(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocab):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab
        self.encoder = HierarchicalEncoder(
            vocab.size, cfg.embed_dim, cfg.hidden_dim, cfg.n_heads,
            use_role_embedding=cfg.use_role_embedding,
            use_positional_encoding=cfg.use_positional_encoding,
            use_post_norm=cfg.use_post_norm,
        )
        self.memory = FeedbackMemory(cfg.d_model)
        if cfg.no_fusion:
            self.fusion = LinearFusion(cfg.d_model)
        else:
            self.fusion = build_fusion(cfg.fusion_variant, cfg.d_model)

    # ------------------------------------------------------------------
    # state and encoding helpers
    # ------------------------------------------------------------------

    def new_state(self, dialogue_id: str) -> MemoryState:
        return new_state(dialogue_id, self.cfg.pool_capacity)

    def encode_dialogue(self, dialogue: Dialogue) -> dict:
        """Utterance vectors for a whole dialogue, one packed LSTM batch."""
        token_ids = [self.vocab.encode(u.text) for u in dialogue.utterances]
        vecs = self.encoder.encode_utterances(token_ids)
        return {u.turn_index: vecs[i] for i, u in enumerate(dialogue.utterances)}

    def _context_matrix(self, example: StrategyExample, h_cache):
        roles = [_ROLE_IDS[u.speaker] for u in example.context]
        if h_cache is None:
            vecs = self.encoder.encode_utterances(
                [self.vocab.encode(u.text) for u in example.context]
            )
        else:
            try:
                vecs = torch.stack([h_cache[u.turn_index] for u in example.context])
            except KeyError as exc:
                raise ContractViolation(f"h_cache missing turn {exc}") from None
        context, _ = self.encoder.contextualize(vecs, roles)
        return context

    @staticmethod
    def _has_reaction(example: StrategyExample) -> bool:
        return len(example.context) >= 2 and example.context[-2].speaker == PERSUADEE

    # ------------------------------------------------------------------
    # forward passes
    # ------------------------------------------------------------------

    def forward_turn(self, example: StrategyExample, state: MemoryState,
                     h_cache=None) -> TurnOutput:
        cfg = self.cfg
        if state.dialogue_id != example.dialogue_id:
            raise ContractViolation(
                f"state for dialogue {state.dialogue_id!r} used on {example.dialogue_id!r}"
            )
        target_index = example.context[-1].turn_index
        if target_index <= state.last_turn_index:
            raise ContractViolation(
                f"turn {target_index} processed after turn {state.last_turn_index}; "
                "dialogue turns must be visited in order"
            )

        context = self._context_matrix(example, h_cache)
        param = self.memory.strategy_embeddings
        selector_probs = emotion_probs = None
        pool_mask = feedback_mask = None

        if cfg.no_memory:
            memory_matrix = torch.zeros(
                NUM_STRATEGIES, cfg.d_model, dtype=context.dtype, device=context.device
            )
            if self._has_reaction(example):
                emotion_probs = self.memory.predict_emotion(context)
        else:
            selector_probs = self.memory.strategy_distribution(context)
            forced = None
            if self.training and cfg.teacher_force_strategy:
                forced = example.gold_strategy
            pool_mask, feedback_mask = make_masks(selector_probs, cfg.top_k, forced)
            state.strategy_pool.append(masked_strategy_matrix(param, pool_mask))

            if self._has_reaction(example):
                emotion_probs = self.memory.predict_emotion(context)
                if (self.training and cfg.teacher_force_emotion
                        and example.gold_emotion is not None):
                    emotion_id = EMOTION_IDS[example.gold_emotion]
                else:
                    emotion_id = int(torch.argmax(emotion_probs).item())
                confidence = min(max(float(emotion_probs[emotion_id].item()), 0.0), 1.0)
                update_feedback_weights(
                    state, feedback_mask, emotion_id, confidence,
                    cfg.feedback_step, cfg.feedback_weight_min, cfg.feedback_weight_max,
                )
                state.feedback_events.append(
                    (int(np.argmax(feedback_mask)), emotion_id, confidence)
                )

            pooled = aggregate_pool(
                state, NUM_STRATEGIES, cfg.d_model, cfg.pool_aggregation,
                context.dtype, context.device,
            )
            memory_matrix = apply_feedback_weights(state.feedback_weights, pooled)

        strategy_probs, _ = self.fusion(context, memory_matrix)
        state.last_turn_index = target_index
        return TurnOutput(
            example=example,
            strategy_probs=strategy_probs,
            selector_probs=selector_probs,
            emotion_probs=emotion_probs,
            pool_mask=pool_mask,
            feedback_mask=feedback_mask,
        )

    def run_dialogue(self, dialogue: Dialogue, state: MemoryState | None = None,
                     include_unlabeled: bool = False):
        """Process every labeled persuader turn of a dialogue in order."""
        examples = make_examples(dialogue, self.cfg.max_context,
                                 include_unlabeled=include_unlabeled)
        if state is None:
            state = self.new_state(dialogue.id)
        if not examples:
            return [], state
        h_cache = self.encode_dialogue(dialogue)
        outputs = [self.forward_turn(ex, state, h_cache) for ex in examples]
        return outputs, state
