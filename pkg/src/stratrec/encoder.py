"""Hierarchical context encoder.

Tokens -> embeddings -> bidirectional LSTM per utterance; each utterance is
summarized by the concatenation of the final hidden states of both directions.
The resulting utterance vectors are then mixed across the context window by
multi-head self-attention, optionally after adding role (speaker) and position
embeddings.

The attention block is written out long-hand (separate q/k/v projections,
per-head reshape, scaled dot products) so tests can mirror it step by step.
It is purely the attention output: no residual connection or normalization
unless ``use_post_norm`` is set.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_sequence

from .errors import ContractViolation

MAX_POSITIONS = 64


class UtteranceAttention(nn.Module):
    """Multi-head self-attention over a [N, d] stack of utterance vectors."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise ContractViolation(f"{n_heads} heads do not divide d_model {d_model}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor):
        n = x.shape[0]
        q = self.q_proj(x).view(n, self.n_heads, self.d_head).transpose(0, 1)
        k = self.k_proj(x).view(n, self.n_heads, self.d_head).transpose(0, 1)
        v = self.v_proj(x).view(n, self.n_heads, self.d_head).transpose(0, 1)
        scores = q @ k.transpose(1, 2) / math.sqrt(self.d_head)  # [H, N, N]
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(0, 1).reshape(n, self.d_model)
        return self.out_proj(mixed), weights


class HierarchicalEncoder(nn.Module):
    def __init__(self, vocab_size: int, embed_dim: int, hidden_dim: int,
                 n_heads: int, use_role_embedding: bool = True,
                 use_positional_encoding: bool = False,
                 use_post_norm: bool = False):
        super().__init__()
        self.vocab_size = vocab_size
        self.d_model = 2 * hidden_dim
        self.embedding = nn.Embedding(vocab_size, embed_dim, padding_idx=0)
        self.lstm = nn.LSTM(embed_dim, hidden_dim, batch_first=True, bidirectional=True)
        self.attention = UtteranceAttention(self.d_model, n_heads)
        self.role_embedding = nn.Embedding(2, self.d_model) if use_role_embedding else None
        self.position_embedding = (
            nn.Embedding(MAX_POSITIONS, self.d_model) if use_positional_encoding else None
        )
        self.post_norm = nn.LayerNorm(self.d_model) if use_post_norm else None

    def encode_utterances(self, token_ids: list) -> torch.Tensor:
        """Batch of token-id lists -> [N, d_model] utterance vectors.

        One packed LSTM call covers the whole batch; padding positions never
        enter the recurrence, so each row matches the unpadded encoding.
        """
        if not token_ids:
            raise ContractViolation("encode_utterances needs at least one utterance")
        for ids in token_ids:
            if not ids:
                raise ContractViolation("empty token-id list; encode with the vocab first")
            bad = [i for i in ids if not 0 <= i < self.vocab_size]
            if bad:
                raise ContractViolation(
                    f"token id {bad[0]} outside vocabulary of size {self.vocab_size}"
                )
        device = self.embedding.weight.device
        seqs = [torch.tensor(ids, dtype=torch.long, device=device) for ids in token_ids]
        lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
        padded = pad_sequence(seqs, batch_first=True, padding_value=0)
        packed = pack_padded_sequence(
            self.embedding(padded), lengths, batch_first=True, enforce_sorted=False
        )
        _, (h_n, _) = self.lstm(packed)
        # h_n is [2, N, hidden]: forward direction then backward
        return torch.cat([h_n[0], h_n[1]], dim=1)

    def contextualize(self, utt_vecs: torch.Tensor, roles: list):
        """Mix a [N, d_model] stack with self-attention; returns (C, weights)."""
        n = utt_vecs.shape[0]
        if n == 0:
            raise ContractViolation("empty context window")
        if len(roles) != n:
            raise ContractViolation(f"{len(roles)} roles for {n} utterances")
        x = utt_vecs
        if self.role_embedding is not None:
            role_ids = torch.tensor(roles, dtype=torch.long, device=utt_vecs.device)
            x = x + self.role_embedding(role_ids)
        if self.position_embedding is not None:
            if n > MAX_POSITIONS:
                raise ContractViolation(f"context of {n} exceeds {MAX_POSITIONS} positions")
            pos = torch.arange(n, device=utt_vecs.device)
            x = x + self.position_embedding(pos)
        out, weights = self.attention(x)
        if self.post_norm is not None:
            out = self.post_norm(out)
        return out, weights

    def forward(self, token_ids: list, roles: list):
        return self.contextualize(self.encode_utterances(token_ids), roles)
