import random

import pytest
import torch

from stratrec.config import ModelConfig
from stratrec.corpus import (
    PERSUADEE,
    PERSUADER,
    Dialogue,
    Utterance,
    Vocab,
    apply_emotion_labels,
    build_vocab,
)
from stratrec.model import StrategyModel

torch.set_num_threads(1)


def make_dialogue(spec, did="d0"):
    """Compact dialogue builder.

    ``spec`` is a list of tuples: ("ER", text, strategy_id) or
    ("EE", text, sentiment).
    """
    turns = []
    for i, (speaker, text, extra) in enumerate(spec):
        if speaker == PERSUADER:
            turns.append(Utterance(PERSUADER, text, i, strategy=extra))
        else:
            turns.append(Utterance(PERSUADEE, text, i, sentiment=extra))
    d = Dialogue(id=did, utterances=turns)
    d.validate()
    return d


def tiny_corpus(n=6, seed=0):
    """A handful of short dialogues over a small word list."""
    rng = random.Random(seed)
    words = ["give", "now", "please", "story", "facts", "you", "help", "kids"]
    dialogues = []
    for i in range(n):
        spec = []
        for t in range(3):
            text = " ".join(rng.choice(words) for _ in range(4))
            spec.append((PERSUADER, text, rng.randrange(4)))
            if t < 2:
                spec.append((PERSUADEE, rng.choice(words), rng.uniform(-1, 1)))
        dialogues.append(make_dialogue(spec, did=f"t{i}"))
    apply_emotion_labels(dialogues)
    return dialogues


@pytest.fixture
def tiny_config():
    return ModelConfig(embed_dim=8, hidden_dim=8, n_heads=2, max_context=3,
                       epochs=2, batch_size=4, patience=3, seed=0)


@pytest.fixture
def tiny_model(tiny_config):
    torch.manual_seed(0)
    dialogues = tiny_corpus()
    vocab = build_vocab(dialogues)
    model = StrategyModel(tiny_config, vocab)
    return model, dialogues


@pytest.fixture
def small_vocab():
    return Vocab(token_to_id={w: i + 2 for i, w in enumerate(
        ["give", "now", "please", "story", "facts", "you", "help", "kids"])})
