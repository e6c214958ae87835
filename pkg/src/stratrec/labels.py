"""Label spaces: the 10+1 persuasive strategy taxonomy and the 3-way emotion labels.

Strategy ids are stable across the whole package; id 10 is the catch-all
"None" category for unannotated or unrecognised persuader turns.
"""

from __future__ import annotations

import re

STRATEGY_NAMES = [
    "Logical appeal",
    "Emotion appeal",
    "Credibility appeal",
    "Foot-in-the-door",
    "Self-modeling",
    "Personal story",
    "Donation information",
    "Task-related inquiry",
    "Personal-related inquiry",
    "Source-related inquiry",
    "None",
]

NUM_STRATEGIES = len(STRATEGY_NAMES)  # 11
NONE_STRATEGY = 10

STRATEGY_IDS = {name: i for i, name in enumerate(STRATEGY_NAMES)}

EMOTIONS = ["pos", "neu", "neg"]
NUM_EMOTIONS = 3
EMOTION_IDS = {name: i for i, name in enumerate(EMOTIONS)}

_PUNCT = re.compile(r"[^\w\s]")
_SEPS = re.compile(r"[\s_\-]+")


def normalize_strategy_key(raw: str) -> str:
    """Canonical lookup key: lowercase, punctuation stripped, separators collapsed."""
    key = raw.strip().lower()
    key = _SEPS.sub(" ", key)
    key = _PUNCT.sub("", key)
    return " ".join(key.split())


# Alias table keyed by normalized form. Covers the canonical names plus the
# annotation spellings seen in the public donation-dialogue dataset.
_EXTRA_ALIASES = {
    "logical appeal": 0,
    "emotion appeal": 1,
    "emotional appeal": 1,
    "credibility appeal": 2,
    "foot in the door": 3,
    "foot in door": 3,
    "self modeling": 4,
    "self modelling": 4,
    "personal story": 5,
    "donation information": 6,
    "task related inquiry": 7,
    "task inquiry": 7,
    "personal related inquiry": 8,
    "personal inquiry": 8,
    "source related inquiry": 9,
    "source inquiry": 9,
    "none": 10,
    "non strategy dialogue acts": 10,
    "other": 10,
    "no strategy": 10,
}

STRATEGY_ALIASES = {normalize_strategy_key(n): i for i, n in enumerate(STRATEGY_NAMES)}
STRATEGY_ALIASES.update(_EXTRA_ALIASES)


def strategy_id(raw: str | None) -> int | None:
    """Map a raw annotation string to a strategy id; unknown strings map to None category.

    Returns ``None`` (no label at all) only for empty/missing input.
    """
    if raw is None or not raw.strip():
        return None
    return STRATEGY_ALIASES.get(normalize_strategy_key(raw), NONE_STRATEGY)


def strategy_name(label: int) -> str:
    return STRATEGY_NAMES[label]
