"""Dialogue data model and corpus handling.

A dialogue is an ordered list of persuader ("ER") / persuadee ("EE") turns.
Persuader turns may carry a gold strategy label; persuadee turns may carry a
raw sentiment score from which a 3-way emotion label is derived.

On-disk format is one JSON object per line:

    {"id": str, "turns": [{"speaker": "ER"|"EE", "text": str,
                           "strategy": str|null, "sentiment": number|null}]}
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusError, MappingError
from .labels import (
    NONE_STRATEGY,
    STRATEGY_ALIASES,
    normalize_strategy_key,
    strategy_id,
    strategy_name,
)

log = logging.getLogger(__name__)

PERSUADER = "ER"
PERSUADEE = "EE"

DEFAULT_EMOTION_THRESHOLDS = (-0.1, 0.1)


@dataclass
class Utterance:
    speaker: str
    text: str
    turn_index: int
    strategy: int | None = None      # persuader turns only
    sentiment: float | None = None   # persuadee turns only, raw annotation
    emotion: str | None = None       # persuadee turns only, derived

    def is_persuader(self) -> bool:
        return self.speaker == PERSUADER


@dataclass
class Dialogue:
    id: str
    utterances: list[Utterance]

    def validate(self) -> None:
        if not self.utterances:
            raise CorpusError(f"dialogue {self.id!r} has no utterances")
        prev = -1
        for u in self.utterances:
            if u.speaker not in (PERSUADER, PERSUADEE):
                raise CorpusError(f"dialogue {self.id!r}: bad speaker {u.speaker!r}")
            if u.turn_index <= prev:
                raise CorpusError(
                    f"dialogue {self.id!r}: turn_index not strictly increasing "
                    f"at {u.turn_index}"
                )
            prev = u.turn_index
            if u.strategy is not None and u.speaker != PERSUADER:
                raise CorpusError(
                    f"dialogue {self.id!r}: strategy label on persuadee turn {u.turn_index}"
                )
            if (u.sentiment is not None or u.emotion is not None) and u.speaker != PERSUADEE:
                raise CorpusError(
                    f"dialogue {self.id!r}: sentiment/emotion on persuader turn {u.turn_index}"
                )


@dataclass
class StrategyExample:
    """One prediction instance: context window ending at a persuader turn.

    ``gold_strategy`` is None only for unlabeled turns surfaced through the
    prediction path; training examples always carry a label.
    """

    dialogue_id: str
    context: list[Utterance]
    target_turn: int                 # index into context; always the last entry
    gold_strategy: int | None
    gold_emotion: str | None = None  # emotion of the persuadee turn right before target


def derive_emotion_label(score: float, thresholds=DEFAULT_EMOTION_THRESHOLDS) -> str:
    """Threshold a raw sentiment score into pos/neu/neg."""
    t_neg, t_pos = thresholds
    if t_neg > t_pos:
        raise CorpusError(f"thresholds out of order: {thresholds}")
    if not math.isfinite(score):
        raise CorpusError(f"non-finite sentiment score: {score}")
    if score < t_neg:
        return "neg"
    if score > t_pos:
        return "pos"
    return "neu"


def apply_emotion_labels(dialogues, thresholds=DEFAULT_EMOTION_THRESHOLDS):
    """Fill the derived emotion field on every annotated persuadee turn, in place."""
    for d in dialogues:
        for u in d.utterances:
            if u.speaker == PERSUADEE and u.sentiment is not None:
                u.emotion = derive_emotion_label(u.sentiment, thresholds)
    return dialogues


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def dialogue_to_dict(dialogue: Dialogue) -> dict:
    return {
        "id": dialogue.id,
        "turns": [
            {
                "speaker": u.speaker,
                "text": u.text,
                "strategy": None if u.strategy is None else strategy_name(u.strategy),
                "sentiment": u.sentiment,
            }
            for u in dialogue.utterances
        ],
    }


def dialogue_from_dict(obj: dict, where: str = "<memory>") -> Dialogue:
    try:
        turns = []
        for i, t in enumerate(obj["turns"]):
            turns.append(
                Utterance(
                    speaker=t["speaker"],
                    text=t["text"],
                    turn_index=i,
                    strategy=strategy_id(t.get("strategy")),
                    sentiment=t.get("sentiment"),
                )
            )
        d = Dialogue(id=str(obj["id"]), utterances=turns)
    except (KeyError, TypeError, AttributeError) as exc:
        raise CorpusError(f"{where}: malformed dialogue object ({exc})") from exc
    d.validate()
    return d


def save_dialogues(dialogues, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(json.dumps(dialogue_to_dict(d), ensure_ascii=False) + "\n")


def load_jsonl(path) -> list[Dialogue]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    dialogues = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            dialogues.append(dialogue_from_dict(obj, where=f"{path}:{lineno}"))
    if not dialogues:
        log.warning("loaded 0 dialogues from %s", path)
    return dialogues


# ---------------------------------------------------------------------------
# CSV ingestion (column layout supplied by a mapping file)
# ---------------------------------------------------------------------------

REQUIRED_MAPPING_KEYS = ("dialogue_id", "speaker", "text")


def read_mapping(path) -> dict:
    """Parse a flat key=value mapping file (# comments allowed)."""
    path = Path(path)
    if not path.exists():
        raise MappingError(f"no such mapping file: {path}")
    mapping = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MappingError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    missing = [k for k in REQUIRED_MAPPING_KEYS if k not in mapping]
    if missing:
        raise MappingError(f"{path}: missing mapping keys: {', '.join(missing)}")
    return mapping


def load_csv(path, mapping: dict) -> list[Dialogue]:
    """Load dialogues from a flat CSV where each row is one utterance.

    The mapping names the columns: dialogue_id, speaker, text, and optionally
    strategy and sentiment.  ``persuader_value`` gives the speaker-column value
    identifying persuader rows (default "ER").
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    persuader_value = mapping.get("persuader_value", PERSUADER)
    unknown_strategies = 0

    by_id: dict[str, list[Utterance]] = {}
    order: list[str] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CorpusError(f"{path}: empty CSV")
        for key in REQUIRED_MAPPING_KEYS + ("strategy", "sentiment"):
            col = mapping.get(key)
            if col and col not in reader.fieldnames:
                raise MappingError(
                    f"mapping key {key!r} names absent column {col!r} "
                    f"(have: {', '.join(reader.fieldnames)})"
                )
        for rownum, row in enumerate(reader, start=2):
            try:
                did = row[mapping["dialogue_id"]]
                speaker_raw = row[mapping["speaker"]]
                text = row[mapping["text"]]
            except KeyError as exc:
                raise CorpusError(f"{path}: row {rownum}: missing field {exc}") from exc
            if did is None or text is None:
                raise CorpusError(f"{path}: row {rownum}: short row")
            speaker = PERSUADER if speaker_raw.strip() == persuader_value else PERSUADEE

            strategy = None
            if speaker == PERSUADER and mapping.get("strategy"):
                raw = row.get(mapping["strategy"]) or ""
                if raw.strip():
                    if normalize_strategy_key(raw) not in STRATEGY_ALIASES:
                        unknown_strategies += 1
                    strategy = strategy_id(raw)

            sentiment = None
            if speaker == PERSUADEE and mapping.get("sentiment"):
                raw = row.get(mapping["sentiment"]) or ""
                if raw.strip():
                    try:
                        sentiment = float(raw)
                    except ValueError as exc:
                        raise CorpusError(
                            f"{path}: row {rownum}: bad sentiment value {raw!r}"
                        ) from exc

            if did not in by_id:
                by_id[did] = []
                order.append(did)
            by_id[did].append(
                Utterance(
                    speaker=speaker,
                    text=text,
                    turn_index=len(by_id[did]),
                    strategy=strategy,
                    sentiment=sentiment,
                )
            )

    if unknown_strategies:
        log.warning(
            "%d strategy annotations did not match any known category; "
            "mapped to the None category", unknown_strategies,
        )
    dialogues = [Dialogue(id=did, utterances=by_id[did]) for did in order]
    for d in dialogues:
        d.validate()
    return dialogues


def load_dialogues(path, format: str = "jsonl", mapping: dict | None = None) -> list[Dialogue]:
    if format == "jsonl":
        return load_jsonl(path)
    if format == "p4g-csv":
        if mapping is None:
            raise MappingError("p4g-csv format requires a column mapping")
        return load_csv(path, mapping)
    raise CorpusError(f"unknown corpus format: {format!r}")


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

PAD_ID = 0
UNK_ID = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace+punctuation tokenizer."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocab:
    token_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return 2 + len(self.token_to_id)

    def encode(self, text: str) -> list[int]:
        ids = [self.token_to_id.get(tok, UNK_ID) for tok in tokenize(text)]
        return ids if ids else [PAD_ID]

    def to_dict(self) -> dict:
        return dict(self.token_to_id)

    @classmethod
    def from_dict(cls, obj: dict) -> "Vocab":
        return cls(token_to_id={str(k): int(v) for k, v in obj.items()})


def build_vocab(dialogues, min_freq: int = 1) -> Vocab:
    """Frequency-filtered vocabulary. Ids 0/1 are reserved for padding/unknown."""
    if not dialogues:
        raise CorpusError("cannot build a vocabulary from zero dialogues")
    freq: dict[str, int] = {}
    for d in dialogues:
        for u in d.utterances:
            for tok in tokenize(u.text):
                freq[tok] = freq.get(tok, 0) + 1
    kept = sorted(
        (tok for tok, n in freq.items() if n >= min_freq),
        key=lambda tok: (-freq[tok], tok),
    )
    return Vocab(token_to_id={tok: i + 2 for i, tok in enumerate(kept)})


# ---------------------------------------------------------------------------
# Examples and splits
# ---------------------------------------------------------------------------

def make_examples(dialogue: Dialogue, max_context: int,
                  include_unlabeled: bool = False) -> list[StrategyExample]:
    """One example per labeled persuader turn, with a trailing context window."""
    if max_context < 2:
        raise CorpusError(f"max_context must be >= 2, got {max_context}")
    examples = []
    utts = dialogue.utterances
    for i, u in enumerate(utts):
        if u.speaker != PERSUADER:
            continue
        if u.strategy is None and not include_unlabeled:
            continue
        start = max(0, i + 1 - max_context)
        context = utts[start : i + 1]
        gold_emotion = None
        if len(context) >= 2:
            prev = context[-2]
            if prev.speaker == PERSUADEE and prev.emotion is not None:
                gold_emotion = prev.emotion
        examples.append(
            StrategyExample(
                dialogue_id=dialogue.id,
                context=context,
                target_turn=len(context) - 1,
                gold_strategy=u.strategy,
                gold_emotion=gold_emotion,
            )
        )
    return examples


def split(dialogues, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Deterministic dialogue-level split.

    Sizes are floor(ratio * n) with the remainder assigned to train.
    """
    r_train, r_dev, r_test = ratios
    if min(r_train, r_dev, r_test) < 0:
        raise CorpusError(f"negative split ratio: {ratios}")
    if abs(r_train + r_dev + r_test - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {ratios}")
    n = len(dialogues)
    n_parts = sum(1 for r in ratios if r > 0)
    if n < n_parts:
        raise CorpusError(f"{n} dialogues cannot fill {n_parts} non-empty splits")

    order = list(dialogues)
    random.Random(seed).shuffle(order)
    n_dev = int(math.floor(r_dev * n + 1e-9))
    n_test = int(math.floor(r_test * n + 1e-9))
    n_train = n - n_dev - n_test
    train = order[:n_train]
    dev = order[n_train : n_train + n_dev]
    test = order[n_train + n_dev :]
    return train, dev, test
