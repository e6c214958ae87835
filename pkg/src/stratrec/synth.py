"""Synthetic donation-dialogue generator.

Persuader and persuadee alternate, starting and ending with the persuader, so
every persuadee reaction is followed by at least one persuader turn.  Strategy
choice follows the persuadee's emotional feedback:

  * positive reaction: repeat the same strategy with probability
    ``p_repeat_after_pos``, otherwise retire it for the rest of the dialogue
    and switch to another;
  * negative reaction: retire-and-switch with probability
    ``p_avoid_after_neg``, otherwise stubbornly repeat;
  * neutral reaction: uniform choice over non-retired strategies.

Retiring removes the strategy from all later turns, so the observed
reuse-after-positive and abandon-after-negative rates match the configured
probabilities exactly (up to sampling noise of the coin flips themselves),
provided at least two strategies are in play.

Persuader text mixes strategy-specific templates (each built around one cue
token unique to the strategy) with generic templates carrying no cue; the
``cue_prob`` knob controls the mix.  Persuadee text always carries an emotion
cue, and the sentiment score is sampled inside the band that maps back to the
sampled emotion label.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import PERSUADEE, PERSUADER, Dialogue, Utterance
from .errors import ConfigError

# One distinctive token per strategy id 0..9; generic templates avoid all of them.
STRATEGY_CUES = [
    "statistics",
    "suffering",
    "reputable",
    "penny",
    "myself",
    "grandmother",
    "proceeds",
    "willing",
    "hobbies",
    "familiar",
]

_STRATEGY_TEMPLATES = [
    [
        "statistics show every dollar reaches three children",
        "the statistics are clear on how far donations go",
        "if you look at the statistics the impact is real",
    ],
    [
        "think of the suffering these children endure",
        "so much suffering could be eased with your help",
        "their suffering keeps me up at night",
    ],
    [
        "the charity is fully reputable and audited",
        "it holds a reputable four star rating",
        "independent reviewers call it reputable",
    ],
    [
        "even a single penny would make a difference",
        "could you spare a penny for them",
        "a penny from each person adds up fast",
    ],
    [
        "i gave some myself just last week",
        "i donate myself every month",
        "myself i always set aside a little for them",
    ],
    [
        "my grandmother taught me to give back",
        "i watched my grandmother help strangers all her life",
        "this reminds me of my grandmother",
    ],
    [
        "all proceeds go directly to field programs",
        "ninety percent of proceeds fund school meals",
        "the proceeds are tracked in public reports",
    ],
    [
        "how much would you be willing to give today",
        "would you be willing to set up a small gift",
        "what amount are you willing to consider",
    ],
    [
        "do you have hobbies that involve volunteering",
        "what hobbies do you enjoy outside work",
        "do your hobbies leave time for causes like this",
    ],
    [
        "are you familiar with this organization",
        "how familiar are you with their field work",
        "were you already familiar with their mission",
    ],
]

_GENERIC_TEMPLATES = [
    "let me tell you more about the cause",
    "there is one more thing i want to mention",
    "please consider what this could mean",
    "i hope you will think it over",
    "here is another point worth noting",
]

_REACTION_TEMPLATES = {
    "pos": [
        "that sounds wonderful to me",
        "wonderful i am happy to hear it",
        "what a wonderful idea",
    ],
    "neu": [
        "okay tell me more",
        "okay i see",
        "okay i am listening",
    ],
    "neg": [
        "honestly that is annoying",
        "stop this is annoying",
        "i find this annoying",
    ],
}

# Sentiment bands consistent with the default (-0.1, 0.1) emotion thresholds.
_SENTIMENT_BANDS = {"pos": (0.2, 1.0), "neu": (-0.09, 0.09), "neg": (-1.0, -0.2)}


@dataclass
class GeneratorConfig:
    n_dialogues: int = 100
    persuader_turns: int = 5
    p_repeat_after_pos: float = 0.63
    p_avoid_after_neg: float = 0.75
    cue_prob: float = 0.5
    emotion_probs: tuple = (0.45, 0.20, 0.35)  # pos, neu, neg
    strategies: tuple = field(default_factory=lambda: tuple(range(10)))
    seed: int = 0
    id_prefix: str = "synth"

    def __post_init__(self):
        problems = []
        if self.n_dialogues < 0:
            problems.append(f"n_dialogues must be >= 0, got {self.n_dialogues}")
        if self.persuader_turns < 1:
            problems.append(f"persuader_turns must be >= 1, got {self.persuader_turns}")
        for name in ("p_repeat_after_pos", "p_avoid_after_neg", "cue_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must be in [0, 1], got {v}")
        probs = tuple(self.emotion_probs)
        if len(probs) != 3 or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            problems.append(f"emotion_probs must be 3 non-negatives summing to 1, got {probs}")
        strategies = tuple(self.strategies)
        if not strategies or any(s not in range(10) for s in strategies):
            problems.append(f"strategies must be a non-empty subset of 0..9, got {strategies}")
        if len(set(strategies)) != len(strategies):
            problems.append(f"strategies contains duplicates: {strategies}")
        if problems:
            raise ConfigError(problems)
        self.emotion_probs = probs
        self.strategies = strategies


def _sample_emotion(rng: random.Random, probs) -> str:
    r = rng.random()
    if r < probs[0]:
        return "pos"
    if r < probs[0] + probs[1]:
        return "neu"
    return "neg"


def _persuader_text(rng: random.Random, strategy: int, cue_prob: float) -> str:
    if rng.random() < cue_prob:
        return rng.choice(_STRATEGY_TEMPLATES[strategy])
    return rng.choice(_GENERIC_TEMPLATES)


def _pick_other(rng: random.Random, strategies, banned: set, current: int) -> int:
    candidates = [s for s in strategies if s not in banned and s != current]
    if not candidates:
        # Everything else is retired; forget the bans rather than stall.
        banned.clear()
        candidates = [s for s in strategies if s != current]
    if not candidates:  # single-strategy config, nothing to switch to
        return current
    return rng.choice(candidates)


def _generate_dialogue(rng: random.Random, cfg: GeneratorConfig, did: str) -> Dialogue:
    banned: set[int] = set()
    available = [s for s in cfg.strategies]
    strategy = rng.choice(available)

    turns: list[Utterance] = []
    for t in range(cfg.persuader_turns):
        turns.append(
            Utterance(
                speaker=PERSUADER,
                text=_persuader_text(rng, strategy, cfg.cue_prob),
                turn_index=len(turns),
                strategy=strategy,
            )
        )
        if t == cfg.persuader_turns - 1:
            break
        emotion = _sample_emotion(rng, cfg.emotion_probs)
        lo, hi = _SENTIMENT_BANDS[emotion]
        turns.append(
            Utterance(
                speaker=PERSUADEE,
                text=rng.choice(_REACTION_TEMPLATES[emotion]),
                turn_index=len(turns),
                sentiment=rng.uniform(lo, hi),
                emotion=emotion,
            )
        )
        if emotion == "pos":
            if rng.random() >= cfg.p_repeat_after_pos:
                banned.add(strategy)
                strategy = _pick_other(rng, cfg.strategies, banned, strategy)
        elif emotion == "neg":
            if rng.random() < cfg.p_avoid_after_neg:
                banned.add(strategy)
                strategy = _pick_other(rng, cfg.strategies, banned, strategy)
        else:
            pool = [s for s in cfg.strategies if s not in banned]
            strategy = rng.choice(pool)
    return Dialogue(id=did, utterances=turns)


def generate(cfg: GeneratorConfig) -> list[Dialogue]:
    rng = random.Random(cfg.seed)
    width = max(5, len(str(max(cfg.n_dialogues - 1, 0))))
    return [
        _generate_dialogue(rng, cfg, f"{cfg.id_prefix}-{i:0{width}d}")
        for i in range(cfg.n_dialogues)
    ]
