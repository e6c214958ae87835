"""Evaluation metrics, computed from scratch on numpy arrays.

Macro averages run over the full label set: a class with zero gold support and
zero predictions contributes an F1 of 0, it is not dropped.  This keeps scores
comparable across runs that happen to cover different label subsets.
"""

from __future__ import annotations

import numpy as np

from .corpus import PERSUADEE, PERSUADER
from .errors import ContractViolation


def confusion_matrix(golds, preds, n_classes: int) -> np.ndarray:
    golds = np.asarray(golds, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if golds.shape != preds.shape or golds.ndim != 1:
        raise ContractViolation(
            f"golds/preds must be equal-length 1-d, got {golds.shape} vs {preds.shape}"
        )
    if golds.size and (golds.min() < 0 or golds.max() >= n_classes
                       or preds.min() < 0 or preds.max() >= n_classes):
        raise ContractViolation(f"labels out of range for {n_classes} classes")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    for g, p in zip(golds, preds):
        mat[g, p] += 1
    return mat


def precision_recall_f1(golds, preds, n_classes: int):
    """Per-class arrays; undefined ratios (0/0) are scored as 0."""
    mat = confusion_matrix(golds, preds, n_classes)
    tp = np.diag(mat).astype(np.float64)
    fp = mat.sum(axis=0) - tp
    fn = mat.sum(axis=1) - tp
    precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
    recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    support = mat.sum(axis=1)
    return precision, recall, f1, support


def macro_f1(golds, preds, n_classes: int) -> float:
    _, _, f1, _ = precision_recall_f1(golds, preds, n_classes)
    return float(f1.mean())


def accuracy(golds, preds) -> float:
    golds = np.asarray(golds)
    preds = np.asarray(preds)
    if golds.size == 0:
        raise ContractViolation("accuracy of zero examples is undefined")
    return float((golds == preds).mean())


def classification_report(golds, preds, class_names) -> dict:
    n_classes = len(class_names)
    precision, recall, f1, support = precision_recall_f1(golds, preds, n_classes)
    return {
        "n_examples": int(np.asarray(golds).size),
        "accuracy": accuracy(golds, preds),
        "macro_f1": float(f1.mean()),
        "per_class": [
            {
                "label": class_names[i],
                "precision": float(precision[i]),
                "recall": float(recall[i]),
                "f1": float(f1[i]),
                "support": int(support[i]),
            }
            for i in range(n_classes)
        ],
    }


def confidence_at_k(distributions, k: int) -> float:
    """Mean of the k-th largest probability across examples.

    Non-increasing in k for any fixed set of distributions.
    """
    arr = np.asarray(distributions, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ContractViolation(f"need a non-empty 2-d array, got shape {arr.shape}")
    if not 1 <= k <= arr.shape[1]:
        raise ContractViolation(f"k must be in 1..{arr.shape[1]}, got {k}")
    ranked = np.sort(arr, axis=1)[:, ::-1]
    return float(ranked[:, k - 1].mean())


# ---------------------------------------------------------------------------
# Behavioral reuse analysis
# ---------------------------------------------------------------------------

def quadrant_analysis(dialogues, window: str = "remainder") -> dict:
    """Rates at which a strategy is reused after each persuadee reaction type.

    A feedback event is a persuadee turn with an emotion label whose
    immediately preceding turn is a labeled persuader turn.  Reuse means the
    same strategy appears again among the persuader turns inside the window
    ("remainder" of the dialogue, or only the "next_turn").  Events with no
    later labeled persuader turn in the window are skipped.
    """
    if window not in ("remainder", "next_turn"):
        raise ContractViolation(f"window must be remainder or next_turn, got {window!r}")
    events = {"pos": 0, "neu": 0, "neg": 0}
    reused = {"pos": 0, "neu": 0, "neg": 0}
    for d in dialogues:
        utts = d.utterances
        for i, u in enumerate(utts):
            if u.speaker != PERSUADEE or u.emotion is None or i == 0:
                continue
            prev = utts[i - 1]
            if prev.speaker != PERSUADER or prev.strategy is None:
                continue
            later = [
                v.strategy
                for v in utts[i + 1 :]
                if v.speaker == PERSUADER and v.strategy is not None
            ]
            if window == "next_turn":
                later = later[:1]
            if not later:
                continue
            events[u.emotion] += 1
            if prev.strategy in later:
                reused[u.emotion] += 1
    rates = {
        emo: (reused[emo] / events[emo] if events[emo] else None)
        for emo in ("pos", "neu", "neg")
    }
    return {"window": window, "events": events, "reused": reused, "reuse_rate": rates}


def compare_runs(named_reports) -> dict:
    """Tabulate several evaluation reports against the first one."""
    named_reports = list(named_reports)
    if not named_reports:
        raise ContractViolation("nothing to compare")
    base_name, base = named_reports[0]
    base_f1 = base["strategy"]["macro_f1"]
    rows = []
    for name, report in named_reports:
        f1 = report["strategy"]["macro_f1"]
        emotion = report.get("emotion")
        rows.append(
            {
                "name": name,
                "strategy_macro_f1": f1,
                "emotion_macro_f1": None if emotion is None else emotion["macro_f1"],
                "delta_vs_baseline": f1 - base_f1,
            }
        )
    return {"baseline": base_name, "rows": rows}
