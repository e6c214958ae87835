"""Training and evaluation loops.

Batches are sets of whole dialogues: each dialogue is replayed turn by turn
against its own memory state, per-example losses are averaged over the batch,
and one optimizer step follows.  Dev metrics after every epoch drive
best-checkpoint selection and early stopping.

The per-epoch metric log is a list of flat dicts serialized as JSONL with
sorted keys, so identical runs produce byte-identical logs.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import TrainingDiverged
from .labels import EMOTIONS, EMOTION_IDS, STRATEGY_NAMES
from .metrics import classification_report, confidence_at_k

PROB_FLOOR = 1e-12


def cross_entropy_from_probs(probs: torch.Tensor, gold: int) -> torch.Tensor:
    return -torch.log(torch.clamp(probs[gold], min=PROB_FLOOR))


def joint_loss(strategy_probs, gold_strategy, emotion_probs, gold_emotion,
               strategy_weight: float = 0.5, emotion_weight: float = 0.5):
    """Weighted sum of the two task losses; the emotion term drops out when
    there is no prediction or no gold label for it."""
    loss = strategy_weight * cross_entropy_from_probs(strategy_probs, gold_strategy)
    if emotion_probs is not None and gold_emotion is not None:
        loss = loss + emotion_weight * cross_entropy_from_probs(emotion_probs, gold_emotion)
    return loss


def example_loss(output, cfg) -> torch.Tensor:
    ex = output.example
    gold_emotion = None if ex.gold_emotion is None else EMOTION_IDS[ex.gold_emotion]
    emotion_probs = None if cfg.no_multitask else output.emotion_probs
    loss = joint_loss(
        output.strategy_probs, ex.gold_strategy, emotion_probs, gold_emotion,
        cfg.strategy_loss_weight, cfg.emotion_loss_weight,
    )
    # The mask choice is hard, so the selector gets its own supervision;
    # without it nothing would train the distribution the masks come from.
    if output.selector_probs is not None and cfg.selector_loss_weight > 0:
        loss = loss + cfg.selector_loss_weight * cross_entropy_from_probs(
            output.selector_probs, ex.gold_strategy
        )
    return loss


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    report: dict
    records: list = field(default_factory=list)
    strategy_probs: np.ndarray | None = None
    selector_probs: np.ndarray | None = None


def evaluate_model(model, dialogues) -> EvalResult:
    model.eval()
    strategy_golds, strategy_preds, strategy_dists = [], [], []
    emotion_golds, emotion_preds = [], []
    selector_dists = []
    records = []
    with torch.no_grad():
        for dialogue in dialogues:
            outputs, _ = model.run_dialogue(dialogue)
            for out in outputs:
                ex = out.example
                pred = out.predicted_strategy
                strategy_golds.append(ex.gold_strategy)
                strategy_preds.append(pred)
                dist = out.strategy_probs.detach().cpu().numpy().astype(np.float64)
                strategy_dists.append(dist)
                if out.selector_probs is not None:
                    selector_dists.append(
                        out.selector_probs.detach().cpu().numpy().astype(np.float64)
                    )
                record = {
                    "dialogue_id": ex.dialogue_id,
                    "turn_index": ex.context[-1].turn_index,
                    "gold_strategy": ex.gold_strategy,
                    "predicted_strategy": pred,
                    "strategy_probs": [float(x) for x in dist],
                    "gold_emotion": ex.gold_emotion,
                    "predicted_emotion": None,
                }
                if ex.gold_emotion is not None and out.emotion_probs is not None:
                    emotion_golds.append(EMOTION_IDS[ex.gold_emotion])
                    emotion_preds.append(out.predicted_emotion)
                    record["predicted_emotion"] = EMOTIONS[out.predicted_emotion]
                records.append(record)

    report: dict = {"n_examples": len(strategy_golds)}
    if strategy_golds:
        report["strategy"] = classification_report(
            strategy_golds, strategy_preds, STRATEGY_NAMES
        )
    else:
        report["strategy"] = None
    report["emotion"] = (
        classification_report(emotion_golds, emotion_preds, EMOTIONS)
        if emotion_golds else None
    )
    sel = np.asarray(selector_dists) if selector_dists else None
    if sel is not None and sel.size:
        report["selection_confidence"] = {
            str(k): confidence_at_k(sel, k) for k in (1, 2, 3)
        }
    return EvalResult(
        report=report,
        records=records,
        strategy_probs=np.asarray(strategy_dists) if strategy_dists else None,
        selector_probs=sel,
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    log_rows: list
    best_epoch: int
    best_dev_strategy_f1: float
    stopped_early: bool = False


def _chunks(items, size):
    for i in range(0, len(items), size):
        yield items[i : i + size]


def train_model(model, train_dialogues, dev_dialogues) -> TrainResult:
    cfg = model.cfg
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    rows = []
    best_f1 = float("-inf")
    best_epoch = -1
    best_state = None
    epochs_without_gain = 0
    stopped_early = False

    for epoch in range(cfg.epochs):
        model.train()
        order = list(train_dialogues)
        rng.shuffle(order)
        loss_sum, n_examples = 0.0, 0
        for batch in _chunks(order, cfg.batch_size):
            optimizer.zero_grad()
            batch_loss = None
            batch_n = 0
            for dialogue in batch:
                outputs, _ = model.run_dialogue(dialogue)
                for out in outputs:
                    term = example_loss(out, cfg)
                    batch_loss = term if batch_loss is None else batch_loss + term
                    batch_n += 1
            if batch_n == 0:
                continue
            batch_loss = batch_loss / batch_n
            if not torch.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: {batch_loss.item()}"
                )
            batch_loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            loss_sum += float(batch_loss.item()) * batch_n
            n_examples += batch_n

        dev = evaluate_model(model, dev_dialogues)
        dev_strategy = dev.report["strategy"]
        dev_emotion = dev.report["emotion"]
        dev_f1 = None if dev_strategy is None else dev_strategy["macro_f1"]
        rows.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / n_examples if n_examples else 0.0,
                "dev_strategy_f1": dev_f1,
                "dev_emotion_f1": None if dev_emotion is None else dev_emotion["macro_f1"],
                "lr": cfg.learning_rate,
            }
        )
        if dev_f1 is not None and dev_f1 > best_f1:
            best_f1 = dev_f1
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            epochs_without_gain = 0
        else:
            epochs_without_gain += 1
            if epochs_without_gain >= cfg.patience:
                stopped_early = True
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    return TrainResult(
        log_rows=rows,
        best_epoch=best_epoch,
        best_dev_strategy_f1=best_f1 if best_epoch >= 0 else float("nan"),
        stopped_early=stopped_early,
    )


def write_metric_log(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
