"""Acceptance gate.

Ten numbered criteria, each a single test that prints one PASS line with its
headline measurement.  Tolerances and runtime budgets are asserted, not just
reported.  Criterion 5 trains ten small models and dominates the wall time;
run this file alone with ``pytest tests/test_acceptance.py -v`` when iterating
elsewhere.
"""

import statistics
import time

import numpy as np
import pytest
import torch

import oracles
from stratrec.cli import main as cli_main
from stratrec.checkpoint import load_checkpoint, save_checkpoint
from stratrec.config import ModelConfig
from stratrec.corpus import apply_emotion_labels, build_vocab, make_examples, split
from stratrec.encoder import UtteranceAttention
from stratrec.fusion import build_fusion
from stratrec.labels import EMOTION_IDS
from stratrec.memory import (
    FeedbackMemory,
    make_masks,
    masked_strategy_matrix,
    new_state,
    update_feedback_weights,
)
from stratrec.metrics import confidence_at_k, macro_f1, quadrant_analysis
from stratrec.model import StrategyModel
from stratrec.synth import GeneratorConfig, generate
from stratrec.train import evaluate_model, train_model

torch.set_num_threads(1)


def announce(capfd, number: int, detail: str) -> None:
    # bypass capture so the line is visible in piped pytest output
    with capfd.disabled():
        print(f"criterion {number}: PASS - {detail}", flush=True)


# --- criterion 1: feedback-weight arithmetic -------------------------------

def test_criterion_1_feedback_update_grid(capfd):
    t0 = time.time()
    steps = [0.1, 0.2, 0.3, 0.5, 0.8]
    confidences = np.linspace(1 / 3, 1.0, 10)   # argmax of a 3-simplex is >= 1/3
    checked = 0
    for emotion in ("pos", "neg"):
        for conf in confidences:
            for step in steps:
                row = checked % 11
                mask = np.zeros(11)
                mask[row] = 1.0
                state = new_state("grid", pool_capacity=10)
                update_feedback_weights(state, mask, EMOTION_IDS[emotion],
                                        float(conf), step, 0.0, 2.0)
                got = float(state.feedback_weights[row])
                want = oracles.feedback_update_scalar(1.0, emotion, float(conf),
                                                      step, 0.0, 2.0)
                assert got == pytest.approx(want, abs=1e-9)
                delta = abs(got - 1.0)
                # the upper bound is reached exactly at confidence 1; give it
                # one ulp of slack for the subtraction
                assert step * np.exp(-1.0) < delta <= step + 1e-12
                others = [float(state.feedback_weights[i]) for i in range(11) if i != row]
                assert others == [1.0] * 10
                checked += 1
    assert checked == 100

    # neutral reactions leave the vector bitwise untouched
    for conf in confidences:
        state = new_state("grid", pool_capacity=10)
        before = state.feedback_weights.clone()
        out = update_feedback_weights(state, np.eye(11)[4], EMOTION_IDS["neu"],
                                      float(conf), 0.5, 0.0, 2.0)
        assert out is state.feedback_weights
        assert torch.equal(state.feedback_weights, before)

    elapsed = time.time() - t0
    assert elapsed < 1.0
    announce(capfd, 1, f"100-point update grid matches scalar oracle at 1e-9, "
                       f"step bounds hold, neu bitwise no-op ({elapsed:.2f}s)")


# --- criterion 2: top-k mask suite -----------------------------------------

def test_criterion_2_mask_suite(capfd):
    t0 = time.time()
    rng = np.random.default_rng(0)
    for trial in range(1000):
        probs = rng.random(11)
        if trial % 5 == 0:
            probs = np.round(probs, 1)          # force ties
        if trial % 97 == 0:
            probs = np.full(11, 1 / 11)         # all tied
        probs = probs / probs.sum()
        k = 1 + trial % 4
        pool_mask, feedback_mask = make_masks(probs, k)
        want_pool, want_feedback = oracles.topk_masks(probs, k)
        np.testing.assert_array_equal(pool_mask, want_pool)
        np.testing.assert_array_equal(feedback_mask, want_feedback)
        assert pool_mask.sum() == k
        assert feedback_mask.sum() == 1
        assert np.all(feedback_mask <= pool_mask)
    elapsed = time.time() - t0
    assert elapsed < 5.0
    announce(capfd, 2, f"1000 random draws (with ties) match the full-sort "
                       f"oracle; popcounts exact ({elapsed:.2f}s)")


# --- criterion 3: finite-difference gradient suite -------------------------

def _fd_check(loss_fn, params, step=1e-4, rtol=1e-3):
    """Central finite differences against autograd for every parameter entry."""
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    worst = 0.0
    for p, g in zip(params, grads):
        g = torch.zeros_like(p) if g is None else g
        flat = p.data.view(-1)
        gflat = g.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            hi = loss_fn().item()
            flat[i] = orig - step
            lo = loss_fn().item()
            flat[i] = orig
            fd = (hi - lo) / (2 * step)
            ag = gflat[i].item()
            denom = max(abs(fd), abs(ag), 1e-6)
            err = abs(fd - ag) / denom
            worst = max(worst, err)
            assert err <= rtol, f"fd {fd} vs autograd {ag} (rel err {err})"
    return worst


def test_criterion_3_gradient_suite(capfd):
    t0 = time.time()
    g = torch.Generator().manual_seed(0)
    worst = 0.0

    # encoder attention
    torch.manual_seed(1)
    attention = UtteranceAttention(d_model=8, n_heads=2).double()
    x = torch.randn(3, 8, generator=g, dtype=torch.float64)
    w_loss = torch.randn(3, 8, generator=g, dtype=torch.float64)

    def attention_loss():
        out, _ = attention(x)
        return (out * w_loss).sum()

    worst = max(worst, _fd_check(attention_loss, list(attention.parameters())))

    # selector and emotion heads
    torch.manual_seed(2)
    memory = FeedbackMemory(d_model=8).double()
    context = torch.randn(3, 8, generator=g, dtype=torch.float64)
    w_sel = torch.randn(11, generator=g, dtype=torch.float64)
    w_emo = torch.randn(3, generator=g, dtype=torch.float64)

    def selector_loss():
        return (memory.strategy_distribution(context) * w_sel).sum()

    def emotion_loss():
        return (memory.predict_emotion(context) * w_emo).sum()

    worst = max(worst, _fd_check(selector_loss, list(memory.selector.parameters())))
    worst = max(worst, _fd_check(emotion_loss, list(memory.emotion_head.parameters())))

    # all three fusion variants
    mem_matrix = torch.randn(11, 8, generator=g, dtype=torch.float64)
    w_fuse = torch.randn(11, generator=g, dtype=torch.float64)
    for variant in ("mlp", "double_head", "co_attention"):
        torch.manual_seed(3)
        fusion = build_fusion(variant, d_model=8).double()

        def fusion_loss(fusion=fusion):
            probs, _ = fusion(context, mem_matrix)
            return (probs * w_fuse).sum()

        worst = max(worst, _fd_check(fusion_loss, list(fusion.parameters())))

    # straight-through mask path: gradient reaches kept rows and is exactly
    # zero for masked-out rows
    table = torch.randn(11, 8, generator=g, dtype=torch.float64, requires_grad=True)
    pool_mask = np.zeros(11)
    pool_mask[[2, 5]] = 1.0
    w_rows = torch.randn(11, 8, generator=g, dtype=torch.float64)

    def mask_loss():
        return (masked_strategy_matrix(table, pool_mask) * w_rows).sum()

    loss = mask_loss()
    (grad,) = torch.autograd.grad(loss, [table])
    for row in range(11):
        if pool_mask[row]:
            assert grad[row].abs().sum() > 0
        else:
            assert torch.all(grad[row] == 0.0), f"row {row} should get no gradient"
    worst = max(worst, _fd_check(mask_loss, [table]))

    # same zero-row property end to end through weighting and fusion
    torch.manual_seed(4)
    fusion = build_fusion("double_head", d_model=8).double()
    gamma = torch.full((11,), 1.3, dtype=torch.float64)

    def through_fusion():
        weighted = gamma[:, None] * masked_strategy_matrix(table, pool_mask)
        probs, _ = fusion(context, weighted)
        return probs[3]

    (grad,) = torch.autograd.grad(through_fusion(), [table])
    assert torch.all(grad[pool_mask == 0] == 0.0)
    assert grad[pool_mask == 1].abs().sum() > 0

    elapsed = time.time() - t0
    assert elapsed < 120.0
    announce(capfd, 3, f"finite differences match autograd (worst rel err "
                       f"{worst:.2e} <= 1e-3); masked-out rows get exactly "
                       f"zero gradient ({elapsed:.1f}s)")


# --- criterion 4: emitted distributions ------------------------------------

def test_criterion_4_distribution_suite(capfd):
    corpus = generate(GeneratorConfig(n_dialogues=250, persuader_turns=2, seed=1))
    apply_emotion_labels(corpus)
    cfg = ModelConfig(embed_dim=8, hidden_dim=8, n_heads=2, max_context=3, seed=1)
    torch.manual_seed(1)
    model = StrategyModel(cfg, build_vocab(corpus))
    model.eval()
    n_passes = n_emotion = 0
    with torch.no_grad():
        for dialogue in corpus:
            outputs, _ = model.run_dialogue(dialogue)
            for out in outputs:
                n_passes += 1
                for dist in (out.strategy_probs, out.selector_probs):
                    arr = dist.numpy()
                    assert np.all(arr >= 0)
                    assert abs(arr.sum() - 1.0) <= 1e-6
                if out.emotion_probs is not None:
                    n_emotion += 1
                    arr = out.emotion_probs.numpy()
                    assert np.all(arr >= 0)
                    assert abs(arr.sum() - 1.0) <= 1e-6
    assert n_passes == 500
    assert n_emotion > 0
    announce(capfd, 4, f"{n_passes} forward passes: strategy/selector/emotion "
                       f"distributions all non-negative and sum to 1 +/- 1e-6 "
                       f"({n_emotion} with a reaction present)")


# --- criteria 5-7: trained-model behavior ----------------------------------

ABLATION_GENERATOR = dict(n_dialogues=2500, persuader_turns=3, cue_prob=0.5,
                          emotion_probs=(0.85, 0.05, 0.1), seed=42)
ABLATION_MODEL = dict(embed_dim=16, hidden_dim=16, n_heads=2, max_context=2,
                      epochs=12, top_k=1, teacher_force_strategy=False)


def _train_once(cfg: ModelConfig, train_set, dev_set, vocab):
    torch.manual_seed(cfg.seed)
    model = StrategyModel(cfg, vocab)
    result = train_model(model, train_set, dev_set)
    return model, result


def test_criterion_5_memory_ablation_gap(capfd):
    t0 = time.time()
    corpus = generate(GeneratorConfig(**ABLATION_GENERATOR))
    apply_emotion_labels(corpus)
    train_set, dev_set, _ = split(corpus, (0.8, 0.1, 0.1), seed=42)
    assert len(train_set) == 2000
    vocab = build_vocab(train_set)

    gaps = []
    for seed in range(5):
        scores = {}
        for ablated in (False, True):
            cfg = ModelConfig(seed=seed, no_memory=ablated, **ABLATION_MODEL)
            _, result = _train_once(cfg, train_set, dev_set, vocab)
            scores[ablated] = result.best_dev_strategy_f1
        gaps.append((scores[False] - scores[True]) * 100)
    median_gap = statistics.median(gaps)
    elapsed = time.time() - t0
    assert median_gap >= 3.0, f"median gap {median_gap:+.2f} points, need >= 3"
    assert elapsed <= 1800.0
    announce(capfd, 5, "full model beats the no-memory ablation by "
                       f"{median_gap:+.2f} Macro-F1 points (median over 5 "
                       f"seeds; per-seed {[round(g, 2) for g in gaps]}; "
                       f"{elapsed / 60:.1f} min)")


@pytest.fixture(scope="module")
def fusion_runs():
    """One small training run per fusion variant, shared by criteria 6 and 7."""
    corpus = generate(GeneratorConfig(n_dialogues=1000, persuader_turns=3,
                                      cue_prob=0.5, emotion_probs=(0.85, 0.05, 0.1),
                                      seed=7))
    apply_emotion_labels(corpus)
    train_set, dev_set, _ = split(corpus, (0.8, 0.1, 0.1), seed=7)
    vocab = build_vocab(train_set)
    runs = {}
    for variant in ("mlp", "double_head", "co_attention"):
        cfg = ModelConfig(embed_dim=16, hidden_dim=16, n_heads=2, max_context=2,
                          epochs=5, top_k=1, teacher_force_strategy=False,
                          fusion_variant=variant, seed=0)
        model, result = _train_once(cfg, train_set, dev_set, vocab)
        runs[variant] = (model, result, cfg)
    return {"runs": runs, "train": train_set, "dev": dev_set, "vocab": vocab}


def test_criterion_6_fusion_variants_cluster(capfd, fusion_runs):
    scores = {variant: result.best_dev_strategy_f1 * 100
              for variant, (model, result, cfg) in fusion_runs["runs"].items()}
    spread = max(scores.values()) - min(scores.values())
    assert spread <= 10.0, f"fusion spread {spread:.2f} points exceeds 10"
    detail = ", ".join(f"{v} {s:.2f}" for v, s in sorted(scores.items()))
    announce(capfd, 6, f"dev Macro-F1 per fusion variant: {detail} "
                       f"(spread {spread:.2f} <= 10 points)")


def test_criterion_7_topk_confidence_decay(capfd, fusion_runs):
    dev_set = fusion_runs["dev"]
    worst_drop = None
    for variant, (model, result, cfg) in fusion_runs["runs"].items():
        evaluation = evaluate_model(model, dev_set)
        assert evaluation.selector_probs is not None
        curve = [confidence_at_k(evaluation.selector_probs, k)
                 for k in range(1, 12)]
        for a, b in zip(curve, curve[1:]):
            assert a >= b - 1e-12, f"{variant}: confidence_at_k increased"
        if worst_drop is None or curve[0] - curve[1] < worst_drop[1]:
            worst_drop = (variant, curve[0] - curve[1])

    # reported, not asserted: retrain the default variant with the pool
    # keeping two rows instead of one and compare dev Macro-F1
    base_cfg = fusion_runs["runs"]["double_head"][2]
    k1 = fusion_runs["runs"]["double_head"][1].best_dev_strategy_f1 * 100
    cfg2 = ModelConfig(**{**base_cfg.__dict__, "top_k": 2})
    _, result2 = _train_once(cfg2, fusion_runs["train"], dev_set,
                             fusion_runs["vocab"])
    k2 = result2.best_dev_strategy_f1 * 100
    announce(capfd, 7, f"confidence_at_k non-increasing for k=1..11 on all "
                       f"three trained models; top_k=1 vs top_k=2 dev "
                       f"Macro-F1: {k1:.2f} vs {k2:.2f} (reported only)")


# --- criterion 8: metric worked examples -----------------------------------

def test_criterion_8_metric_worked_examples(capfd):
    # balanced two-class case: per-class f1 2/3 and 4/5, macro 11/15
    assert macro_f1([0, 1, 1, 1], [0, 0, 1, 1], 2) == pytest.approx(11 / 15, abs=1e-9)
    # constant predictor over three classes: one f1 of 0.5, macro 0.5/3
    assert macro_f1([0, 0, 1, 1, 2, 2], [0] * 6, 3) == pytest.approx(0.5 / 3, abs=1e-9)
    # zero-support class scores zero but still divides the average
    assert macro_f1([0, 0], [0, 0], 2) == pytest.approx(0.5, abs=1e-9)
    announce(capfd, 8, "macro-F1 worked examples match hand values: "
                       "11/15=0.733..., 0.5/3=0.166..., zero-support 0.5 "
                       "(all at 1e-9)")


# --- criterion 9: determinism and checkpoint round-trip --------------------

def test_criterion_9_determinism(capfd, tmp_path):
    corpus_path = tmp_path / "corpus.jsonl"
    assert cli_main(["synth", "--out", str(corpus_path), "--seed", "5",
                     "--set", "n_dialogues=60", "--set", "persuader_turns=3"]) == 0
    data_dir = tmp_path / "data"
    assert cli_main(["prepare", "--data", str(corpus_path), "--out", str(data_dir),
                     "--split", "0.8,0.1,0.1"]) == 0
    train_args = ["--data", str(data_dir), "--seed", "3",
                  "--set", "embed_dim=8", "--set", "hidden_dim=8",
                  "--set", "n_heads=2", "--set", "epochs=2",
                  "--set", "max_context=3"]
    run_a, run_b = tmp_path / "run_a", tmp_path / "run_b"
    assert cli_main(["train", *train_args, "--out", str(run_a)]) == 0
    assert cli_main(["train", *train_args, "--out", str(run_b)]) == 0
    log_a = (run_a / "metrics.jsonl").read_bytes()
    log_b = (run_b / "metrics.jsonl").read_bytes()
    assert log_a == log_b and len(log_a) > 0

    # checkpoint round-trip: predictions must be preserved exactly
    model = load_checkpoint(run_a / "checkpoint.bin")
    resaved = tmp_path / "resaved.bin"
    save_checkpoint(model, resaved)
    reloaded = load_checkpoint(resaved)
    corpus = generate(GeneratorConfig(n_dialogues=12, persuader_turns=3, seed=9))
    apply_emotion_labels(corpus)
    examples = []
    for dialogue in corpus:
        examples.extend(
            (dialogue, example)
            for example in make_examples(dialogue, model.cfg.max_context)
        )
    examples = examples[:20]
    assert len(examples) == 20
    model.eval()
    reloaded.eval()
    checked = 0
    by_dialogue = {}
    for dialogue, example in examples:
        state_a = by_dialogue.setdefault(
            ("a", dialogue.id), new_state(dialogue.id, model.cfg.pool_capacity))
        state_b = by_dialogue.setdefault(
            ("b", dialogue.id), new_state(dialogue.id, model.cfg.pool_capacity))
        with torch.no_grad():
            out_a = model.forward_turn(example, state_a)
            out_b = reloaded.forward_turn(example, state_b)
        assert torch.equal(out_a.strategy_probs, out_b.strategy_probs)
        assert out_a.predicted_strategy == out_b.predicted_strategy
        checked += 1
    assert checked == 20
    announce(capfd, 9, "two same-seed training runs wrote byte-identical "
                       "metric logs; checkpoint round-trip reproduced all 20 "
                       "predictions exactly")


# --- criterion 10: quadrant reuse rates ------------------------------------

def test_criterion_10_quadrant_rates(capfd):
    forced = generate(GeneratorConfig(n_dialogues=400, persuader_turns=4,
                                      p_repeat_after_pos=1.0,
                                      p_avoid_after_neg=1.0, seed=3))
    apply_emotion_labels(forced)
    report = quadrant_analysis(forced, window="next_turn")
    assert report["reuse_rate"]["pos"] == 1.0
    assert report["reuse_rate"]["neg"] == 0.0

    default = generate(GeneratorConfig(n_dialogues=2000, persuader_turns=4, seed=11))
    apply_emotion_labels(default)
    report = quadrant_analysis(default, window="next_turn")
    # after a positive reaction the strategy repeats with p = 0.63; after a
    # negative one it repeats with p = 1 - 0.75 = 0.25
    for emotion, expected in (("pos", 0.63), ("neg", 0.25)):
        events = report["events"][emotion]
        rate = report["reuse_rate"][emotion]
        se = (expected * (1 - expected) / events) ** 0.5
        assert abs(rate - expected) <= 3 * se, (
            f"{emotion}: rate {rate:.4f} vs {expected} "
            f"(3 SE = {3 * se:.4f}, n = {events})"
        )
    announce(capfd, 10, "forced rules give reuse rates exactly 1.0/0.0; "
                        "default 0.63/0.75 rules land within 3 binomial "
                        "standard errors")
