"""Acceptance suite: every release criterion, one test each, at its tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion.  The randomized-policy criteria share a 10,000-trace
corpus; the training criteria share two trained toy models (one easy
mix, one with 30% ambiguous samples).  The plot-fidelity criterion
belongs to the separate plotting package and is covered by its suite.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from epee.cli import main as cli_main
from epee.data import SyntheticSpec, generate_synthetic
from epee.evaluation import evaluate, grid_search, speedup_ratio
from epee.model import (ModelConfig, MultiExitModel, TrainConfig,
                        export_traces, train)
from epee.policy import ExitPolicyConfig, Strategy, decide_exit
from epee.reference import decide_exit_oracle
from epee.verify import TAU_SWEEP, random_trace_corpus

CORPUS_SIZE = 10_000


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


@pytest.fixture(scope="module")
def corpus():
    return random_trace_corpus(CORPUS_SIZE, seed=2024)


@pytest.fixture(scope="module")
def toy_run():
    """Toy model trained on the standard mix (10% noise, 10% ambiguous)."""
    dataset = generate_synthetic(SyntheticSpec(
        num_classes=4, noise_rate=0.1, ambiguous_fraction=0.1, seed=0))
    model = MultiExitModel(ModelConfig(vocab_size=len(dataset.vocab), seed=0))
    started = time.perf_counter()
    report = train(model, dataset, TrainConfig(seed=0))
    elapsed = time.perf_counter() - started
    return dataset, model, report, elapsed


@pytest.fixture(scope="module")
def hard_run():
    """Toy model trained with 30% ambiguous samples."""
    dataset = generate_synthetic(SyntheticSpec(
        num_classes=4, noise_rate=0.1, ambiguous_fraction=0.3, seed=1))
    model = MultiExitModel(ModelConfig(vocab_size=len(dataset.vocab), seed=1))
    train(model, dataset, TrainConfig(seed=1))
    return dataset, model


def test_degeneracy_a_reduces_to_entropy(corpus):
    """Hybrid with patience = M equals the entropy policy (layer + class)."""
    with criterion("degeneracy A (hybrid with patience=M == entropy policy)"):
        rng = np.random.default_rng(1)
        started = time.perf_counter()
        mismatches = 0
        for trace in corpus:
            tau = float(rng.uniform(0.0, 1.0))
            hybrid = decide_exit(trace, ExitPolicyConfig(
                Strategy.EPEE, tau=tau, patience=trace.num_layers))
            pure = decide_exit(trace, ExitPolicyConfig(Strategy.ENTROPY, tau=tau))
            if (hybrid.exit_layer, hybrid.predicted_class) != \
                    (pure.exit_layer, pure.predicted_class):
                mismatches += 1
        elapsed = time.perf_counter() - started
        assert mismatches == 0, f"{mismatches}/{len(corpus)} mismatches"
        assert elapsed < 10.0, f"took {elapsed:.1f}s, budget 10s"


def test_degeneracy_b_reduces_to_patience(corpus):
    """Hybrid with tau = 0 equals the patience policy in all fields."""
    with criterion("degeneracy B (hybrid with tau=0 == patience policy)"):
        rng = np.random.default_rng(2)
        started = time.perf_counter()
        mismatches = 0
        for trace in corpus:
            p = int(rng.integers(1, trace.num_layers + 1))
            hybrid = decide_exit(trace, ExitPolicyConfig(Strategy.EPEE, tau=0.0,
                                                         patience=p))
            pure = decide_exit(trace, ExitPolicyConfig(Strategy.PATIENCE,
                                                       patience=p))
            if hybrid != pure:
                mismatches += 1
        elapsed = time.perf_counter() - started
        assert mismatches == 0, f"{mismatches}/{len(corpus)} mismatches"
        assert elapsed < 10.0, f"took {elapsed:.1f}s, budget 10s"


def test_oracle_equivalence(corpus):
    """Production decision equals the naive reference, field for field."""
    with criterion("oracle equivalence on the randomized corpus"):
        rng = np.random.default_rng(3)
        for trace in corpus:
            m = trace.num_layers
            cfg = ExitPolicyConfig(Strategy.EPEE, tau=float(rng.uniform(0, 1)),
                                   patience=int(rng.integers(1, m + 1)))
            assert decide_exit(trace, cfg) == decide_exit_oracle(trace, cfg), \
                trace.sample_id
            budget = ExitPolicyConfig(Strategy.BUDGETED,
                                      budget_layer=int(rng.integers(1, m + 1)))
            assert decide_exit(trace, budget) == \
                decide_exit_oracle(trace, budget), trace.sample_id


def test_monotonicity(corpus):
    """Exit layer moves weakly with each knob across full sweeps."""
    with criterion("monotonicity in tau (21-step sweep) and patience (1..M)"):
        rng = np.random.default_rng(4)
        violations = 0
        for trace in corpus:
            p_fixed = int(rng.integers(1, trace.num_layers + 1))
            layers = [decide_exit(trace, ExitPolicyConfig(
                Strategy.EPEE, tau=tau, patience=p_fixed)).exit_layer
                for tau in TAU_SWEEP]
            violations += sum(b > a for a, b in zip(layers, layers[1:]))

            tau_fixed = float(rng.uniform(0.0, 1.0))
            layers = [decide_exit(trace, ExitPolicyConfig(
                Strategy.EPEE, tau=tau_fixed, patience=p)).exit_layer
                for p in range(1, trace.num_layers + 1)]
            violations += sum(b < a for a, b in zip(layers, layers[1:]))
        assert violations == 0, f"{violations} monotonicity violations"


def test_speedup_exactness():
    """Closed form equals 1 - m/M exactly and matches the indicator oracle."""
    with criterion("speed-up exactness (closed form == indicator-matrix oracle)"):
        for m_total in range(1, 17):
            for m in range(1, m_total + 1):
                assert speedup_ratio([m] * 11, m_total) == 1.0 - m / m_total

        def indicator_oracle(exits, m_total):
            used = np.zeros((len(exits), m_total))
            for i, e in enumerate(exits):
                used[i, :e] = 1.0
            return 1.0 - used.sum() / (len(exits) * m_total)

        rng = np.random.default_rng(5)
        for _ in range(1000):
            m_total = int(rng.integers(1, 17))
            exits = rng.integers(1, m_total + 1,
                                 size=int(rng.integers(1, 64))).tolist()
            assert speedup_ratio(exits, m_total) == indicator_oracle(exits, m_total)


def test_gradient_correctness():
    """Joint-loss gradients on a 2-layer, d=8, 3-class model beat 1e-4."""
    from test_model import joint_loss_grad_error

    with criterion("gradient correctness (joint loss vs central differences)"):
        model = MultiExitModel(ModelConfig(
            vocab_size=12, num_layers=2, hidden_dim=8, num_heads=2,
            ffn_dim=16, num_classes=3, max_seq_len=8, seed=3))
        rng = np.random.default_rng(6)
        batch = [(rng.integers(0, 12, size=4).tolist(), int(rng.integers(3)))
                 for _ in range(2)]
        err = joint_loss_grad_error(model, batch)
        assert err < 1e-4, f"max relative error {err:.2e}"


def test_toy_training(toy_run):
    """Standard toy task: >= 0.95 test accuracy, entropy falls with depth."""
    dataset, model, report, elapsed = toy_run
    with criterion("toy training (accuracy >= 0.95, entropy trend, < 5 min)"):
        assert elapsed < 300.0, f"training took {elapsed:.0f}s, budget 300s"

        test_traces = export_traces(model, dataset, "test")
        golds = np.array([t.gold_label for t in test_traces])
        finals = np.array([t.per_layer_argmax[-1] for t in test_traces])
        accuracy = float(np.mean(golds == finals))
        assert accuracy >= 0.95, f"final-layer test accuracy {accuracy:.3f}"

        dev_traces = export_traces(model, dataset, "dev")
        first = float(np.mean([t.per_layer_entropy[0] for t in dev_traces]))
        last = float(np.mean([t.per_layer_entropy[-1] for t in dev_traces]))
        assert last < first, f"entropy layer M {last:.4f} !< layer 1 {first:.4f}"

        # loss is non-increasing after epoch 2, allowing 5% transient upticks
        losses = report.epoch_loss
        for a, b in zip(losses[1:], losses[2:]):
            assert b <= a * 1.05, f"loss rose {a:.4f} -> {b:.4f}"


def test_flexible_speed_accuracy_tradeoff(hard_run):
    """With 30% hard samples, some hybrid cell is fast and accurate at once."""
    dataset, model = hard_run
    with criterion("flexibility (cell with speedup >= 0.2 at baseline accuracy)"):
        traces = export_traces(model, dataset, "test")
        m = model.config.num_layers
        baseline = evaluate(traces, ExitPolicyConfig(Strategy.BUDGETED,
                                                     budget_layer=m))
        grid = grid_search(traces, [round(0.05 * i, 2) for i in range(21)],
                           list(range(1, m + 1)))
        qualifying = [
            cell for cell in grid.cells.values()
            if cell.speedup >= 0.2 and cell.accuracy >= baseline.accuracy - 0.01
        ]
        assert qualifying, "no cell reached speedup >= 0.2 at baseline accuracy"
        best = max(qualifying, key=lambda c: (c.speedup, c.accuracy))
        print(f"  best cell: tau={best.config.tau:.2f} "
              f"patience={best.config.patience} speedup={best.speedup:.3f} "
              f"accuracy={best.accuracy:.3f} "
              f"(baseline {baseline.accuracy:.3f})")


def test_determinism(tmp_path):
    """Same seeds give byte-identical checkpoints, traces, and CSVs."""
    with criterion("determinism (byte-identical artifacts across two runs)"):
        data = ("synthetic:classes=3,per_class=15,vocab=24,signal=2,"
                "noise_rate=0.1,ambiguous_fraction=0.1,seed=4")
        model_cfg = ('{"num_layers": 2, "hidden_dim": 8, "num_heads": 2, '
                     '"ffn_dim": 16, "max_seq_len": 16}')
        train_cfg = '{"epochs": 2, "batch_size": 8}'
        outputs = {}
        for run in ("one", "two"):
            out = tmp_path / run
            out.mkdir()
            assert cli_main(["train", "--data", data,
                             "--model-config", model_cfg,
                             "--train-config", train_cfg,
                             "--out", str(out / "model.bin"),
                             "--out-dir", str(out), "--seed", "7"]) == 0
            assert cli_main(["trace", "--model", str(out / "model.bin"),
                             "--data", data, "--split", "test",
                             "--out", str(out / "traces.jsonl"),
                             "--out-dir", str(out), "--seed", "7"]) == 0
            assert cli_main(["grid", "--traces", str(out / "traces.jsonl"),
                             "--tau-list", "0.0,0.25,0.5",
                             "--patience-list", "1,2",
                             "--out", str(out / "grid.csv"),
                             "--out-dir", str(out), "--seed", "7"]) == 0
            assert cli_main(["curve", "--traces", str(out / "traces.jsonl"),
                             "--out", str(out / "curve.csv"),
                             "--out-dir", str(out), "--seed", "7"]) == 0
            outputs[run] = {
                name: (out / name).read_bytes()
                for name in ("model.bin", "traces.jsonl", "grid.csv", "curve.csv")
            }
        for name in outputs["one"]:
            assert outputs["one"][name] == outputs["two"][name], \
                f"{name} differs between identically seeded runs"
