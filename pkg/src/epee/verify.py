"""Randomized invariant suites for the exit policies.

Five families of checks run over a corpus of randomized traces:

* degeneracy-entropy: with patience pinned to the trace depth M, the
  hybrid policy exits at the same layer with the same class as the
  pure entropy policy (the counter can only saturate at the last
  layer, where the fallback answers anyway);
* degeneracy-patience: with the entropy threshold pinned to 0 the
  entropy clause is unsatisfiable (entropies are nonnegative and the
  comparison is strict), so the hybrid equals the pure patience policy
  in every outcome field;
* oracle-equivalence: the production decision procedure agrees
  field-for-field with the independently written naive reference;
* monotonic-tau: raising the entropy threshold never delays an exit;
* monotonic-patience: raising the patience requirement never hastens
  one.

The trace corpus mixes sharp, flat, and "sticky" samples (arg-max held
across consecutive layers) so both exit rules actually fire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import ExitPolicyConfig, Strategy, decide_exit
from .reference import decide_exit_oracle
from .trace import PredictionTrace

TAU_SWEEP = tuple(round(0.05 * i, 2) for i in range(21))  # 0.00 .. 1.00


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


def random_trace(rng: np.random.Generator, sample_id: str = "r") -> PredictionTrace:
    """One randomized trace: M in [2, 12], K in [2, 8], varied sharpness."""
    m = int(rng.integers(2, 13))
    k = int(rng.integers(2, 9))
    alpha = float(rng.choice([0.1, 0.3, 1.0, 5.0, 20.0]))
    probs = rng.dirichlet(np.full(k, alpha), size=m)

    sticky = rng.random() < 0.5
    target = int(rng.integers(k))
    for layer in range(m):
        if rng.random() < 0.05:
            row = np.zeros(k)
            row[int(rng.integers(k))] = 1.0
            probs[layer] = row
            continue
        if sticky:
            if rng.random() >= 0.7:
                target = int(rng.integers(k))
            # move the row's maximum to the target class
            row = probs[layer]
            top = int(row.argmax())
            row[top], row[target] = row[target], row[top]
    return PredictionTrace.from_probs(sample_id, int(rng.integers(k)), probs)


def random_trace_corpus(n: int, seed: int = 0) -> list[PredictionTrace]:
    rng = np.random.default_rng(seed)
    return [random_trace(rng, f"r{i:06d}") for i in range(n)]


def _outcome_fields(outcome) -> tuple:
    return (outcome.exit_layer, outcome.predicted_class,
            outcome.layers_used, outcome.triggered_by)


def check_degeneracy_entropy(traces, seed: int = 0) -> SuiteResult:
    """Hybrid with patience = M matches the entropy policy in layer and class."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in traces:
        tau = float(rng.uniform(0.0, 1.0))
        hybrid = decide_exit(t, ExitPolicyConfig(Strategy.EPEE, tau=tau,
                                                 patience=t.num_layers))
        pure = decide_exit(t, ExitPolicyConfig(Strategy.ENTROPY, tau=tau))
        if (hybrid.exit_layer, hybrid.predicted_class) != \
                (pure.exit_layer, pure.predicted_class):
            failures.append(
                f"{t.sample_id}: tau={tau:.4f} hybrid={hybrid} entropy={pure}")
    return SuiteResult("degeneracy-entropy", len(traces), failures)


def check_degeneracy_patience(traces, seed: int = 0) -> SuiteResult:
    """Hybrid with tau = 0 matches the patience policy in all fields."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in traces:
        patience = int(rng.integers(1, t.num_layers + 1))
        hybrid = decide_exit(t, ExitPolicyConfig(Strategy.EPEE, tau=0.0,
                                                 patience=patience))
        pure = decide_exit(t, ExitPolicyConfig(Strategy.PATIENCE, patience=patience))
        if _outcome_fields(hybrid) != _outcome_fields(pure):
            failures.append(
                f"{t.sample_id}: patience={patience} hybrid={hybrid} patience-only={pure}")
    return SuiteResult("degeneracy-patience", len(traces), failures)


def check_oracle_equivalence(traces, seed: int = 0) -> SuiteResult:
    """Production walk equals the naive reference for every strategy."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in traces:
        m = t.num_layers
        configs = (
            ExitPolicyConfig(Strategy.ENTROPY, tau=float(rng.uniform(0, 1))),
            ExitPolicyConfig(Strategy.PATIENCE,
                             patience=int(rng.integers(1, m + 1))),
            ExitPolicyConfig(Strategy.EPEE, tau=float(rng.uniform(0, 1)),
                             patience=int(rng.integers(1, m + 1))),
            ExitPolicyConfig(Strategy.BUDGETED,
                             budget_layer=int(rng.integers(1, m + 1))),
        )
        for cfg in configs:
            fast = decide_exit(t, cfg)
            slow = decide_exit_oracle(t, cfg)
            if _outcome_fields(fast) != _outcome_fields(slow):
                failures.append(f"{t.sample_id}: {cfg} -> {fast} vs oracle {slow}")
    return SuiteResult("oracle-equivalence", len(traces), failures)


def check_monotonic_tau(traces, seed: int = 0) -> SuiteResult:
    """Exit layer is weakly non-increasing as tau sweeps 0.00 .. 1.00."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in traces:
        patience = int(rng.integers(1, t.num_layers + 1))
        layers = [decide_exit(t, ExitPolicyConfig(Strategy.EPEE, tau=tau,
                                                  patience=patience)).exit_layer
                  for tau in TAU_SWEEP]
        if any(b > a for a, b in zip(layers, layers[1:])):
            failures.append(f"{t.sample_id}: patience={patience} layers={layers}")
    return SuiteResult("monotonic-tau", len(traces), failures)


def check_monotonic_patience(traces, seed: int = 0) -> SuiteResult:
    """Exit layer is weakly non-decreasing as patience sweeps 1 .. M."""
    rng = np.random.default_rng(seed)
    failures = []
    for t in traces:
        tau = float(rng.uniform(0.0, 1.0))
        layers = [decide_exit(t, ExitPolicyConfig(Strategy.EPEE, tau=tau,
                                                  patience=p)).exit_layer
                  for p in range(1, t.num_layers + 1)]
        if any(b < a for a, b in zip(layers, layers[1:])):
            failures.append(f"{t.sample_id}: tau={tau:.4f} layers={layers}")
    return SuiteResult("monotonic-patience", len(traces), failures)


ALL_SUITES = (
    check_degeneracy_entropy,
    check_degeneracy_patience,
    check_oracle_equivalence,
    check_monotonic_tau,
    check_monotonic_patience,
)


def run_all(traces, seed: int = 0) -> list[SuiteResult]:
    return [suite(traces, seed) for suite in ALL_SUITES]
