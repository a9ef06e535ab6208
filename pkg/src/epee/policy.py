"""Exit policies: entropy, patience, hybrid, and budgeted decision rules.

All operations here are pure functions over prediction traces; nothing
touches a model.  A policy walks a sample's layers in order and stops
at the first layer whose criterion fires:

* entropy rule - normalized entropy of the layer's distribution drops
  strictly below the threshold ``tau``;
* patience rule - the argmax prediction has stayed unchanged for
  ``patience`` consecutive layers (the counter starts at 1 and resets
  to 1 on any disagreement);
* hybrid ("epee") - either of the above;
* budgeted - skip the walk entirely and read off a fixed layer.

If no criterion fires, the final layer answers unconditionally.

Within a layer the patience counter is updated with that layer's
prediction first and both criteria are tested afterwards, so a counter
value equal to the patience threshold exits at the layer that produced
the agreeing prediction.  The patience test is implemented as
``counter >= patience``; since the counter starts at 1, grows by at
most 1 per layer and resets to 1, this coincides with strict equality
(asserted in the test suite) while being robust to malformed inputs.

When both rules fire at the same layer the outcome records the entropy
rule; the choice is arbitrary but fixed, and exit layer and predicted
class do not depend on it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # avoid a runtime cycle; traces are duck-typed here
    from .trace import PredictionTrace


class Strategy(str, Enum):
    """Which exit criteria are active."""

    ENTROPY = "entropy"
    PATIENCE = "patience"
    EPEE = "epee"
    BUDGETED = "budgeted"


class ExitRule(str, Enum):
    """What actually triggered an exit."""

    ENTROPY_RULE = "EntropyRule"
    PATIENCE_RULE = "PatienceRule"
    FINAL_LAYER_FALLBACK = "FinalLayerFallback"
    BUDGET = "Budget"


@dataclass(frozen=True)
class ExitPolicyConfig:
    """Strategy selector plus its hyper-parameters.

    Each strategy reads only its own knobs: entropy uses ``tau``,
    patience uses ``patience``, the hybrid uses both, and budgeted uses
    only ``budget_layer``.  Unused fields are ignored.
    """

    strategy: Strategy
    tau: float = 0.0
    patience: int = 1
    budget_layer: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.budget_layer < 1:
            raise ValueError(f"budget_layer must be >= 1, got {self.budget_layer}")

    def to_json(self) -> str:
        return json.dumps({
            "strategy": self.strategy.value,
            "tau": float(self.tau),
            "patience": int(self.patience),
            "budget_layer": int(self.budget_layer),
        })

    @classmethod
    def from_json(cls, text: str) -> "ExitPolicyConfig":
        obj = json.loads(text)
        known = {"strategy", "tau", "patience", "budget_layer"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown policy config keys: {sorted(unknown)}")
        if "strategy" not in obj:
            raise ValueError("policy config missing 'strategy'")
        return cls(
            strategy=Strategy(obj["strategy"]),
            tau=float(obj.get("tau", 0.0)),
            patience=int(obj.get("patience", 1)),
            budget_layer=int(obj.get("budget_layer", 1)),
        )


@dataclass(frozen=True)
class ExitOutcome:
    """Result of running one policy over one trace.

    ``layers_used`` equals ``exit_layer``: exiting at layer m consumes
    exactly the blocks 1..m.
    """

    exit_layer: int
    predicted_class: int
    layers_used: int
    triggered_by: ExitRule


def normalized_entropy(p) -> float:
    """Shannon entropy of a distribution, normalized into [0, 1].

    H = -(sum_k p_k ln p_k) / ln K.  Zero-probability terms contribute
    nothing.  1 means uniform (maximal uncertainty), 0 means one-hot.
    """
    row = np.asarray(p, dtype=np.float64).reshape(-1)
    k = row.size
    if k < 2:
        raise ValueError("normalized entropy needs at least 2 classes")
    if abs(float(row.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {row.sum()!r}, not 1")
    nz = row[row > 0.0]
    return float(-(nz * np.log(nz)).sum() / math.log(k))


def patience_update(prev_counter: int, prev_argmax: int | None, cur_argmax: int) -> int:
    """Advance the run-length counter of consecutive identical argmaxes.

    The first layer (``prev_argmax`` is None) starts the counter at 1;
    afterwards agreement increments, disagreement resets to 1.
    """
    if prev_argmax is None:
        return 1
    return prev_counter + 1 if cur_argmax == prev_argmax else 1


def decide_exit(trace: "PredictionTrace", cfg: ExitPolicyConfig) -> ExitOutcome:
    """Choose the exit layer for one trace under one policy config.

    Walks layers 1..M in order using the trace's cached entropies and
    argmaxes; see the module docstring for the in-layer ordering and
    tie rules.  Budgeted configs return their fixed layer directly.
    """
    m_total = trace.num_layers
    if m_total < 1:
        raise ValueError("trace has no layers")

    if cfg.strategy is Strategy.BUDGETED:
        if cfg.budget_layer > m_total:
            raise ValueError(
                f"budget_layer {cfg.budget_layer} exceeds trace depth {m_total}")
        layer = cfg.budget_layer
        return ExitOutcome(layer, int(trace.per_layer_argmax[layer - 1]),
                           layer, ExitRule.BUDGET)

    if cfg.strategy in (Strategy.PATIENCE, Strategy.EPEE) and cfg.patience > m_total:
        raise ValueError(f"patience {cfg.patience} exceeds trace depth {m_total}")

    use_entropy = cfg.strategy in (Strategy.ENTROPY, Strategy.EPEE)
    use_patience = cfg.strategy in (Strategy.PATIENCE, Strategy.EPEE)

    counter = 0
    prev_argmax: int | None = None
    for layer in range(1, m_total + 1):
        cur_argmax = int(trace.per_layer_argmax[layer - 1])
        counter = patience_update(counter, prev_argmax, cur_argmax)
        prev_argmax = cur_argmax

        if use_entropy and float(trace.per_layer_entropy[layer - 1]) < cfg.tau:
            return ExitOutcome(layer, cur_argmax, layer, ExitRule.ENTROPY_RULE)
        if use_patience and counter >= cfg.patience:
            return ExitOutcome(layer, cur_argmax, layer, ExitRule.PATIENCE_RULE)

    return ExitOutcome(m_total, int(trace.per_layer_argmax[m_total - 1]),
                       m_total, ExitRule.FINAL_LAYER_FALLBACK)
