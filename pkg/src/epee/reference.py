"""Brute-force reference for the exit decision, used only by tests and verify.

This is a from-scratch second implementation of the layer walk.  It
shares nothing with epee.policy except the config/outcome types it must
return: entropies are recomputed here from the raw distributions with
plain Python loops instead of reading the trace's cached values, and
argmaxes are rederived by scanning each row.  Keep it dumb; its value
is that it was written independently.
"""

from __future__ import annotations

import math

from .policy import ExitOutcome, ExitPolicyConfig, ExitRule, Strategy


def _row_argmax(row) -> int:
    # first index of the maximum, so ties go to the lowest class
    best = 0
    for i in range(1, len(row)):
        if row[i] > row[best]:
            best = i
    return best


def _row_entropy(row) -> float:
    total = 0.0
    for p in row:
        if p > 0.0:
            total += p * math.log(p)
    return -total / math.log(len(row))


def decide_exit_oracle(trace, cfg: ExitPolicyConfig) -> ExitOutcome:
    """Naive re-derivation of the exit outcome for one trace."""
    probs = [list(map(float, row)) for row in trace.per_layer_probs]
    m_total = len(probs)
    if m_total < 1:
        raise ValueError("trace has no layers")

    if cfg.strategy is Strategy.BUDGETED:
        if cfg.budget_layer > m_total:
            raise ValueError(
                f"budget_layer {cfg.budget_layer} exceeds trace depth {m_total}")
        return ExitOutcome(cfg.budget_layer,
                           _row_argmax(probs[cfg.budget_layer - 1]),
                           cfg.budget_layer, ExitRule.BUDGET)

    if cfg.strategy in (Strategy.PATIENCE, Strategy.EPEE) and cfg.patience > m_total:
        raise ValueError(f"patience {cfg.patience} exceeds trace depth {m_total}")

    entropy_on = cfg.strategy is Strategy.ENTROPY or cfg.strategy is Strategy.EPEE
    patience_on = cfg.strategy is Strategy.PATIENCE or cfg.strategy is Strategy.EPEE

    counter = 0
    previous = None
    for m in range(1, m_total + 1):
        row = probs[m - 1]
        current = _row_argmax(row)
        if previous is None:
            counter = 1
        elif current == previous:
            counter = counter + 1
        else:
            counter = 1
        previous = current

        fired_entropy = entropy_on and _row_entropy(row) < cfg.tau
        fired_patience = patience_on and counter >= cfg.patience
        if fired_entropy:
            return ExitOutcome(m, current, m, ExitRule.ENTROPY_RULE)
        if fired_patience:
            return ExitOutcome(m, current, m, ExitRule.PATIENCE_RULE)

    return ExitOutcome(m_total, _row_argmax(probs[m_total - 1]), m_total,
                       ExitRule.FINAL_LAYER_FALLBACK)
