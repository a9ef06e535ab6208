"""Evaluation harness: accuracy, macro-F1, speed-up, grids, and frontiers.

Everything here replays cached prediction traces through the exit
policies; the model is never re-executed.  That keeps a full
(tau, patience) grid exact and cheap: the decision rules depend only on
each layer's distribution, which the traces already carry.

Speed-up follows the layers-saved convention: a sample exiting at layer
m consumed blocks 1..m, so

    speedup = 1 - (sum_i exit_layer_i) / (N * M)

which is 0 when everything runs full depth and approaches 1 - 1/M when
everything exits at the first layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .policy import ExitPolicyConfig, Strategy, decide_exit
from .trace import PredictionTrace, check_consistent

GRID_CSV_HEADER = "tau,patience,accuracy,macro_f1,speedup,n_samples"
CURVE_CSV_HEADER = "layer,accuracy,mean_entropy"


@dataclass(frozen=True)
class EvalResult:
    """Metrics for one policy configuration over one trace set."""

    config: ExitPolicyConfig
    accuracy: float
    macro_f1: float
    speedup: float
    exit_histogram: tuple[int, ...]  # counts per layer 1..M
    n_samples: int

    def recomputed_speedup(self) -> float:
        """Speed-up rebuilt from the histogram; must match the stored value."""
        m = len(self.exit_histogram)
        used = sum(layer * count for layer, count in
                   enumerate(self.exit_histogram, start=1))
        return 1.0 - used / (self.n_samples * m)


@dataclass(frozen=True)
class GridResult:
    """Full Cartesian sweep over entropy thresholds and patience values."""

    tau_values: tuple[float, ...]
    patience_values: tuple[int, ...]
    cells: dict[tuple[float, int], EvalResult]


def speedup_ratio(exit_layers: Sequence[int], m_total: int) -> float:
    """Average fraction of layers saved over a set of exits.

    Exiting at layer m consumes exactly layers 1..m, so the per-sample
    layer count telescopes to the exit layer itself.
    """
    layers = list(exit_layers)
    if not layers:
        raise ValueError("speedup_ratio needs at least one exit layer")
    if any(not 1 <= e <= m_total for e in layers):
        raise ValueError(f"exit layers must lie in [1, {m_total}]")
    return 1.0 - sum(layers) / (len(layers) * m_total)


def macro_f1(gold: Sequence[int], predicted: Sequence[int], num_classes: int) -> float:
    """Unweighted mean of per-class F1 over all ``num_classes`` classes.

    A class with zero precision+recall (including classes absent from
    both gold and predictions) contributes F1 = 0.
    """
    scores = []
    gold = np.asarray(gold)
    predicted = np.asarray(predicted)
    for c in range(num_classes):
        tp = int(((predicted == c) & (gold == c)).sum())
        fp = int(((predicted == c) & (gold != c)).sum())
        fn = int(((predicted != c) & (gold == c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def evaluate(traces: Sequence[PredictionTrace], cfg: ExitPolicyConfig) -> EvalResult:
    """Run one policy over every trace and aggregate the metrics."""
    m_total, num_classes = check_consistent(list(traces))
    golds = []
    preds = []
    exits = []
    for trace in traces:
        outcome = decide_exit(trace, cfg)
        golds.append(trace.gold_label)
        preds.append(outcome.predicted_class)
        exits.append(outcome.exit_layer)
    histogram = [0] * m_total
    for e in exits:
        histogram[e - 1] += 1
    accuracy = float(np.mean(np.asarray(golds) == np.asarray(preds)))
    return EvalResult(
        config=cfg,
        accuracy=accuracy,
        macro_f1=macro_f1(golds, preds, num_classes),
        speedup=speedup_ratio(exits, m_total),
        exit_histogram=tuple(histogram),
        n_samples=len(exits),
    )


def budgeted_curve(traces: Sequence[PredictionTrace]) -> list[dict]:
    """Fixed-depth sweep: per-layer accuracy and mean normalized entropy.

    Equivalent to evaluating the budgeted policy at every layer, but
    computed in one pass.  Returns one dict per layer with keys
    ``layer``, ``accuracy``, ``mean_entropy``.
    """
    m_total, _ = check_consistent(list(traces))
    golds = np.asarray([t.gold_label for t in traces])
    rows = []
    for layer in range(1, m_total + 1):
        preds = np.asarray([t.per_layer_argmax[layer - 1] for t in traces])
        ents = np.asarray([t.per_layer_entropy[layer - 1] for t in traces])
        rows.append({
            "layer": layer,
            "accuracy": float(np.mean(preds == golds)),
            "mean_entropy": float(ents.mean()),
        })
    return rows


def grid_search(traces: Sequence[PredictionTrace], tau_values: Sequence[float],
                patience_values: Sequence[int]) -> GridResult:
    """Evaluate the hybrid policy on the full (tau, patience) product.

    Values are validated up front; cells are independent and evaluated
    from the cached traces only.
    """
    traces = list(traces)
    m_total, _ = check_consistent(traces)
    taus = [float(t) for t in tau_values]
    patiences = [int(p) for p in patience_values]
    if not taus or not patiences:
        raise ValueError("grid needs at least one tau and one patience value")
    for t in taus:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"tau {t} outside [0, 1]")
    for p in patiences:
        if not 1 <= p <= m_total:
            raise ValueError(f"patience {p} outside [1, {m_total}]")

    cells = {}
    for t in sorted(set(taus)):
        for p in sorted(set(patiences)):
            cfg = ExitPolicyConfig(Strategy.EPEE, tau=t, patience=p)
            cells[(t, p)] = evaluate(traces, cfg)
    return GridResult(tuple(sorted(set(taus))), tuple(sorted(set(patiences))), cells)


def pareto_frontier(grid: GridResult) -> list[EvalResult]:
    """Cells not dominated in (speedup, accuracy), sorted by speedup.

    A cell is dominated if some other cell is at least as good in both
    metrics and strictly better in one.  Cells with identical metric
    pairs collapse to one representative (lowest (tau, patience)).
    """
    if not grid.cells:
        raise ValueError("empty grid")
    items = sorted(grid.cells.items())  # deterministic (tau, patience) order
    survivors = []
    seen_points = set()
    for key, cell in items:
        point = (cell.speedup, cell.accuracy)
        if point in seen_points:
            continue
        dominated = False
        for _, other in items:
            if (other.speedup >= cell.speedup and other.accuracy >= cell.accuracy
                    and (other.speedup > cell.speedup or other.accuracy > cell.accuracy)):
                dominated = True
                break
        if not dominated:
            survivors.append(cell)
            seen_points.add(point)
    survivors.sort(key=lambda c: (c.speedup, c.accuracy))
    return survivors


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def grid_to_csv(grid: GridResult, path: str | Path) -> None:
    """Write the grid as CSV, rows sorted by (tau, patience), 6 decimals."""
    lines = [GRID_CSV_HEADER]
    for (t, p) in sorted(grid.cells):
        cell = grid.cells[(t, p)]
        lines.append(f"{t:.6f},{p},{cell.accuracy:.6f},{cell.macro_f1:.6f},"
                     f"{cell.speedup:.6f},{cell.n_samples}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def curve_to_csv(rows: list[dict], path: str | Path) -> None:
    lines = [CURVE_CSV_HEADER]
    for row in rows:
        lines.append(f"{row['layer']},{row['accuracy']:.6f},{row['mean_entropy']:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def frontier_to_json(frontier: list[EvalResult], path: str | Path | None = None) -> str:
    """Serialize a frontier as a JSON array of cell summaries."""
    payload = [{
        "tau": float(cell.config.tau),
        "patience": int(cell.config.patience),
        "speedup": float(cell.speedup),
        "accuracy": float(cell.accuracy),
    } for cell in frontier]
    text = json.dumps(payload, indent=2)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def histogram_to_csv(result: EvalResult, path: str | Path) -> None:
    """Exit-layer histogram as CSV with header ``layer,count``."""
    lines = ["layer,count"]
    for layer, count in enumerate(result.exit_histogram, start=1):
        lines.append(f"{layer},{count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def eval_result_to_dict(result: EvalResult) -> dict:
    return {
        "strategy": result.config.strategy.value,
        "tau": float(result.config.tau),
        "patience": int(result.config.patience),
        "budget_layer": int(result.config.budget_layer),
        "accuracy": result.accuracy,
        "macro_f1": result.macro_f1,
        "speedup": result.speedup,
        "exit_histogram": list(result.exit_histogram),
        "n_samples": result.n_samples,
    }
