"""Per-sample prediction traces and their JSONL interchange format.

A trace records, for one sample, the class distribution produced by the
classifier at every layer of a multi-exit model, together with each
layer's normalized entropy and argmax.  Traces are the sole input to
the exit policies and the evaluation harness, which makes them the
natural interchange boundary: traces exported from any multi-exit
model, not just the bundled trainer, can be replayed here.

Wire format is JSON Lines, one object per sample:

    {"sample_id": "...", "gold": 2,
     "probs": [[...], ...], "entropy": [...], "argmax": [...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .policy import normalized_entropy

ROW_SUM_TOL = 1e-6


class TraceFormatError(ValueError):
    """Raised when a trace file or trace fields fail validation."""


@dataclass(frozen=True)
class PredictionTrace:
    """Per-layer class distributions for one sample.

    Fields:
        sample_id: stable identifier, unique within an export.
        gold_label: ground-truth class index.
        per_layer_probs: (M, K) array; row m is layer m+1's distribution.
        per_layer_entropy: (M,) normalized entropies, each in [0, 1].
        per_layer_argmax: (M,) predicted class per layer, ties broken
            toward the lowest class index.
    """

    sample_id: str
    gold_label: int
    per_layer_probs: np.ndarray
    per_layer_entropy: np.ndarray
    per_layer_argmax: np.ndarray

    @property
    def num_layers(self) -> int:
        return self.per_layer_probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.per_layer_probs.shape[1]

    @classmethod
    def from_probs(cls, sample_id: str, gold_label: int, probs) -> "PredictionTrace":
        """Build a trace from raw distributions, deriving entropy and argmax.

        Entropies are clamped into [0, 1]; the clamp only ever absorbs
        float rounding at the uniform and one-hot extremes.
        """
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
            raise TraceFormatError(f"probs must be (M, K>=2), got {p.shape}")
        ent = np.clip([normalized_entropy(row) for row in p], 0.0, 1.0)
        am = p.argmax(axis=1)
        return cls(sample_id, int(gold_label), p, np.asarray(ent), am)

    def validate(self) -> None:
        """Check the structural invariants; raise TraceFormatError on failure."""
        p = self.per_layer_probs
        if p.ndim != 2 or p.shape[1] < 2:
            raise TraceFormatError(f"probs must be (M, K>=2), got {p.shape}")
        m = p.shape[0]
        if self.per_layer_entropy.shape != (m,) or self.per_layer_argmax.shape != (m,):
            raise TraceFormatError("entropy/argmax length does not match layer count")
        if not np.isfinite(p).all() or (p < 0).any():
            raise TraceFormatError("probabilities must be finite and nonnegative")
        sums = p.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            layer = int(np.argmax(bad))
            raise TraceFormatError(
                f"layer {layer + 1} probabilities sum to {sums[layer]:.8f}, not 1")
        if (self.per_layer_entropy < 0).any() or (self.per_layer_entropy > 1).any():
            raise TraceFormatError("entropies must lie in [0, 1]")
        expect = p.argmax(axis=1)
        if (self.per_layer_argmax != expect).any():
            raise TraceFormatError("stored argmax disagrees with probabilities")
        if not 0 <= self.gold_label < p.shape[1]:
            raise TraceFormatError(
                f"gold label {self.gold_label} out of range for {p.shape[1]} classes")

    def to_json_line(self) -> str:
        obj = {
            "sample_id": self.sample_id,
            "gold": int(self.gold_label),
            "probs": [[float(v) for v in row] for row in self.per_layer_probs],
            "entropy": [float(v) for v in self.per_layer_entropy],
            "argmax": [int(v) for v in self.per_layer_argmax],
        }
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PredictionTrace":
        try:
            trace = cls(
                sample_id=str(obj["sample_id"]),
                gold_label=int(obj["gold"]),
                per_layer_probs=np.asarray(obj["probs"], dtype=np.float64),
                per_layer_entropy=np.asarray(obj["entropy"], dtype=np.float64),
                per_layer_argmax=np.asarray(obj["argmax"], dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"malformed trace object: {exc}") from exc
        trace.validate()
        return trace


def write_traces(traces: Iterable[PredictionTrace], path: str | Path) -> int:
    """Write traces as JSONL; returns the number written."""
    path = Path(path)
    count = 0
    try:
        with path.open("w", encoding="utf-8") as fh:
            for trace in traces:
                fh.write(trace.to_json_line())
                fh.write("\n")
                count += 1
    except OSError as exc:
        raise OSError(f"cannot write traces to {path}: {exc}") from exc
    return count


def read_traces(path: str | Path) -> list[PredictionTrace]:
    """Read and validate a JSONL trace file.

    Errors carry the 1-based line number of the offending record.
    """
    path = Path(path)
    traces: list[PredictionTrace] = []
    try:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    traces.append(PredictionTrace.from_json_obj(obj))
                except (json.JSONDecodeError, TraceFormatError) as exc:
                    raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise OSError(f"cannot read traces from {path}: {exc}") from exc
    return traces


def iter_traces(path: str | Path) -> Iterator[PredictionTrace]:
    """Streaming variant of read_traces."""
    yield from read_traces(path)


def check_consistent(traces: list[PredictionTrace]) -> tuple[int, int]:
    """Assert all traces share (M, K); return that shape."""
    if not traces:
        raise TraceFormatError("empty trace set")
    m, k = traces[0].num_layers, traces[0].num_classes
    for t in traces[1:]:
        if (t.num_layers, t.num_classes) != (m, k):
            raise TraceFormatError(
                f"inconsistent trace shapes: {(m, k)} vs "
                f"{(t.num_layers, t.num_classes)} on sample {t.sample_id!r}")
    return m, k
