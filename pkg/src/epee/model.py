"""Multi-exit transformer classifier and its joint training loop.

The encoder is deliberately small: token + learned positional
embeddings, M post-norm transformer blocks (multi-head self-attention
and a ReLU feed-forward sublayer, each wrapped in residual + layer
norm), and one linear-softmax classification head per block.  Every
head reads only the first-position hidden state of its own block, so
layer m's prediction never peeks deeper than block m.

All heads train jointly on a weighted average of their cross-entropy
losses; under the "linear-cost" scheme head m carries weight m, its
relative inference cost in blocks, while "uniform" weighs heads
equally.  The optimizer is plain SGD with momentum 0.9 rather than an
adaptive method: at this scale it converges fine and is trivially
bit-deterministic, which the reproducibility contract relies on.

Checkpoints are a single binary file: a 16-byte magic header, the
config as length-prefixed little-endian fields, then every parameter
matrix in declaration order as little-endian float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .data import Dataset, tokenize
from .trace import PredictionTrace, write_traces

CHECKPOINT_MAGIC = b"EPEE-MXCKPT-v01\n"
assert len(CHECKPOINT_MAGIC) == 16

INIT_SCALE = 0.05


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters."""

    vocab_size: int
    num_layers: int = 6
    hidden_dim: int = 32
    num_heads: int = 2
    ffn_dim: int = 64
    num_classes: int = 4
    max_seq_len: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_heads {self.num_heads}")
        if self.num_layers < 2:
            raise ValueError("need at least 2 layers")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.vocab_size < 2 or self.max_seq_len < 1:
            raise ValueError("vocab_size and max_seq_len must be positive")

    FIELDS = ("vocab_size", "num_layers", "hidden_dim", "num_heads",
              "ffn_dim", "num_classes", "max_seq_len", "seed")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyper-parameters."""

    batch_size: int = 16
    learning_rate: float = 0.05
    epochs: int = 8
    weight_scheme: str = "linear-cost"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.weight_scheme not in ("linear-cost", "uniform"):
            raise ValueError(f"unknown weight scheme {self.weight_scheme!r}")


def loss_weights(num_layers: int, scheme: str) -> np.ndarray:
    """Per-head weights for the joint objective."""
    if scheme == "linear-cost":
        return np.arange(1, num_layers + 1, dtype=np.float64)
    if scheme == "uniform":
        return np.ones(num_layers, dtype=np.float64)
    raise ValueError(f"unknown weight scheme {scheme!r}")


class MultiExitModel:
    """Transformer encoder with a classification head after every block."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, f, k = config.hidden_dim, config.ffn_dim, config.num_classes

        def w(rows, cols):
            return T.parameter(None, rng, (rows, cols), INIT_SCALE)

        def b(cols):
            return T.parameter(np.zeros((1, cols)))

        self.tok_emb = w(config.vocab_size, d)
        self.pos_emb = w(config.max_seq_len, d)
        self.blocks = []
        for _ in range(config.num_layers):
            self.blocks.append({
                "wq": w(d, d), "bq": b(d),
                "wk": w(d, d), "bk": b(d),
                "wv": w(d, d), "bv": b(d),
                "wo": w(d, d), "bo": b(d),
                "ln1_g": T.parameter(np.ones((1, d))), "ln1_b": b(d),
                "w1": w(d, f), "b1": b(f),
                "w2": w(f, d), "b2": b(d),
                "ln2_g": T.parameter(np.ones((1, d))), "ln2_b": b(d),
            })
        self.heads = [{"wh": w(d, k), "bh": b(k)} for _ in range(config.num_layers)]

    _BLOCK_KEYS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                   "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b")

    def parameters(self) -> list[T.Tensor]:
        """All trainable tensors in fixed declaration order."""
        params = [self.tok_emb, self.pos_emb]
        for block in self.blocks:
            params.extend(block[k] for k in self._BLOCK_KEYS)
        for head in self.heads:
            params.extend((head["wh"], head["bh"]))
        return params

    # -- forward -----------------------------------------------------------

    def _attention(self, x: T.Tensor, block) -> T.Tensor:
        d = self.config.hidden_dim
        h = self.config.num_heads
        dh = d // h
        q = T.add_bias(T.matmul(x, block["wq"]), block["bq"])
        k = T.add_bias(T.matmul(x, block["wk"]), block["bk"])
        v = T.add_bias(T.matmul(x, block["wv"]), block["bv"])
        outs = []
        for i in range(h):
            qs = T.slice_cols(q, i * dh, (i + 1) * dh)
            ks = T.slice_cols(k, i * dh, (i + 1) * dh)
            vs = T.slice_cols(v, i * dh, (i + 1) * dh)
            scores = T.scale(T.matmul(qs, T.transpose(ks)), 1.0 / np.sqrt(dh))
            outs.append(T.matmul(T.softmax_rows(scores), vs))
        merged = T.concat_cols(outs) if h > 1 else outs[0]
        return T.add_bias(T.matmul(merged, block["wo"]), block["bo"])

    def _ffn(self, x: T.Tensor, block) -> T.Tensor:
        hidden = T.relu(T.add_bias(T.matmul(x, block["w1"]), block["b1"]))
        return T.add_bias(T.matmul(hidden, block["w2"]), block["b2"])

    def head_probs(self, tokens: Sequence[int]) -> list[T.Tensor]:
        """Per-layer class distributions as graph nodes (1 x K each).

        Pooling takes the first sequence position of each block's
        output, mirroring the leading-classification-slot convention.
        """
        cfg = self.config
        toks = list(tokens)
        if not toks:
            raise ValueError("token sequence is empty")
        if len(toks) > cfg.max_seq_len:
            raise ValueError(
                f"sequence length {len(toks)} exceeds max_seq_len {cfg.max_seq_len}")
        if min(toks) < 0 or max(toks) >= cfg.vocab_size:
            raise ValueError(
                f"token index out of vocabulary range [0, {cfg.vocab_size})")

        x = T.add(T.embed(self.tok_emb, toks),
                  T.slice_rows(self.pos_emb, 0, len(toks)))
        probs = []
        for block, head in zip(self.blocks, self.heads):
            attn = self._attention(x, block)
            x = T.layer_norm_rows(T.add(x, attn), block["ln1_g"], block["ln1_b"])
            ffn = self._ffn(x, block)
            x = T.layer_norm_rows(T.add(x, ffn), block["ln2_g"], block["ln2_b"])
            pooled = T.slice_rows(x, 0, 1)
            logits = T.add_bias(T.matmul(pooled, head["wh"]), head["bh"])
            probs.append(T.softmax_rows(logits))
        return probs


def forward_all_exits(model: MultiExitModel, tokens: Sequence[int],
                      sample_id: str = "sample", gold_label: int = 0) -> PredictionTrace:
    """Run every exit head on one sample and package the trace."""
    rows = [p.value[0] for p in model.head_probs(tokens)]
    return PredictionTrace.from_probs(sample_id, gold_label, np.vstack(rows))


def joint_loss(traces: Sequence[PredictionTrace], weight_scheme: str) -> float:
    """Weighted per-layer cross-entropy, averaged over a batch of traces.

    For each trace: sum_m w_m * (-ln p_m[gold]) / sum_m w_m, with the
    same probability floor the differentiable path applies.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("joint_loss needs a nonempty batch")
    total = 0.0
    for trace in traces:
        w = loss_weights(trace.num_layers, weight_scheme)
        per_layer = -np.log(np.maximum(
            trace.per_layer_probs[np.arange(trace.num_layers), trace.gold_label],
            T.LOG_FLOOR))
        total += float((w * per_layer).sum() / w.sum())
    return total / len(traces)


def sample_loss_graph(model: MultiExitModel, tokens: Sequence[int], label: int,
                      weight_scheme: str) -> T.Tensor:
    """Differentiable joint loss for one sample."""
    probs = model.head_probs(tokens)
    w = loss_weights(len(probs), weight_scheme)
    total = None
    for weight, p in zip(w, probs):
        term = T.scale(T.cross_entropy(p, label), float(weight))
        total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / float(w.sum()))


@dataclass
class TrainReport:
    """Per-epoch training record."""

    epoch_loss: list[float] = field(default_factory=list)
    dev_accuracy_per_layer: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epoch_loss": self.epoch_loss,
                "dev_accuracy_per_layer": self.dev_accuracy_per_layer}


def _encode(dataset: Dataset, split: str, max_seq_len: int):
    encoded = []
    for text, label in dataset.texts_labels(split):
        ids = tokenize(text, dataset.vocab, max_seq_len)
        # drop trailing padding; the encoder runs per instance
        while len(ids) > 1 and ids[-1] == 0:
            ids.pop()
        encoded.append((ids, label))
    return encoded


def _dev_accuracy(model: MultiExitModel, encoded) -> list[float]:
    m = model.config.num_layers
    correct = np.zeros(m)
    for tokens, label in encoded:
        trace = forward_all_exits(model, tokens)
        correct += trace.per_layer_argmax == label
    return [float(c / len(encoded)) for c in correct]


def train(model: MultiExitModel, dataset: Dataset, cfg: TrainConfig) -> TrainReport:
    """Jointly optimize all exit heads with momentum SGD.

    Gradients from each sample graph accumulate into the shared
    parameters; one update runs per batch.  Deterministic for a fixed
    seed.  Raises TrainingDiverged if the loss goes non-finite.
    """
    params = model.parameters()
    velocity = [np.zeros_like(p.value) for p in params]
    rng = np.random.default_rng(cfg.seed)
    train_set = _encode(dataset, "train", model.config.max_seq_len)
    dev_set = _encode(dataset, "dev", model.config.max_seq_len)
    report = TrainReport()

    for _epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            for p in params:
                p.zero_grad()
            batch_loss = None
            for tokens, label in batch:
                loss = sample_loss_graph(model, tokens, label, cfg.weight_scheme)
                batch_loss = loss if batch_loss is None else T.add(batch_loss, loss)
            batch_loss = T.scale(batch_loss, 1.0 / len(batch))
            value = batch_loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(f"loss became {value}; lower the learning rate")
            T.backward(batch_loss)
            for p, v in zip(params, velocity):
                v *= cfg.momentum
                v += p.grad
                p.value -= cfg.learning_rate * v
            epoch_loss += value * len(batch)
        report.epoch_loss.append(epoch_loss / len(train_set))
        report.dev_accuracy_per_layer.append(_dev_accuracy(model, dev_set))
    return report


def export_traces(model: MultiExitModel, dataset: Dataset, split: str,
                  path: str | Path | None = None) -> list[PredictionTrace]:
    """One trace per split sample, in split order, batch size 1.

    Writes JSONL when ``path`` is given; always returns the traces.
    """
    encoded = _encode(dataset, split, model.config.max_seq_len)
    traces = []
    for i, (tokens, label) in enumerate(encoded):
        traces.append(forward_all_exits(model, tokens, f"{split}-{i:06d}", label))
    if path is not None:
        write_traces(traces, path)
    return traces


# ---------------------------------------------------------------------------
# Checkpoint format
# ---------------------------------------------------------------------------

def save_checkpoint(model: MultiExitModel, path: str | Path) -> None:
    parts = [CHECKPOINT_MAGIC]
    for name in ModelConfig.FIELDS:
        payload = struct.pack("<q", getattr(model.config, name))
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
    for p in model.parameters():
        parts.append(struct.pack("<II", p.rows, p.cols))
        parts.append(p.value.astype("<f8").tobytes())
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise OSError(f"cannot write checkpoint to {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> MultiExitModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint from {path}: {exc}") from exc
    if blob[:16] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a model checkpoint (bad magic header)")
    offset = 16
    values = {}
    for name in ModelConfig.FIELDS:
        (length,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        (values[name],) = struct.unpack_from("<q", blob, offset)
        offset += length
    model = MultiExitModel(ModelConfig(**values))
    for p in model.parameters():
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        if (rows, cols) != p.shape:
            raise ValueError(f"checkpoint shape mismatch: {(rows, cols)} vs {p.shape}")
        count = rows * cols
        p.value = np.frombuffer(blob, dtype="<f8", count=count,
                                offset=offset).reshape(rows, cols).copy()
        offset += count * 8
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return model


def report_to_json(report: TrainReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                          encoding="utf-8")
