"""Dataset ingestion and a controllable synthetic classification corpus.

The synthetic generator is the workhorse for desk-scale experiments:
each class owns a disjoint set of signal tokens, and a sample is a
fixed-length token sequence drawn from its class's signal set, with a
``noise_rate`` fraction of slots replaced by class-neutral noise
tokens.  An ``ambiguous_fraction`` of samples instead draw each signal
slot 50/50 from their own class and the next class (cyclically); these
are the hard samples.  With three or more classes the mixed *pair*
still identifies the label (the pair {c, c+1} only ever arises from
class c), so the task stays fully learnable while forcing a deeper
look; with two classes a fully ambiguous corpus collapses to chance,
which the tests use as a sanity floor.

Real data comes in through CSV (RFC 4180, header required) or JSONL
(objects with "text" and "label" keys).  Labels map to contiguous
indices by first appearance; the vocabulary is built from the train
split only, so unseen dev/test tokens fall back to UNK.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PAD_INDEX = 0
UNK_INDEX = 1
RESERVED_TOKENS = ("<pad>", "<unk>")

# Tokens per synthetic sample; sequences are generated at fixed length.
SYNTHETIC_SAMPLE_LEN = 16

SPLIT_FRACTIONS = (0.70, 0.15, 0.15)  # train / dev / test


class DataFormatError(ValueError):
    """Raised for unreadable or structurally invalid input data."""


@dataclass(frozen=True)
class Dataset:
    """Text classification samples plus split indices and vocabulary."""

    samples: tuple[tuple[str, int], ...]
    train_idx: tuple[int, ...]
    dev_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    num_classes: int
    vocab: dict[str, int]

    def split(self, name: str) -> tuple[int, ...]:
        try:
            return {"train": self.train_idx, "dev": self.dev_idx,
                    "test": self.test_idx}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}; use train/dev/test") from None

    def texts_labels(self, name: str) -> list[tuple[str, int]]:
        return [self.samples[i] for i in self.split(name)]


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic corpus generator."""

    num_classes: int = 4
    samples_per_class: int = 150
    vocab_size: int = 64
    signal_tokens_per_class: int = 4
    noise_rate: float = 0.1
    ambiguous_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise DataFormatError("need at least 2 classes")
        if self.samples_per_class < 1 or self.signal_tokens_per_class < 1:
            raise DataFormatError("counts must be positive")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise DataFormatError(f"noise_rate {self.noise_rate} outside [0, 1]")
        if not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise DataFormatError(
                f"ambiguous_fraction {self.ambiguous_fraction} outside [0, 1]")
        needed = len(RESERVED_TOKENS) + self.num_classes * self.signal_tokens_per_class
        if self.vocab_size < needed + 1:  # at least one noise token
            raise DataFormatError(
                f"vocab_size {self.vocab_size} too small: {needed} indices are "
                f"reserved or assigned to disjoint class signals")


def tokenize(text: str, vocab: dict[str, int], max_seq_len: int) -> list[int]:
    """Lowercased whitespace tokens mapped through the vocabulary.

    Unknown tokens become UNK; output is truncated to ``max_seq_len``
    and right-padded with PAD to exactly that length.
    """
    if not vocab:
        raise DataFormatError("empty vocabulary")
    ids = [vocab.get(tok, UNK_INDEX) for tok in text.lower().split()]
    ids = ids[:max_seq_len]
    ids.extend([PAD_INDEX] * (max_seq_len - len(ids)))
    return ids


def _split_indices(n: int, rng: np.random.Generator):
    order = rng.permutation(n)
    n_train = int(round(n * SPLIT_FRACTIONS[0]))
    n_dev = int(round(n * SPLIT_FRACTIONS[1]))
    train = tuple(int(i) for i in order[:n_train])
    dev = tuple(int(i) for i in order[n_train:n_train + n_dev])
    test = tuple(int(i) for i in order[n_train + n_dev:])
    return train, dev, test


def _build_vocab(samples, train_idx) -> dict[str, int]:
    vocab = {RESERVED_TOKENS[0]: PAD_INDEX, RESERVED_TOKENS[1]: UNK_INDEX}
    for i in train_idx:
        for tok in samples[i][0].lower().split():
            if tok not in vocab:
                vocab[tok] = len(vocab)
    return vocab


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministically generate a synthetic dataset from its spec."""
    rng = np.random.default_rng(spec.seed)
    k = spec.num_classes
    spc = spec.signal_tokens_per_class

    # Token names; indices 0/1 stay reserved so vocab layout matches real data.
    signal = {c: [f"sig{c}_{j}" for j in range(spc)] for c in range(k)}
    n_noise = spec.vocab_size - len(RESERVED_TOKENS) - k * spc
    noise = [f"noi{j}" for j in range(n_noise)]

    samples = []
    for c in range(k):
        n_ambiguous = int(round(spec.samples_per_class * spec.ambiguous_fraction))
        for s in range(spec.samples_per_class):
            ambiguous = s < n_ambiguous
            partner = (c + 1) % k
            words = []
            for _ in range(SYNTHETIC_SAMPLE_LEN):
                if rng.random() < spec.noise_rate:
                    words.append(noise[rng.integers(n_noise)])
                else:
                    source = c
                    if ambiguous and rng.random() < 0.5:
                        source = partner
                    words.append(signal[source][rng.integers(spc)])
            samples.append((" ".join(words), c))

    samples = tuple(samples)
    train, dev, test = _split_indices(len(samples), rng)
    vocab = _build_vocab(samples, train)
    return Dataset(samples, train, dev, test, k, vocab)


def _finalize(samples: list[tuple[str, int]], num_classes: int, seed: int) -> Dataset:
    samples = tuple(samples)
    rng = np.random.default_rng(seed)
    train, dev, test = _split_indices(len(samples), rng)
    return Dataset(samples, train, dev, test, num_classes, _build_vocab(samples, train))


def load_csv(path: str | Path, text_column: str, label_column: str,
             seed: int = 0) -> Dataset:
    """Load a labeled text CSV; labels index by first appearance."""
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: empty file, header row required")
        for col in (text_column, label_column):
            if col not in reader.fieldnames:
                raise DataFormatError(
                    f"{path}: missing column {col!r}; found {reader.fieldnames}")
        label_ids: dict[str, int] = {}
        samples = []
        for row in reader:
            lineno = reader.line_num
            text = row.get(text_column)
            label = row.get(label_column)
            if text is None or label is None or label == "":
                raise DataFormatError(f"{path}: line {lineno}: unreadable row")
            if label not in label_ids:
                label_ids[label] = len(label_ids)
            samples.append((text, label_ids[label]))
    if not samples:
        raise DataFormatError(f"{path}: no data rows")
    return _finalize(samples, len(label_ids), seed)


def load_jsonl(path: str | Path, seed: int = 0) -> Dataset:
    """Load JSONL records with "text" and "label" keys."""
    path = Path(path)
    label_ids: dict[str, int] = {}
    samples = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            text, label = obj["text"], str(obj["label"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
        if label not in label_ids:
            label_ids[label] = len(label_ids)
        samples.append((str(text), label_ids[label]))
    if not samples:
        raise DataFormatError(f"{path}: no data rows")
    return _finalize(samples, len(label_ids), seed)


def save_cache(dataset: Dataset, path: str | Path) -> None:
    """Persist vocab and splits for reproducibility."""
    payload = {
        "samples": [[t, l] for t, l in dataset.samples],
        "train_idx": list(dataset.train_idx),
        "dev_idx": list(dataset.dev_idx),
        "test_idx": list(dataset.test_idx),
        "num_classes": dataset.num_classes,
        "vocab": dataset.vocab,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_cache(path: str | Path) -> Dataset:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return Dataset(
            samples=tuple((str(t), int(l)) for t, l in payload["samples"]),
            train_idx=tuple(payload["train_idx"]),
            dev_idx=tuple(payload["dev_idx"]),
            test_idx=tuple(payload["test_idx"]),
            num_classes=int(payload["num_classes"]),
            vocab={str(k): int(v) for k, v in payload["vocab"].items()},
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"cannot load dataset cache {path}: {exc}") from exc
