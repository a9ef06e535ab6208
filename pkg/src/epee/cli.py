"""Command-line entry point: train, trace, eval, grid, curve, verify.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
failure, 4 training divergence.

Every run that writes files also writes a ``manifest-<command>.json``
recording the resolved configuration, package version, and SHA-256
digests of the inputs.  Timestamps live only in the manifest, so all
other outputs are byte-identical across reruns with the same seed.

Datasets are given either as a file path (.csv or .jsonl) or as a
``synthetic:`` URI, e.g. ``synthetic:classes=4,noise_rate=0.1`` or the
shorthand ``synthetic:classes=4,easy``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .data import (DataFormatError, Dataset, SyntheticSpec, generate_synthetic,
                   load_csv, load_jsonl)
from .evaluation import (budgeted_curve, curve_to_csv, eval_result_to_dict,
                         evaluate, frontier_to_json, grid_search, grid_to_csv,
                         histogram_to_csv, pareto_frontier)
from .model import (ModelConfig, MultiExitModel, TrainConfig, TrainingDiverged,
                    export_traces, load_checkpoint, report_to_json,
                    save_checkpoint, train)
from .policy import ExitPolicyConfig, Strategy
from .trace import TraceFormatError, read_traces
from .verify import random_trace_corpus, run_all

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3
EXIT_DIVERGED = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this artifact reserves
    # 2 for data errors, so remap.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Input resolution
# ---------------------------------------------------------------------------

_SYNTH_ALIASES = {
    "classes": "num_classes",
    "per_class": "samples_per_class",
    "vocab": "vocab_size",
    "signal": "signal_tokens_per_class",
}
_SYNTH_PRESETS = {
    "easy": {"noise_rate": 0.0, "ambiguous_fraction": 0.0},
    "default": {},
    "hard": {"noise_rate": 0.2, "ambiguous_fraction": 0.3},
}


def parse_synthetic_uri(uri: str, seed: int = 0) -> SyntheticSpec:
    """Turn ``synthetic:key=value,...`` into a SyntheticSpec."""
    body = uri[len("synthetic:"):]
    kwargs: dict = {"seed": seed}
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            if item not in _SYNTH_PRESETS:
                raise UsageError(f"unknown synthetic preset {item!r}")
            kwargs.update(_SYNTH_PRESETS[item])
            continue
        key, value = item.split("=", 1)
        key = _SYNTH_ALIASES.get(key, key)
        if key in ("noise_rate", "ambiguous_fraction"):
            kwargs[key] = float(value)
        elif key in ("num_classes", "samples_per_class", "vocab_size",
                     "signal_tokens_per_class", "seed"):
            kwargs[key] = int(value)
        else:
            raise UsageError(f"unknown synthetic key {key!r}")
    return SyntheticSpec(**kwargs)


def load_dataset(spec: str, seed: int, text_column: str, label_column: str) -> Dataset:
    if spec.startswith("synthetic:"):
        return generate_synthetic(parse_synthetic_uri(spec, seed))
    path = Path(spec)
    if path.suffix == ".jsonl":
        return load_jsonl(path, seed)
    return load_csv(path, text_column, label_column, seed)


def _load_json_arg(value: str | None) -> dict:
    """Accept inline JSON or a path to a JSON file."""
    if not value:
        return {}
    text = value if value.lstrip().startswith("{") else Path(value).read_text()
    obj = json.loads(text)
    if not isinstance(obj, dict):
        raise UsageError("config JSON must be an object")
    return obj


def _apply_config_file(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Fill flags still at their defaults from the --config JSON file."""
    if not getattr(args, "config", None):
        return
    overrides = _load_json_arg(args.config)
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if attr not in parser_defaults:
            raise UsageError(f"--config key {key!r} does not match any flag")
        if getattr(args, attr) == parser_defaults[attr]:
            setattr(args, attr, value)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                   inputs: list[Path], outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "resolved_config": {k: v for k, v in sorted(vars(args).items())
                            if k != "func"},
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
        "outputs": [str(p) for p in outputs],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"manifest-{command}.json").write_text(
        json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _out_dir(args: argparse.Namespace, fallback: Path) -> Path:
    out = Path(args.out_dir) if args.out_dir else fallback
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    dataset = load_dataset(args.data, args.seed, args.text_column, args.label_column)
    model_kwargs = _load_json_arg(args.model_config)
    model_kwargs.setdefault("vocab_size", len(dataset.vocab))
    model_kwargs.setdefault("num_classes", dataset.num_classes)
    model_kwargs.setdefault("seed", args.seed)
    if model_kwargs["vocab_size"] < len(dataset.vocab):
        raise DataFormatError(
            f"model vocab_size {model_kwargs['vocab_size']} smaller than "
            f"dataset vocabulary {len(dataset.vocab)}")
    train_kwargs = _load_json_arg(args.train_config)
    train_kwargs.setdefault("seed", args.seed)
    model_cfg = ModelConfig(**model_kwargs)
    train_cfg = TrainConfig(**train_kwargs)

    model = MultiExitModel(model_cfg)
    report = train(model, dataset, train_cfg)

    out_dir = _out_dir(args, Path(args.out).parent if args.out else Path("."))
    model_path = Path(args.out) if args.out else out_dir / "model.bin"
    save_checkpoint(model, model_path)
    report_path = out_dir / "train_report.json"
    report_to_json(report, report_path)
    inputs = [] if args.data.startswith("synthetic:") else [Path(args.data)]
    write_manifest(out_dir, "train", args, inputs, [model_path, report_path])
    print(json.dumps({"model": str(model_path),
                      "final_epoch_loss": report.epoch_loss[-1],
                      "final_dev_accuracy": report.dev_accuracy_per_layer[-1]}))
    return EXIT_OK


def cmd_trace(args) -> int:
    model = load_checkpoint(args.model)
    dataset = load_dataset(args.data, args.seed, args.text_column, args.label_column)
    out_dir = _out_dir(args, Path(args.out).parent if args.out else Path("."))
    out_path = Path(args.out) if args.out else out_dir / "traces.jsonl"
    traces = export_traces(model, dataset, args.split, out_path)
    inputs = [Path(args.model)]
    if not args.data.startswith("synthetic:"):
        inputs.append(Path(args.data))
    write_manifest(out_dir, "trace", args, inputs, [out_path])
    print(json.dumps({"traces": str(out_path), "count": len(traces)}))
    return EXIT_OK


def _policy_from_args(args) -> ExitPolicyConfig:
    try:
        return ExitPolicyConfig(
            strategy=Strategy(args.strategy),
            tau=args.tau,
            patience=args.patience,
            budget_layer=args.budget_layer,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_eval(args) -> int:
    traces = read_traces(args.traces)
    result = evaluate(traces, _policy_from_args(args))
    print(json.dumps(eval_result_to_dict(result), indent=2))
    if args.out_dir:
        out_dir = _out_dir(args, Path("."))
        hist_path = out_dir / "exit_histogram.csv"
        histogram_to_csv(result, hist_path)
        write_manifest(out_dir, "eval", args, [Path(args.traces)], [hist_path])
    return EXIT_OK


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in filter(None, (s.strip() for s in text.split(",")))]


def _parse_int_list(text: str, m_total: int) -> list[int]:
    # supports "1,2,3" and the range shorthand "1..M" / "2..5"
    text = text.strip()
    if ".." in text and "," not in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), (m_total if hi.strip() in ("M", "m")
                                    else int(hi)) + 1))
    return [int(v) for v in filter(None, (s.strip() for s in text.split(",")))]


def cmd_grid(args) -> int:
    traces = read_traces(args.traces)
    m_total = traces[0].num_layers
    taus = _parse_float_list(args.tau_list) if args.tau_list else \
        [round(0.05 * i, 2) for i in range(21)]
    patiences = _parse_int_list(args.patience_list, m_total) if args.patience_list \
        else list(range(1, m_total + 1))
    grid = grid_search(traces, taus, patiences)
    frontier = pareto_frontier(grid)

    out_dir = _out_dir(args, Path(args.out).parent if args.out else Path("."))
    grid_path = Path(args.out) if args.out else out_dir / "grid.csv"
    frontier_path = out_dir / "frontier.json"
    grid_to_csv(grid, grid_path)
    frontier_to_json(frontier, frontier_path)
    write_manifest(out_dir, "grid", args, [Path(args.traces)],
                   [grid_path, frontier_path])

    print(f"grid: {len(grid.cells)} cells -> {grid_path}")
    print("pareto frontier (speedup, accuracy, tau, patience):")
    for cell in frontier:
        print(f"  {cell.speedup:8.4f}  {cell.accuracy:8.4f}  "
              f"tau={cell.config.tau:.2f} patience={cell.config.patience}")
    return EXIT_OK


def cmd_curve(args) -> int:
    traces = read_traces(args.traces)
    rows = budgeted_curve(traces)
    out_dir = _out_dir(args, Path(args.out).parent if args.out else Path("."))
    out_path = Path(args.out) if args.out else out_dir / "curve.csv"
    curve_to_csv(rows, out_path)
    write_manifest(out_dir, "curve", args, [Path(args.traces)], [out_path])
    for row in rows:
        print(f"layer {row['layer']:2d}: accuracy={row['accuracy']:.4f} "
              f"mean_entropy={row['mean_entropy']:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.traces:
        traces = read_traces(args.traces)
    else:
        traces = random_trace_corpus(args.random_traces, args.seed)
    results = run_all(traces, args.seed)
    width = max(len(r.name) for r in results)
    print(f"{'suite':<{width}}  {'cases':>7}  {'failures':>8}  result")
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed = failed or not r.passed
        print(f"{r.name:<{width}}  {r.cases:>7}  {len(r.failures):>8}  {status}")
        for msg in r.failures[:5]:
            print(f"    {msg}")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-dir", default=None)
    sub.add_argument("--config", default=None,
                     help="JSON file whose keys mirror flags; flags win")


def _add_data_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data", required=True,
                     help="dataset path (.csv/.jsonl) or synthetic: URI")
    sub.add_argument("--text-column", default="text")
    sub.add_argument("--label-column", default="label")


def build_parser() -> _Parser:
    parser = _Parser(prog="epee",
                     description="Early-exit transformer training and evaluation")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train a multi-exit model")
    _add_data_flags(p)
    p.add_argument("--model-config", default=None, help="JSON file or inline JSON")
    p.add_argument("--train-config", default=None, help="JSON file or inline JSON")
    p.add_argument("--out", default=None, help="checkpoint path (model.bin)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("trace", help="export per-layer prediction traces")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    p.add_argument("--out", default=None, help="traces path (traces.jsonl)")
    _add_common(p)
    p.set_defaults(func=cmd_trace)

    p = subs.add_parser("eval", help="evaluate one exit policy over traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--strategy", required=True,
                   choices=[s.value for s in Strategy])
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--patience", type=int, default=1)
    p.add_argument("--budget-layer", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("grid", help="sweep (tau, patience) and extract the frontier")
    p.add_argument("--traces", required=True)
    p.add_argument("--tau-list", default=None, help="comma list, e.g. 0.0,0.05,0.1")
    p.add_argument("--patience-list", default=None,
                   help="comma list or range, e.g. 1,2,3 or 1..M")
    p.add_argument("--out", default=None, help="grid CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_grid)

    p = subs.add_parser("curve", help="per-layer accuracy/entropy in budgeted mode")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", default=None, help="curve CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_curve)

    p = subs.add_parser("verify", help="run the policy invariant suites")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--traces", default=None)
    group.add_argument("--random-traces", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        defaults = {a.dest: a.default for sub in parser._subparsers._group_actions
                    for a in getattr(sub.choices.get(args.command), "_actions", [])
                    if a.dest != "help"}
        _apply_config_file(args, defaults)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, TraceFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
