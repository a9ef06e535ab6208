"""Early-exit transformer classifiers with entropy, patience, and hybrid policies.

The package splits into a trainer side and a policy side connected by
prediction traces:

* :mod:`epee.tensor` - small reverse-mode autodiff core (2-D float64);
* :mod:`epee.model` - multi-exit transformer encoder, joint training,
  trace export, binary checkpoints;
* :mod:`epee.trace` - the per-sample trace record and its JSONL format;
* :mod:`epee.policy` - entropy / patience / hybrid / budgeted exit rules;
* :mod:`epee.reference` - independent naive re-implementation of the
  decision walk, used for cross-validation;
* :mod:`epee.evaluation` - accuracy, macro-F1, speed-up, grid search,
  Pareto frontier, and the CSV/JSON report formats;
* :mod:`epee.data` - synthetic corpus generator and CSV/JSONL loaders;
* :mod:`epee.verify` - randomized invariant suites;
* :mod:`epee.cli` - the ``epee`` command.
"""

__version__ = "0.1.0"

from .data import (Dataset, SyntheticSpec, generate_synthetic, load_cache,
                   load_csv, load_jsonl, save_cache, tokenize)
from .evaluation import (EvalResult, GridResult, budgeted_curve, evaluate,
                         grid_search, macro_f1, pareto_frontier, speedup_ratio)
from .model import (ModelConfig, MultiExitModel, TrainConfig, TrainReport,
                    export_traces, forward_all_exits, joint_loss,
                    load_checkpoint, save_checkpoint, train)
from .policy import (ExitOutcome, ExitPolicyConfig, ExitRule, Strategy,
                     decide_exit, normalized_entropy, patience_update)
from .reference import decide_exit_oracle
from .tensor import Tensor, grad_check
from .trace import PredictionTrace, read_traces, write_traces

__all__ = [
    "__version__",
    "Dataset", "SyntheticSpec", "generate_synthetic", "load_cache", "load_csv",
    "load_jsonl", "save_cache", "tokenize",
    "EvalResult", "GridResult", "budgeted_curve", "evaluate", "grid_search",
    "macro_f1", "pareto_frontier", "speedup_ratio",
    "ModelConfig", "MultiExitModel", "TrainConfig", "TrainReport",
    "export_traces", "forward_all_exits", "joint_loss", "load_checkpoint",
    "save_checkpoint", "train",
    "ExitOutcome", "ExitPolicyConfig", "ExitRule", "Strategy", "decide_exit",
    "normalized_entropy", "patience_update",
    "decide_exit_oracle",
    "Tensor", "grad_check",
    "PredictionTrace", "read_traces", "write_traces",
]
