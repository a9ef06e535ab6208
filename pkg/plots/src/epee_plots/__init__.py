"""Figure rendering for early-exit evaluation outputs.

A read-only view layer over the grid CSV, budgeted-curve CSV, and
frontier JSON files: strict parsing in :mod:`epee_plots.parsing`,
matplotlib rendering in :mod:`epee_plots.render`, and the
``epee-plots`` script in :mod:`epee_plots.cli`.
"""

__version__ = "0.1.0"

from .parsing import (GridTable, SchemaError, parse_curve, parse_frontier,
                      parse_grid)
from .render import (PlotJob, plot_budgeted_curve, plot_frontier,
                     plot_grid_heatmaps, run_job)

__all__ = [
    "__version__",
    "GridTable", "SchemaError", "parse_curve", "parse_frontier", "parse_grid",
    "PlotJob", "plot_budgeted_curve", "plot_frontier", "plot_grid_heatmaps",
    "run_job",
]
