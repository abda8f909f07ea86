"""Batch figure rendering for lcplan CSV exports.

Reads the documented CSV schemas produced by the planning toolkit and
emits deterministic PNG/SVG figures: cost-decomposition bars, constraint
sweep curves, action-frequency heatmaps, and failure-probability
trajectories. All numbers come from the CSVs; nothing is recomputed.
"""

__version__ = "0.1.0"

from .render import (  # noqa: F401
    FIGURE_KINDS,
    FigureSpec,
    SchemaError,
    render,
)
