"""Figure construction from validated CSV inputs.

Rendering is pure: a given set of CSVs always produces byte-identical
image files. Matplotlib runs on the Agg backend with a pinned style and
stripped volatile metadata (dates, hash salts).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams.update(
    {
        "svg.hashsalt": "lcplan-plots",
        "figure.dpi": 110,
        "savefig.dpi": 110,
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)

COST_COMPONENTS = ("maintenance", "inspection", "shutdown", "risk")
COMPONENT_COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3")

COST_DECOMPOSITION = "cost_decomposition"
SWEEP_CURVES = "sweep_curves"
ACTION_HEATMAP = "action_heatmap"
FAILURE_TRAJECTORY = "failure_trajectory"
FIGURE_KINDS = (COST_DECOMPOSITION, SWEEP_CURVES, ACTION_HEATMAP, FAILURE_TRAJECTORY)

# Columns each figure kind requires from its CSV inputs. Optional cost
# columns may be empty strings; those series are simply omitted.
REQUIRED_COLUMNS = {
    COST_DECOMPOSITION: {"policy", "mean_total"},
    SWEEP_CURVES: {"level", "mean_total"},
    ACTION_HEATMAP: {"component", "step", "action", "frequency"},
    FAILURE_TRAJECTORY: {"step", "mean_system_failure_prob"},
}


class SchemaError(ValueError):
    """A CSV input does not match the documented schema."""


@dataclass
class FigureSpec:
    """What to render: figure kind, input CSVs, axis flags, output path."""

    kind: str
    inputs: list[str]
    output: str
    log_scale: bool = True
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; available: {FIGURE_KINDS}"
            )
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def read_rows(path: str, kind: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = set(reader.fieldnames or ())
            missing = REQUIRED_COLUMNS[kind] - header
            if missing:
                raise SchemaError(
                    f"{path}: missing required columns {sorted(missing)} "
                    f"for kind {kind!r} (found {sorted(header)})"
                )
            return list(reader)
    except FileNotFoundError:
        raise SchemaError(f"input CSV not found: {path}") from None


def _value(row: dict, column: str) -> float | None:
    raw = row.get(column, "")
    if raw is None or raw == "":
        return None
    return float(raw)


def _series(rows: list[dict], column: str) -> list[float] | None:
    """Column as floats, or None if entirely absent/empty."""
    values = [_value(row, column) for row in rows]
    if all(v is None for v in values):
        return None
    return [0.0 if v is None else v for v in values]


def _save(fig, output: str) -> None:
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    metadata = {"Date": None} if suffix == ".svg" else {}
    fig.savefig(path, format=suffix.lstrip("."), metadata=metadata)
    plt.close(fig)


def _render_cost_decomposition(spec: FigureSpec) -> None:
    rows = read_rows(spec.inputs[0], COST_DECOMPOSITION)
    if not rows:
        raise SchemaError(f"{spec.inputs[0]}: no data rows")
    policies = [row["policy"] for row in rows]
    series = {"total": [float(row["mean_total"]) for row in rows]}
    for component in COST_COMPONENTS:
        values = _series(rows, f"mean_{component}")
        if values is not None:
            series[component] = values
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(policies), 4.2))
    names = list(series)
    width = 0.8 / len(names)
    for k, name in enumerate(names):
        offsets = [i + (k - (len(names) - 1) / 2) * width for i in range(len(policies))]
        ax.bar(
            offsets,
            series[name],
            width=width,
            label=name,
            color=COMPONENT_COLORS[k % len(COMPONENT_COLORS)],
        )
    ax.set_xticks(range(len(policies)))
    ax.set_xticklabels(policies, rotation=30, ha="right")
    ax.set_ylabel("discounted life-cycle cost")
    if spec.log_scale:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("Life-cycle cost decomposition")
    _save(fig, spec.output)


def _render_sweep_curves(spec: FigureSpec) -> None:
    rows = read_rows(spec.inputs[0], SWEEP_CURVES)
    if not rows:
        raise SchemaError(f"{spec.inputs[0]}: no data rows")
    rows = sorted(rows, key=lambda r: float(r["level"]))
    levels = [float(row["level"]) for row in rows]
    fig, ax = plt.subplots(figsize=(5.4, 4.0))
    ax.plot(levels, [float(r["mean_total"]) for r in rows], "o-", label="total")
    for k, component in enumerate(COST_COMPONENTS):
        values = _series(rows, f"mean_{component}")
        if values is not None:
            ax.plot(
                levels,
                values,
                "s--",
                label=component,
                color=COMPONENT_COLORS[(k + 1) % len(COMPONENT_COLORS)],
            )
    ax.set_xlabel("constraint level")
    ax.set_ylabel("discounted life-cycle cost")
    if spec.log_scale:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("Costs across constraint levels")
    _save(fig, spec.output)


def _heatmap_grid(rows: list[dict], codes: set[int]):
    components = sorted({int(row["component"]) for row in rows})
    steps = sorted({int(row["step"]) for row in rows})
    comp_index = {c: i for i, c in enumerate(components)}
    step_index = {s: i for i, s in enumerate(steps)}
    grid = [[0.0] * len(steps) for _ in components]
    for row in rows:
        if int(row["action"]) in codes:
            grid[comp_index[int(row["component"])]][step_index[int(row["step"])]] += (
                float(row["frequency"])
            )
    return grid, components, steps


def _render_action_heatmap(spec: FigureSpec) -> None:
    rows = read_rows(spec.inputs[0], ACTION_HEATMAP)
    if not rows:
        raise SchemaError(f"{spec.inputs[0]}: no data rows")
    # action codes: 1/3 inspect, 2/3 partial repair, 4 replace
    panels = (
        ("maintenance frequency", {2, 3, 4}),
        ("inspection frequency", {1, 3}),
    )
    fig, axes = plt.subplots(1, 2, figsize=(9.2, 3.8), constrained_layout=True)
    for ax, (title, codes) in zip(axes, panels):
        grid, components, steps = _heatmap_grid(rows, codes)
        image = ax.imshow(
            grid,
            aspect="auto",
            origin="lower",
            cmap="viridis",
            vmin=0.0,
            vmax=1.0,
            extent=(min(steps) - 0.5, max(steps) + 0.5, min(components) - 0.5, max(components) + 0.5),
        )
        ax.set_title(title)
        ax.set_xlabel("step")
        ax.set_ylabel("component")
        fig.colorbar(image, ax=ax, shrink=0.85)
    _save(fig, spec.output)


def _render_failure_trajectory(spec: FigureSpec) -> None:
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    for k, path in enumerate(spec.inputs):
        rows = read_rows(path, FAILURE_TRAJECTORY)
        if not rows:
            raise SchemaError(f"{path}: no data rows")
        rows = sorted(rows, key=lambda r: int(r["step"]))
        label = spec.labels[k] if k < len(spec.labels) else Path(path).stem
        ax.plot(
            [int(r["step"]) for r in rows],
            [float(r["mean_system_failure_prob"]) for r in rows],
            "-",
            label=label,
            color=COMPONENT_COLORS[k % len(COMPONENT_COLORS)],
        )
    ax.set_xlabel("step")
    ax.set_ylabel("mean system failure probability")
    if spec.log_scale:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("System failure probability over the life cycle")
    _save(fig, spec.output)


_RENDERERS = {
    COST_DECOMPOSITION: _render_cost_decomposition,
    SWEEP_CURVES: _render_sweep_curves,
    ACTION_HEATMAP: _render_action_heatmap,
    FAILURE_TRAJECTORY: _render_failure_trajectory,
}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the output path."""
    _RENDERERS[spec.kind](spec)
    return spec.output
