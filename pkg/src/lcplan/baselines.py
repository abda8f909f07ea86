"""Reference policy families and their exhaustive grid-search optimization.

Families: fail replacement (FR), age-periodic maintenance (APM), and three
inspect-then-repair schemes (age-periodic, time-periodic and risk-based
inspections with condition-based maintenance), the latter two optionally
with component prioritization (CP). In every family a failed component is
replaced immediately; failure is self-announcing so no inspection is needed
to detect it.

Condition-based repairs act on the observed damage state of the previous
step's inspection, taken as the maximum-posterior damage state after the
Bayesian update; within a step the inspection outcome only arrives after
the maintenance decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .deterioration import FAILED, N_DAMAGE_STATES, MaintenanceAction
from .env import N_ACTIONS, EnvConfig, PolicyView
from .system import SystemEvent, link_failure_probs, system_event_distribution

FR = "FR"
APM = "APM"
API_CBM = "API_CBM"
TPI_CBM = "TPI_CBM"
RBI_CBM = "RBI_CBM"
TPI_CBM_CP = "TPI_CBM_CP"
RBI_CBM_CP = "RBI_CBM_CP"
FAMILIES = (FR, APM, API_CBM, TPI_CBM, RBI_CBM, TPI_CBM_CP, RBI_CBM_CP)

# Action codes: (maintenance, inspect) pairs; replacement excludes inspection.
_CODE_NONE = 0
_CODE_INSPECT = 1
_CODE_PARTIAL = 2
_CODE_PARTIAL_INSPECT = 3
_CODE_REPLACE = 4
_MAINT_TO_CODE = {
    MaintenanceAction.NO_REPAIR: _CODE_NONE,
    MaintenanceAction.PARTIAL_REPAIR: _CODE_PARTIAL,
    MaintenanceAction.REPLACE: _CODE_REPLACE,
}


@dataclass(frozen=True)
class BaselineSpec:
    """One concrete baseline policy: a family plus its decision variables."""

    family: str
    partial_age: int | None = None
    replace_age: int | None = None
    interval: int | None = None
    threshold: float | None = None
    maint_map: tuple[int, ...] | None = None  # observed damage state -> action
    n_cp: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown baseline family {self.family!r}")
        if self.family == APM:
            if not (self.partial_age and self.replace_age):
                raise ValueError("APM needs partial_age and replace_age")
            if self.partial_age < 1 or self.replace_age < 1:
                raise ValueError("maintenance ages must be >= 1")
        if self.family in (API_CBM, TPI_CBM, TPI_CBM_CP):
            if not self.interval or self.interval < 1:
                raise ValueError(f"{self.family} needs an inspection interval >= 1")
        if self.family in (RBI_CBM, RBI_CBM_CP):
            if self.threshold is None or not 0.0 < self.threshold < 1.0:
                raise ValueError(f"{self.family} needs a threshold in (0, 1)")
        if self.family in (API_CBM, TPI_CBM, RBI_CBM, TPI_CBM_CP, RBI_CBM_CP):
            if self.maint_map is None or len(self.maint_map) != N_DAMAGE_STATES:
                raise ValueError("CBM families need a 4-entry maintenance map")
            if any(m not in (0, 1, 2) for m in self.maint_map):
                raise ValueError("maintenance map entries must be maintenance actions")
        if self.family.endswith("_CP"):
            if not self.n_cp or self.n_cp < 1:
                raise ValueError("CP families need n_cp >= 1")


def decide(spec: BaselineSpec, view: PolicyView, topology=None) -> np.ndarray:
    """Action codes for one decision step under a baseline policy.

    Risk-based families need the system ``topology`` to evaluate the
    failure-probability trigger; the other families ignore it.
    """
    n = view.n_components
    probs = view.beliefs.probs
    # Failure is self-announcing: mass 1 on the failed state means the
    # component is known failed. Every family replaces it immediately.
    failed = probs[:, FAILED] >= 0.5

    maint = np.zeros(n, dtype=int)
    inspect = np.zeros(n, dtype=bool)

    if spec.family == APM:
        age = view.ages
        at_partial = (age > 0) & (age % spec.partial_age == 0)
        at_replace = (age > 0) & (age % spec.replace_age == 0)
        maint[at_partial] = MaintenanceAction.PARTIAL_REPAIR
        maint[at_replace] = MaintenanceAction.REPLACE
    elif spec.family != FR:
        # Condition-based repair from the previous step's inspection.
        map_ = np.asarray(spec.maint_map)
        observed = np.argmax(probs[:, :N_DAMAGE_STATES], axis=1)
        act_on = view.inspected_last & ~failed
        maint[act_on] = map_[observed[act_on]]
        # Inspection trigger of the family.
        if spec.family == API_CBM:
            age = view.ages
            inspect = (age > 0) & (age % spec.interval == 0)
        elif spec.family in (TPI_CBM, TPI_CBM_CP):
            t = view.beliefs.time
            inspect[:] = t > 0 and t % spec.interval == 0
        else:  # risk-based
            if topology is None:
                raise ValueError("risk-based baselines need the system topology")
            link_p = link_failure_probs(probs[:, FAILED], topology)
            pr_fs = system_event_distribution(link_p, topology)[SystemEvent.FS]
            inspect[:] = pr_fs > spec.threshold

    if spec.family.endswith("_CP"):
        # Restrict discretionary actions to the n_cp components with the
        # highest failure-state belief; immediate replacement of failed
        # components stays exempt.
        order = np.argsort(-probs[:, FAILED], kind="stable")
        allowed = np.zeros(n, dtype=bool)
        allowed[order[: spec.n_cp]] = True
        maint[~allowed] = MaintenanceAction.NO_REPAIR
        inspect &= allowed

    maint[failed] = MaintenanceAction.REPLACE
    inspect[failed] = False

    codes = np.empty(n, dtype=int)
    for c in range(n):
        code = _MAINT_TO_CODE[MaintenanceAction(maint[c])]
        if inspect[c] and maint[c] != MaintenanceAction.REPLACE:
            code += 1  # pair the maintenance choice with inspection
        codes[c] = code
    return codes


class BaselinePolicy:
    """Policy-protocol adapter: deterministic one-hot distributions."""

    def __init__(self, spec: BaselineSpec, config: EnvConfig):
        self.spec = spec
        self.config = config

    def decide(self, view: PolicyView) -> np.ndarray:
        return decide(self.spec, view, self.config.topology)

    def action_distributions(self, view: PolicyView) -> np.ndarray:
        codes = self.decide(view)
        dists = np.zeros((view.n_components, N_ACTIONS))
        dists[np.arange(view.n_components), codes] = 1.0
        return dists


DEFAULT_AGE_GRID = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20, 25, 50)
DEFAULT_THRESHOLD_GRID = tuple(np.logspace(-4, -1, 7))


def monotone_maps() -> list[tuple[int, ...]]:
    """Maintenance maps that never treat a worse observed state more
    leniently; 15 of the 81 possible maps."""
    out = []
    for combo in product((0, 1, 2), repeat=N_DAMAGE_STATES):
        if all(combo[i] <= combo[i + 1] for i in range(N_DAMAGE_STATES - 1)):
            out.append(combo)
    return out


def default_grids(family: str, n_components: int = 10) -> dict:
    maps = monotone_maps()
    if family == FR:
        return {}
    if family == APM:
        return {"partial_age": DEFAULT_AGE_GRID, "replace_age": DEFAULT_AGE_GRID}
    grids: dict = {"maint_map": maps}
    if family in (API_CBM, TPI_CBM, TPI_CBM_CP):
        grids["interval"] = DEFAULT_AGE_GRID
    else:
        grids["threshold"] = DEFAULT_THRESHOLD_GRID
    if family.endswith("_CP"):
        grids["n_cp"] = tuple(range(1, n_components + 1))
    return grids


def candidate_specs(family: str, grids: dict) -> list[BaselineSpec]:
    if family == FR:
        return [BaselineSpec(FR)]
    names = sorted(grids)
    if not names or any(len(grids[k]) == 0 for k in names):
        raise ValueError("grids must be non-empty for parameterized families")
    out = []
    for values in product(*(grids[k] for k in names)):
        out.append(BaselineSpec(family, **dict(zip(names, values))))
    return out


def grid_search(
    family: str,
    config: EnvConfig,
    grids: dict | None,
    episodes_per_candidate: int,
    seed,
):
    """Evaluate every grid point with common random numbers and return
    ``(best spec, table)`` where the table holds (spec, mean, se) rows
    sorted by mean total cost."""
    from .evaluate import evaluate  # local import to avoid a cycle

    if grids is None:
        grids = default_grids(family, config.n_components)
    specs = candidate_specs(family, grids)
    table = []
    for spec in specs:
        report = evaluate(
            BaselinePolicy(spec, config), config, episodes_per_candidate, seed
        )
        table.append((spec, report.mean_total, report.se_total))
    table.sort(key=lambda row: row[1])
    return table[0][0], table
