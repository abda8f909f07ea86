"""Step-cost decomposition, interval risk, and life-cycle cost ledgers.

System damage losses come in two flavors: perpetual losses are collected
every step an adverse event state is occupied, instantaneous losses only on
arrival. The interval risk prices one environment transition from the
current beliefs. A failure-only oracle computes the same life-cycle risk
through two independent formulas for verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import ObservationModel, predict_belief
from .deterioration import (
    FAILED,
    INTACT,
    N_STATES,
    ComponentModel,
    MaintenanceAction,
    apply_maintenance,
)
from .system import (
    N_EVENTS,
    SystemEvent,
    Topology,
    _tables,
    classify_outcome,
    link_failure_probs,
    system_event_distribution,
)

_LEDGER_TOL = 1e-10


@dataclass(frozen=True)
class LossTable:
    """System-event losses in money units, indexed by SystemEvent.

    Defaults express the reference ratios: perpetual losses of (0.05, 0.25,
    2.5) and instantaneous losses of (1, 5, 50) rebuild costs for one link
    down, several links down, and system failure respectively.
    """

    perpetual: np.ndarray
    instantaneous: np.ndarray
    rebuild_cost: float = 1.0

    def __post_init__(self):
        per = np.array(self.perpetual, dtype=float)
        inst = np.array(self.instantaneous, dtype=float)
        for name, arr in (("perpetual", per), ("instantaneous", inst)):
            if arr.shape != (N_EVENTS,):
                raise ValueError(f"{name} losses must have one entry per system event")
            if np.any(arr < 0.0):
                raise ValueError(f"{name} losses must be nonnegative")
            if arr[SystemEvent.E0] != 0.0:
                raise ValueError("the all-links-available event carries no loss")
        per.setflags(write=False)
        inst.setflags(write=False)
        object.__setattr__(self, "perpetual", per)
        object.__setattr__(self, "instantaneous", inst)

    @classmethod
    def default(cls, rebuild_cost: float = 1.0) -> "LossTable":
        per = rebuild_cost * np.array([0.0, 0.05, 0.25, 2.5])
        inst = rebuild_cost * np.array([0.0, 1.0, 5.0, 50.0])
        return cls(per, inst, rebuild_cost)

    def scaled(self, factor: float) -> "LossTable":
        return LossTable(
            factor * self.perpetual, factor * self.instantaneous, self.rebuild_cost
        )


def interval_risk(
    event_probs_now: np.ndarray, event_probs_next: np.ndarray, losses: LossTable
) -> float:
    """Expected one-step damage cost from the event distributions before and
    after the environment transition.

    Perpetual losses are charged on next-step occupancy; instantaneous
    losses only on arrival, i.e. weighted by the probability of not already
    being in the event state.
    """
    now = event_probs_now
    nxt = event_probs_next
    per = losses.perpetual
    inst = losses.instantaneous
    total = 0.0
    for e in (SystemEvent.E1, SystemEvent.E2, SystemEvent.FS):
        total += nxt[e] * (per[e] + (1.0 - now[e]) * inst[e])
    return float(total)


def maintenance_down_links(maintenance, topology: Topology) -> list[bool]:
    """A link is maintenance-down if any of its components receives a
    non-trivial maintenance action this step."""
    members, _, _ = _tables(topology)
    return [any(maintenance[c] != 0 for c in link) for link in members]


def shutdown_cost(
    maintenance, event_probs_now: np.ndarray, losses: LossTable, topology: Topology
) -> float:
    """Scheduled shutdown cost of the maintenance-down link pattern.

    Charged only if the system would otherwise be operating, i.e. scaled by
    the probability of not being failed.
    """
    down = maintenance_down_links(maintenance, topology)
    event = classify_outcome(down, topology)
    not_failed = 1.0 - float(np.asarray(event_probs_now)[SystemEvent.FS])
    return float(losses.perpetual[event]) * not_failed


def shutdown_cost_incremental(
    maintenance, link_failure_probs_now: np.ndarray, losses: LossTable, topology: Topology
) -> float:
    """Incremental-outage variant: charges only the deterioration of the
    event class caused by taking links down for maintenance, netting out
    links that are already failed. Exact expectation over the 2^links
    failure patterns; systems already failed incur nothing.
    """
    from itertools import product as _product

    down = maintenance_down_links(maintenance, topology)
    if not any(down):
        return 0.0
    p = np.asarray(link_failure_probs_now, dtype=float)
    total = 0.0
    for states in _product((False, True), repeat=len(p)):
        weight = 1.0
        for pi, failed in zip(p, states):
            weight *= pi if failed else 1.0 - pi
        if weight == 0.0:
            continue
        base = classify_outcome(states, topology)
        if base is SystemEvent.FS:
            continue
        combined = [s or d for s, d in zip(states, down)]
        extra = classify_outcome(combined, topology)
        total += weight * float(losses.perpetual[extra] - losses.perpetual[base])
    return total


@dataclass(frozen=True)
class StepCosts:
    """One decision step's expected cost decomposition (undiscounted)."""

    maintenance: float
    inspection: float
    shutdown: float
    damage: float

    def total(self, gamma: float) -> float:
        """Step cost with the discount convention: inspection and damage
        costs are realized after the transition and carry one factor of
        gamma."""
        return self.maintenance + self.shutdown + gamma * (self.inspection + self.damage)


def step_cost(
    beliefs: np.ndarray,
    maintenance,
    inspections,
    models,
    topology: Topology,
    losses: LossTable,
    taus,
):
    """Belief-expected cost decomposition of one joint action.

    Returns ``(StepCosts, post-maintenance beliefs, predicted beliefs)``
    so callers advancing the environment can reuse the intermediates.
    Maintenance and inspection costs depend on the action alone; shutdown
    and damage costs come from the system event distributions. Maintenance
    never moves component failure mass within a step, so one "now" event
    distribution serves both the shutdown and the interval-risk charge.
    """
    beliefs = np.asarray(beliefs, dtype=float)
    maintenance = np.asarray(maintenance)
    inspections = np.asarray(inspections, dtype=bool)
    taus = np.asarray(taus, dtype=int)
    n = beliefs.shape[0]

    c_m = float(
        sum(models[c].maintenance_cost(maintenance[c]) for c in range(n))
    )
    c_i = float(
        sum(models[c].inspection_cost for c in range(n) if inspections[c])
    )

    ev_now = system_event_distribution(
        link_failure_probs(beliefs[:, FAILED], topology), topology
    )
    c_s = shutdown_cost(maintenance, ev_now, losses, topology)

    partial = maintenance == MaintenanceAction.PARTIAL_REPAIR
    replaced = maintenance == MaintenanceAction.REPLACE
    b_after = beliefs.copy()
    for c in np.flatnonzero(partial):
        b_after[c] = apply_maintenance(beliefs[c], MaintenanceAction.PARTIAL_REPAIR)
    b_pred = np.empty_like(beliefs)
    for c in range(n):
        if replaced[c]:
            b_pred[c] = 0.0
            b_pred[c, INTACT] = 1.0
        else:
            b_pred[c] = predict_belief(
                b_after[c], models[c].augmented_transition_matrix(int(taus[c]))
            )
    ev_next = system_event_distribution(
        link_failure_probs(b_pred[:, FAILED], topology), topology
    )
    c_d = interval_risk(ev_now, ev_next, losses)
    return StepCosts(c_m, c_i, c_s, c_d), b_after, b_pred


class CostLedger:
    """Per-step cost entries with discounted accumulators.

    Accumulators weight step t entries by gamma**t; the episode total
    additionally applies gamma to the inspection and risk components per
    the step-cost convention.
    """

    def __init__(self, gamma: float):
        if not 0.0 < gamma <= 1.0:
            raise ValueError("discount factor must lie in (0, 1]")
        self.gamma = gamma
        self.steps: list[tuple[int, float, float, float, float]] = []
        self.maintenance = 0.0
        self.inspection = 0.0
        self.shutdown = 0.0
        self.risk = 0.0

    def record(self, t: int, costs: StepCosts) -> None:
        w = self.gamma**t
        self.steps.append(
            (t, costs.maintenance, costs.inspection, costs.shutdown, costs.damage)
        )
        self.maintenance += w * costs.maintenance
        self.inspection += w * costs.inspection
        self.shutdown += w * costs.shutdown
        self.risk += w * costs.damage

    @property
    def total(self) -> float:
        return self.maintenance + self.shutdown + self.gamma * (self.inspection + self.risk)

    def components(self) -> dict[str, float]:
        return {
            "maintenance": self.maintenance,
            "inspection": self.inspection,
            "shutdown": self.shutdown,
            "risk": self.risk,
            "total": self.total,
        }

    def recompute(self) -> dict[str, float]:
        """Replay the entries with explicit discount weights; used to check
        the incremental accumulators."""
        acc = {"maintenance": 0.0, "inspection": 0.0, "shutdown": 0.0, "risk": 0.0}
        for t, c_m, c_i, c_s, c_d in self.steps:
            w = self.gamma**t
            acc["maintenance"] += w * c_m
            acc["inspection"] += w * c_i
            acc["shutdown"] += w * c_s
            acc["risk"] += w * c_d
        acc["total"] = (
            acc["maintenance"]
            + acc["shutdown"]
            + self.gamma * (acc["inspection"] + acc["risk"])
        )
        return acc

    def check(self) -> None:
        replay = self.recompute()
        live = self.components()
        for key, value in replay.items():
            if abs(live[key] - value) > _LEDGER_TOL:
                raise AssertionError(
                    f"ledger accumulator {key} drifted: {live[key]} vs {value}"
                )


def failure_only_risk_oracle(
    model: ComponentModel,
    actions,
    gamma: float,
    obs_model: ObservationModel,
    initial_belief: np.ndarray | None = None,
    failure_cost: float = 1.0,
):
    """Discounted failure-only risk of a fixed action sequence, two ways.

    Enumerates the full observation outcome tree exactly and accumulates
    the risk both in its general per-transition form (failure arrival mass
    weighted by the adjacency indicator) and in its reliability form
    (differences of cumulative failure probabilities). The two results are
    mathematically identical when the failed state is absorbing, so the
    action sequence must not contain replacements.

    ``actions`` is a sequence of (MaintenanceAction, inspected) pairs.
    Returns ``(general_form, reliability_form)``.
    """
    if initial_belief is None:
        belief = np.zeros(N_STATES)
        belief[0] = 1.0
    else:
        belief = np.asarray(initial_belief, dtype=float)
    for maint, _ in actions:
        if MaintenanceAction(maint) is MaintenanceAction.REPLACE:
            raise ValueError("the equivalence requires failure-preserving actions")

    totals = [0.0, 0.0]

    def recurse(b: np.ndarray, tau: int, t: int, weight: float) -> None:
        if t == len(actions):
            return
        maint, inspected = actions[t]
        b_a = apply_maintenance(b, maint)
        trans = model.augmented_transition_matrix(min(tau, model.rate_horizon))
        b_pred = predict_belief(b_a, trans)
        disc = weight * gamma**t
        # General form: expected instantaneous failure cost on arrival,
        # adjacency excluding the failed-to-failed self transition.
        arrival = float(np.sum(b_a[:FAILED] * trans[:FAILED, FAILED]))
        totals[0] += disc * failure_cost * arrival
        # Reliability form: increment of the cumulative failure probability.
        totals[1] += disc * failure_cost * (float(b_pred[FAILED]) - float(b_a[FAILED]))
        matrix = obs_model.matrix(inspected)
        for obs in range(matrix.shape[1]):
            numer = b_pred * matrix[:, obs]
            evidence = float(numer.sum())
            if evidence <= 0.0:
                continue
            recurse(numer / evidence, min(tau + 1, model.rate_horizon), t + 1, weight * evidence)

    recurse(belief, 1, 0, 1.0)
    return totals[0], totals[1]
