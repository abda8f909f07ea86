"""Hard budget constraints and soft life-cycle constraint accounting.

Budget caps are enforced on every realization: the in-cycle expenditure
state is part of the augmented environment state and actions that would
exceed the cap are coerced to the trivial decision. Soft constraints hold
in expectation and enter the objective through Lagrange multipliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LIFECYCLE_RISK = "lifecycle_risk"
CHANCE = "chance"
FAILURE_PROB = "failure_prob"
_SOFT_KINDS = (LIFECYCLE_RISK, CHANCE, FAILURE_PROB)


@dataclass(frozen=True)
class BudgetSpec:
    """Per-cycle spending cap on maintenance plus inspection expenses."""

    cap: float
    cycle_length: int
    discounted_accounting: bool = True

    def __post_init__(self):
        if self.cap < 0.0:
            raise ValueError("budget cap must be nonnegative")
        if self.cycle_length < 1:
            raise ValueError("budget cycle length must be >= 1")


@dataclass(frozen=True)
class BudgetState:
    """Accounted expenditure within the current budget cycle."""

    spent: float = 0.0
    cycle_index: int = 0

    def remaining_fraction(self, spec: BudgetSpec | None) -> float:
        """Fraction of the cycle budget still available; 1.0 when
        unconstrained. This is the normalized budget signal fed to policy
        networks."""
        if spec is None or math.isinf(spec.cap):
            return 1.0
        if spec.cap == 0.0:
            return 0.0
        return (spec.cap - self.spent) / spec.cap


def step_expenditure(
    c_m: float, c_i: float, t: int, gamma: float, spec: BudgetSpec
) -> float:
    """Budget-accounted expenditure of one step's action costs.

    Inspection carries one discount factor (it is realized after the
    transition); under discounted accounting the whole term is additionally
    weighted by gamma**t, matching the accounting of the augmented state.
    """
    g = c_m + gamma * c_i
    if spec.discounted_accounting:
        g *= gamma**t
    return g


def gate(action_codes: np.ndarray, state: BudgetState, g_h: float, spec: BudgetSpec):
    """Coerce the joint action to the trivial decision when the prospective
    expenditure would exceed the cycle cap.

    Returns ``(effective action codes, allowed flag)``. When not allowed,
    neither maintenance nor inspection costs are incurred or accounted.
    """
    if state.spent + g_h <= spec.cap:
        return action_codes, True
    return np.zeros_like(action_codes), False


def advance_budget(
    state: BudgetState, counted: float, t_next: int, spec: BudgetSpec
) -> BudgetState:
    """Accumulate the counted expenditure and reset at cycle boundaries."""
    spent = state.spent + counted
    if not spent <= spec.cap:
        raise RuntimeError(
            f"budget invariant violated: {spent} > cap {spec.cap}; gate must prevent this"
        )
    cycle = t_next // spec.cycle_length
    if cycle != state.cycle_index:
        spent = 0.0
    return BudgetState(spent, cycle)


@dataclass(frozen=True)
class SoftConstraintSpec:
    """One expectation constraint with its Lagrange multiplier seed.

    Kinds: ``lifecycle_risk`` bounds the expected discounted life-cycle
    risk by ``threshold``; ``chance`` bounds the probability that the
    cumulative cost exceeds ``critical_value``; ``failure_prob`` bounds the
    undiscounted cumulative system failure probability.
    """

    kind: str
    threshold: float
    multiplier: float = 0.0
    critical_value: float | None = None

    def __post_init__(self):
        if self.kind not in _SOFT_KINDS:
            raise ValueError(f"unknown soft constraint kind {self.kind!r}")
        if self.multiplier < 0.0:
            raise ValueError("multipliers must be nonnegative")
        if self.kind in (CHANCE, FAILURE_PROB) and not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"{self.kind} threshold must be a probability")
        if self.kind == LIFECYCLE_RISK and self.threshold < 0.0:
            raise ValueError("risk threshold must be nonnegative")
        if self.kind == CHANCE and self.critical_value is None:
            raise ValueError("chance constraints need a critical cost value")

    def return_discount(self, gamma: float) -> float:
        """Discount used when accumulating this constraint's returns. Risk
        is discounted like the objective; the probability-flavored kinds
        are undiscounted."""
        return gamma if self.kind == LIFECYCLE_RISK else 1.0


def soft_constraint_step(
    spec: SoftConstraintSpec,
    damage_cost: float,
    terminal: bool,
    running_cost: float,
    failure_increment: float,
) -> float:
    """Per-step auxiliary cost g of one soft constraint."""
    if spec.kind == LIFECYCLE_RISK:
        return damage_cost
    if spec.kind == CHANCE:
        return float(terminal and running_cost > spec.critical_value)
    return failure_increment


def lagrangian_penalty(multipliers, g_values) -> float:
    """Dot product of multipliers with the step's auxiliary costs."""
    lam = np.asarray(multipliers, dtype=float)
    g = np.asarray(g_values, dtype=float)
    if lam.shape != g.shape:
        raise ValueError("multipliers and constraint values must align")
    if np.any(lam < 0.0):
        raise ValueError("multipliers must be nonnegative")
    return float(np.dot(lam, g))
