"""Non-stationary damage deterioration models for a single component.

Damage states are indexed 0..4 = {intact, minor, major, severe, failed}.
The failed state is absorbing under the trivial maintenance action.
Per-step transition rates depend on a 1-based rate index ``tau`` that
saturates at the component's rate horizon; off-diagonal entries are
interpolated linearly between the initial-rate table (tau = 1) and the
final-rate table (tau = rate_horizon).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np

N_DAMAGE_STATES = 4
N_STATES = 5
INTACT, MINOR, MAJOR, SEVERE, FAILED = range(N_STATES)
DEFAULT_RATE_HORIZON = 50

DAMAGE_STATE_NAMES = ("intact", "minor", "major", "severe", "failed")

# Off-diagonal rate order used throughout: (p12, p13, p14, p23, p24, p34),
# i.e. the strictly upper-triangular entries of the 4x4 damage block read
# row by row. Deterioration is ordered: a component never improves on its
# own, so the lower triangle is identically zero.
_RATE_SLOTS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# Built-in dataset: (initial rates, final rates, failure probabilities)
# for the three deterioration severities.
_BUILTIN = {
    "I": (
        (0.0129, 0.0072, 0.0008, 0.0102, 0.0038, 0.0092),
        (0.0618, 0.0512, 0.0036, 0.0905, 0.0091, 0.0768),
        (0.0019, 0.0067, 0.0115, 0.0177),
    ),
    "II": (
        (0.0311, 0.0096, 0.0014, 0.0283, 0.0057, 0.0281),
        (0.0862, 0.0868, 0.0051, 0.1219, 0.0121, 0.1091),
        (0.0028, 0.0076, 0.0163, 0.0219),
    ),
    "III": (
        (0.0428, 0.0229, 0.0033, 0.0406, 0.0095, 0.0328),
        (0.1347, 0.0669, 0.0098, 0.1665, 0.0244, 0.1462),
        (0.0088, 0.0210, 0.0449, 0.0564),
    ),
}


class MaintenanceAction(IntEnum):
    """Component-level maintenance choices."""

    NO_REPAIR = 0
    PARTIAL_REPAIR = 1
    REPLACE = 2


# Partial repair sends damage states one step back; intact and failed are
# fixed points (repairs have no effect on failed components).
PARTIAL_REPAIR_DEST = np.array([INTACT, INTACT, MINOR, MAJOR, FAILED])
PARTIAL_REPAIR_DEST.setflags(write=False)


def _rates_to_offdiag(rates) -> np.ndarray:
    """6-vector of upper-triangular rates -> 4x4 matrix with zero diagonal."""
    m = np.zeros((N_DAMAGE_STATES, N_DAMAGE_STATES))
    for value, (i, j) in zip(rates, _RATE_SLOTS):
        m[i, j] = value
    return m


@dataclass(frozen=True)
class DeteriorationType:
    """One severity class: endpoint transition rates plus failure probabilities.

    ``initial_rates`` and ``final_rates`` hold the six off-diagonal damage
    transition probabilities (p12, p13, p14, p23, p24, p34) at rate index 1
    and at the rate horizon. ``failure_probs`` holds the per-step failure
    probability for each of the four non-failed damage states.
    """

    label: str
    initial_rates: tuple[float, ...]
    final_rates: tuple[float, ...]
    failure_probs: tuple[float, ...]

    def __post_init__(self):
        for name, rates in (
            ("initial_rates", self.initial_rates),
            ("final_rates", self.final_rates),
        ):
            if len(rates) != 6:
                raise ValueError(f"{name} needs 6 off-diagonal entries, got {len(rates)}")
            if any(not 0.0 <= r <= 1.0 for r in rates):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            offdiag = _rates_to_offdiag(rates)
            row_sums = offdiag.sum(axis=1)
            if np.any(row_sums > 1.0 + 1e-12):
                raise ValueError(f"{name}: off-diagonal row sum exceeds 1 ({row_sums})")
        if len(self.failure_probs) != 4:
            raise ValueError("failure_probs needs one entry per non-failed damage state")
        if any(not 0.0 <= p <= 1.0 for p in self.failure_probs):
            raise ValueError("failure_probs must lie in [0, 1]")


def builtin_type(label: str) -> DeteriorationType:
    """Deterioration severity from the built-in dataset ('I', 'II' or 'III')."""
    try:
        initial, final, fail = _BUILTIN[label]
    except KeyError:
        raise KeyError(
            f"unknown deterioration type {label!r}; available: {sorted(_BUILTIN)}"
        ) from None
    return DeteriorationType(label, initial, final, fail)


def builtin_labels() -> tuple[str, ...]:
    return tuple(sorted(_BUILTIN))


@dataclass(frozen=True)
class ComponentModel:
    """Deterioration dynamics plus intervention cost parameters of one component.

    Costs are in system-rebuild-cost units. The transition stacks are built
    once on first use and shared read-only afterwards, so a model instance
    may be used concurrently from many rollout workers.
    """

    det_type: DeteriorationType
    rate_horizon: int = DEFAULT_RATE_HORIZON
    replacement_cost: float = 0.10
    partial_repair_cost: float = 0.0075
    inspection_cost: float = 0.0015

    def __post_init__(self):
        if self.rate_horizon < 1:
            raise ValueError("rate_horizon must be >= 1")
        for name in ("replacement_cost", "partial_repair_cost", "inspection_cost"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    @cached_property
    def _damage_stack(self) -> np.ndarray:
        """(rate_horizon, 4, 4) row-stochastic damage transition matrices."""
        h = self.rate_horizon
        # Convex weights keep the endpoints bit-exact against the rate tables.
        w = np.zeros(h) if h == 1 else np.arange(h) / (h - 1)
        initial = _rates_to_offdiag(self.det_type.initial_rates)
        final = _rates_to_offdiag(self.det_type.final_rates)
        stack = (1.0 - w)[:, None, None] * initial + w[:, None, None] * final
        diag_idx = np.arange(N_DAMAGE_STATES)
        stack[:, diag_idx, diag_idx] = 1.0 - stack.sum(axis=2)
        stack.setflags(write=False)
        return stack

    @cached_property
    def _augmented_stack(self) -> np.ndarray:
        """(rate_horizon, 5, 5) matrices with failure-first composition.

        From a non-failed damage state the component fails with the Table-3
        probability of that state; otherwise it moves among damage states
        per the 4x4 matrix. The failed state is absorbing.
        """
        p_fail = np.asarray(self.det_type.failure_probs)
        out = np.zeros((self.rate_horizon, N_STATES, N_STATES))
        out[:, :N_DAMAGE_STATES, :N_DAMAGE_STATES] = (
            (1.0 - p_fail)[None, :, None] * self._damage_stack
        )
        out[:, :N_DAMAGE_STATES, FAILED] = p_fail[None, :]
        out[:, FAILED, FAILED] = 1.0
        out.setflags(write=False)
        return out

    def _check_tau(self, tau: int) -> None:
        if not 1 <= tau <= self.rate_horizon:
            raise ValueError(f"rate index {tau} outside [1, {self.rate_horizon}]")

    def damage_transition_matrix(self, tau: int) -> np.ndarray:
        """4x4 row-stochastic damage transition matrix at rate index ``tau``."""
        self._check_tau(tau)
        return self._damage_stack[tau - 1]

    def augmented_transition_matrix(self, tau: int) -> np.ndarray:
        """5x5 row-stochastic matrix including the absorbing failed state."""
        self._check_tau(tau)
        return self._augmented_stack[tau - 1]

    def augmented_stack(self) -> np.ndarray:
        """All rate indices at once, shape (rate_horizon, 5, 5). Read-only."""
        return self._augmented_stack

    def maintenance_cost(self, action: MaintenanceAction | int) -> float:
        action = MaintenanceAction(action)
        if action is MaintenanceAction.PARTIAL_REPAIR:
            return self.partial_repair_cost
        if action is MaintenanceAction.REPLACE:
            return self.replacement_cost
        return 0.0


def check_simplex(belief: np.ndarray, tol: float = 1e-9) -> None:
    """Raise if ``belief`` is not a distribution over the 5 component states."""
    belief = np.asarray(belief)
    if belief.shape != (N_STATES,):
        raise ValueError(f"belief must have shape ({N_STATES},), got {belief.shape}")
    if np.any(belief < -tol) or abs(float(belief.sum()) - 1.0) > tol:
        raise ValueError("belief must lie on the probability simplex")


def apply_maintenance(state_or_belief, action: MaintenanceAction | int):
    """Maintenance effect on a damage state or a belief 5-vector.

    Returns the intermediate (post-maintenance, pre-transition) state or
    belief. Replacement leaves the input unchanged here: a replaced
    component arrives at the intact state at the next step with certainty,
    bypassing the deterioration transition, which the prediction step is
    responsible for.
    """
    action = MaintenanceAction(action)
    if isinstance(state_or_belief, (int, np.integer)):
        state = int(state_or_belief)
        if not 0 <= state < N_STATES:
            raise ValueError(f"damage state {state} outside 0..{N_STATES - 1}")
        if action is MaintenanceAction.PARTIAL_REPAIR:
            return int(PARTIAL_REPAIR_DEST[state])
        return state
    belief = np.asarray(state_or_belief, dtype=float)
    check_simplex(belief)
    if action is MaintenanceAction.PARTIAL_REPAIR:
        out = np.zeros(N_STATES)
        out[INTACT] = belief[INTACT] + belief[MINOR]
        out[MINOR] = belief[MAJOR]
        out[MAJOR] = belief[SEVERE]
        out[FAILED] = belief[FAILED]
        return out
    return belief.copy()
