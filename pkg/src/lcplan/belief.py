"""Observation models and exact per-component Bayesian belief updating.

Two observation channels exist. When a component is inspected, the reading
is one of the five component states with the confusion probabilities of the
inspection technique. Without inspection only a 2-symbol channel remains:
``no-information`` or ``failed`` (failure is self-announcing).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .deterioration import (
    FAILED,
    INTACT,
    N_STATES,
    ComponentModel,
    MaintenanceAction,
    apply_maintenance,
    check_simplex,
)

# Symbols of the no-inspection channel.
OBS_NO_INFO = 0
OBS_FAILED = 1

_ROW_TOL = 1e-12


class InconsistentObservationError(ValueError):
    """An observation had zero probability under the predicted belief.

    This indicates a model/simulator mismatch and is never silently
    renormalized away.
    """


def point_mass(state: int) -> np.ndarray:
    out = np.zeros(N_STATES)
    out[state] = 1.0
    return out


def _check_rows(matrix: np.ndarray, name: str) -> None:
    if np.any(matrix < 0.0):
        raise ValueError(f"{name} has negative entries")
    sums = matrix.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > _ROW_TOL):
        raise ValueError(f"{name} rows must sum to 1, got {sums}")


@dataclass(frozen=True)
class ObservationModel:
    """Per-state observation probabilities for both channels.

    ``with_inspection`` is 5x5 (reading given state), ``without_inspection``
    is 5x2 over {no-information, failed}. In both, the failed state emits
    its own observation with probability 1.
    """

    with_inspection: np.ndarray
    without_inspection: np.ndarray

    def __post_init__(self):
        insp = np.array(self.with_inspection, dtype=float)
        noinsp = np.array(self.without_inspection, dtype=float)
        if insp.shape != (N_STATES, N_STATES):
            raise ValueError(f"with_inspection must be 5x5, got {insp.shape}")
        if noinsp.shape != (N_STATES, 2):
            raise ValueError(f"without_inspection must be 5x2, got {noinsp.shape}")
        _check_rows(insp, "with_inspection")
        _check_rows(noinsp, "without_inspection")
        if insp[FAILED, FAILED] != 1.0:
            raise ValueError("inspection must report the failed state with certainty")
        if noinsp[FAILED, OBS_FAILED] != 1.0:
            raise ValueError("failure must self-announce without inspection")
        insp.setflags(write=False)
        noinsp.setflags(write=False)
        object.__setattr__(self, "with_inspection", insp)
        object.__setattr__(self, "without_inspection", noinsp)

    def matrix(self, inspected: bool) -> np.ndarray:
        return self.with_inspection if inspected else self.without_inspection


def default_observation_model() -> ObservationModel:
    """Inspection confusion matrix and self-announcing failure channel."""
    with_inspection = [
        [0.84, 0.13, 0.02, 0.01, 0.0],
        [0.11, 0.77, 0.09, 0.03, 0.0],
        [0.02, 0.16, 0.70, 0.12, 0.0],
        [0.01, 0.02, 0.13, 0.84, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ]
    without_inspection = [
        [1.0, 0.0],
        [1.0, 0.0],
        [1.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
    ]
    return ObservationModel(with_inspection, without_inspection)


@dataclass
class ComponentBelief:
    """Posterior over the 5 component states plus observable side information."""

    probs: np.ndarray
    tau: int = 1
    component_id: int = 0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        check_simplex(self.probs)

    def copy(self) -> "ComponentBelief":
        return ComponentBelief(self.probs.copy(), self.tau, self.component_id)


def predict_belief(belief: np.ndarray, transition: np.ndarray) -> np.ndarray:
    """Linear prediction of a belief through a row-stochastic matrix."""
    return np.asarray(belief) @ np.asarray(transition)


def bayes_update(predicted: np.ndarray, likelihood: np.ndarray):
    """Posterior and evidence for one observation likelihood column.

    Returns ``(posterior, evidence)`` where evidence is the prior
    probability of the observation. Raises InconsistentObservationError on
    zero evidence.
    """
    numer = np.asarray(predicted) * np.asarray(likelihood)
    evidence = float(numer.sum())
    if evidence <= 0.0:
        raise InconsistentObservationError(
            "observation has zero probability under the predicted belief"
        )
    return numer / evidence, evidence


def predict(
    belief: ComponentBelief, action: MaintenanceAction | int, model: ComponentModel
) -> ComponentBelief:
    """Post-action, post-transition belief (before any observation).

    Replacement yields a point mass on the intact state: the component is
    restored by the end of the step, bypassing deterioration.
    """
    action = MaintenanceAction(action)
    if action is MaintenanceAction.REPLACE:
        probs = point_mass(INTACT)
    else:
        after = apply_maintenance(belief.probs, action)
        probs = predict_belief(after, model.augmented_transition_matrix(belief.tau))
    return ComponentBelief(probs, belief.tau, belief.component_id)


def update(
    belief_pred: ComponentBelief,
    observation: int,
    inspected: bool,
    obs_model: ObservationModel,
):
    """Bayesian update of a predicted belief given one observation symbol.

    Returns ``(posterior belief, evidence)``.
    """
    matrix = obs_model.matrix(inspected)
    if not 0 <= observation < matrix.shape[1]:
        raise ValueError(
            f"observation {observation} invalid for a {matrix.shape[1]}-symbol channel"
        )
    posterior, evidence = bayes_update(belief_pred.probs, matrix[:, observation])
    return (
        ComponentBelief(posterior, belief_pred.tau, belief_pred.component_id),
        evidence,
    )


def sample_observation(
    true_state: int,
    inspected: bool,
    obs_model: ObservationModel,
    rng: np.random.Generator,
) -> int:
    """Draw one observation symbol for a component in ``true_state``."""
    if not 0 <= true_state < N_STATES:
        raise ValueError(f"damage state {true_state} outside 0..{N_STATES - 1}")
    row = obs_model.matrix(inspected)[true_state]
    idx = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    return min(idx, len(row) - 1)
