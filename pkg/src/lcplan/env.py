"""Episodic life-cycle simulator over a multi-component system.

One step follows the canonical ordering: budget gate, belief-expected step
costs, hidden-state maintenance effect, environment transition (bypassed
for replacements), observation sampling, Bayesian belief update, then
advancing the rate indices, time, and budget state. Costs entering replay
tuples are belief-expected; hidden states only drive observation
generation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .belief import InconsistentObservationError, ObservationModel
from .constraints import (
    BudgetSpec,
    BudgetState,
    SoftConstraintSpec,
    advance_budget,
    gate,
    soft_constraint_step,
    step_expenditure,
)
from .costs import (
    CostLedger,
    LossTable,
    StepCosts,
    interval_risk,
    shutdown_cost,
    shutdown_cost_incremental,
)
from .deterioration import (
    FAILED,
    INTACT,
    N_STATES,
    PARTIAL_REPAIR_DEST,
    ComponentModel,
    MaintenanceAction,
)
from .system import SystemEvent, Topology, link_failure_probs, system_event_distribution

# The per-component action catalog: replacement combined with inspection is
# not representable (inspecting a just-replaced component is pointless).
ACTION_SET: tuple[tuple[MaintenanceAction, bool], ...] = (
    (MaintenanceAction.NO_REPAIR, False),
    (MaintenanceAction.NO_REPAIR, True),
    (MaintenanceAction.PARTIAL_REPAIR, False),
    (MaintenanceAction.PARTIAL_REPAIR, True),
    (MaintenanceAction.REPLACE, False),
)
N_ACTIONS = len(ACTION_SET)
TRIVIAL_CODE = 0
ACTION_LABELS = ("none", "inspect", "partial", "partial+inspect", "replace")

_MAINT_OF = np.array([int(m) for m, _ in ACTION_SET])
_INSP_OF = np.array([i for _, i in ACTION_SET], dtype=bool)

# Belief transform of a partial repair (source state x destination state).
_M_PARTIAL = np.zeros((N_STATES, N_STATES))
for _src, _dst in enumerate(PARTIAL_REPAIR_DEST):
    _M_PARTIAL[_src, _dst] = 1.0
_M_PARTIAL.setflags(write=False)


class LifecycleError(RuntimeError):
    """Stepping an episode past its planning horizon."""


@dataclass(frozen=True)
class JointAction:
    """One action code per control unit (component)."""

    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=int)
        if codes.ndim != 1:
            raise ValueError("joint action must be a flat code vector")
        if np.any(codes < 0) or np.any(codes >= N_ACTIONS):
            raise ValueError(f"action codes must lie in 0..{N_ACTIONS - 1}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @classmethod
    def trivial(cls, n_components: int) -> "JointAction":
        return cls(np.zeros(n_components, dtype=int))

    @classmethod
    def _wrap(cls, codes: np.ndarray) -> "JointAction":
        """Validation-free wrapper for internal hot paths whose codes are
        sampled from in-range distributions."""
        action = object.__new__(cls)
        object.__setattr__(action, "codes", codes)
        return action

    def maintenance(self) -> np.ndarray:
        return _MAINT_OF[self.codes]

    def inspections(self) -> np.ndarray:
        return _INSP_OF[self.codes]


@dataclass
class BeliefMatrix:
    """Per-component beliefs plus the observable side state."""

    probs: np.ndarray  # (n_components, 5)
    taus: np.ndarray  # (n_components,), 1-based rate indices
    time: int
    budget_remaining: float  # fraction of the cycle cap still available

    def component_failure_probs(self) -> np.ndarray:
        return self.probs[:, FAILED]

    def copy(self) -> "BeliefMatrix":
        return BeliefMatrix(
            self.probs.copy(), self.taus.copy(), self.time, self.budget_remaining
        )


@dataclass
class PolicyView:
    """Everything a policy may condition on at one decision step."""

    beliefs: BeliefMatrix
    ages: np.ndarray  # steps since last replacement
    inspected_last: np.ndarray  # bool, inspection taken at the previous step
    horizon: int
    rate_horizon: int
    _features: np.ndarray | None = None

    @property
    def n_components(self) -> int:
        return self.beliefs.probs.shape[0]

    def features(self) -> np.ndarray:
        """Network input: flattened beliefs, normalized rate indices,
        normalized time, and the remaining budget fraction."""
        if self._features is not None:
            return self._features
        b = self.beliefs
        self._features = np.concatenate(
            [
                b.probs.ravel(),
                b.taus / self.rate_horizon,
                [b.time / self.horizon, b.budget_remaining],
            ]
        )
        return self._features


def feature_dim(n_components: int) -> int:
    return n_components * (N_STATES + 1) + 2


class Policy(Protocol):
    def action_distributions(self, view: PolicyView) -> np.ndarray:
        """Per-agent action distributions, shape (n_components, N_ACTIONS)."""
        ...


@dataclass
class ReplayTuple:
    """One stored interaction: inputs, action, behavior probabilities,
    belief-expected cost, soft-constraint values, successor inputs."""

    features: np.ndarray
    actions: np.ndarray
    mu: np.ndarray | None
    cost: float
    g_soft: np.ndarray
    next_features: np.ndarray
    terminal: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "features": self.features.tolist(),
                "actions": self.actions.tolist(),
                "mu": None if self.mu is None else self.mu.tolist(),
                "cost": self.cost,
                "g_soft": self.g_soft.tolist(),
                "next_features": self.next_features.tolist(),
                "terminal": self.terminal,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ReplayTuple":
        d = json.loads(text)
        return cls(
            features=np.array(d["features"], dtype=float),
            actions=np.array(d["actions"], dtype=int),
            mu=None if d["mu"] is None else np.array(d["mu"], dtype=float),
            cost=float(d["cost"]),
            g_soft=np.array(d["g_soft"], dtype=float),
            next_features=np.array(d["next_features"], dtype=float),
            terminal=bool(d["terminal"]),
        )


@dataclass
class EnvConfig:
    """Immutable description of one planning environment."""

    topology: Topology
    models: tuple[ComponentModel, ...]
    obs_model: ObservationModel
    losses: LossTable
    horizon: int = 50
    discount: float = 0.975
    budget: BudgetSpec | None = None
    soft_constraints: tuple[SoftConstraintSpec, ...] = ()
    initial_belief: np.ndarray | None = None  # default: intact with certainty
    shutdown_accounting: str = "literal"  # or "incremental": net out failed links

    def __post_init__(self):
        self.models = tuple(self.models)
        self.soft_constraints = tuple(self.soft_constraints)
        if self.shutdown_accounting not in ("literal", "incremental"):
            raise ValueError("shutdown_accounting must be literal or incremental")
        if self.horizon < 1:
            raise ValueError("planning horizon must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if len(self.models) != self.topology.n_components:
            raise ValueError("one component model per topology component required")
        horizons = {m.rate_horizon for m in self.models}
        if len(horizons) != 1:
            raise ValueError("components must share one rate horizon")
        if self.initial_belief is not None:
            self.initial_belief = np.asarray(self.initial_belief, dtype=float)

    @property
    def n_components(self) -> int:
        return self.topology.n_components

    @property
    def rate_horizon(self) -> int:
        return self.models[0].rate_horizon


@dataclass
class StepResult:
    replay: ReplayTuple
    view: PolicyView
    costs: StepCosts
    info: dict


def episode_rngs(master_seed: int, episode: int, streams: int = 2):
    """Independent per-episode generators, stable under any scheduling."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(episode,))
    return [np.random.default_rng(child) for child in seq.spawn(streams)]


class Env:
    """One episodic simulation instance. Not shared across workers."""

    def __init__(self, config: EnvConfig):
        self.config = config
        n = config.n_components
        self._n = n
        self._idx = np.arange(n)
        self._aug = np.stack([m.augmented_stack() for m in config.models])
        self._maint_cost = np.zeros((n, 3))
        for c, m in enumerate(config.models):
            self._maint_cost[c] = [0.0, m.partial_repair_cost, m.replacement_cost]
        self._insp_cost = np.array([m.inspection_cost for m in config.models])
        self._cdf_insp = np.cumsum(config.obs_model.with_inspection, axis=1)
        self._cdf_noinsp = np.cumsum(config.obs_model.without_inspection, axis=1)
        self._lik_insp = config.obs_model.with_inspection.T.copy()
        self._lik_noinsp = config.obs_model.without_inspection.T.copy()
        self._rng: np.random.Generator | None = None
        self._view_cache: PolicyView | None = None

    # -- lifecycle -----------------------------------------------------

    def reset(self, seed=None, rng: np.random.Generator | None = None) -> PolicyView:
        """Start a fresh episode; all components intact with certainty by
        default, or sampled from the configured initial belief."""
        self._rng = rng if rng is not None else np.random.default_rng(seed)
        n = self._n
        b0 = self.config.initial_belief
        if b0 is None:
            b0 = np.zeros(N_STATES)
            b0[INTACT] = 1.0
        cdf0 = np.cumsum(b0)
        u = self._rng.random(n)
        self._states = np.minimum(
            (u[:, None] >= cdf0[None, :]).sum(axis=1), N_STATES - 1
        ).astype(int)
        self._beliefs = np.tile(b0, (n, 1))
        self._taus = np.ones(n, dtype=int)
        self._ages = np.zeros(n, dtype=int)
        self._inspected_last = np.zeros(n, dtype=bool)
        self._t = 0
        self._budget = BudgetState()
        self._running_cost = 0.0
        self.ledger = CostLedger(self.config.discount)
        self._view_cache = self.view()
        return self._view_cache

    def reset_state(
        self,
        beliefs: np.ndarray,
        taus: np.ndarray,
        time: int,
        hidden_states: np.ndarray | None = None,
        ages: np.ndarray | None = None,
        budget: BudgetState | None = None,
        seed=None,
        rng: np.random.Generator | None = None,
    ) -> PolicyView:
        """Restart mid-life from an explicit belief state; hidden states are
        sampled from the beliefs when not given."""
        self._rng = rng if rng is not None else np.random.default_rng(seed)
        n = self._n
        self._beliefs = np.array(beliefs, dtype=float).reshape(n, N_STATES)
        self._taus = np.array(taus, dtype=int).reshape(n)
        if hidden_states is None:
            cdf = np.cumsum(self._beliefs, axis=1)
            u = self._rng.random(n)
            self._states = np.minimum((u[:, None] >= cdf).sum(axis=1), N_STATES - 1)
        else:
            self._states = np.array(hidden_states, dtype=int).reshape(n)
        self._ages = (
            np.zeros(n, dtype=int) if ages is None else np.array(ages, dtype=int)
        )
        self._inspected_last = np.zeros(n, dtype=bool)
        self._t = int(time)
        self._budget = budget if budget is not None else BudgetState()
        self._running_cost = 0.0
        self.ledger = CostLedger(self.config.discount)
        self._view_cache = self.view()
        return self._view_cache

    @property
    def t(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._t >= self.config.horizon

    def hidden_states(self) -> np.ndarray:
        return self._states.copy()

    def view(self) -> PolicyView:
        beliefs = BeliefMatrix(
            self._beliefs.copy(),
            self._taus.copy(),
            self._t,
            self._budget.remaining_fraction(self.config.budget),
        )
        return PolicyView(
            beliefs,
            self._ages.copy(),
            self._inspected_last.copy(),
            self.config.horizon,
            self.config.rate_horizon,
        )

    # -- dynamics ------------------------------------------------------

    def _event_dist(self, failure_probs: np.ndarray) -> np.ndarray:
        link_p = link_failure_probs(failure_probs, self.config.topology)
        return system_event_distribution(link_p, self.config.topology)

    def step(self, action) -> StepResult:
        if self.done:
            raise LifecycleError("episode is complete; call reset()")
        if not isinstance(action, JointAction):
            action = JointAction(np.asarray(action))
        cfg = self.config
        gamma = cfg.discount
        t = self._t
        features_before = self._view_cache.features()

        # (1) Budget gate: prospective action costs against the cycle cap.
        maint = action.maintenance()
        insp = action.inspections()
        c_m = float(self._maint_cost[self._idx, maint].sum())
        c_i = float(self._insp_cost[insp].sum())
        counted = 0.0
        allowed = True
        codes_eff = action.codes
        if cfg.budget is not None:
            g_h = step_expenditure(c_m, c_i, t, gamma, cfg.budget)
            codes_eff, allowed = gate(action.codes, self._budget, g_h, cfg.budget)
            if allowed:
                counted = g_h
            else:
                maint = _MAINT_OF[codes_eff]
                insp = _INSP_OF[codes_eff]
                c_m = 0.0
                c_i = 0.0

        # (2) Belief-expected step costs. Maintenance never moves failure
        # mass within a step (partial repairs leave failed components
        # failed, replacements resolve at the next step), so the pre- and
        # post-maintenance event distributions coincide.
        b = self._beliefs
        link_p = link_failure_probs(b[:, FAILED], cfg.topology)
        ev_now = system_event_distribution(link_p, cfg.topology)
        if maint.max() == 0:
            c_s = 0.0  # no maintenance anywhere: no scheduled shutdown
        elif cfg.shutdown_accounting == "incremental":
            c_s = shutdown_cost_incremental(maint, link_p, cfg.losses, cfg.topology)
        else:
            c_s = shutdown_cost(maint, ev_now, cfg.losses, cfg.topology)

        partial = maint == MaintenanceAction.PARTIAL_REPAIR
        replaced = maint == MaintenanceAction.REPLACE
        any_partial = bool(partial.any())
        any_replaced = bool(replaced.any())
        b_a = np.where(partial[:, None], b @ _M_PARTIAL, b) if any_partial else b
        trans = self._aug[self._idx, self._taus - 1]
        b_pred = np.einsum("ns,nst->nt", b_a, trans)
        if any_replaced:
            b_pred[replaced] = 0.0
            b_pred[replaced, INTACT] = 1.0
        ev_next = self._event_dist(b_pred[:, FAILED])
        c_d = interval_risk(ev_now, ev_next, cfg.losses)
        costs = StepCosts(c_m, c_i, c_s, c_d)

        # (3) Hidden-state maintenance effect.
        x = self._states
        x_a = np.where(partial, PARTIAL_REPAIR_DEST[x], x) if any_partial else x

        # (4) Environment transition; replacements arrive intact instead.
        rows = trans[self._idx, x_a]
        u = self._rng.random(self._n)
        x_next = np.minimum(
            (u[:, None] >= np.cumsum(rows, axis=1)).sum(axis=1), N_STATES - 1
        ).astype(int)
        if any_replaced:
            x_next[replaced] = INTACT

        # (5) Observation sampling from the matching channel.
        u_obs = self._rng.random(self._n)
        if insp.all():
            cdf = self._cdf_insp[x_next]
            obs = np.minimum((u_obs[:, None] >= cdf).sum(axis=1), N_STATES - 1)
        elif not insp.any():
            cdf = self._cdf_noinsp[x_next]
            obs = np.minimum((u_obs[:, None] >= cdf).sum(axis=1), 1)
        else:
            obs = np.empty(self._n, dtype=int)
            cdf = self._cdf_insp[x_next[insp]]
            obs[insp] = np.minimum(
                (u_obs[insp, None] >= cdf).sum(axis=1), N_STATES - 1
            )
            cdf = self._cdf_noinsp[x_next[~insp]]
            obs[~insp] = np.minimum((u_obs[~insp, None] >= cdf).sum(axis=1), 1)

        # (6) Bayesian belief update.
        if insp.all():
            lik = self._lik_insp[obs]
        elif not insp.any():
            lik = self._lik_noinsp[obs]
        else:
            lik = np.empty((self._n, N_STATES))
            lik[insp] = self._lik_insp[obs[insp]]
            lik[~insp] = self._lik_noinsp[obs[~insp]]
        numer = b_pred * lik
        evidence = numer.sum(axis=1)
        if np.any(evidence <= 0.0):
            bad = int(np.argmin(evidence))
            raise InconsistentObservationError(
                f"component {bad}: observation {obs[bad]} impossible under its belief"
            )
        b_next = numer / evidence[:, None]

        # Soft-constraint auxiliary values for this step.
        step_total = costs.total(gamma)
        self._running_cost += gamma**t * step_total
        terminal = t == cfg.horizon - 1
        failure_increment = float(
            ev_next[SystemEvent.FS] * (1.0 - ev_now[SystemEvent.FS])
        )
        g_soft = np.array(
            [
                soft_constraint_step(
                    spec, c_d, terminal, self._running_cost, failure_increment
                )
                for spec in cfg.soft_constraints
            ]
        )

        # (7) Advance rate indices, ages, time, and the budget state.
        self._states = x_next
        self._beliefs = b_next
        taus_next = np.minimum(self._taus + 1, cfg.rate_horizon)
        ages_next = self._ages + 1
        if any_replaced:
            taus_next[replaced] = 1
            ages_next[replaced] = 0
        self._taus = taus_next
        self._ages = ages_next
        self._inspected_last = insp.copy()
        self._t = t + 1
        if cfg.budget is not None:
            self._budget = advance_budget(self._budget, counted, self._t, cfg.budget)
        self.ledger.record(t, costs)

        next_view = self.view()
        self._view_cache = next_view
        replay = ReplayTuple(
            features=features_before,
            actions=action.codes.copy(),
            mu=None,
            cost=step_total,
            g_soft=g_soft,
            next_features=next_view.features(),
            terminal=terminal,
        )
        info = {
            "effective_codes": np.asarray(codes_eff).copy(),
            "gated": not allowed,
            "observations": obs,
            "hidden_states": x_next.copy(),
            "event_probs_now": ev_now,
            "event_probs_next": ev_next,
            "evidence": evidence,
            "budget_spent": self._budget.spent,
        }
        return StepResult(replay, next_view, costs, info)


def rollout(
    policy: Policy,
    config: EnvConfig,
    seed,
    episode: int = 0,
    record_trajectory: bool = False,
    env: "Env | None" = None,
):
    """Run one full episode under ``policy``. Returns ``(ledger, trajectory)``.

    Per-agent actions are sampled from the policy's distributions with a
    dedicated stream, so identical seeds reproduce identical episodes
    regardless of scheduling. Pass a prebuilt ``env`` (matching ``config``)
    to amortize setup across many episodes.
    """
    env_rng, action_rng = episode_rngs(seed, episode)
    if env is None:
        env = Env(config)
    view = env.reset(rng=env_rng)
    trajectory = []
    while not env.done:
        dists = np.asarray(policy.action_distributions(view))
        u = action_rng.random(config.n_components)
        codes = np.minimum(
            (u[:, None] >= np.cumsum(dists, axis=1)).sum(axis=1), N_ACTIONS - 1
        ).astype(int)
        hidden_before = env.hidden_states() if record_trajectory else None
        result = env.step(JointAction._wrap(codes))
        if record_trajectory:
            trajectory.append(
                {
                    "t": view.beliefs.time,
                    "beliefs": view.beliefs.probs,
                    "actions": codes,
                    "effective": result.info["effective_codes"],
                    "costs": result.costs,
                    "hidden_before": hidden_before,
                    "hidden_after": result.info["hidden_states"],
                    "observations": result.info["observations"],
                    "event_probs_now": result.info["event_probs_now"],
                    "event_probs_next": result.info["event_probs_next"],
                    "gated": result.info["gated"],
                    "budget_spent": result.info["budget_spent"],
                    "g_soft": result.replay.g_soft,
                }
            )
        view = result.view
    return env.ledger, trajectory


def trajectory_rows(trajectory) -> list[dict]:
    """Flatten a recorded trajectory to one row per component-step for CSV
    export. Component ids are 1-based in exported artifacts."""
    rows = []
    for step in trajectory:
        n = step["beliefs"].shape[0]
        for c in range(n):
            row = {
                "t": step["t"],
                "component": c + 1,
                "action": ACTION_LABELS[step["actions"][c]],
                "action_effective": ACTION_LABELS[step["effective"][c]],
            }
            for s in range(N_STATES):
                row[f"belief_{s}"] = step["beliefs"][c, s]
            row.update(
                {
                    "cost_maintenance": step["costs"].maintenance,
                    "cost_inspection": step["costs"].inspection,
                    "cost_shutdown": step["costs"].shutdown,
                    "cost_risk": step["costs"].damage,
                    "pr_system_failure": step["event_probs_next"][SystemEvent.FS],
                    "gated": int(step["gated"]),
                }
            )
            rows.append(row)
    return rows
