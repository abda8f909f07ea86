"""Monte-Carlo policy evaluation, value-of-information estimates, and an
exact expectimax oracle for enumerable instances.

The evaluator reports the discounted life-cycle cost decomposition with
standard errors, per-step action frequencies, and the mean system
failure-probability trajectory. The expectimax oracle solves tiny belief
MDPs exactly (optionally in rational arithmetic) and backs the VoI
non-negativity checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .env import (
    ACTION_SET,
    N_ACTIONS,
    Env,
    EnvConfig,
    JointAction,
    Policy,
    episode_rngs,
    rollout,
)
from .system import SystemEvent

_IDENTITY_TOL = 1e-10


@dataclass
class EvalReport:
    """Aggregate statistics of seeded evaluation episodes."""

    n_episodes: int
    discount: float
    mean_total: float
    se_total: float | None
    mean_maintenance: float
    se_maintenance: float | None
    mean_inspection: float
    se_inspection: float | None
    mean_shutdown: float
    se_shutdown: float | None
    mean_risk: float
    se_risk: float | None
    action_freq: np.ndarray  # (n_components, horizon, N_ACTIONS)
    failure_prob_mean: np.ndarray  # (horizon,), post-transition Pr(FS) per step
    constraint_stats: dict

    def check_identity(self) -> float:
        """The evaluator must satisfy the cost-decomposition identity
        mean_total = C_M + C_S + gamma*(C_I + R) on its estimators."""
        recomposed = (
            self.mean_maintenance
            + self.mean_shutdown
            + self.discount * (self.mean_inspection + self.mean_risk)
        )
        gap = abs(self.mean_total - recomposed)
        if gap > _IDENTITY_TOL:
            raise AssertionError(f"cost decomposition identity violated by {gap}")
        return gap


def _mean_se(values: np.ndarray):
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1) / np.sqrt(len(values)))


def evaluate(policy: Policy, config: EnvConfig, n_episodes: int, seed) -> EvalReport:
    """Unbiased seeded Monte-Carlo estimates of the life-cycle costs."""
    if n_episodes < 1:
        raise ValueError("need at least one evaluation episode")
    n = config.n_components
    horizon = config.horizon
    totals = np.zeros(n_episodes)
    parts = {k: np.zeros(n_episodes) for k in ("maintenance", "inspection", "shutdown", "risk")}
    action_counts = np.zeros((n, horizon, N_ACTIONS))
    failure_prob = np.zeros(horizon)
    risk_returns = np.zeros(n_episodes)
    budget_violations = 0
    env = Env(config)
    for ep in range(n_episodes):
        ledger, traj = rollout(
            policy, config, seed, episode=ep, record_trajectory=True, env=env
        )
        comp = ledger.components()
        totals[ep] = comp["total"]
        for key in parts:
            parts[key][ep] = comp[key]
        for step in traj:
            t = step["t"]
            action_counts[np.arange(n), t, step["actions"]] += 1.0
            failure_prob[t] += step["event_probs_next"][SystemEvent.FS]
        risk_returns[ep] = sum(
            config.discount ** step["t"] * step["costs"].damage for step in traj
        )
        if config.budget is not None:
            cap = config.budget.cap
            spent = [step["budget_spent"] for step in traj]
            if any(s > cap for s in spent):
                budget_violations += 1

    mean_total, se_total = _mean_se(totals)
    stats = {
        "mean_risk_return": float(np.mean(risk_returns)),
        "budget_violations": budget_violations,
    }
    for spec in config.soft_constraints:
        if spec.kind == "lifecycle_risk":
            stats["risk_cap"] = spec.threshold
            stats["risk_cap_satisfied"] = float(np.mean(risk_returns)) <= spec.threshold

    m_m, se_m = _mean_se(parts["maintenance"])
    m_i, se_i = _mean_se(parts["inspection"])
    m_s, se_s = _mean_se(parts["shutdown"])
    m_r, se_r = _mean_se(parts["risk"])
    report = EvalReport(
        n_episodes=n_episodes,
        discount=config.discount,
        mean_total=mean_total,
        se_total=se_total,
        mean_maintenance=m_m,
        se_maintenance=se_m,
        mean_inspection=m_i,
        se_inspection=se_i,
        mean_shutdown=m_s,
        se_shutdown=se_s,
        mean_risk=m_r,
        se_risk=se_r,
        action_freq=action_counts / n_episodes,
        failure_prob_mean=failure_prob / n_episodes,
        constraint_stats=stats,
    )
    report.check_identity()
    return report


# -- step-wise value of information ------------------------------------


def voi_step(
    policy: Policy,
    config: EnvConfig,
    beliefs: np.ndarray,
    taus: np.ndarray,
    time: int,
    maintenance_codes: np.ndarray,
    inspection_mask: np.ndarray,
    n: int,
    seed,
):
    """Monte-Carlo step-wise value of information of an inspection pattern.

    Compares expected continuation costs of the supplied policy after the
    always-available observation against the continuation after additional
    inspection readings, holding the maintenance action fixed. Returns
    ``(voi, net_voi)`` where the net value subtracts the inspection cost.
    """
    maintenance_codes = np.asarray(maintenance_codes, dtype=int)
    inspection_mask = np.asarray(inspection_mask, dtype=bool)
    if np.any(_inspections_of(maintenance_codes)):
        raise ValueError("maintenance_codes must not already include inspections")
    with_codes = maintenance_codes.copy()
    replace_mask = with_codes == 4
    addable = inspection_mask & ~replace_mask  # replacement excludes inspection
    with_codes[addable] += 1

    value_default = _continuation_value(policy, config, beliefs, taus, time, maintenance_codes, n, seed)
    value_inspect = _continuation_value(policy, config, beliefs, taus, time, with_codes, n, seed)
    voi = value_default - value_inspect
    inspection_cost = float(
        sum(config.models[c].inspection_cost for c in np.flatnonzero(addable))
    )
    return voi, voi - inspection_cost


def _inspections_of(codes: np.ndarray) -> np.ndarray:
    return np.array([ACTION_SET[c][1] for c in codes])


def _continuation_value(policy, config, beliefs, taus, time, codes, n, seed) -> float:
    """Mean discounted cost of taking ``codes`` now and following ``policy``
    afterwards, averaged over observation branches by simulation."""
    values = np.zeros(n)
    for k in range(n):
        env_rng, action_rng = episode_rngs(seed, k)
        env = Env(config)
        view = env.reset_state(beliefs, taus, time, rng=env_rng)
        result = env.step(JointAction(codes))
        view = result.view
        total = 0.0
        power = 1.0
        while not env.done:
            dists = np.asarray(policy.action_distributions(view))
            u = action_rng.random(config.n_components)
            acts = np.minimum(
                (u[:, None] >= np.cumsum(dists, axis=1)).sum(axis=1), N_ACTIONS - 1
            ).astype(int)
            step = env.step(JointAction(acts))
            power *= config.discount
            total += power * step.costs.total(config.discount)
            view = step.view
        values[k] = total
    return float(values.mean())


# -- exact expectimax oracle for tiny instances -------------------------


class InstanceTooLargeError(ValueError):
    """The instance exceeds the exact-enumeration size cap."""


MAX_STATES = 5
MAX_OBS = 5
MAX_ACTIONS = 5
MAX_HORIZON = 4


@dataclass
class TinyPomdp:
    """A fully enumerable single-unit belief MDP.

    Per action: a maintenance matrix (belief transform before the
    transition), an environment transition matrix, an observation matrix,
    an immediate cost, and a delayed cost (inspection-style, charged with
    one discount factor). State damage losses are perpetual (occupancy) and
    instantaneous (arrival, adjacency-weighted by "state changed").
    Matrices may hold Fractions for exact arithmetic.
    """

    maint: list  # per action: (S, S) row-stochastic
    trans: list  # per action: (S, S) row-stochastic
    obs: list  # per action: (S, K_a)
    cost_now: list
    cost_delayed: list
    c_per: list  # (S,)
    c_inst: list  # (S,)
    gamma: object = 1.0

    @property
    def n_states(self) -> int:
        return len(self.c_per)

    @property
    def n_actions(self) -> int:
        return len(self.trans)

    def check_size(self, horizon: int) -> None:
        if (
            self.n_states > MAX_STATES
            or self.n_actions > MAX_ACTIONS
            or any(len(row[0]) > MAX_OBS for row in self.obs)
            or horizon > MAX_HORIZON
        ):
            raise InstanceTooLargeError(
                "instance exceeds the exact enumeration caps "
                f"(|S|<={MAX_STATES}, |A|<={MAX_ACTIONS}, |O|<={MAX_OBS}, T<={MAX_HORIZON})"
            )


def _matvec(belief, matrix):
    cols = len(matrix[0])
    return [sum(belief[s] * matrix[s][j] for s in range(len(belief))) for j in range(cols)]


def _step_damage(tiny: TinyPomdp, b_a, action: int):
    """Expected damage cost of one transition: perpetual on occupancy plus
    instantaneous on arrival at a different state."""
    trans = tiny.trans[action]
    total = 0 * tiny.c_per[0]
    for sa in range(tiny.n_states):
        if not b_a[sa]:
            continue
        for s2 in range(tiny.n_states):
            p = trans[sa][s2]
            if not p:
                continue
            charge = tiny.c_per[s2]
            if s2 != sa:
                charge = charge + tiny.c_inst[s2]
            total = total + b_a[sa] * p * charge
    return total


def step_cost(tiny: TinyPomdp, belief, action: int):
    """Expected one-step cost at a belief: immediate part plus discounted
    delayed and damage parts."""
    b_a = _matvec(belief, tiny.maint[action])
    damage = _step_damage(tiny, b_a, action)
    return tiny.cost_now[action] + tiny.gamma * (tiny.cost_delayed[action] + damage)


def _posteriors(tiny: TinyPomdp, belief, action: int):
    """(evidence, posterior) pairs over the action's observation symbols."""
    b_a = _matvec(belief, tiny.maint[action])
    b_pred = _matvec(b_a, tiny.trans[action])
    obs = tiny.obs[action]
    n_obs = len(obs[0])
    out = []
    for o in range(n_obs):
        numer = [b_pred[s] * obs[s][o] for s in range(tiny.n_states)]
        evidence = sum(numer)
        if evidence:
            out.append((evidence, [x / evidence for x in numer]))
    return out

def expectimax_value(tiny: TinyPomdp, belief, horizon: int):
    """Exact optimal value of a belief by full-tree enumeration."""
    tiny.check_size(horizon)
    if horizon == 0:
        return 0 * tiny.c_per[0]
    best = None
    for action in range(tiny.n_actions):
        value = expectimax_action_value(tiny, belief, action, horizon)
        if best is None or value < best:
            best = value
    return best


def expectimax_action_value(tiny: TinyPomdp, belief, action: int, horizon: int):
    """Exact Q-value of one action at a belief."""
    tiny.check_size(horizon)
    value = step_cost(tiny, belief, action)
    if horizon > 1:
        cont = 0 * tiny.c_per[0]
        for evidence, posterior in _posteriors(tiny, belief, action):
            cont = cont + evidence * expectimax_value(tiny, posterior, horizon - 1)
        value = value + tiny.gamma * cont
    return value


def voi_step_exact(
    tiny: TinyPomdp, belief, action_default: int, action_inspect: int, horizon: int
):
    """Exact step-wise VoI of swapping an action for its inspecting twin.

    Both actions must share their maintenance and transition matrices; the
    inspecting one carries a refined observation channel. The continuation
    values are the optimal expectimax values. Returns ``(voi, net_voi)``
    with the net value subtracting the incremental delayed cost.
    """
    if tiny.maint[action_default] != tiny.maint[action_inspect] or (
        tiny.trans[action_default] != tiny.trans[action_inspect]
    ):
        raise ValueError("VoI compares actions differing only in observation")
    values = []
    for action in (action_default, action_inspect):
        total = 0 * tiny.c_per[0]
        for evidence, posterior in _posteriors(tiny, belief, action):
            total = total + evidence * expectimax_value(tiny, posterior, horizon - 1)
        values.append(total)
    voi = values[0] - values[1]
    extra_cost = tiny.cost_delayed[action_inspect] - tiny.cost_delayed[action_default]
    return voi, voi - extra_cost


def as_fraction_matrix(rows) -> list:
    return [[Fraction(x).limit_denominator(10**6) for x in row] for row in rows]
