"""Shared fixtures, scaled configurations, and exact tiny-instance
builders for the test suite."""

from fractions import Fraction

import numpy as np
import pytest

from lcplan.belief import default_observation_model
from lcplan.config import default_env_config
from lcplan.costs import LossTable
from lcplan.deterioration import ComponentModel, builtin_type
from lcplan.env import EnvConfig
from lcplan.evaluate import TinyPomdp
from lcplan.system import Topology


@pytest.fixture(scope="session")
def default_config():
    return default_env_config()


def make_scaled_config(
    n_components=4,
    horizon=20,
    types=("III", "III", "III", "III"),
    budget=None,
    soft_constraints=(),
    discount=0.975,
    initial_belief=None,
):
    """Small system for fast tests: components split over two links whose
    joint failure fails the system (one link for 2 components)."""
    if n_components == 2:
        links = (frozenset({0, 1}),)
        cut_sets = (frozenset({0}),)
    elif n_components == 4:
        links = (frozenset({0, 1}), frozenset({2, 3}))
        cut_sets = (frozenset({0, 1}),)
    else:
        raise ValueError("scaled config supports 2 or 4 components")
    topology = Topology(links, cut_sets, types[:n_components])
    models = tuple(
        ComponentModel(
            builtin_type(label),
            partial_repair_cost=0.10 * {"I": 0.075, "II": 0.15, "III": 0.10}[label],
        )
        for label in topology.type_labels
    )
    return EnvConfig(
        topology=topology,
        models=models,
        obs_model=default_observation_model(),
        losses=LossTable.default(),
        horizon=horizon,
        discount=discount,
        budget=budget,
        soft_constraints=tuple(soft_constraints),
        initial_belief=initial_belief,
    )


@pytest.fixture()
def scaled_config():
    return make_scaled_config()


@pytest.fixture()
def tiny_config():
    return make_scaled_config(n_components=2, horizon=6, types=("III", "II"))


def scaled_train_config(episodes=2000):
    """Trainer settings used by the scaled acceptance runs: exploration
    annealed within the run and the learning-rate drop at the midpoint."""
    from lcplan.ddmac import TrainConfig

    return TrainConfig(
        episodes=episodes,
        batch_size=32,
        buffer_capacity=300_000,
        explore_anneal_episodes=max(1, int(episodes * 0.6)),
        lr_drop_episode=episodes // 2,
        updates_per_step=2,
    )


def rational_simplex(rng, n, denom=16):
    """Exactly row-stochastic rational vector with denominator ``denom``."""
    counts = rng.multinomial(denom, np.full(n, 1.0 / n))
    return [Fraction(int(c), denom) for c in counts]


def rational_stochastic(rng, rows, cols, denom=16):
    return [rational_simplex(rng, cols, denom) for _ in range(rows)]


def product_channel(obs_default, obs_extra):
    """Joint observation matrix of two conditionally independent channels;
    the joint refines the default channel, which makes inspection readings
    genuinely additional information."""
    joint = []
    for row_d, row_e in zip(obs_default, obs_extra):
        joint.append([pd * pe for pd in row_d for pe in row_e])
    return joint


def make_tiny_instance(rng, n_states=3, horizon=3, gamma=Fraction(39, 40)):
    """Random exactly-rational single-unit instance with paired
    (default-only, default-plus-inspection) observation actions.

    Actions: 0 = keep/no-inspect, 1 = keep/inspect, 2 = repair/no-inspect,
    3 = repair/inspect. Returns (instance, voi_pairs, horizon).
    """
    identity = [
        [Fraction(int(i == j)) for j in range(n_states)] for i in range(n_states)
    ]
    # A repair matrix biased toward state 0.
    repair = []
    for i in range(n_states):
        row = [Fraction(0)] * n_states
        row[max(0, i - 1)] = Fraction(3, 4)
        row[i] += Fraction(1, 4)
        repair.append(row)
    trans = rational_stochastic(rng, n_states, n_states, denom=8)
    obs_default = rational_stochastic(rng, n_states, 2, denom=4)
    obs_extra = rational_stochastic(rng, n_states, 2, denom=4)
    obs_joint = product_channel(obs_default, obs_extra)
    inspect_cost = Fraction(int(rng.integers(0, 4)), 100)
    repair_cost = Fraction(int(rng.integers(1, 6)), 20)
    c_per = [Fraction(0)] + [
        Fraction(int(rng.integers(0, 4)), 8) for _ in range(n_states - 1)
    ]
    c_inst = [Fraction(0)] + [
        Fraction(int(rng.integers(0, 9)), 4) for _ in range(n_states - 1)
    ]
    instance = TinyPomdp(
        maint=[identity, identity, repair, repair],
        trans=[trans, trans, trans, trans],
        obs=[obs_default, obs_joint, obs_default, obs_joint],
        cost_now=[Fraction(0), Fraction(0), repair_cost, repair_cost],
        cost_delayed=[Fraction(0), inspect_cost, Fraction(0), inspect_cost],
        c_per=c_per,
        c_inst=c_inst,
        gamma=gamma,
    )
    return instance, [(0, 1), (2, 3)], horizon
