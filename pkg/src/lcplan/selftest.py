"""Built-in oracle suites runnable without a test harness.

Each check recomputes a core quantity through an independent brute-force
route and compares: Bayesian filtering against direct forward filtering,
system event probabilities against exhaustive link-state enumeration, the
failure-only risk identity, and network gradients against central finite
differences.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .belief import bayes_update, default_observation_model, predict_belief
from .costs import failure_only_risk_oracle
from .deterioration import MaintenanceAction, builtin_type, ComponentModel
from .neural import LINEAR, SOFTMAX, Mlp
from .system import (
    classify_outcome,
    default_topology,
    link_failure_probs,
    system_event_distribution,
)


def _random_stochastic(rng, rows, cols):
    m = rng.random((rows, cols)) + 1e-3
    return m / m.sum(axis=1, keepdims=True)


def check_belief_filter(n_instances=20, length=10, seed=7, tol=1e-10) -> float:
    """Two-stage predict/update against one-pass forward filtering."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n_actions = 3
        trans = [_random_stochastic(rng, 5, 5) for _ in range(n_actions)]
        obs = [_random_stochastic(rng, 5, 4) for _ in range(n_actions)]
        b0 = rng.dirichlet(np.ones(5))
        actions = rng.integers(0, n_actions, size=length)
        observations = rng.integers(0, 4, size=length)
        b = b0.copy()
        ok = True
        for a, o in zip(actions, observations):
            pred = predict_belief(b, trans[a])
            b, _ = bayes_update(pred, obs[a][:, o])
        # Oracle: unnormalized forward pass, one final normalization.
        alpha = b0.copy()
        for a, o in zip(actions, observations):
            alpha = (alpha @ trans[a]) * obs[a][:, o]
        oracle = alpha / alpha.sum()
        worst = max(worst, float(np.max(np.abs(b - oracle))))
    if worst > tol:
        raise AssertionError(f"belief filter drifted from the oracle by {worst}")
    return worst


def check_system_events(n_cases=200, seed=11, tol=1e-12) -> float:
    """Closed-form event distribution against 2^links enumeration."""
    rng = np.random.default_rng(seed)
    topo = default_topology()
    worst = 0.0
    for _ in range(n_cases):
        p = rng.random(topo.n_links)
        dist = system_event_distribution(p, topo)
        ref = np.zeros(4)
        for states in product((False, True), repeat=topo.n_links):
            weight = np.prod([pi if s else 1.0 - pi for pi, s in zip(p, states)])
            ref[classify_outcome(states, topo)] += weight
        worst = max(worst, float(np.max(np.abs(dist - ref))))
        if abs(dist.sum() - 1.0) > tol:
            raise AssertionError("event distribution does not sum to 1")
    if worst > tol:
        raise AssertionError(f"event distribution off by {worst} from enumeration")
    return worst


def check_risk_identity(n_cases=10, horizon=3, seed=13, tol=1e-12) -> float:
    """General-form and reliability-form failure-only risks must agree."""
    rng = np.random.default_rng(seed)
    obs_model = default_observation_model()
    worst = 0.0
    labels = ("I", "II", "III")
    for _ in range(n_cases):
        model = ComponentModel(builtin_type(labels[rng.integers(0, 3)]))
        actions = [
            (
                MaintenanceAction(int(rng.integers(0, 2))),  # no replacement
                bool(rng.integers(0, 2)),
            )
            for _ in range(horizon)
        ]
        b0 = rng.dirichlet(np.ones(5))
        general, reliability = failure_only_risk_oracle(
            model, actions, 0.95, obs_model, initial_belief=b0, failure_cost=2.0
        )
        worst = max(worst, abs(general - reliability))
    if worst > tol:
        raise AssertionError(f"risk identity violated by {worst}")
    return worst


def check_gradients(n_cases=10, seed=17, tol=1e-4) -> float:
    """Analytic gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for case in range(n_cases):
        head = SOFTMAX if case % 2 == 0 else LINEAR
        out_dim = 4 if head == SOFTMAX else 1
        net = Mlp.create((5, 8, 7, out_dim), head, rng)
        for w in net.weights[:-1]:
            w += 0.0  # hidden layers already random
        net.weights[-1][:] = rng.normal(scale=0.5, size=net.weights[-1].shape)
        net.biases[-1][:] = rng.normal(scale=0.5, size=net.biases[-1].shape)
        x = rng.normal(size=5)
        direction = rng.normal(size=out_dim)

        def objective() -> float:
            out, _ = net.forward(x)
            return float(np.dot(direction, out))

        out, cache = net.forward(x)
        grads = net.backward(cache, direction)
        params = net.parameters()
        step = 1e-5
        for p, g in zip(params, grads):
            flat_p = p.ravel()
            flat_g = g.ravel()
            for idx in range(flat_p.size):
                keep = flat_p[idx]
                flat_p[idx] = keep + step
                hi = objective()
                flat_p[idx] = keep - step
                lo = objective()
                flat_p[idx] = keep
                numeric = (hi - lo) / (2 * step)
                denom = max(1.0, abs(numeric), abs(flat_g[idx]))
                worst = max(worst, abs(flat_g[idx] - numeric) / denom)
    if worst > tol:
        raise AssertionError(f"gradient check failed with relative error {worst}")
    return worst


CHECKS = (
    ("belief-filter-oracle", check_belief_filter),
    ("system-event-oracle", check_system_events),
    ("failure-risk-identity", check_risk_identity),
    ("gradient-check", check_gradients),
)


def run_selftest(verbose: bool = True) -> int:
    failures = 0
    for name, check in CHECKS:
        try:
            worst = check()
            if verbose:
                print(f"PASS {name} (max deviation {worst:.3e})")
        except AssertionError as exc:
            failures += 1
            if verbose:
                print(f"FAIL {name}: {exc}")
    return 0 if failures == 0 else 1
