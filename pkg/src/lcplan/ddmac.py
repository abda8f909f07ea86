"""Constrained decentralized multi-agent actor-critic training.

Each control unit owns a softmax policy network over the 5 component
actions; a single critic approximates the system Lagrangian value. Updates
are off-policy from a uniform replay buffer with truncated importance
weights; dual variables ascend on on-policy constraint returns. Everything
is seeded and single-threaded, so a master seed reproduces a training run
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import (
    N_ACTIONS,
    Env,
    EnvConfig,
    JointAction,
    PolicyView,
    ReplayTuple,
    feature_dim,
)
from .neural import (
    LINEAR,
    SOFTMAX,
    AdamState,
    Mlp,
    adam_step_flat,
    flatten_grads,
    load_arrays,
    log_prob_output_grad,
    save_arrays,
)


class TrainingError(RuntimeError):
    """Training reached a non-finite state."""


@dataclass
class TrainConfig:
    episodes: int
    batch_size: int = 32
    buffer_capacity: int = 300_000
    actor_hidden: tuple[int, ...] = (50, 50)
    critic_hidden: tuple[int, ...] = (150, 150)
    explore_start: float = 1.0
    explore_end: float = 0.01
    explore_anneal_episodes: int = 2500
    critic_lr: float = 1e-3
    actor_lr: float = 1e-4
    lr_drop_factor: float = 0.1
    lr_drop_episode: int | None = None  # default: halfway through training
    dual_lr: float = 1e-5
    weight_clip: float = 2.0
    updates_per_step: int = 1

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be nonnegative")
        for name in ("critic_lr", "actor_lr", "dual_lr"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.weight_clip < 1.0:
            raise ValueError("importance-weight clip must be >= 1")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need buffer capacity >= batch size >= 1")

    def epsilon(self, episode: int) -> float:
        """Linearly annealed exploration noise."""
        frac = min(1.0, episode / max(1, self.explore_anneal_episodes))
        return self.explore_start + frac * (self.explore_end - self.explore_start)


def _rng(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


class AgentSet:
    """Per-unit actor networks plus the shared critic.

    Implements the evaluation policy protocol: distributions are the plain
    actor outputs without exploration noise.
    """

    def __init__(self, actors: list[Mlp], critic: Mlp):
        self.actors = actors
        self.critic = critic
        if any(a.sizes[-1] != N_ACTIONS for a in actors):
            raise ValueError(f"each actor head must have {N_ACTIONS} outputs")

    @classmethod
    def create(
        cls, input_dim: int, n_agents: int, config: TrainConfig, rng: np.random.Generator
    ) -> "AgentSet":
        actors = [
            Mlp.create((input_dim, *config.actor_hidden, N_ACTIONS), SOFTMAX, rng)
            for _ in range(n_agents)
        ]
        critic = Mlp.create((input_dim, *config.critic_hidden, 1), LINEAR, rng)
        return cls(actors, critic)

    @property
    def n_agents(self) -> int:
        return len(self.actors)

    @property
    def input_dim(self) -> int:
        return self.actors[0].sizes[0]

    def distributions(self, features: np.ndarray) -> np.ndarray:
        """(n_agents, N_ACTIONS) action distributions for one input vector."""
        return np.stack([actor.forward(features)[0] for actor in self.actors])

    def action_distributions(self, view: PolicyView) -> np.ndarray:
        return self.distributions(view.features())

    def value(self, features: np.ndarray) -> float:
        return float(self.critic.forward(features)[0][0])

    def save(self, path) -> None:
        meta = {
            "kind": "ddmac-agents",
            "n_agents": self.n_agents,
            "actor_sizes": list(self.actors[0].sizes),
            "critic_sizes": list(self.critic.sizes),
        }
        arrays = []
        for actor in self.actors:
            arrays.extend(actor.parameters())
        arrays.extend(self.critic.parameters())
        save_arrays(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "AgentSet":
        meta, arrays = load_arrays(path)
        if meta.get("kind") != "ddmac-agents":
            raise ValueError("checkpoint does not hold a DDMAC agent set")
        n_agents = meta["n_agents"]
        actor_sizes = meta["actor_sizes"]
        per_actor = 2 * (len(actor_sizes) - 1)
        actors = []
        pos = 0
        for _ in range(n_agents):
            chunk = arrays[pos : pos + per_actor]
            actors.append(Mlp(chunk[0::2], chunk[1::2], SOFTMAX))
            pos += per_actor
        chunk = arrays[pos:]
        critic = Mlp(chunk[0::2], chunk[1::2], LINEAR)
        return cls(actors, critic)


def joint_policy(agents: AgentSet, features: np.ndarray):
    """Per-agent distributions and the factored joint probability callback."""
    dists = agents.distributions(features)

    def joint_probability(codes) -> float:
        codes = np.asarray(codes, dtype=int)
        return float(np.prod(dists[np.arange(len(codes)), codes]))

    return dists, joint_probability


class ReplayBuffer:
    """Bounded ring buffer of transition tuples with uniform sampling."""

    def __init__(self, capacity: int, input_dim: int, n_agents: int, n_soft: int):
        self.capacity = capacity
        self._feat = np.zeros((capacity, input_dim))
        self._next_feat = np.zeros((capacity, input_dim))
        self._actions = np.zeros((capacity, n_agents), dtype=int)
        self._mu = np.zeros((capacity, n_agents))
        self._cost = np.zeros(capacity)
        self._g = np.zeros((capacity, max(1, n_soft)))
        self._n_soft = n_soft
        self._terminal = np.zeros(capacity, dtype=bool)
        self._size = 0
        self._head = 0

    def __len__(self) -> int:
        return self._size

    def push(self, item: ReplayTuple) -> None:
        if item.mu is None:
            raise ValueError("behavior probabilities must be filled before storage")
        if np.any(item.mu <= 0.0):
            raise ValueError("behavior probabilities must be strictly positive")
        i = self._head
        self._feat[i] = item.features
        self._next_feat[i] = item.next_features
        self._actions[i] = item.actions
        self._mu[i] = item.mu
        self._cost[i] = item.cost
        if self._n_soft:
            self._g[i, : self._n_soft] = item.g_soft
        self._terminal[i] = item.terminal
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self._size, size=batch_size)
        return (
            self._feat[idx],
            self._actions[idx],
            self._mu[idx],
            self._cost[idx],
            self._g[idx, : self._n_soft],
            self._next_feat[idx],
            self._terminal[idx],
        )


def advantage_batch(
    cost: np.ndarray,
    g_soft: np.ndarray,
    lambdas: np.ndarray,
    v_now: np.ndarray,
    v_next: np.ndarray,
    terminal: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Temporal-difference cost advantage; terminal steps drop the bootstrap."""
    penalty = g_soft @ lambdas if lambdas.size else np.zeros_like(cost)
    return cost + penalty + gamma * v_next * (~terminal) - v_now


def advantage(
    item: ReplayTuple, critic: Mlp, lambdas, gamma: float
) -> float:
    """Single-tuple advantage, mainly for inspection and tests."""
    lambdas = np.asarray(lambdas, dtype=float)
    v_now = float(critic.forward(item.features)[0][0])
    v_next = float(critic.forward(item.next_features)[0][0])
    return float(
        advantage_batch(
            np.array([item.cost]),
            item.g_soft.reshape(1, -1),
            lambdas,
            np.array([v_now]),
            np.array([v_next]),
            np.array([item.terminal]),
            gamma,
        )[0]
    )


def importance_weight(item: ReplayTuple, agents: AgentSet, clip: float) -> float:
    """Truncated product of per-agent probability ratios."""
    if item.mu is None or np.any(item.mu <= 0.0):
        raise ValueError("tuple lacks valid behavior probabilities")
    dists = agents.distributions(item.features)
    ratios = dists[np.arange(agents.n_agents), item.actions] / item.mu
    return float(min(clip, np.prod(ratios)))


@dataclass
class Optimizers:
    actors: list[AdamState]
    critic: AdamState

    @classmethod
    def create(cls, agents: AgentSet, config: TrainConfig) -> "Optimizers":
        return cls(
            [AdamState.for_params(a.parameters(), config.actor_lr) for a in agents.actors],
            AdamState.for_params(agents.critic.parameters(), config.critic_lr),
        )

    def drop_lr(self, factor: float) -> None:
        for opt in self.actors:
            opt.lr *= factor
        self.critic.lr *= factor


def update(
    batch,
    agents: AgentSet,
    lambdas: np.ndarray,
    optimizers: Optimizers,
    gamma: float,
    clip: float,
):
    """One minibatch update of every actor and the critic.

    Actors descend the importance-weighted policy gradient of the cost
    advantage; the critic descends the squared temporal difference with the
    bootstrap target held fixed. Returns (mean advantage, mean weight).
    """
    feat, actions, mu, cost, g_soft, next_feat, terminal = batch
    n_batch = feat.shape[0]
    if n_batch == 0:
        raise ValueError("empty batch")

    v_now_out, critic_cache = agents.critic.forward(feat)
    v_next_out, _ = agents.critic.forward(next_feat)
    adv = advantage_batch(
        cost, g_soft, lambdas, v_now_out[:, 0], v_next_out[:, 0], terminal, gamma
    )

    probs, caches = [], []
    rows = np.arange(n_batch)
    ratio_prod = np.ones(n_batch)
    for i, actor in enumerate(agents.actors):
        p, cache = actor.forward(feat)
        probs.append(p)
        caches.append(cache)
        ratio_prod *= p[rows, actions[:, i]] / mu[:, i]
    weights = np.minimum(clip, ratio_prod)

    if not (np.all(np.isfinite(adv)) and np.all(np.isfinite(weights))):
        raise TrainingError(
            f"non-finite training signal: adv range [{adv.min()}, {adv.max()}]"
        )

    coef = weights * adv / n_batch
    for i, actor in enumerate(agents.actors):
        out_grad = log_prob_output_grad(probs[i], actions[:, i], coef)
        flat = flatten_grads(actor.backward(caches[i], out_grad))
        if not np.isfinite(flat).all():
            raise TrainingError(f"non-finite actor {i} gradient")
        adam_step_flat(actor.parameters(), flat, optimizers.actors[i])

    critic_grad_out = (-coef)[:, None]
    flat = flatten_grads(agents.critic.backward(critic_cache, critic_grad_out))
    if not np.isfinite(flat).all():
        raise TrainingError("non-finite critic gradient")
    adam_step_flat(agents.critic.parameters(), flat, optimizers.critic)

    return float(adv.mean()), float(weights.mean())


def dual_update(lam: float, g_return: float, alpha: float, lr: float) -> float:
    """Projected ascent step on one Lagrange multiplier."""
    if lam < 0.0:
        raise ValueError("multipliers must be nonnegative")
    return max(0.0, lam + lr * (g_return - alpha))


def _on_policy_constraint_returns(
    agents: AgentSet, env_config: EnvConfig, seed, episode: int
) -> np.ndarray:
    """Fresh on-policy episode; per-constraint discounted returns of g."""
    env_rng = _rng(seed, 4, episode)
    action_rng = _rng(seed, 5, episode)
    env = Env(env_config)
    view = env.reset(rng=env_rng)
    discounts = np.array(
        [s.return_discount(env_config.discount) for s in env_config.soft_constraints]
    )
    returns = np.zeros(len(discounts))
    t = 0
    while not env.done:
        dists = agents.action_distributions(view)
        u = action_rng.random(env_config.n_components)
        codes = np.minimum(
            (u[:, None] >= np.cumsum(dists, axis=1)).sum(axis=1), N_ACTIONS - 1
        )
        result = env.step(JointAction(codes.astype(int)))
        returns += discounts**t * result.replay.g_soft
        view = result.view
        t += 1
    return returns


@dataclass
class TrainResult:
    agents: AgentSet
    log: list[dict]
    lambdas: np.ndarray
    config: TrainConfig

    def final_mean_total(self, window: int = 100) -> float:
        tail = self.log[-window:]
        return float(np.mean([row["total"] for row in tail])) if tail else float("nan")


def train(train_config: TrainConfig, env_config: EnvConfig, seed) -> TrainResult:
    """Run the full training loop and return agents plus the episode log."""
    n = env_config.n_components
    dim = feature_dim(n)
    agents = AgentSet.create(dim, n, train_config, _rng(seed, 0))
    optimizers = Optimizers.create(agents, train_config)
    n_soft = len(env_config.soft_constraints)
    lambdas = np.array([s.multiplier for s in env_config.soft_constraints])
    alphas = np.array([s.threshold for s in env_config.soft_constraints])
    buffer = ReplayBuffer(train_config.buffer_capacity, dim, n, n_soft)
    drop_at = (
        train_config.lr_drop_episode
        if train_config.lr_drop_episode is not None
        else max(1, train_config.episodes // 2)
    )
    log: list[dict] = []
    env = Env(env_config)
    rows = np.arange(n)

    for ep in range(train_config.episodes):
        if ep == drop_at:
            optimizers.drop_lr(train_config.lr_drop_factor)
        eps = train_config.epsilon(ep)
        env_rng = _rng(seed, 1, ep)
        explore_rng = _rng(seed, 2, ep)
        sample_rng = _rng(seed, 3, ep)
        view = env.reset(rng=env_rng)
        n_random = 0
        n_agent_draws = 0
        while not env.done:
            feat = view.features()
            dists = agents.distributions(feat)
            mixture = eps / N_ACTIONS + (1.0 - eps) * dists
            coins = explore_rng.random(n)
            u = explore_rng.random(n)
            random_mask = coins < eps
            n_random += int(random_mask.sum())
            n_agent_draws += n
            greedy_codes = np.minimum(
                (u[:, None] >= np.cumsum(dists, axis=1)).sum(axis=1), N_ACTIONS - 1
            )
            uniform_codes = np.minimum((u * N_ACTIONS).astype(int), N_ACTIONS - 1)
            codes = np.where(random_mask, uniform_codes, greedy_codes).astype(int)
            result = env.step(JointAction(codes))
            replay = result.replay
            replay.mu = mixture[rows, codes]
            buffer.push(replay)
            if len(buffer) >= train_config.batch_size:
                for _ in range(train_config.updates_per_step):
                    batch = buffer.sample(train_config.batch_size, sample_rng)
                    update(
                        batch,
                        agents,
                        lambdas,
                        optimizers,
                        env_config.discount,
                        train_config.weight_clip,
                    )
            view = result.view

        if n_soft:
            returns = _on_policy_constraint_returns(agents, env_config, seed, ep)
            for m in range(n_soft):
                lambdas[m] = dual_update(
                    lambdas[m], returns[m], alphas[m], train_config.dual_lr
                )

        parts = env.ledger.components()
        row = {
            "episode": ep,
            "total": parts["total"],
            "maintenance": parts["maintenance"],
            "inspection": parts["inspection"],
            "shutdown": parts["shutdown"],
            "risk": parts["risk"],
            "epsilon": eps,
            "random_fraction": n_random / n_agent_draws if n_agent_draws else 0.0,
        }
        for m in range(n_soft):
            row[f"lambda_{m}"] = lambdas[m]
        log.append(row)

    return TrainResult(agents, log, lambdas, train_config)
