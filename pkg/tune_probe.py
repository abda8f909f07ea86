"""Scratch script: probe trainer hyperparameters on the scaled config."""

import sys
import time

import numpy as np

sys.path.insert(0, "tests")
from conftest import make_scaled_config

from lcplan.ddmac import TrainConfig, train
from lcplan.env import Env, rollout

config = make_scaled_config()

variant = sys.argv[1]
seeds = [int(s) for s in sys.argv[2].split(",")]

variants = {
    "base": dict(explore_anneal_episodes=1200, lr_drop_episode=1000),
    "u2": dict(explore_anneal_episodes=1200, lr_drop_episode=1000, updates_per_step=2),
    "b64": dict(explore_anneal_episodes=1200, lr_drop_episode=1000, batch_size=64),
    "fastanneal": dict(explore_anneal_episodes=800, lr_drop_episode=1200),
    "u2b64": dict(
        explore_anneal_episodes=1000,
        lr_drop_episode=1000,
        updates_per_step=2,
        batch_size=64,
    ),
    "hilr": dict(
        explore_anneal_episodes=1200,
        lr_drop_episode=1000,
        actor_lr=3e-4,
        critic_lr=1e-3,
    ),
    "u2late": dict(
        explore_anneal_episodes=1000,
        lr_drop_episode=1400,
        updates_per_step=2,
    ),
    "u2buf": dict(
        explore_anneal_episodes=1200,
        lr_drop_episode=1000,
        updates_per_step=2,
        buffer_capacity=60_000,
    ),
}

kw = dict(episodes=2000, batch_size=32, buffer_capacity=300_000)
kw.update(variants[variant])
cfg = TrainConfig(**kw)

for seed in seeds:
    t0 = time.time()
    result = train(cfg, config, seed=seed)
    log = result.log
    final100 = np.mean([r["total"] for r in log[-100:]])
    tail500 = np.mean([r["total"] for r in log[-500:]])
    env = Env(config)
    greedy = np.mean(
        [
            rollout(result.agents, config, 999_000 + seed, episode=k, env=env)[0].total
            for k in range(300)
        ]
    )
    print(
        f"{variant} seed {seed}: final100 {final100:.3f} tail500 {tail500:.3f} "
        f"greedy {greedy:.3f} ({time.time()-t0:.0f}s)",
        flush=True,
    )
