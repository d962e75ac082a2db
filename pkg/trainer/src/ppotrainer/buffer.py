"""Fixed-size on-policy rollout buffer."""

from __future__ import annotations

import numpy as np

from .gae import gae


class RolloutBuffer:
    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.log_probs = np.zeros(capacity, dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.values = np.zeros(capacity, dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.advantages = None
        self.returns = None

    def add(self, obs, action, log_prob, reward, value, done) -> None:
        if self.size >= self.capacity:
            raise RuntimeError("rollout buffer full")
        i = self.size
        self.obs[i] = obs
        self.actions[i] = action
        self.log_probs[i] = log_prob
        self.rewards[i] = reward
        self.values[i] = value
        self.dones[i] = done
        self.size += 1

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def finish(self, bootstrap_value: float, gamma: float, lam: float) -> None:
        """Compute advantages and value targets; ``bootstrap_value`` is the
        critic's estimate for the state after the last stored transition
        (ignored if that transition ended an episode)."""
        values = np.concatenate([self.values[: self.size], [bootstrap_value]])
        self.advantages = gae(
            self.rewards[: self.size], values, self.dones[: self.size], gamma, lam
        )
        self.returns = self.advantages + self.values[: self.size]

    def minibatches(self, batch_size: int, rng: np.random.Generator):
        if self.advantages is None:
            raise RuntimeError("call finish() before iterating minibatches")
        order = rng.permutation(self.size)
        for start in range(0, self.size, batch_size):
            yield order[start : start + batch_size]
