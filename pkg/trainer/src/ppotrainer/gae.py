"""Advantage estimation and the clipped policy objective."""

from __future__ import annotations

import numpy as np


def gae(rewards, values, dones, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates over a rollout.

    ``rewards`` and ``dones`` have length N; ``values`` has length N+1 (the
    last entry bootstraps the state after the final transition). Episode
    boundaries truncate the accumulation: where ``dones[t]`` is set, the
    next state's value contributes nothing.
    """
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    values = np.asarray(values, dtype=float)
    n = rewards.size
    if dones.size != n:
        raise ValueError(f"dones has length {dones.size}, rewards has {n}")
    if values.size != n + 1:
        raise ValueError(f"values must have length {n + 1}, got {values.size}")
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("gamma and lam must lie in [0, 1]")
    live = ~dones
    advantages = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] * live[t] - values[t]
        acc = delta + gamma * lam * live[t] * acc
        advantages[t] = acc
    return advantages


def clipped_surrogate(ratio, advantage, epsilon: float):
    """Pointwise clipped objective term min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)
    out = np.minimum(ratio * advantage, clipped * advantage)
    return float(out) if out.ndim == 0 else out
