"""Actor-critic network: a small tanh trunk with separate policy and value
heads over a discrete batch-count action space."""

from __future__ import annotations

import torch
from torch import nn


class ActorCritic(nn.Module):
    def __init__(self, obs_dim: int, n_actions: int, hidden: tuple[int, ...] = (64, 64)):
        super().__init__()
        layers: list[nn.Module] = []
        last = obs_dim
        for width in hidden:
            layers += [nn.Linear(last, width), nn.Tanh()]
            last = width
        self.trunk = nn.Sequential(*layers)
        self.policy_head = nn.Linear(last, n_actions)
        self.value_head = nn.Linear(last, 1)
        self.obs_dim = obs_dim
        self.n_actions = n_actions

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = self.trunk(obs)
        return self.policy_head(z), self.value_head(z).squeeze(-1)

    @torch.no_grad()
    def act(self, obs: torch.Tensor) -> tuple[int, float, float]:
        """Sample an action; returns (action, log-probability, value)."""
        logits, value = self(obs.unsqueeze(0))
        dist = torch.distributions.Categorical(logits=logits)
        action = dist.sample()
        return int(action.item()), float(dist.log_prob(action).item()), float(value.item())

    @torch.no_grad()
    def greedy(self, obs: torch.Tensor) -> int:
        logits, _ = self(obs.unsqueeze(0))
        return int(torch.argmax(logits, dim=-1).item())

    def evaluate_actions(self, obs: torch.Tensor, actions: torch.Tensor):
        logits, values = self(obs)
        dist = torch.distributions.Categorical(logits=logits)
        return dist.log_prob(actions), dist.entropy(), values
