"""PPO training against the environment bridge.

Collection is single-session and single-threaded; together with seeded
torch/numpy generators and a fixed torch thread count, a (config, seed)
pair fully determines the learning curve.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .buffer import RolloutBuffer
from .client import EnvClient
from .model import ActorCritic


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 10
    rollout_steps: int = 4096
    minibatch_size: int = 256
    hidden: tuple[int, ...] = (64, 64)
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 200_000
    eval_episodes: int = 500
    seed: int = 0
    checkpoint_path: str = "ppo_checkpoint.pt"
    curve_path: str | None = None
    baseline_episodes: int = 100
    # linear schedules to zero over the step budget
    lr_decay: bool = True
    entropy_decay: bool = True

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainReport:
    curve: list[dict] = field(default_factory=list)
    final_eval: dict | None = None
    random_baseline: dict | None = None
    config: dict | None = None
    env_spec: dict | None = None
    reward_scale: float = 1.0
    aborted: str | None = None
    wall_seconds: float = 0.0

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict_report(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def asdict_report(report: TrainReport) -> dict:
    return {
        "curve": report.curve,
        "final_eval": report.final_eval,
        "random_baseline": report.random_baseline,
        "config": report.config,
        "env_spec": report.env_spec,
        "reward_scale": report.reward_scale,
        "aborted": report.aborted,
        "wall_seconds": report.wall_seconds,
    }


def _obs_tensor(obs) -> torch.Tensor:
    return torch.as_tensor(np.asarray(obs, dtype=np.float32))


def random_policy_baseline(client: EnvClient, episodes: int, seed: int, rng: np.random.Generator) -> dict:
    """Mean episodic cost of uniform random actions; the sanity floor."""
    spec = client.spec()
    costs = []
    for ep in range(episodes):
        client.reset(seed + ep)
        done = False
        total = 0.0
        while not done:
            resp = client.step(int(rng.integers(0, spec["action_count"])))
            total -= resp["reward"]
            done = resp["done"]
        costs.append(total)
    costs = np.asarray(costs)
    return {
        "mean_cost": float(costs.mean()),
        "std": float(costs.std(ddof=1)) if costs.size > 1 else 0.0,
        "episodes": episodes,
    }


def evaluate_policy(
    client: EnvClient, model: ActorCritic, episodes: int, seed: int, greedy: bool = True
) -> dict:
    """Frozen-policy evaluation over fresh episode seeds."""
    costs = []
    service = []
    for ep in range(episodes):
        resp = client.reset(seed + ep)
        obs = _obs_tensor(resp["obs"])
        done = False
        total = 0.0
        while not done:
            action = model.greedy(obs) if greedy else model.act(obs)[0]
            resp = client.step(action)
            total -= resp["reward"]
            done = resp["done"]
            obs = _obs_tensor(resp["obs"])
        costs.append(total)
        if "episode" in resp["info"]:
            service.append(resp["info"]["episode"]["service_level"])
    costs = np.asarray(costs)
    out = {
        "mean_cost": float(costs.mean()),
        "std": float(costs.std(ddof=1)) if costs.size > 1 else 0.0,
        "se": float(costs.std(ddof=1) / np.sqrt(costs.size)) if costs.size > 1 else 0.0,
        "episodes": int(costs.size),
    }
    if service:
        out["service_level"] = float(np.mean(service))
    return out


class _Collector:
    """Streams transitions from one session into rollout buffers, carrying
    episode state across buffer boundaries."""

    def __init__(self, client: EnvClient, model: ActorCritic, seed: int):
        self.client = client
        self.model = model
        self.episode_seed = seed
        self.obs = None
        self.episode_return = 0.0
        self.completed_returns: list[float] = []
        self.env_steps = 0

    def _begin_episode(self):
        resp = self.client.reset(self.episode_seed)
        self.episode_seed += 1
        self.obs = _obs_tensor(resp["obs"])
        self.episode_return = 0.0

    def collect(self, buffer: RolloutBuffer, reward_scale: float) -> None:
        if self.obs is None:
            self._begin_episode()
        while not buffer.full:
            action, log_prob, value = self.model.act(self.obs)
            resp = self.client.step(action)
            reward = resp["reward"] * reward_scale
            buffer.add(self.obs.numpy(), action, log_prob, reward, value, resp["done"])
            self.episode_return += resp["reward"]
            self.env_steps += 1
            if resp["done"]:
                self.completed_returns.append(self.episode_return)
                self._begin_episode()
            else:
                self.obs = _obs_tensor(resp["obs"])

    def bootstrap_value(self) -> float:
        with torch.no_grad():
            _, value = self.model(self.obs.unsqueeze(0))
        return float(value.item())


def ppo_update(
    model: ActorCritic,
    optimizer: torch.optim.Optimizer,
    buffer: RolloutBuffer,
    config: PpoConfig,
    rng: np.random.Generator,
    entropy_coef: float | None = None,
) -> dict:
    if entropy_coef is None:
        entropy_coef = config.entropy_coef
    obs = torch.as_tensor(buffer.obs[: buffer.size])
    actions = torch.as_tensor(buffer.actions[: buffer.size])
    old_log_probs = torch.as_tensor(buffer.log_probs[: buffer.size], dtype=torch.float32)
    advantages = torch.as_tensor(buffer.advantages, dtype=torch.float32)
    returns = torch.as_tensor(buffer.returns, dtype=torch.float32)
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "updates": 0}
    for _ in range(config.epochs):
        for idx in buffer.minibatches(config.minibatch_size, rng):
            batch = torch.as_tensor(idx)
            log_probs, entropy, values = model.evaluate_actions(obs[batch], actions[batch])
            ratio = torch.exp(log_probs - old_log_probs[batch])
            adv = advantages[batch]
            surrogate = torch.minimum(
                ratio * adv,
                torch.clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * adv,
            )
            policy_loss = -surrogate.mean()
            value_loss = torch.nn.functional.mse_loss(values, returns[batch])
            entropy_bonus = entropy.mean()
            loss = policy_loss + config.value_coef * value_loss - entropy_coef * entropy_bonus
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
            optimizer.step()
            stats["policy_loss"] += float(policy_loss.item())
            stats["value_loss"] += float(value_loss.item())
            stats["entropy"] += float(entropy_bonus.item())
            stats["updates"] += 1
    for key in ("policy_loss", "value_loss", "entropy"):
        stats[key] /= max(stats["updates"], 1)
    return stats


def train(config: PpoConfig, client: EnvClient, eval_client: EnvClient | None = None) -> tuple[TrainReport, ActorCritic]:
    """Run PPO to the configured step budget and evaluate the frozen policy.

    Aborts with a report if mean returns collapse below the random baseline
    for three consecutive rollouts in the second half of training.
    """
    t_start = time.time()
    torch.manual_seed(config.seed)
    torch.set_num_threads(1)
    rng = np.random.default_rng(config.seed)

    spec = client.spec()
    model = ActorCritic(spec["obs_dim"], spec["action_count"], config.hidden)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    report = TrainReport(config={**asdict(config), "hidden": list(config.hidden)}, env_spec=spec)

    baseline = random_policy_baseline(
        client, config.baseline_episodes, seed=10_000_000 + config.seed, rng=rng
    )
    report.random_baseline = baseline

    collector = _Collector(client, model, seed=config.seed * 1_000_003 + 1)
    reward_scale = None
    collapse_streak = 0
    while collector.env_steps < config.total_steps:
        steps = min(config.rollout_steps, config.total_steps - collector.env_steps)
        buffer = RolloutBuffer(steps, spec["obs_dim"])
        mark = len(collector.completed_returns)
        collector.collect(buffer, reward_scale if reward_scale is not None else 1.0)
        if reward_scale is None:
            # freeze the scale from the first rollout's cost magnitude
            reward_scale = 1.0 / max(1.0, float(np.abs(buffer.rewards[: buffer.size]).mean()))
            buffer.rewards[: buffer.size] *= reward_scale
            report.reward_scale = reward_scale
        bootstrap = 0.0 if buffer.dones[buffer.size - 1] else collector.bootstrap_value()
        buffer.finish(bootstrap, config.gamma, config.lam)
        progress = collector.env_steps / config.total_steps
        if config.lr_decay:
            for group in optimizer.param_groups:
                group["lr"] = config.learning_rate * max(1.0 - progress, 0.05)
        entropy_coef = config.entropy_coef * (max(1.0 - progress, 0.0) if config.entropy_decay else 1.0)
        stats = ppo_update(model, optimizer, buffer, config, rng, entropy_coef=entropy_coef)
        new_returns = collector.completed_returns[mark:]
        mean_return = float(np.mean(new_returns)) if new_returns else float("nan")
        report.curve.append(
            {
                "env_steps": collector.env_steps,
                "mean_episode_return": mean_return,
                "mean_episode_cost": -mean_return if new_returns else float("nan"),
                **stats,
            }
        )
        if (
            new_returns
            and collector.env_steps > config.total_steps // 2
            and -mean_return > baseline["mean_cost"]
        ):
            collapse_streak += 1
            if collapse_streak >= 3:
                report.aborted = (
                    f"mean cost {-mean_return:.1f} stayed above the random baseline "
                    f"{baseline['mean_cost']:.1f} for 3 consecutive rollouts"
                )
                break
        else:
            collapse_streak = 0

    final_client = eval_client if eval_client is not None else client
    report.final_eval = evaluate_policy(
        final_client, model, config.eval_episodes, seed=20_000_000 + config.seed
    )
    report.wall_seconds = time.time() - t_start
    save_checkpoint(config.checkpoint_path, model, config, spec)
    if config.curve_path:
        write_curve_csv(config.curve_path, report.curve)
    return report, model


def save_checkpoint(path: str, model: ActorCritic, config: PpoConfig, spec: dict) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "obs_dim": model.obs_dim,
            "n_actions": model.n_actions,
            "hidden": list(config.hidden),
            "env_spec": spec,
        },
        path,
    )


def load_checkpoint(path: str) -> tuple[ActorCritic, dict]:
    payload = torch.load(path, weights_only=True)
    model = ActorCritic(payload["obs_dim"], payload["n_actions"], tuple(payload["hidden"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def write_curve_csv(path: str, curve: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("env_steps,mean_episode_return,mean_episode_cost,policy_loss,value_loss,entropy\n")
        for row in curve:
            fh.write(
                f"{row['env_steps']},{row['mean_episode_return']!r},{row['mean_episode_cost']!r},"
                f"{row['policy_loss']!r},{row['value_loss']!r},{row['entropy']!r}\n"
            )


def export_policy_actions(
    model: ActorCritic, client: EnvClient, seed: int, trace_path: str, obs_path: str | None = None
) -> dict:
    """Greedy rollout of one episode; writes a ``t,action`` trace replayable
    by the environment's own evaluator, plus the observations seen.

    Returns the episode summary including the trainer-side return.
    """
    spec = client.spec()
    resp = client.reset(seed)
    obs = _obs_tensor(resp["obs"])
    if obs.shape[0] != model.obs_dim:
        raise ValueError(
            f"observation dimension {obs.shape[0]} does not match checkpoint {model.obs_dim}"
        )
    actions = []
    observations = [resp["obs"]]
    total_reward = 0.0
    done = False
    info = {}
    while not done:
        action = model.greedy(obs)
        resp = client.step(action)
        actions.append(resp["info"]["applied_action"])
        observations.append(resp["obs"])
        total_reward += resp["reward"]
        done = resp["done"]
        info = resp["info"]
        obs = _obs_tensor(resp["obs"])
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,action\n")
        for t, a in enumerate(actions, start=1):
            fh.write(f"{t},{a}\n")
    if obs_path:
        np.savez(obs_path, observations=np.asarray(observations, dtype=np.float64))
    return {
        "seed": seed,
        "steps": len(actions),
        "total_reward": total_reward,
        "episode": info.get("episode", {}),
        "horizon": spec["horizon"],
    }
