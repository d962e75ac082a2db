"""Vectorized lockstep episode engine.

Runs a batch of episodes for one or more policies simultaneously. All
policies see the same per-episode demand and yield paths (common random
numbers); every stream is keyed by (master seed, absolute episode index),
so results for an episode do not depend on how episodes are chunked or
which other policies run alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import DemandScenario, sample_demand_path
from .env import CostRates, EnvParams
from .policies import DecisionContext, Policy
from .seeding import STREAM_YIELD, make_generator

@dataclass
class BatchEvalResult:
    """Per-episode episode totals for one policy."""

    policy: str
    transformed_total: np.ndarray
    raw_total: np.ndarray
    demand_after_lead: np.ndarray
    sales_after_lead: np.ndarray
    components: dict[str, np.ndarray]

    def concat(self, other: "BatchEvalResult") -> "BatchEvalResult":
        return BatchEvalResult(
            policy=self.policy,
            transformed_total=np.concatenate([self.transformed_total, other.transformed_total]),
            raw_total=np.concatenate([self.raw_total, other.raw_total]),
            demand_after_lead=np.concatenate([self.demand_after_lead, other.demand_after_lead]),
            sales_after_lead=np.concatenate([self.sales_after_lead, other.sales_after_lead]),
            components={
                k: np.concatenate([v, other.components[k]]) for k, v in self.components.items()
            },
        )


def generate_paths(
    params: EnvParams,
    scenario: DemandScenario,
    master_seed: int,
    episode_indices: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Demand and yield matrices, (n_episodes, horizon) each."""
    n = episode_indices.size
    T = params.horizon
    demand = np.empty((n, T))
    yields = np.empty((n, T))
    for row, idx in enumerate(episode_indices):
        demand[row] = sample_demand_path(scenario, (master_seed, int(idx)))
        gen = make_generator(master_seed, int(idx), STREAM_YIELD)
        yields[row] = 1.0 - gen.random(T) * params.yield_max
    return demand, yields


def run_policy_batch(
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    policies: list[Policy],
    master_seed: int,
    episode_indices,
) -> list[BatchEvalResult]:
    """Run all episodes to completion for each policy under shared paths."""
    if scenario.horizon != params.horizon:
        raise ValueError(
            f"scenario horizon {scenario.horizon} != environment horizon {params.horizon}"
        )
    episode_indices = np.asarray(episode_indices, dtype=int)
    n = episode_indices.size
    m, L, T = params.lifetime, params.lead_time, params.horizon
    demand_mat, yield_mat = generate_paths(params, scenario, master_seed, episode_indices)
    ctx = DecisionContext(
        params=params,
        rates=rates,
        scenario=scenario,
        master_seed=int(master_seed),
        episode_indices=episode_indices,
        demand_matrix=demand_mat,
    )
    for policy in policies:
        policy.reset(ctx)

    cost_table = np.asarray(params.batch_costs)
    states = [np.zeros((n, params.state_dim)) for _ in policies]
    acc = [
        {
            "fixed": np.zeros(n),
            "holding_units": np.zeros(n),
            "lost_charged": np.zeros(n),
            "expired": np.zeros(n),
            "arrived": np.zeros(n),
            "sales_after_lead": np.zeros(n),
            "demand_after_lead": np.zeros(n),
        }
        for _ in policies
    ]

    for t in range(1, T + 1):
        demand = demand_mat[:, t - 1]
        z = yield_mat[:, t - 1]
        for i, policy in enumerate(policies):
            B = states[i]
            units = np.asarray(policy.batch_orders(B, t, ctx), dtype=float)
            if units.shape != (n,):
                units = np.broadcast_to(units, (n,)).astype(float)
            arriving = units if L == 0 else B[:, m - 1]
            arrived = z * arriving
            on_hand = np.concatenate([B[:, : m - 1], arrived[:, None]], axis=1)
            csum = np.cumsum(on_hand, axis=1)
            y_total = csum[:, -1]
            after = np.clip(csum - demand[:, None], 0.0, on_hand)
            sales = np.minimum(demand, y_total)
            lost = demand - sales

            a = acc[i]
            n_batches = np.rint(units / params.batch_size).astype(int)
            a["fixed"] += cost_table[np.minimum(n_batches, cost_table.size - 1)]
            a["holding_units"] += y_total - sales
            a["expired"] += after[:, 0]
            a["arrived"] += arrived
            if t > L:
                a["lost_charged"] += lost
                a["sales_after_lead"] += sales
                a["demand_after_lead"] += demand

            new_B = np.zeros_like(B)
            new_B[:, : m - 1] = after[:, 1:]
            if L >= 2:
                new_B[:, m - 1 : m + L - 2] = B[:, m:]
            if L >= 1:
                new_B[:, m + L - 2] = units
            states[i] = new_B

    results = []
    for i, policy in enumerate(policies):
        a = acc[i]
        terminal_on_hand = states[i][:, : m - 1].sum(axis=1)
        components = {
            "ordering_fixed": a["fixed"],
            "holding": rates.h * a["holding_units"],
            "lost_sales": rates.b * a["lost_charged"],
            "expiration": rates.w * a["expired"],
        }
        transformed_total = sum(components.values())
        raw_total = (
            a["fixed"]
            + rates.c_hat * a["arrived"]
            + rates.h_hat * a["holding_units"]
            + rates.b_hat * a["lost_charged"]
            + rates.w_hat * a["expired"]
            - rates.c_hat * terminal_on_hand
        )
        if __debug__:
            gap = raw_total - transformed_total - rates.c_hat * a["demand_after_lead"]
            scale = np.maximum(1.0, np.abs(raw_total))
            assert np.all(np.abs(gap) <= 1e-6 * scale), "dual-accounting identity violated"
        results.append(
            BatchEvalResult(
                policy=policy.describe(),
                transformed_total=transformed_total,
                raw_total=raw_total,
                demand_after_lead=a["demand_after_lead"],
                sales_after_lead=a["sales_after_lead"],
                components=components,
            )
        )
    return results
