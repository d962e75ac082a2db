"""Monte-Carlo policy evaluation, confidence intervals, and bounds-guided
grid search for safety-stock parameters."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .demand import DemandScenario, sample_demand_path
from .env import CostRates, Environment, EnvParams, EpisodeLedger
from .policies import (
    DEFAULT_PIL_PATHS,
    OutPolicy,
    PilPolicy,
    Policy,
    single_episode_context,
)
from .seeding import STREAM_YIELD, make_generator
from .vecsim import BatchEvalResult, run_policy_batch


@dataclass(frozen=True)
class EvalConfig:
    n_episodes: int = 2000
    master_seed: int = 12345
    crn: bool = True
    parallel: int = 1

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass
class EvalResult:
    policy: str
    param_value: Optional[float]
    mean: float
    std: float
    se: float
    components: dict[str, float]
    service_level: float
    n_episodes: int
    per_episode: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_batch(cls, batch: BatchEvalResult, param_value: Optional[float] = None) -> "EvalResult":
        costs = batch.transformed_total
        n = costs.size
        std = float(np.std(costs, ddof=1)) if n > 1 else 0.0
        demand_total = float(batch.demand_after_lead.sum())
        service = float(batch.sales_after_lead.sum()) / demand_total if demand_total > 0 else 1.0
        return cls(
            policy=batch.policy,
            param_value=param_value,
            mean=float(costs.mean()),
            std=std,
            se=std / math.sqrt(n),
            components={k: float(v.mean()) for k, v in batch.components.items()},
            service_level=service,
            n_episodes=n,
            per_episode=costs,
        )


def run_episode(
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    policy: Policy,
    master_seed: int,
    episode_index: int = 0,
) -> EpisodeLedger:
    """One full episode from the empty initial state; deterministic per
    (master_seed, episode_index). Produces the same totals as the batched
    engine's row for the same indices."""
    if scenario.horizon != params.horizon:
        raise ValueError(
            f"scenario horizon {scenario.horizon} != environment horizon {params.horizon}"
        )
    env = Environment(params, rates)
    demand = sample_demand_path(scenario, (master_seed, episode_index))
    zgen = make_generator(master_seed, episode_index, STREAM_YIELD)
    yields = 1.0 - zgen.random(params.horizon) * params.yield_max
    ctx = single_episode_context(
        params, rates, scenario, master_seed, episode_index, demand_path=demand
    )
    policy.reset(ctx)
    state = env.initial_state()
    outcomes = []
    for t in range(1, params.horizon + 1):
        units = float(policy.batch_orders(state.buckets.reshape(1, -1), t, ctx)[0])
        state, outcome = env.step(state, units, float(demand[t - 1]), float(yields[t - 1]))
        outcomes.append(outcome)
    ledger = env.finalize_episode(state, outcomes)
    if __debug__:
        gap = ledger.identity_gap(rates)
        assert abs(gap) <= 1e-6 * max(1.0, abs(ledger.raw_total)), "dual-accounting identity violated"
    return ledger


def _run_batches(
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    policies: list[Policy],
    cfg: EvalConfig,
    seed_offset: int = 0,
) -> list[BatchEvalResult]:
    indices = np.arange(cfg.n_episodes)
    seed = cfg.master_seed + seed_offset
    if cfg.parallel == 1 or cfg.n_episodes < 2 * cfg.parallel:
        return run_policy_batch(params, rates, scenario, policies, seed, indices)
    chunks = np.array_split(indices, cfg.parallel)
    with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
        futures = [
            pool.submit(run_policy_batch, params, rates, scenario, policies, seed, chunk)
            for chunk in chunks
        ]
        parts = [f.result() for f in futures]
    merged = parts[0]
    for part in parts[1:]:
        merged = [acc.concat(nxt) for acc, nxt in zip(merged, part)]
    return merged


def evaluate_policies(
    policies: list[Policy],
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    cfg: EvalConfig,
) -> list[EvalResult]:
    """Evaluate several policies; with ``crn`` they share demand/yield paths,
    otherwise each policy draws from its own seed offset."""
    if cfg.crn:
        batches = _run_batches(params, rates, scenario, policies, cfg)
    else:
        batches = []
        for i, policy in enumerate(policies):
            batches.extend(
                _run_batches(params, rates, scenario, [policy], cfg, seed_offset=1 + i)
            )
    return [EvalResult.from_batch(b) for b in batches]


def evaluate(
    policy: Policy,
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    cfg: EvalConfig,
) -> EvalResult:
    return evaluate_policies([policy], params, rates, scenario, cfg)[0]


@dataclass
class SearchResult:
    policy_kind: str
    candidates: np.ndarray
    results: list[EvalResult]
    best_param: float
    best: EvalResult
    interval: tuple[int, int]

    def curve(self) -> list[tuple[float, float, float]]:
        return [(float(p), r.mean, r.se) for p, r in zip(self.candidates, self.results)]


def _family_policy(kind: str, value: float, pil_n_paths: int) -> Policy:
    if kind == "out":
        return OutPolicy(s=value)
    if kind == "pil":
        return PilPolicy(u=value, n_paths=pil_n_paths)
    raise ValueError(f"unknown policy family {kind!r}")


def optimize_parameter(
    policy_kind: str,
    interval: tuple[int, int],
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    cfg: EvalConfig,
    pil_n_paths: int = DEFAULT_PIL_PATHS,
    extend_at_edge: bool = True,
    max_extensions: int = 12,
) -> SearchResult:
    """Grid search over integer safety-stock candidates under common random
    numbers; ties break to the smallest parameter.

    If the minimizer lands on an interval edge the grid is extended (up to
    ``max_extensions`` times, 3 candidates per step) so the returned optimum
    is interior whenever possible.
    """
    lo, hi = int(interval[0]), int(interval[1])
    if hi < lo:
        raise ValueError(f"empty search interval [{lo}, {hi}]")
    values = list(range(lo, hi + 1))
    evaluated: dict[int, EvalResult] = {}

    def eval_new(new_values: list[int]) -> None:
        policies = [_family_policy(policy_kind, v, pil_n_paths) for v in new_values]
        batches = _run_batches(params, rates, scenario, policies, cfg)
        for v, batch in zip(new_values, batches):
            evaluated[v] = EvalResult.from_batch(batch, param_value=v)

    eval_new(values)
    extensions = 0
    while extend_at_edge and extensions < max_extensions:
        best_v = min(sorted(evaluated), key=lambda v: (evaluated[v].mean, v))
        low_edge, high_edge = min(evaluated), max(evaluated)
        if best_v == low_edge:
            new = [low_edge - 3, low_edge - 2, low_edge - 1]
        elif best_v == high_edge:
            new = [high_edge + 1, high_edge + 2, high_edge + 3]
        else:
            break
        eval_new(new)
        extensions += 1

    ordered = sorted(evaluated)
    results = [evaluated[v] for v in ordered]
    best_v = min(ordered, key=lambda v: (evaluated[v].mean, v))
    return SearchResult(
        policy_kind=policy_kind,
        candidates=np.asarray(ordered, dtype=float),
        results=results,
        best_param=float(best_v),
        best=evaluated[best_v],
        interval=(min(ordered), max(ordered)),
    )


def compare(
    policies: list[Policy],
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    cfg: EvalConfig,
    reference: int = 0,
) -> list[dict]:
    """Pairwise percentage gaps against a declared reference policy.

    Gap = (cost_other - cost_reference) / cost_reference * 100; positive
    means the reference is cheaper.
    """
    if len(policies) < 2:
        raise ValueError("compare needs at least two policies")
    results = evaluate_policies(policies, params, rates, scenario, cfg)
    ref = results[reference]
    if ref.mean == 0:
        raise ValueError("reference policy has zero mean cost; gaps undefined")
    rows = []
    for res in results:
        rows.append(
            {
                "policy": res.policy,
                "mean_cost": res.mean,
                "std_cost": res.std,
                "se_cost": res.se,
                "gap_pct": (res.mean - ref.mean) / ref.mean * 100.0,
                "is_reference": res is ref,
            }
        )
    return rows
