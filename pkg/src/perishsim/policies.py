"""Ordering policies: order-up-to (OUT), projected inventory level (PIL),
the planner-style baseline, plus replay/random references.

Every policy implements ``batch_orders(buckets, t, ctx)`` mapping a batch of
pre-arrival states (one row per episode) to order quantities in units.
Orders are whole batches: the raw target gap is rounded up to ``ceil(q/Q)``
batches (clamped to ``max_batches``) and the shipped quantity is
``n * batch_size``. All policies order zero in the final ``lead_time``
periods.

The inventory position a policy sees is the plain sum of the state vector
(the arriving bucket at face value, before yield is drawn).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .demand import DemandScenario
from .env import CostRates, Environment, EnvParams, InventoryState
from .seeding import STREAM_PIL, STREAM_POLICY, make_generator

DEFAULT_SERVICE_FACTOR = 2.3263478740408408  # standard normal 99% quantile
DEFAULT_PIL_PATHS = 200
DEFAULT_MSE_WINDOW = 12


@dataclass
class DecisionContext:
    """Per-evaluation context shared by all policies in one run.

    Holds the environment constants, the scenario, the master seed and the
    episode indices (for per-episode streams), and — once the engine has
    generated it — the realized demand matrix, which history-based policies
    may read strictly below the current period.
    """

    params: EnvParams
    rates: CostRates
    scenario: DemandScenario
    master_seed: int
    episode_indices: np.ndarray
    demand_matrix: Optional[np.ndarray] = None
    _pil_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_episodes(self) -> int:
        return int(self.episode_indices.size)

    def forecast_window_sum(self, t: int) -> float:
        """Cumulative forecast over periods t .. t+L (zero beyond horizon)."""
        width = self.params.lead_time + 1
        return float(self.scenario.forecast_window(t, width).sum())

    def demand_history(self, t: int) -> np.ndarray:
        """Realized demand strictly before period t, shape (n_episodes, t-1)."""
        if self.demand_matrix is None:
            raise RuntimeError("demand history not available in this context")
        return self.demand_matrix[:, : t - 1]

    def pil_noise(self, t: int, n_paths: int) -> np.ndarray:
        """Standard-normal draws for the projection estimator at period t,
        shape (L, n_episodes, n_paths).

        Frozen per (episode, period): every policy evaluated in this context
        sees the same draws, which keeps parameter search smooth under
        common random numbers. Only the most recent period is cached.
        """
        key = (t, n_paths)
        if key not in self._pil_cache:
            self._pil_cache.clear()
            L = self.params.lead_time
            out = np.empty((L, self.n_episodes, n_paths))
            for row, idx in enumerate(self.episode_indices):
                gen = make_generator(self.master_seed, int(idx), STREAM_PIL, t)
                out[:, row, :] = gen.standard_normal((L, n_paths))
            self._pil_cache[key] = out
        return self._pil_cache[key]


def single_episode_context(
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    master_seed: int,
    episode_index: int = 0,
    demand_path: Optional[np.ndarray] = None,
) -> DecisionContext:
    ctx = DecisionContext(
        params=params,
        rates=rates,
        scenario=scenario,
        master_seed=int(master_seed),
        episode_indices=np.asarray([episode_index]),
    )
    if demand_path is not None:
        ctx.demand_matrix = np.asarray(demand_path, dtype=float).reshape(1, -1)
    return ctx


def quantity_to_batches(q_raw: np.ndarray, params: EnvParams, t: int) -> np.ndarray:
    """Round target gaps up to whole batches, clamp, and zero out orders in
    the no-order tail of the horizon. Returns units (n_batches * Q)."""
    q_raw = np.maximum(np.asarray(q_raw, dtype=float), 0.0)
    if t > params.last_order_period:
        return np.zeros_like(q_raw)
    n = np.maximum(np.ceil(q_raw / params.batch_size - 1e-12), 0.0)
    if params.max_batches is not None:
        n = np.minimum(n, params.max_batches)
    return n * params.batch_size


def _buckets_of(state) -> np.ndarray:
    if isinstance(state, InventoryState):
        return state.buckets
    return np.asarray(state, dtype=float)


def _require_forecast_window(forecast: np.ndarray, t: int, lead_time: int) -> np.ndarray:
    forecast = np.asarray(forecast, dtype=float)
    if forecast.size < t + lead_time:
        raise ValueError(
            f"forecast covers {forecast.size} periods, need t..t+L = {t}..{t + lead_time}"
        )
    return forecast[t - 1 : t + lead_time]


class Policy:
    """Base interface: immutable after construction, stateless across episodes
    except for data precomputed in :meth:`reset`."""

    kind = "policy"

    def describe(self) -> str:
        return self.kind

    def reset(self, ctx: DecisionContext) -> None:
        """Called once per evaluation before any decision."""

    def batch_orders(self, buckets: np.ndarray, t: int, ctx: DecisionContext) -> np.ndarray:
        raise NotImplementedError


@dataclass
class OutPolicy(Policy):
    """Order up to ``s + cumulative lead-time forecast``."""

    s: float
    kind = "out"

    def describe(self) -> str:
        return f"out(s={self.s:g})"

    def batch_orders(self, buckets, t, ctx):
        target = self.s + ctx.forecast_window_sum(t)
        gap = target - buckets.sum(axis=1)
        return quantity_to_batches(gap, ctx.params, t)


def _gap_to_order(gap: float, params: EnvParams, t: int) -> tuple[float, int]:
    """(raw quantity, batch count) for a target gap; shipped units are
    ``batches * batch_size``."""
    q_raw = max(float(gap), 0.0)
    units = float(quantity_to_batches(np.asarray([q_raw]), params, t)[0])
    return q_raw if t <= params.last_order_period else 0.0, int(round(units / params.batch_size))


def out_order(state, t: int, s: float, forecast, params: EnvParams) -> tuple[float, int]:
    """Single-state order-up-to decision; returns (raw quantity, batches)."""
    window = _require_forecast_window(forecast, t, params.lead_time)
    target = s + float(window.sum())
    return _gap_to_order(target - _buckets_of(state).sum(), params, t)


def planner_expired_estimate(stock, forecasts, span: int) -> float:
    """Heuristic cumulative expired quantity over ``span`` periods.

    Runs the running-max recursion: the estimate over the first j periods is
    ``max(sum(stock[:j]) - sum(d[:j]), estimate over j-1)``, starting from 0.
    Nondecreasing in ``span`` and in each stock component.
    """
    stock = np.asarray(stock, dtype=float)
    forecasts = np.asarray(forecasts, dtype=float)
    if span < 0:
        raise ValueError("span must be nonnegative")
    if span > forecasts.size:
        raise ValueError(f"need {span} forecast values, got {forecasts.size}")
    estimate = 0.0
    for j in range(1, span + 1):
        stock_prefix = stock[: min(j, stock.size)].sum()
        estimate = max(stock_prefix - forecasts[:j].sum(), estimate)
    return float(estimate)


def _planner_expired_estimate_batch(
    buckets: np.ndarray, forecast_prefix: np.ndarray, span: int
) -> np.ndarray:
    """Vectorized running-max recursion over a batch of states."""
    if span == 0:
        return np.zeros(buckets.shape[0])
    width = min(span, buckets.shape[1])
    stock_prefix = np.cumsum(buckets[:, :width], axis=1)
    if span > width:
        stock_prefix = np.concatenate(
            [stock_prefix, np.repeat(stock_prefix[:, -1:], span - width, axis=1)], axis=1
        )
    diffs = stock_prefix - forecast_prefix[:span]
    return np.maximum(np.maximum.accumulate(diffs, axis=1)[:, -1], 0.0)


def planner_safety_stock(mse: float, k1: float, k2: float, lead_time: int) -> float:
    """Planner safety stock: ``k1 * sqrt((L+1) * MSE) + k2``."""
    if mse < 0:
        raise ValueError("mse must be nonnegative")
    return k1 * math.sqrt((lead_time + 1) * mse) + k2


def planner_order(state, t: int, safety_stock: float, forecast, params: EnvParams) -> tuple[float, int]:
    """Planner decision: order up to the target after deducting the expired
    estimate from the inventory position; returns (raw quantity, batches)."""
    window = _require_forecast_window(forecast, t, params.lead_time)
    buckets = _buckets_of(state)
    forecast_arr = np.asarray(forecast, dtype=float)
    span = params.lead_time
    expired_hat = planner_expired_estimate(buckets, forecast_arr[t - 1 : t - 1 + span], span)
    target = safety_stock + float(window.sum())
    return _gap_to_order(target - (buckets.sum() - expired_hat), params, t)


@dataclass
class PlannerPolicy(Policy):
    """Planner baseline: EWA-style target with a service-level safety stock.

    ``formula`` mode recomputes the rule live from a rolling MSE of realized
    forecast errors (falling back to the scenario's known sigma_t^2 while
    fewer than ``window`` observations exist). ``static_replay`` mode runs
    the rule once on the noise-free path (demand = forecast, yield at its
    mean, MSE = sigma_t^2) and replays the resulting fixed plan everywhere.
    """

    k1: float = DEFAULT_SERVICE_FACTOR
    k2: float = 0.0
    window: int = DEFAULT_MSE_WINDOW
    mode: str = "static_replay"
    plan: Optional[np.ndarray] = None
    kind = "planner"

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be nonnegative")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.mode not in ("formula", "static_replay"):
            raise ValueError(f"unknown planner mode {self.mode!r}")
        self._user_plan = self.plan is not None

    def describe(self) -> str:
        return f"planner({self.mode},k1={self.k1:g},k2={self.k2:g})"

    def reset(self, ctx):
        if self.mode == "static_replay" and not self._user_plan:
            self.plan = planner_static_plan(
                ctx.scenario, ctx.params, ctx.rates, k1=self.k1, k2=self.k2
            )
        self._sq_err_prefix = None

    def _mse(self, t: int, ctx: DecisionContext) -> np.ndarray:
        sigma_t = ctx.scenario.sigma()[min(t, ctx.scenario.horizon) - 1]
        if t - 1 < self.window:
            return np.full(ctx.n_episodes, sigma_t**2)
        if self._sq_err_prefix is None:
            errors = ctx.demand_matrix - ctx.scenario.forecast[None, : ctx.demand_matrix.shape[1]]
            self._sq_err_prefix = np.concatenate(
                [np.zeros((ctx.n_episodes, 1)), np.cumsum(errors**2, axis=1)], axis=1
            )
        p = self._sq_err_prefix
        return (p[:, t - 1] - p[:, t - 1 - self.window]) / self.window

    def batch_orders(self, buckets, t, ctx):
        if self.mode == "static_replay":
            units = self.plan[t - 1] * ctx.params.batch_size
            return np.full(buckets.shape[0], units)
        L = ctx.params.lead_time
        mse = self._mse(t, ctx)
        safety = self.k1 * np.sqrt((L + 1) * mse) + self.k2
        forecast_prefix = np.cumsum(ctx.scenario.forecast_window(t, max(L, 1)))
        expired_hat = _planner_expired_estimate_batch(buckets, forecast_prefix, L)
        gap = safety + ctx.forecast_window_sum(t) - (buckets.sum(axis=1) - expired_hat)
        return quantity_to_batches(gap, ctx.params, t)


def planner_static_plan(
    scenario: DemandScenario,
    params: EnvParams,
    rates: CostRates,
    k1: float = DEFAULT_SERVICE_FACTOR,
    k2: float = 0.0,
) -> np.ndarray:
    """Run one noise-free episode (demand = forecast, yield at its mean) under
    the planner formula and record the batch counts per period.

    The deterministic run realizes zero forecast error, so the rule's MSE
    input is taken from the scenario's known sigma_t^2 — the plan must carry
    the safety stock the planners intend against real noise.
    """
    env = Environment(params, rates)
    state = env.initial_state()
    sigma = scenario.sigma()
    forecast = scenario.forecast
    zbar = params.yield_mean()
    plan = np.zeros(params.horizon, dtype=int)
    for t in range(1, params.horizon + 1):
        n = 0
        if t <= params.last_order_period:
            safety = planner_safety_stock(float(sigma[t - 1] ** 2), k1, k2, params.lead_time)
            _, n = planner_order(state, t, safety, forecast, params)
            plan[t - 1] = n
        demand = forecast[t - 1] if t <= scenario.horizon else 0.0
        state, _ = env.step(state, n * params.batch_size, demand, zbar)
    return plan


@dataclass
class ReplayPolicy(Policy):
    """Replay a fixed per-period batch plan."""

    plan: np.ndarray
    kind = "replay"

    def __post_init__(self):
        self.plan = np.asarray(self.plan, dtype=int)
        if np.any(self.plan < 0):
            raise ValueError("replay plan must be nonnegative")

    def describe(self) -> str:
        return "replay"

    def reset(self, ctx):
        if self.plan.size != ctx.params.horizon:
            raise ValueError(
                f"replay plan length {self.plan.size} != horizon {ctx.params.horizon}"
            )
        tail = self.plan[ctx.params.last_order_period :]
        if np.any(tail != 0):
            raise ValueError("replay plan must be zero in the final lead_time periods")

    def batch_orders(self, buckets, t, ctx):
        return np.full(buckets.shape[0], self.plan[t - 1] * ctx.params.batch_size)


@dataclass
class RandomPolicy(Policy):
    """Uniform random batch counts — a reference baseline."""

    max_batches: Optional[int] = None
    kind = "random"

    def describe(self) -> str:
        return "random"

    def reset(self, ctx):
        cap = self.max_batches
        if cap is None:
            cap = ctx.params.max_batches
        if cap is None:
            raise ValueError("random policy needs a batch cap")
        T = ctx.params.horizon
        self._actions = np.zeros((ctx.n_episodes, T), dtype=int)
        for row, idx in enumerate(ctx.episode_indices):
            gen = make_generator(ctx.master_seed, int(idx), STREAM_POLICY)
            self._actions[row] = gen.integers(0, cap + 1, size=T)

    def batch_orders(self, buckets, t, ctx):
        if t > ctx.params.last_order_period:
            return np.zeros(buckets.shape[0])
        return self._actions[:, t - 1] * ctx.params.batch_size


def projection_rollout(
    states: np.ndarray,
    t: int,
    noise: np.ndarray,
    scenario: DemandScenario,
    params: EnvParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo forward roll over the lead time with orders zeroed.

    ``states`` is (k, dim); ``noise`` is (L, k, n_paths) standard normals.
    Pipeline arrivals shift in at the mean yield; demand is sampled from the
    scenario's true distribution. Returns per-state path averages of
    (cumulative expired, cumulative lost) over periods t .. t+L-1.

    Arrays are kept age-major, (age, state*path), so per-age operations run
    on contiguous rows.
    """
    m, L = params.lifetime, params.lead_time
    k = states.shape[0]
    if L == 0:
        return np.zeros(k), np.zeros(k)
    noise_flat = noise.reshape(L, -1)
    rows = noise_flat.shape[1]
    n_paths = rows // k
    S = np.repeat(np.ascontiguousarray(states.T), n_paths, axis=1)
    zbar = params.yield_mean()
    sigma = scenario.sigma()
    forecast = scenario.forecast
    horizon = scenario.horizon
    expired_cum = np.zeros(rows)
    lost_cum = np.zeros(rows)
    # preallocated buffers; after the demand pass `work` holds the
    # post-demand stock clip(prefix-sum - D, 0, on_hand)
    on_hand = np.empty((m, rows))
    work = np.empty((m, rows))
    demand = np.empty(rows)
    next_S = np.empty_like(S)
    for j in range(L):
        period = t + j
        d_j = forecast[period - 1] if period <= horizon else 0.0
        s_j = sigma[period - 1] if period <= horizon else 0.0
        np.multiply(noise_flat[j], s_j, out=demand)
        demand += d_j
        if scenario.noise.floor_at_zero:
            np.maximum(demand, 0.0, out=demand)
        on_hand[: m - 1] = S[: m - 1]
        np.multiply(S[m - 1], zbar, out=on_hand[m - 1])
        np.copyto(work[0], on_hand[0])
        for i in range(1, m):
            np.add(work[i - 1], on_hand[i], out=work[i])
        lost_cum += np.maximum(demand - work[m - 1], 0.0)
        work -= demand
        np.clip(work, 0.0, on_hand, out=work)
        expired_cum += work[0]
        next_S[: m - 1] = work[1:]
        if L >= 2:
            next_S[m - 1 : m + L - 2] = S[m:]
        next_S[-1] = 0.0
        S, next_S = next_S, S
    expired = expired_cum.reshape(k, n_paths).mean(axis=1)
    lost = lost_cum.reshape(k, n_paths).mean(axis=1)
    return expired, lost


def estimate_projected_adjustment(
    state,
    t: int,
    scenario: DemandScenario,
    params: EnvParams,
    n_paths: int,
    seed,
) -> tuple[float, float]:
    """Expected (cumulative expired, cumulative lost) over t .. t+L-1 for a
    single state, via Monte-Carlo with a seed frozen per (seed, t)."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    buckets = _buckets_of(state).reshape(1, -1)
    gen = make_generator(seed, STREAM_PIL, t)
    noise = gen.standard_normal((params.lead_time, n_paths)).reshape(
        params.lead_time, 1, n_paths
    )
    expired, lost = projection_rollout(buckets, t, noise, scenario, params)
    return float(expired[0]), float(lost[0])


def pil_order(
    state,
    t: int,
    u: float,
    forecast,
    adjustment: tuple[float, float],
    params: EnvParams,
) -> tuple[float, int]:
    """Projected-inventory-level decision: the order-up-to gap corrected by
    the expected expired (added) and lost (subtracted) quantities; returns
    (raw quantity, batches)."""
    window = _require_forecast_window(forecast, t, params.lead_time)
    expired_hat, lost_hat = adjustment
    gap = u + float(window.sum()) - _buckets_of(state).sum() + expired_hat - lost_hat
    return _gap_to_order(gap, params, t)


@dataclass
class PilPolicy(Policy):
    """Order so the expected inventory level after the lead time hits
    ``u + d_{t+L}``, correcting for expected expirations and lost sales."""

    u: float
    n_paths: int = DEFAULT_PIL_PATHS
    kind = "pil"

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")

    def describe(self) -> str:
        return f"pil(u={self.u:g},paths={self.n_paths})"

    def batch_orders(self, buckets, t, ctx):
        if t > ctx.params.last_order_period:
            return np.zeros(buckets.shape[0])
        if ctx.params.lead_time > 0:
            noise = ctx.pil_noise(t, self.n_paths)
            expired_hat, lost_hat = projection_rollout(
                buckets, t, noise, ctx.scenario, ctx.params
            )
        else:
            expired_hat = lost_hat = 0.0
        gap = (
            self.u
            + ctx.forecast_window_sum(t)
            - buckets.sum(axis=1)
            + expired_hat
            - lost_hat
        )
        return quantity_to_batches(gap, ctx.params, t)


def make_policy(spec: dict) -> Policy:
    """Build a policy from its config block (``kind`` plus parameters)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "out":
        return OutPolicy(s=float(spec["s"]))
    if kind == "pil":
        return PilPolicy(u=float(spec["u"]), n_paths=int(spec.get("n_paths", DEFAULT_PIL_PATHS)))
    if kind == "planner":
        return PlannerPolicy(
            k1=float(spec.get("k1", DEFAULT_SERVICE_FACTOR)),
            k2=float(spec.get("k2", 0.0)),
            window=int(spec.get("window", DEFAULT_MSE_WINDOW)),
            mode=spec.get("mode", "static_replay"),
        )
    if kind == "replay":
        if "plan" in spec:
            return ReplayPolicy(plan=np.asarray(spec["plan"], dtype=int))
        from .bridge import load_action_trace

        return ReplayPolicy(plan=load_action_trace(spec["plan_file"]))
    if kind == "random":
        max_b = spec.get("max_batches")
        return RandomPolicy(max_batches=None if max_b is None else int(max_b))
    raise ValueError(f"unknown policy kind {kind!r}")
