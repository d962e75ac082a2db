"""Periodic-review perishable inventory environment.

State layout (1-based positions, stored 0-based in ``buckets``):

* positions ``1 .. m-1``  — on-hand stock by remaining lifetime,
* position ``m``          — the order arriving this period (pre-yield),
* positions ``m+1 .. m+L-1`` — in-transit pipeline, ordered by arrival
  distance (position ``m+1`` arrives next period).

A period runs: arrival (yield applied), ordering, FIFO demand
satisfaction, expiration of leftover lifetime-1 stock, holding charge on
everything still on hand, then a one-slot shift with the new order placed
at the far end. With ``lead_time == 0`` the just-placed order arrives in
the same period and there is no pipeline.

Costs are tracked in two accountings simultaneously:

* raw: fixed batch cost, per-unit ordering cost on received (post-yield)
  units, holding, lost sales, expiration at the raw rates, plus a terminal
  salvage credit on remaining on-hand stock;
* transformed: fixed batch cost plus holding/lost/expiration at the
  transformed rates (no unit ordering cost, no salvage).

Lost-sales costs accrue only from period ``lead_time + 1`` on (in both
accountings): an episode starts empty, so demand in the first ``lead_time``
periods is unservable under every policy and charging it would only add a
policy-independent constant. Together with charging unit ordering cost on
received units, this makes the two accountings agree exactly per sample
path:

    raw_total == transformed_total + c_hat * sum(D_t for t > lead_time)

which is asserted (in debug mode) when an episode is finalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import RNG_SCHEME

_BATCH_TOL = 1e-9


def transform_costs(c_hat: float, h_hat: float, b_hat: float, w_hat: float) -> dict[str, float]:
    """Fold the unit ordering cost into the penalty and expiration rates.

    Returns ``{"h": h_hat, "b": b_hat - c_hat, "w": w_hat + c_hat}``.
    Rejects ``b_hat < c_hat`` (the transformed lost-sales rate would be
    negative and ordering would dominate the shortage penalty).
    """
    if b_hat < c_hat:
        raise ValueError(
            f"b_hat ({b_hat}) must be >= c_hat ({c_hat}); transformed lost-sales rate would be negative"
        )
    return {"h": float(h_hat), "b": float(b_hat - c_hat), "w": float(w_hat + c_hat)}


@dataclass(frozen=True)
class CostRates:
    """Raw cost rates plus their transformed counterparts."""

    c_hat: float = 0.0
    h_hat: float = 1.0
    b_hat: float = 100.0
    w_hat: float = 3.0

    def __post_init__(self):
        for name in ("c_hat", "h_hat", "b_hat", "w_hat"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        transform_costs(self.c_hat, self.h_hat, self.b_hat, self.w_hat)

    @property
    def h(self) -> float:
        return self.h_hat

    @property
    def b(self) -> float:
        return self.b_hat - self.c_hat

    @property
    def w(self) -> float:
        return self.w_hat + self.c_hat


@dataclass(frozen=True)
class EnvParams:
    """Constants of the supply chain environment."""

    horizon: int
    lead_time: int
    lifetime: int
    batch_size: float = 1.0
    max_batches: int | None = None
    yield_max: float = 0.0
    batch_costs: tuple[float, ...] = (0.0,)
    rng_scheme: str = RNG_SCHEME

    def __post_init__(self):
        if self.lifetime < 1:
            raise ValueError("lifetime must be >= 1")
        if self.lead_time < 0:
            raise ValueError("lead_time must be >= 0")
        if self.horizon <= self.lead_time:
            raise ValueError("horizon must exceed lead_time")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.max_batches is not None and self.max_batches < 0:
            raise ValueError("max_batches must be >= 0 when set")
        if not (0.0 <= self.yield_max < 1.0):
            raise ValueError("yield_max must lie in [0, 1)")
        costs = tuple(float(k) for k in self.batch_costs)
        if not costs or costs[0] != 0.0:
            raise ValueError("batch_costs must start with K(0) = 0")
        if any(b > a for a, b in zip(costs[1:], costs)):
            raise ValueError("batch_costs must be non-decreasing")
        object.__setattr__(self, "batch_costs", costs)
        if self.rng_scheme != RNG_SCHEME:
            raise ValueError(f"unknown rng_scheme {self.rng_scheme!r}")

    @property
    def state_dim(self) -> int:
        return self.lifetime + self.lead_time - 1

    @property
    def last_order_period(self) -> int:
        """Last period in which a nonzero order may be placed."""
        return self.horizon - self.lead_time

    def batch_cost(self, n_batches: int) -> float:
        """Fixed cost of an order of ``n_batches`` batches; the table's last
        entry extends to larger counts."""
        idx = min(int(n_batches), len(self.batch_costs) - 1)
        return self.batch_costs[idx]

    def yield_mean(self) -> float:
        return 1.0 - self.yield_max / 2.0


def batches_for_quantity(q: float, params: EnvParams) -> int:
    """Number of batches needed to ship ``q`` units (ceiling)."""
    if q < 0:
        raise ValueError("order quantity must be nonnegative")
    n = int(math.ceil(q / params.batch_size - _BATCH_TOL))
    if params.max_batches is not None and n > params.max_batches:
        raise ValueError(
            f"order of {q} units needs {n} batches, above the maximum of {params.max_batches}"
        )
    return max(n, 0)


def batch_order_cost(q: float, params: EnvParams) -> float:
    """Fixed ordering cost K for an order of ``q`` units."""
    return params.batch_cost(batches_for_quantity(q, params))


def draw_yield(rng: np.random.Generator, yield_max: float) -> float:
    """Sample the fractional yield ``1 - U(0,1) * yield_max``."""
    return 1.0 - rng.random() * yield_max


@dataclass(frozen=True)
class InventoryState:
    """Clock plus the age-indexed inventory/pipeline vector."""

    t: int
    buckets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "buckets", np.asarray(self.buckets, dtype=float))

    def validate(self, params: EnvParams) -> None:
        if self.buckets.shape != (params.state_dim,):
            raise ValueError(
                f"state has {self.buckets.shape[0]} buckets, expected {params.state_dim}"
            )
        if np.any(self.buckets < 0) or not np.all(np.isfinite(self.buckets)):
            raise ValueError("bucket quantities must be finite and nonnegative")

    def on_hand(self, params: EnvParams) -> float:
        """Total on-hand stock before this period's arrival."""
        return float(self.buckets[: params.lifetime - 1].sum())


@dataclass(frozen=True)
class CostBreakdown:
    ordering_fixed: float = 0.0
    ordering_unit: float = 0.0
    holding: float = 0.0
    lost_sales: float = 0.0
    expiration: float = 0.0

    def total(self) -> float:
        return (
            self.ordering_fixed
            + self.ordering_unit
            + self.holding
            + self.lost_sales
            + self.expiration
        )


@dataclass(frozen=True)
class PeriodOutcome:
    t: int
    order_units: float
    order_batches: int
    yield_draw: float
    arrived_units: float
    demand: float
    sales: float
    lost_sales: float
    expired: float
    end_on_hand: float
    raw: CostBreakdown
    transformed: CostBreakdown


@dataclass
class EpisodeLedger:
    """Per-period outcomes plus episode totals in both accountings."""

    outcomes: list[PeriodOutcome] = field(default_factory=list)
    raw_total: float = 0.0
    transformed_total: float = 0.0
    salvage: float = 0.0
    demand_after_lead: float = 0.0
    sales_after_lead: float = 0.0
    finalized: bool = False

    def identity_gap(self, rates: CostRates) -> float:
        """Residual of the dual-accounting identity (zero up to float error
        for an episode run from the empty initial state)."""
        return self.raw_total - self.transformed_total - rates.c_hat * self.demand_after_lead

    def component_totals(self) -> dict[str, float]:
        keys = ("ordering_fixed", "ordering_unit", "holding", "lost_sales", "expiration")
        return {k: sum(getattr(o.transformed, k) for o in self.outcomes) for k in keys}

    @property
    def service_level(self) -> float:
        """Fraction of demand satisfied over the periods a policy can serve
        (after the initial lead time)."""
        if self.demand_after_lead <= 0:
            return 1.0
        return self.sales_after_lead / self.demand_after_lead


class Environment:
    """Single-episode state machine for the inventory system.

    Instances hold only immutable configuration; all randomness enters
    through the explicit ``demand`` and ``yield_draw`` arguments of
    :meth:`step`, so independent instances are safe to drive from
    different threads.
    """

    def __init__(self, params: EnvParams, rates: CostRates):
        self.params = params
        self.rates = rates

    def initial_state(self) -> InventoryState:
        return InventoryState(t=1, buckets=np.zeros(self.params.state_dim))

    def step(
        self,
        state: InventoryState,
        order_units: float,
        demand: float,
        yield_draw: float,
    ) -> tuple[InventoryState, PeriodOutcome]:
        """Advance one period.

        ``order_units`` must be a whole number of batches (at most
        ``max_batches``) and must be zero after the last order period.
        """
        p, r = self.params, self.rates
        m, L = p.lifetime, p.lead_time
        state.validate(p)
        if demand < 0 or not math.isfinite(demand):
            raise ValueError("demand must be finite and nonnegative")
        if not (
            1.0 - p.yield_max - _BATCH_TOL <= yield_draw <= 1.0 + _BATCH_TOL
        ):
            raise ValueError(f"yield draw {yield_draw} outside [1 - yield_max, 1]")
        n_batches = batches_for_quantity(order_units, p)
        if abs(n_batches * p.batch_size - order_units) > _BATCH_TOL * max(1.0, order_units):
            raise ValueError(f"order of {order_units} units is not a whole number of batches")
        if state.t > p.last_order_period and order_units > 0:
            raise ValueError(
                f"orders must be zero after period {p.last_order_period} (got {order_units} at t={state.t})"
            )

        buckets = state.buckets
        arriving = order_units if L == 0 else buckets[m - 1]
        arrived = yield_draw * arriving
        on_hand = np.concatenate([buckets[: m - 1], [arrived]])
        y_total = float(on_hand.sum())

        # FIFO issue, oldest first: after-demand stock at age i is
        # clip(cumsum_i - demand, 0, stock_i).
        after = np.clip(np.cumsum(on_hand) - demand, 0.0, on_hand)
        sales = min(demand, y_total)
        lost = demand - sales
        expired = float(after[0])
        hold_units = y_total - sales

        new_buckets = np.zeros(p.state_dim)
        new_buckets[: m - 1] = after[1:]
        if L >= 2:
            new_buckets[m - 1 : m + L - 2] = buckets[m:]
        if L >= 1:
            new_buckets[m + L - 2] = order_units

        fixed = p.batch_cost(n_batches)
        lost_charged = lost if state.t > L else 0.0
        raw = CostBreakdown(
            ordering_fixed=fixed,
            ordering_unit=r.c_hat * arrived,
            holding=r.h_hat * hold_units,
            lost_sales=r.b_hat * lost_charged,
            expiration=r.w_hat * expired,
        )
        transformed = CostBreakdown(
            ordering_fixed=fixed,
            holding=r.h * hold_units,
            lost_sales=r.b * lost_charged,
            expiration=r.w * expired,
        )
        outcome = PeriodOutcome(
            t=state.t,
            order_units=float(order_units),
            order_batches=n_batches,
            yield_draw=float(yield_draw),
            arrived_units=float(arrived),
            demand=float(demand),
            sales=float(sales),
            lost_sales=float(lost),
            expired=expired,
            end_on_hand=float(after[1:].sum()),
            raw=raw,
            transformed=transformed,
        )
        return InventoryState(t=state.t + 1, buckets=new_buckets), outcome

    def finalize_episode(self, state: InventoryState, outcomes: list[PeriodOutcome]) -> EpisodeLedger:
        """Close the books: salvage remaining on-hand stock at ``c_hat`` and
        compute episode totals."""
        p, r = self.params, self.rates
        if state.t != p.horizon + 1:
            raise ValueError(f"episode finalized at t={state.t}, expected t={p.horizon + 1}")
        salvage = r.c_hat * state.on_hand(p)
        ledger = EpisodeLedger(
            outcomes=list(outcomes),
            raw_total=sum(o.raw.total() for o in outcomes) - salvage,
            transformed_total=sum(o.transformed.total() for o in outcomes),
            salvage=salvage,
            demand_after_lead=sum(o.demand for o in outcomes if o.t > p.lead_time),
            sales_after_lead=sum(o.sales for o in outcomes if o.t > p.lead_time),
            finalized=True,
        )
        return ledger
