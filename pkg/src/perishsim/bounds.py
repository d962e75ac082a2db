"""Analytic lower/upper cost bounds for the order-up-to and projected
inventory level policies, and the parameter search intervals they induce.

All bounds assume stationary i.i.d. normal forecast errors, no fixed batch
cost and no yield loss. ``D_k`` below denotes the sum of ``k`` consecutive
forecast errors, i.e. a normal with std ``sigma * sqrt(k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm


def normal_loss(s, sigma: float):
    """E[(s - X)^+] for X ~ N(0, sigma^2); degenerates to max(s, 0) at sigma=0.

    Accepts scalar or array ``s``.
    """
    s = np.asarray(s, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        out = np.maximum(s, 0.0)
    else:
        z = s / sigma
        out = s * norm.cdf(z) + sigma * norm.pdf(z)
    return float(out) if out.ndim == 0 else out


def excess_loss(s, sigma: float):
    """E[(X - s)^+] = normal_loss(s, sigma) - s for zero-mean X."""
    return normal_loss(s, sigma) - np.asarray(s, dtype=float)


@dataclass(frozen=True)
class BoundContext:
    """Everything the bound formulas need.

    ``forecast`` is only used by the PIL lower bound's deterministic term;
    it may be omitted otherwise.
    """

    horizon: int
    lead_time: int
    lifetime: int
    h: float
    b: float
    w: float
    sigma: float
    forecast: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.lifetime < 1 or self.lead_time < 0:
            raise ValueError("lifetime must be >= 1 and lead_time >= 0")
        if self.forecast is not None:
            object.__setattr__(self, "forecast", np.asarray(self.forecast, dtype=float))

    @property
    def sigma_lead(self) -> float:
        """Std of the forecast-error sum over the lead time window (L+1 terms)."""
        return self.sigma * math.sqrt(self.lead_time + 1)

    @property
    def sigma_life(self) -> float:
        """Std of the forecast-error sum over lifetime + lead time (m+L terms)."""
        return self.sigma * math.sqrt(self.lifetime + self.lead_time)


def out_lb(s, ctx: BoundContext):
    """Total-cost lower bound for the order-up-to policy at safety stock s."""
    coef = (ctx.w - ctx.h * ctx.lead_time) / (ctx.lifetime + ctx.lead_time)
    per_period = (
        ctx.h * normal_loss(s, ctx.sigma_lead)
        + ctx.b / (ctx.lead_time + 1) * excess_loss(s, ctx.sigma_lead)
        + coef * normal_loss(s, ctx.sigma_life)
    )
    return ctx.horizon * per_period


def out_ub(s, ctx: BoundContext):
    """Total-cost upper bound for the order-up-to policy (non-perishable relaxation)."""
    per_period = ctx.h * normal_loss(s, ctx.sigma_lead) + (
        ctx.b + ctx.h * ctx.lead_time
    ) * excess_loss(s, ctx.sigma_lead)
    return ctx.horizon * per_period


def out_ub_argmin(ctx: BoundContext) -> float:
    """Minimizer of the upper bound: the (b+hL)/(b+(L+1)h) quantile of D_{L+1}."""
    denom = ctx.b + (ctx.lead_time + 1) * ctx.h
    if denom <= 0:
        raise ValueError("b + (L+1)h must be positive")
    if ctx.sigma == 0:
        return 0.0
    ratio = (ctx.b + ctx.h * ctx.lead_time) / denom
    return ctx.sigma_lead * float(norm.ppf(ratio))


def _grid_argmin(fn, ctx: BoundContext) -> float:
    """Dense-grid minimizer over +-6 std of D_{m+L}; ties go to the smallest s."""
    if ctx.sigma == 0:
        return 0.0
    half = 6.0 * ctx.sigma_life
    grid = np.arange(-half, half + ctx.sigma / 50, ctx.sigma / 50)
    values = fn(grid, ctx)
    return float(grid[int(np.argmin(values))])


def out_lb_argmin(ctx: BoundContext) -> float:
    """Grid minimizer of the lower bound (it may be non-convex when w < hL)."""
    return _grid_argmin(out_lb, ctx)


def forecast_tail_sum(forecast: np.ndarray, lifetime: int, horizon: int) -> float:
    """sum over t=1..T of sum_{j=t+1}^{t+m-1} d_j, with d_j = 0 beyond the horizon."""
    d = np.zeros(horizon)
    forecast = np.asarray(forecast, dtype=float)
    d[: min(horizon, forecast.size)] = forecast[:horizon]
    prefix = np.concatenate([[0.0], np.cumsum(d)])
    t = np.arange(1, horizon + 1)
    hi = np.minimum(t + lifetime - 1, horizon)
    return float((prefix[hi] - prefix[t]).sum())


def pil_lb(u, ctx: BoundContext):
    """Lower bound for the projected-inventory-level policy; differs from the
    order-up-to bound by a constant forecast-dependent term."""
    if ctx.forecast is None:
        raise ValueError("pil_lb needs the forecast series in the context")
    coef = (ctx.w - ctx.h * ctx.lead_time) / (ctx.lifetime + ctx.lead_time)
    return out_lb(u, ctx) - coef * forecast_tail_sum(ctx.forecast, ctx.lifetime, ctx.horizon)


def pil_ub(u, ctx: BoundContext):
    """Upper bound for the projected-inventory-level policy."""
    per_period = (ctx.h + ctx.w / ctx.lifetime) * normal_loss(u, ctx.sigma_lead) + ctx.b * excess_loss(
        u, ctx.sigma_lead
    )
    return ctx.horizon * per_period


def pil_ub_argmin(ctx: BoundContext) -> float:
    """Minimizer of the PIL upper bound: the b/(b+h+w/m) quantile of D_{L+1}."""
    denom = ctx.b + ctx.h + ctx.w / ctx.lifetime
    if denom <= 0:
        raise ValueError("b + h + w/m must be positive")
    if ctx.sigma == 0:
        return 0.0
    return ctx.sigma_lead * float(norm.ppf(ctx.b / denom))


def pil_lb_argmin(ctx: BoundContext) -> float:
    # The PIL lower bound is the order-up-to lower bound minus a constant.
    return out_lb_argmin(ctx)


def bound_argmins(policy_kind: str, ctx: BoundContext) -> tuple[float, float]:
    """(argmin LB, argmin UB) for 'out' or 'pil'."""
    if policy_kind == "out":
        return out_lb_argmin(ctx), out_ub_argmin(ctx)
    if policy_kind == "pil":
        return pil_lb_argmin(ctx), pil_ub_argmin(ctx)
    raise ValueError(f"unknown policy kind {policy_kind!r}")


def search_interval(policy_kind: str, ctx: BoundContext, margin: int = 2) -> tuple[int, int]:
    """Integer safety-stock interval bracketing both bound minimizers."""
    lb_opt, ub_opt = bound_argmins(policy_kind, ctx)
    lo = math.floor(min(lb_opt, ub_opt)) - margin
    hi = math.ceil(max(lb_opt, ub_opt)) + margin
    lo = max(lo, -hi)
    return int(lo), int(hi)


@dataclass(frozen=True)
class BoundsReport:
    """Bound values over the integer search grid for one configuration."""

    policy_kind: str
    grid: np.ndarray
    lb_values: np.ndarray
    ub_values: np.ndarray
    argmin_lb: float
    argmin_ub: float
    interval: tuple[int, int]

    @property
    def grid_argmin_lb(self) -> int:
        return int(self.grid[int(np.argmin(self.lb_values))])

    @property
    def grid_argmin_ub(self) -> int:
        return int(self.grid[int(np.argmin(self.ub_values))])


def bounds_report(policy_kind: str, ctx: BoundContext, margin: int = 2) -> BoundsReport:
    lo, hi = search_interval(policy_kind, ctx, margin=margin)
    grid = np.arange(lo, hi + 1, dtype=float)
    lb_fn = out_lb if policy_kind == "out" else pil_lb
    ub_fn = out_ub if policy_kind == "out" else pil_ub
    lb_opt, ub_opt = bound_argmins(policy_kind, ctx)
    return BoundsReport(
        policy_kind=policy_kind,
        grid=grid,
        lb_values=np.asarray(lb_fn(grid, ctx)),
        ub_values=np.asarray(ub_fn(grid, ctx)),
        argmin_lb=lb_opt,
        argmin_ub=ub_opt,
        interval=(lo, hi),
    )
