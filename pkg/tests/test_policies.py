import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import bisect
from scipy.stats import norm

from perishsim import (
    CostRates,
    DemandScenario,
    EnvParams,
    InventoryState,
    NoiseModel,
    OutPolicy,
    PilPolicy,
    PlannerPolicy,
    RandomPolicy,
    ReplayPolicy,
    planner_expired_estimate,
    planner_order,
    planner_static_plan,
    planner_safety_stock,
    estimate_projected_adjustment,
    make_policy,
    out_order,
    pil_order,
    run_episode,
)
from perishsim.policies import DecisionContext, quantity_to_batches


def params_for(m=3, L=2, T=30, Q=20.0, n_max=6, yield_max=0.0):
    return EnvParams(
        horizon=T, lead_time=L, lifetime=m, batch_size=Q, max_batches=n_max, yield_max=yield_max
    )


class TestOutOrder:
    forecast = np.full(30, 10.0)

    def test_no_order_when_position_covers_target(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.array([20.0, 20.0, 0.0, 0.0]))
        q, n = out_order(state, 1, 5.0, self.forecast, params)
        assert (q, n) == (0.0, 0)

    def test_gap_and_batch_count(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.array([12.0, 0.0, 0.0, 0.0]))
        q, n = out_order(state, 1, 5.0, self.forecast, params)
        assert q == pytest.approx(23.0)  # 5 + 30 - 12
        assert n == 2

    def test_batch_cap_clamps(self):
        params = params_for(n_max=1)
        state = InventoryState(t=1, buckets=np.array([12.0, 0.0, 0.0, 0.0]))
        q, n = out_order(state, 1, 5.0, self.forecast, params)
        assert n == 1

    def test_missing_forecast_window_rejected(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.zeros(4))
        with pytest.raises(ValueError, match="forecast"):
            out_order(state, 29, 5.0, np.full(29, 10.0), params)

    def test_order_up_to_property(self):
        # After ordering, the position covers the target and overshoots by
        # less than one batch (unbounded batch count).
        gen = np.random.default_rng(5)
        params = params_for(n_max=None)
        for _ in range(50):
            buckets = gen.uniform(0, 30, size=4)
            state = InventoryState(t=1, buckets=buckets)
            s = float(gen.uniform(-5, 15))
            q, n = out_order(state, 1, s, self.forecast, params)
            target = s + 30.0
            position = buckets.sum() + n * params.batch_size
            if q > 0:
                assert position >= target - 1e-9
                assert position < target + params.batch_size
            else:
                assert buckets.sum() >= target - 1e-9


class TestPlannerExpiredEstimate:
    def test_no_demand_accumulates_stock(self):
        assert planner_expired_estimate([3.0, 2.0, 1.0], [0.0, 0.0], 2) == 5.0

    def test_running_max_recursion(self):
        assert planner_expired_estimate([3.0, 2.0], [1.0, 4.0], 1) == 2.0
        assert planner_expired_estimate([3.0, 2.0], [1.0, 4.0], 2) == 2.0

    def test_zero_stock_zero_estimate(self):
        for span in range(3):
            assert planner_expired_estimate([0.0, 0.0], [1.0, 1.0], span) == 0.0

    def test_nondecreasing_in_span_and_stock(self):
        gen = np.random.default_rng(9)
        for _ in range(30):
            stock = gen.uniform(0, 5, size=4)
            d = gen.uniform(0, 5, size=4)
            values = [planner_expired_estimate(stock, d, span) for span in range(5)]
            assert all(b >= a for a, b in zip(values, values[1:]))
            bumped = stock.copy()
            bumped[int(gen.integers(0, 4))] += 1.0
            assert planner_expired_estimate(bumped, d, 4) >= values[4]

    def test_zero_when_forecast_dominates_every_prefix(self):
        stock = [1.0, 1.0, 1.0]
        d = [2.0, 2.0, 2.0]
        assert planner_expired_estimate(stock, d, 3) == 0.0


class TestPlannerSafetyStock:
    def test_zero_mse_leaves_only_additive_factor(self):
        assert planner_safety_stock(0.0, 2.326, 1.5, 4) == 1.5

    def test_formula_substitution(self):
        sigma = 2.0
        expected = 2.326 * sigma * math.sqrt(3) + 0.5
        assert planner_safety_stock(sigma**2, 2.326, 0.5, 2) == pytest.approx(expected, rel=1e-12)

    def test_service_factor_is_99pct_quantile(self):
        from perishsim.policies import DEFAULT_SERVICE_FACTOR

        root = bisect(lambda z: norm.cdf(z) - 0.99, 0, 10, xtol=1e-12)
        assert DEFAULT_SERVICE_FACTOR == pytest.approx(root, abs=1e-6)


class TestPlannerOrder:
    forecast = np.full(30, 10.0)

    def test_reduces_to_out_order_when_no_expiry_risk(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.array([5.0, 0.0, 0.0, 0.0]))
        q_planner, n_planner = planner_order(state, 1, 5.0, self.forecast, params)
        q_out, n_out = out_order(state, 1, 5.0, self.forecast, params)
        assert planner_expired_estimate(state.buckets, self.forecast[:2], 2) == 0.0
        assert (q_planner, n_planner) == (q_out, n_out)

    def test_expired_estimate_raises_order(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.array([30.0, 0.0, 0.0, 0.0]))
        # recursion: max(30-10, 0) = 20 after one period, max(30-20, 20) = 20
        expired_hat = planner_expired_estimate(state.buckets, self.forecast[:2], 2)
        assert expired_hat == 20.0
        q_planner, _ = planner_order(state, 1, 5.0, self.forecast, params)
        q_out, _ = out_order(state, 1, 5.0, self.forecast, params)
        assert q_planner - q_out == pytest.approx(expired_hat)

    def test_zero_inventory_orders_target(self):
        params = params_for(Q=20.0)
        state = InventoryState(t=1, buckets=np.zeros(4))
        q, n = planner_order(state, 1, 10.0, self.forecast, params)
        assert q == pytest.approx(40.0)
        assert n == 2


def deterministic_scenario(T=30, level=10.0):
    return DemandScenario(forecast=np.full(T, level), noise=NoiseModel(kind="balanced", level=0.0))


class TestPlannerStaticPlan:
    def test_plan_replay_reproduces_deterministic_run(self):
        params = params_for(T=30, Q=5.0, n_max=None)
        rates = CostRates(c_hat=0.0, h_hat=1.0, b_hat=50.0, w_hat=2.0)
        scenario = deterministic_scenario()
        plan = planner_static_plan(scenario, params, rates, k1=2.0, k2=1.0)
        assert plan.shape == (30,)
        assert np.all(plan[params.last_order_period :] == 0)
        replay = ReplayPolicy(plan=plan)
        planner = PlannerPolicy(k1=2.0, k2=1.0, mode="formula")
        ledger_replay = run_episode(params, rates, scenario, replay, 123, 0)
        ledger_formula = run_episode(params, rates, scenario, planner, 123, 0)
        assert ledger_replay.transformed_total == pytest.approx(
            ledger_formula.transformed_total, rel=1e-12
        )

    def test_plan_independent_of_seed(self):
        params = params_for(T=20, Q=5.0, n_max=None)
        rates = CostRates()
        scenario = deterministic_scenario(T=20)
        a = planner_static_plan(scenario, params, rates)
        b = planner_static_plan(scenario, params, rates)
        assert a.tolist() == b.tolist()


class TestProjectedAdjustment:
    def test_deterministic_ample_stock(self):
        # sigma = 0 with stock covering both roll periods: expired is the
        # deterministic leftover of the aging buckets, no lost sales.
        # t=1: on hand (2 old, 5 fresh), demand 1 -> 1 old unit expires;
        # t=2: the 5 now-old units face demand 1 -> 4 expire.
        params = params_for(m=2, L=2, Q=1.0, n_max=None)
        scenario = deterministic_scenario(T=30, level=1.0)
        state = InventoryState(t=1, buckets=np.array([2.0, 5.0, 0.0]))
        expired, lost = estimate_projected_adjustment(state, 1, scenario, params, 16, seed=1)
        assert expired == pytest.approx(5.0)
        assert lost == pytest.approx(0.0)

    def test_stockout_counts_lost_sales(self):
        params = params_for(m=2, L=1, Q=1.0, n_max=None)
        scenario = deterministic_scenario(T=30, level=3.0)
        state = InventoryState(t=1, buckets=np.array([1.0, 0.0]))
        expired, lost = estimate_projected_adjustment(state, 1, scenario, params, 8, seed=1)
        assert lost == pytest.approx(2.0)
        assert expired == pytest.approx(0.0)

    def test_matches_quadrature_oracle_one_period(self):
        # L=1 roll: expired = (x1 - D)^+ and lost = (D - x1)^+ for one normal
        # demand; integrate both piecewise-linear functions directly.
        params = params_for(m=2, L=1, Q=1.0, n_max=None)
        level, noise = 4.0, 0.5
        scenario = DemandScenario(
            forecast=np.full(30, level), noise=NoiseModel(kind="balanced", level=noise)
        )
        x1 = 4.6
        state = InventoryState(t=1, buckets=np.array([x1, 0.0]))
        n_paths = 40_000
        expired, lost = estimate_projected_adjustment(state, 1, scenario, params, n_paths, seed=77)
        sigma = level * noise

        def density(x):
            return norm.pdf(x, loc=level, scale=sigma)

        exp_expired = quad(lambda x: max(x1 - max(x, 0.0), 0.0) * density(x), -10 * sigma + level, 10 * sigma + level)[0]
        exp_lost = quad(lambda x: max(max(x, 0.0) - x1, 0.0) * density(x), -10 * sigma + level, 10 * sigma + level)[0]
        # within 4 standard errors of the Monte-Carlo estimate
        se = sigma / math.sqrt(n_paths)
        assert abs(expired - exp_expired) <= 4 * se
        assert abs(lost - exp_lost) <= 4 * se

    def test_deterministic_per_seed(self):
        params = params_for(m=3, L=2, Q=1.0, n_max=None)
        scenario = DemandScenario(
            forecast=np.full(30, 5.0), noise=NoiseModel(kind="balanced", level=0.2)
        )
        state = InventoryState(t=4, buckets=np.array([1.0, 2.0, 3.0, 4.0]))
        a = estimate_projected_adjustment(state, 4, scenario, params, 1, seed=(9, 0))
        b = estimate_projected_adjustment(state, 4, scenario, params, 1, seed=(9, 0))
        assert a == b

    def test_rejects_zero_paths(self):
        params = params_for()
        with pytest.raises(ValueError):
            estimate_projected_adjustment(
                InventoryState(t=1, buckets=np.zeros(4)), 1, deterministic_scenario(), params, 0, 1
            )


class TestPilOrder:
    forecast = np.full(30, 10.0)

    def test_zero_adjustment_reduces_to_out(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.array([12.0, 0.0, 0.0, 0.0]))
        assert pil_order(state, 1, 5.0, self.forecast, (0.0, 0.0), params) == out_order(
            state, 1, 5.0, self.forecast, params
        )

    def test_adjustment_linearity(self):
        params = params_for(Q=1.0, n_max=None)
        state = InventoryState(t=1, buckets=np.array([12.0, 0.0, 0.0, 0.0]))
        q_adj, _ = pil_order(state, 1, 5.0, self.forecast, (4.0, 1.0), params)
        q_out, _ = out_order(state, 1, 5.0, self.forecast, params)
        assert q_adj - q_out == pytest.approx(3.0)

    def test_negative_gap_clips_to_zero(self):
        params = params_for()
        state = InventoryState(t=1, buckets=np.array([50.0, 0.0, 0.0, 0.0]))
        q, n = pil_order(state, 1, 5.0, self.forecast, (6.0, 2.0), params)
        assert (q, n) == (0.0, 0)


class TestPolicyInvariants:
    def make_ctx(self, params, scenario, n=4):
        rates = CostRates(c_hat=0.0, h_hat=1.0, b_hat=50.0, w_hat=2.0)
        ctx = DecisionContext(
            params=params,
            rates=rates,
            scenario=scenario,
            master_seed=31,
            episode_indices=np.arange(n),
        )
        ctx.demand_matrix = np.tile(scenario.forecast, (n, 1))
        return ctx

    @pytest.mark.parametrize(
        "policy",
        [
            OutPolicy(s=5.0),
            PilPolicy(u=5.0, n_paths=8),
            PlannerPolicy(mode="formula"),
            RandomPolicy(max_batches=6),
        ],
    )
    def test_batch_range_and_horizon_cutoff(self, policy):
        params = params_for(m=2, L=2, T=12, Q=5.0, n_max=6)
        scenario = DemandScenario(
            forecast=np.full(12, 8.0), noise=NoiseModel(kind="balanced", level=0.2)
        )
        ctx = self.make_ctx(params, scenario)
        policy.reset(ctx)
        gen = np.random.default_rng(0)
        for t in range(1, 13):
            buckets = gen.uniform(0, 10, size=(4, params.state_dim))
            units = np.asarray(policy.batch_orders(buckets, t, ctx), dtype=float)
            batches = units / params.batch_size
            assert np.all(batches >= 0)
            assert np.all(batches <= 6)
            assert np.allclose(batches, np.round(batches))
            if t > params.last_order_period:
                assert np.all(units == 0)

    def test_quantity_to_batches_edge_cases(self):
        params = params_for(Q=5.0, n_max=3)
        assert quantity_to_batches(np.array([-2.0, 0.0, 0.1, 5.0, 100.0]), params, 1).tolist() == [
            0.0,
            0.0,
            5.0,
            5.0,
            15.0,
        ]
        assert quantity_to_batches(np.array([100.0]), params, 29).tolist() == [0.0]


class TestMakePolicy:
    def test_round_trip_kinds(self):
        assert make_policy({"kind": "out", "s": 3}).s == 3.0
        assert make_policy({"kind": "pil", "u": 2, "n_paths": 16}).n_paths == 16
        assert make_policy({"kind": "planner", "mode": "formula"}).mode == "formula"
        assert make_policy({"kind": "replay", "plan": [0, 1, 0]}).plan.tolist() == [0, 1, 0]
        assert make_policy({"kind": "random", "max_batches": 4}).max_batches == 4
        with pytest.raises(ValueError):
            make_policy({"kind": "mystery"})
