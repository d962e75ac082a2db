"""Line-oriented protocol exposing the environment as an episodic decision
process, plus the feature projection it serves.

Wire format: one JSON object per line, over stdin/stdout or a local TCP
socket. Requests:

    {"cmd": "spec"}
    {"cmd": "reset", "seed": <int>}
    {"cmd": "step", "action": <int>}
    {"cmd": "close"}

Responses carry ``obs``/``reward``/``done``/``info`` for steps, the initial
``obs`` and ``t`` for resets, the environment dimensions for ``spec``, and
``{"error": ...}`` for anything malformed (the session survives errors).

The observation is the concatenation of the expected on-hand inventory per
age category after the lead time elapses (computed by a deterministic
forward roll with orders zeroed, demand at its forecast and yield at its
mean), the forecast window covering the lead time, and the normalized
period, giving ``lifetime + lead_time + 2`` entries.
"""

from __future__ import annotations

import json
import math
import socketserver
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import BoundContext, out_ub_argmin, pil_ub_argmin
from .demand import DemandScenario, sample_demand_path
from .env import CostRates, Environment, EnvParams, InventoryState, PeriodOutcome
from .seeding import STREAM_YIELD, make_generator


def project_inventory(state, t: int, scenario: DemandScenario, params: EnvParams) -> np.ndarray:
    """Expected on-hand stock per age category ``lead_time`` periods ahead.

    Deterministic roll of the state over periods t .. t+L-1 with orders
    zeroed, demand equal to its forecast, and yield at its mean; the age-m
    slot at t+L belongs to the order being decided now, so it is zero.
    """
    m, L = params.lifetime, params.lead_time
    buckets = state.buckets if isinstance(state, InventoryState) else np.asarray(state, dtype=float)
    S = buckets.astype(float).copy()
    zbar = params.yield_mean()
    forecast = scenario.forecast
    for j in range(L):
        period = t + j
        d = forecast[period - 1] if period <= scenario.horizon else 0.0
        arrived = zbar * S[m - 1]
        on_hand = np.concatenate([S[: m - 1], [arrived]])
        after = np.clip(np.cumsum(on_hand) - d, 0.0, on_hand)
        new_S = np.zeros_like(S)
        new_S[: m - 1] = after[1:]
        if L >= 2:
            new_S[m - 1 : m + L - 2] = S[m:]
        S = new_S
    age_m = zbar * S[m - 1] if S.size >= m else 0.0
    return np.concatenate([S[: m - 1], [age_m]])


def derive_action_cap(params: EnvParams, rates: CostRates, scenario: DemandScenario) -> int:
    """Batch cap for an unbounded action space: enough batches to cover the
    larger of the two policies' upper-bound optima plus a full lead-time
    window of peak demand."""
    sigma_eff = float(scenario.sigma().max())
    ctx = BoundContext(
        horizon=params.horizon,
        lead_time=params.lead_time,
        lifetime=params.lifetime,
        h=rates.h,
        b=rates.b,
        w=rates.w,
        sigma=sigma_eff,
    )
    peak = float(scenario.forecast.max())
    cap_units = max(out_ub_argmin(ctx), pil_ub_argmin(ctx), 0.0) + (params.lead_time + 1) * peak
    return max(1, int(math.ceil(cap_units / params.batch_size)))


@dataclass
class ProtocolSession:
    """One episodic session: reset starts an episode, step advances it,
    done latches until the next reset."""

    params: EnvParams
    rates: CostRates
    scenario: DemandScenario
    normalize: bool = False
    action_count: int = 0
    state: Optional[InventoryState] = None
    demand_path: Optional[np.ndarray] = field(default=None, repr=False)
    yield_path: Optional[np.ndarray] = field(default=None, repr=False)
    outcomes: list[PeriodOutcome] = field(default_factory=list, repr=False)
    done: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        self.env = Environment(self.params, self.rates)
        if self.action_count <= 0:
            if self.params.max_batches is not None:
                self.action_count = self.params.max_batches + 1
            else:
                self.action_count = derive_action_cap(self.params, self.rates, self.scenario) + 1

    @property
    def obs_dim(self) -> int:
        return self.params.lifetime + self.params.lead_time + 2


def make_observation(session: ProtocolSession) -> np.ndarray:
    if session.state is None:
        raise RuntimeError("no active episode")
    p = session.params
    t = session.state.t
    projection = project_inventory(session.state, t, session.scenario, p)
    window = session.scenario.forecast_window(t, p.lead_time + 1)
    obs = np.concatenate([projection, window, [t / p.horizon]])
    if session.normalize:
        peak = max(float(session.scenario.forecast.max()), 1e-12)
        obs[:-1] = obs[:-1] / peak
    return obs


def _spec_response(session: ProtocolSession) -> dict:
    return {
        "obs_dim": session.obs_dim,
        "action_count": session.action_count,
        "horizon": session.params.horizon,
        "normalized": session.normalize,
    }


def _reset(session: ProtocolSession, seed: int) -> dict:
    session.seed = int(seed)
    session.demand_path = sample_demand_path(session.scenario, (session.seed, 0))
    zgen = make_generator(session.seed, 0, STREAM_YIELD)
    session.yield_path = 1.0 - zgen.random(session.params.horizon) * session.params.yield_max
    session.state = session.env.initial_state()
    session.outcomes = []
    session.done = False
    return {"obs": make_observation(session).tolist(), "t": session.state.t}


def _step(session: ProtocolSession, action) -> dict:
    if session.state is None:
        return {"error": "no active episode; send reset first"}
    if session.done:
        return {"error": "episode finished; send reset first"}
    if not isinstance(action, int) or isinstance(action, bool):
        return {"error": "action must be an integer"}
    if action < 0 or action >= session.action_count:
        return {"error": f"action out of range: {action} not in [0, {session.action_count - 1}]"}
    p = session.params
    t = session.state.t
    forced = t > p.last_order_period
    applied = 0 if forced else action
    units = applied * p.batch_size
    state, outcome = session.env.step(
        session.state,
        units,
        float(session.demand_path[t - 1]),
        float(session.yield_path[t - 1]),
    )
    session.state = state
    session.outcomes.append(outcome)
    session.done = state.t > p.horizon
    reward = -outcome.transformed.total()
    info = {
        "forced_zero": forced,
        "applied_action": applied,
        "demand": outcome.demand,
        "sales": outcome.sales,
        "lost_sales": outcome.lost_sales,
        "expired": outcome.expired,
        "arrived": outcome.arrived_units,
        "cost": {
            "ordering_fixed": outcome.transformed.ordering_fixed,
            "holding": outcome.transformed.holding,
            "lost_sales": outcome.transformed.lost_sales,
            "expiration": outcome.transformed.expiration,
        },
    }
    if session.done:
        ledger = session.env.finalize_episode(session.state, session.outcomes)
        info["episode"] = {
            "transformed_total": ledger.transformed_total,
            "raw_total": ledger.raw_total,
            "service_level": ledger.service_level,
        }
    return {
        "obs": make_observation(session).tolist(),
        "reward": reward,
        "done": session.done,
        "info": info,
    }


def handle_message(session: ProtocolSession, message: dict) -> dict:
    """Dispatch one protocol request; errors come back as responses, never
    exceptions, and leave the session usable."""
    if not isinstance(message, dict):
        return {"error": "message must be a JSON object"}
    cmd = message.get("cmd")
    if cmd == "spec":
        return _spec_response(session)
    if cmd == "reset":
        seed = message.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool):
            return {"error": "reset requires an integer seed"}
        return _reset(session, seed)
    if cmd == "step":
        if "action" not in message:
            return {"error": "step requires an action"}
        return _step(session, message["action"])
    if cmd == "close":
        return {"ok": True}
    return {"error": f"unknown command {cmd!r}"}


def parse_line(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"error": f"malformed message: {exc}"}
    if not isinstance(msg, dict):
        return {"error": "message must be a JSON object"}
    return msg


def serve_stream(session: ProtocolSession, reader, writer) -> None:
    """Serve one session over line-delimited JSON until close/EOF."""
    for raw in reader:
        line = raw.strip()
        if not line:
            continue
        msg = parse_line(line)
        response = msg if "error" in msg else handle_message(session, msg)
        writer.write(json.dumps(response) + "\n")
        writer.flush()
        if msg.get("cmd") == "close":
            break


def serve_stdio(params: EnvParams, rates: CostRates, scenario: DemandScenario, normalize: bool = False) -> None:
    session = ProtocolSession(params, rates, scenario, normalize=normalize)
    serve_stream(session, sys.stdin, sys.stdout)


def serve_socket(
    params: EnvParams,
    rates: CostRates,
    scenario: DemandScenario,
    port: int,
    normalize: bool = False,
    ready_callback=None,
) -> None:
    """Host one independent session per connection on localhost."""

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            session = ProtocolSession(params, rates, scenario, normalize=normalize)
            reader = (line.decode("utf-8") for line in self.rfile)

            class _Writer:
                def write(_self, text):
                    self.wfile.write(text.encode("utf-8"))

                def flush(_self):
                    self.wfile.flush()

            serve_stream(session, reader, _Writer())

    with socketserver.ThreadingTCPServer(("127.0.0.1", port), Handler) as server:
        if ready_callback is not None:
            ready_callback(server.server_address[1])
        server.serve_forever()


def save_action_trace(path, actions) -> None:
    actions = np.asarray(actions, dtype=int)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,action\n")
        for t, a in enumerate(actions, start=1):
            fh.write(f"{t},{a}\n")


def load_action_trace(path) -> np.ndarray:
    actions: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "t,action":
            raise ValueError(f"{path}: line 1: expected header 't,action', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 't,action'")
            t, a = int(parts[0]), int(parts[1])
            if t != len(actions) + 1:
                raise ValueError(f"{path}: line {lineno}: periods must be contiguous from 1")
            if a < 0:
                raise ValueError(f"{path}: line {lineno}: action must be nonnegative")
            actions.append(a)
    if not actions:
        raise ValueError(f"{path}: no actions found")
    return np.asarray(actions, dtype=int)
