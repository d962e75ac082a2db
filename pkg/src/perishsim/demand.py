"""Demand forecasts and noisy demand-path sampling.

A scenario is a deterministic forecast series ``d_t`` plus a noise model
for the forecast error. Realized demand is ``max(0, d_t + sigma_t * N(0,1))``;
the floor at zero biases the mean slightly upward wherever ``d_t`` is small
relative to ``sigma_t``, which callers relying on the normal-error
assumption should keep in mind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import STREAM_DEMAND, make_generator

NOISE_KINDS = ("worst_case", "balanced", "custom")


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean normal forecast error with a per-period std rule.

    * ``worst_case``: constant ``sigma_t = level * max_t d_t``
    * ``balanced``:   proportional ``sigma_t = level * d_t``
    * ``custom``:     explicit ``sigma`` series

    Errors are drawn independently across periods; serially correlated
    forecast errors are out of scope.
    """

    kind: str = "worst_case"
    level: float = 0.15
    sigma: tuple[float, ...] | None = None
    floor_at_zero: bool = True
    integer_demand: bool = False

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.level < 0:
            raise ValueError("noise level must be nonnegative")
        if self.kind == "custom":
            if self.sigma is None:
                raise ValueError("custom noise requires an explicit sigma series")
            sig = tuple(float(s) for s in self.sigma)
            if any(s < 0 for s in sig):
                raise ValueError("sigma values must be nonnegative")
            object.__setattr__(self, "sigma", sig)

    def sigma_series(self, forecast: np.ndarray) -> np.ndarray:
        forecast = np.asarray(forecast, dtype=float)
        if self.kind == "worst_case":
            peak = forecast.max() if forecast.size else 0.0
            return np.full(forecast.shape, self.level * peak)
        if self.kind == "balanced":
            return self.level * forecast
        sig = np.asarray(self.sigma, dtype=float)
        if sig.shape != forecast.shape:
            raise ValueError(
                f"custom sigma has length {sig.shape[0]}, forecast has {forecast.shape[0]}"
            )
        return sig


@dataclass(frozen=True)
class LifecycleConfig:
    """Product-lifecycle forecast: logistic growth, plateau, symmetric decline."""

    horizon: int
    peak: float = 100.0
    growth_frac: float = 0.25
    maturity_frac: float = 0.35
    decline_frac: float = 0.40
    growth_shape: float = 10.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.peak <= 0:
            raise ValueError("peak must be positive")
        fracs = (self.growth_frac, self.maturity_frac, self.decline_frac)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("phase fractions must be nonnegative and sum to 1")
        if self.growth_shape <= 0:
            raise ValueError("growth_shape must be positive")


def lifecycle_forecast(config: LifecycleConfig) -> np.ndarray:
    """Deterministic lifecycle series: ramp to the peak, plateau, decline."""
    T = config.horizon
    n_growth = int(round(config.growth_frac * T))
    n_decline = int(round(config.decline_frac * T))
    n_growth = min(n_growth, T)
    n_decline = min(n_decline, T - n_growth)
    n_mature = T - n_growth - n_decline
    k = config.growth_shape

    def ramp(n: int, rising: bool) -> np.ndarray:
        if n == 0:
            return np.zeros(0)
        tau = (np.arange(n) + 0.5) / n
        sign = 1.0 if rising else -1.0
        return config.peak / (1.0 + np.exp(-sign * k * (tau - 0.5)))

    series = np.concatenate([ramp(n_growth, True), np.full(n_mature, config.peak), ramp(n_decline, False)])
    return series


@dataclass(frozen=True)
class DemandScenario:
    """Forecast series plus forecast-error model."""

    forecast: np.ndarray
    noise: NoiseModel = NoiseModel()

    def __post_init__(self):
        forecast = np.asarray(self.forecast, dtype=float)
        if forecast.ndim != 1 or forecast.size == 0:
            raise ValueError("forecast must be a nonempty 1-D series")
        if np.any(forecast < 0) or not np.all(np.isfinite(forecast)):
            raise ValueError("forecast values must be finite and nonnegative")
        object.__setattr__(self, "forecast", forecast)

    @property
    def horizon(self) -> int:
        return int(self.forecast.size)

    def sigma(self) -> np.ndarray:
        return self.noise.sigma_series(self.forecast)

    def forecast_window(self, t: int, width: int) -> np.ndarray:
        """Forecasts ``d_t .. d_{t+width-1}`` (1-based ``t``), zero-padded
        beyond the horizon."""
        window = np.zeros(width)
        lo = t - 1
        hi = min(lo + width, self.horizon)
        if lo < self.horizon:
            window[: hi - lo] = self.forecast[lo:hi]
        return window


def sample_demand_path(scenario: DemandScenario, seed) -> np.ndarray:
    """One realized demand path; deterministic per seed.

    ``seed`` may be an int or a tuple of ints (e.g. ``(master, episode)``).
    """
    gen = make_generator(seed, STREAM_DEMAND)
    draws = gen.standard_normal(scenario.horizon)
    path = scenario.forecast + scenario.sigma() * draws
    if scenario.noise.floor_at_zero:
        path = np.maximum(path, 0.0)
    if scenario.noise.integer_demand:
        path = np.round(path)
    return path


def save_forecast(path, series: np.ndarray) -> None:
    series = np.asarray(series, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,d\n")
        for t, d in enumerate(series, start=1):
            fh.write(f"{t},{float(d)!r}\n")


def load_forecast(path) -> np.ndarray:
    """Read a ``t,d`` forecast file, validating contiguity and sign."""
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "t,d":
            raise ValueError(f"{path}: line 1: expected header 't,d', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 't,d', got {line!r}")
            try:
                t = int(parts[0])
                d = float(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if t != len(values) + 1:
                raise ValueError(
                    f"{path}: line {lineno}: periods must be contiguous from 1, got t={t}"
                )
            if not np.isfinite(d) or d < 0:
                raise ValueError(f"{path}: line {lineno}: forecast must be nonnegative, got {d}")
            values.append(d)
    if not values:
        raise ValueError(f"{path}: no forecast rows found")
    return np.asarray(values)
