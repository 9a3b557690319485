"""Monte Carlo scenario fans from seasonal ARIMA signal models.

Each raw signal (wind speed in m/s, load in pu) follows

    phi(B) Phi(B^s) (1 - B)^d (1 - B^s)^D (y_t - mean) = theta(B) Theta(B^s) e_t

with Gaussian innovations. The fan is conditioned on observed history by
recovering past innovations with the same recursion.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from ..errors import ConfigurationError, DimensionError
from .tree import ScenarioFan


@dataclass(frozen=True)
class SignalModel:
    """Seasonal ARIMA coefficients for one raw signal (sign convention: y = sum(ar*y_lag) + ...)."""

    ar: tuple = ()
    ma: tuple = ()
    seasonal_ar: tuple = ()
    seasonal_ma: tuple = ()
    d: int = 0
    seasonal_d: int = 0
    season: int = 1
    sigma: float = 0.0
    mean: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError("residual sigma must be nonnegative")
        if self.season < 1 or self.d < 0 or self.seasonal_d < 0:
            raise ConfigurationError("season >= 1 and nonnegative differencing orders required")

    def lag_polynomials(self) -> tuple[np.ndarray, np.ndarray]:
        """Full AR and MA lag polynomials, both with leading coefficient 1."""
        s = self.season
        ar = np.concatenate(([1.0], -np.asarray(self.ar, float)))
        sar = np.zeros(s * len(self.seasonal_ar) + 1)
        sar[0] = 1.0
        for k, c in enumerate(self.seasonal_ar, start=1):
            sar[k * s] = -c
        diff = np.array([1.0])
        for _ in range(self.d):
            diff = P.polymul(diff, [1.0, -1.0])
        sdiff = np.zeros(s + 1)
        sdiff[0], sdiff[s] = 1.0, -1.0
        for _ in range(self.seasonal_d):
            diff = P.polymul(diff, sdiff)
        full_ar = P.polymul(P.polymul(ar, sar), diff)
        ma = np.concatenate(([1.0], np.asarray(self.ma, float)))
        sma = np.zeros(s * len(self.seasonal_ma) + 1)
        sma[0] = 1.0
        for k, c in enumerate(self.seasonal_ma, start=1):
            sma[k * s] = c
        full_ma = P.polymul(ma, sma)
        return full_ar, full_ma

    @property
    def required_history(self) -> int:
        a, m = self.lag_polynomials()
        return max(len(a) - 1, len(m) - 1, 1)


@dataclass(frozen=True)
class WindCurve:
    """Cubic wind-speed-to-power curve clamped to ``[0, rated_power]``."""

    coefficient: float
    rated_power: float

    def __post_init__(self):
        if self.rated_power <= 0:
            raise ConfigurationError("rated power must be positive")
        if self.coefficient < 0:
            raise ConfigurationError("cubic coefficient must be nonnegative")

    def __call__(self, speed):
        v = np.asarray(speed, dtype=float)
        return np.clip(self.coefficient * v ** 3, 0.0, self.rated_power)


@dataclass(frozen=True)
class ForecasterSpec:
    """Signal models for the renewable (wind-speed) and load signals."""

    wind: tuple
    load: tuple
    curves: tuple
    seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.curves) != len(self.wind):
            raise ConfigurationError("one wind curve per renewable signal required")

    @property
    def n_renewables(self) -> int:
        return len(self.wind)

    @property
    def signals(self) -> tuple:
        return tuple(self.wind) + tuple(self.load)

    @property
    def required_history(self) -> int:
        return max(m.required_history for m in self.signals)

    def polynomials(self, j: int):
        if j not in self._cache:
            self._cache[j] = self.signals[j].lag_polynomials()
        return self._cache[j]

    def to_disturbance(self, raw) -> np.ndarray:
        """Map raw signals ``(..., n_signals)`` to disturbances ``(..., W)``."""
        raw = np.asarray(raw, dtype=float)
        out = np.empty_like(raw)
        r = self.n_renewables
        for j, curve in enumerate(self.curves):
            out[..., j] = curve(raw[..., j])
        out[..., r:] = np.maximum(raw[..., r:], 0.0)
        return out


def _innovations(y: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Recover innovations of a history series; pre-sample innovations are zero."""
    p, q = len(ar) - 1, len(ma) - 1
    e = np.zeros_like(y)
    for t in range(len(y)):
        if t < p:
            continue
        val = ar @ y[t - p:t + 1][::-1]
        for k in range(1, q + 1):
            if t - k >= 0:
                val -= ma[k] * e[t - k]
        e[t] = val
    return e


def simulate_raw(spec: ForecasterSpec, history, horizon: int, n: int, seed) -> np.ndarray:
    """Raw signal paths ``(n, horizon, n_signals)`` continuing ``history``.

    Scenario ``k`` draws its innovations from the ``k``-th child of
    ``SeedSequence(seed)``, so the fan does not depend on how scenarios are
    scheduled.
    """
    history = np.asarray(history, dtype=float)
    if history.ndim == 1:
        history = history[:, None]
    n_sig = len(spec.signals)
    if history.ndim != 2 or history.shape[1] != n_sig:
        raise DimensionError(f"history needs {n_sig} signal columns, got shape {history.shape}")
    if horizon < 1 or n < 1:
        raise ConfigurationError("horizon and scenario count must be positive")
    need = spec.required_history
    if history.shape[0] < need:
        raise ConfigurationError(f"history of {history.shape[0]} steps is shorter than the {need} the models need")
    children = np.random.SeedSequence(seed).spawn(n)
    noise = np.stack([np.random.default_rng(c).standard_normal((horizon, n_sig)) for c in children])
    out = np.empty((n, horizon, n_sig))
    for j, model in enumerate(spec.signals):
        ar, ma = spec.polynomials(j)
        p, q = len(ar) - 1, len(ma) - 1
        y_hist = history[:, j] - model.mean
        e_hist = _innovations(y_hist, ar, ma)
        lag = max(p, q, 1)
        y = np.zeros((n, lag + horizon))
        e = np.zeros((n, lag + horizon))
        y[:, :lag] = y_hist[-lag:]
        e[:, :lag] = e_hist[-lag:]
        e[:, lag:] = model.sigma * noise[:, :, j]
        for t in range(lag, lag + horizon):
            acc = e[:, t].copy()
            for k in range(1, p + 1):
                if ar[k] != 0.0:
                    acc -= ar[k] * y[:, t - k]
            for k in range(1, q + 1):
                if ma[k] != 0.0:
                    acc += ma[k] * e[:, t - k]
            y[:, t] = acc
        out[:, :, j] = y[:, lag:] + model.mean
    return out


def simulate_fan(spec: ForecasterSpec, history, horizon: int, n: int, seed) -> ScenarioFan:
    raw = simulate_raw(spec, history, horizon, n, seed)
    return ScenarioFan(spec.to_disturbance(raw), spec.n_renewables)
