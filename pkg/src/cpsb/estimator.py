"""Bootstrap particle filter for the battery state.

Particles are propagated with a forward-difference discretization of the
battery dynamics at the sampling interval, weighted by a Gaussian likelihood
of the measured terminal voltage and resampled systematically when the
effective sample size drops below half the particle count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .battery import BatteryParams, BatteryState, circuit_values
from .errors import WeightCollapse

_LOG_TINY = np.log(np.finfo(float).tiny)


@dataclass(frozen=True)
class FilterNoise:
    process: tuple = (1e-5, 1e-4, 1e-4)  # per step: x1, x2 [V], x3 [V]
    measurement: float = 5e-3  # V


@dataclass
class ParticleSet:
    particles: np.ndarray  # (M, 3)
    weights: np.ndarray  # (M,)
    rng: np.random.Generator = field(repr=False)
    rng_seed: int = 0

    @property
    def M(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class Estimate:
    x_hat: BatteryState
    var: tuple


def pf_init(prior_mean: BatteryState, prior_std, M: int = 1000, seed: int = 0) -> ParticleSet:
    if M < 1:
        raise ValueError("need at least one particle")
    std = np.asarray(prior_std, dtype=float)
    if std.shape != (3,) or np.any(std < 0):
        raise ValueError("prior_std must be three nonnegative numbers")
    rng = np.random.default_rng(seed)
    parts = np.asarray(tuple(prior_mean), dtype=float) + rng.normal(size=(M, 3)) * std
    parts[:, 0] = np.clip(parts[:, 0], 0.0, 1.0)
    return ParticleSet(parts, np.full(M, 1.0 / M), rng, seed)


def propagate(x: np.ndarray, i: float, h: float, p: BatteryParams) -> np.ndarray:
    """One forward-difference step of the battery dynamics for every row of ``x``."""
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    cv = circuit_values(x1, p)
    out = np.empty_like(x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out[:, 0] = x1 - h * i / cv.C_c
        out[:, 1] = x2 + h * (-x2 / (cv.R_ts * cv.C_ts) + i / cv.C_ts)
        out[:, 2] = x3 + h * (-x3 / (cv.R_tl * cv.C_tl) + i / cv.C_tl)
    return out


def predicted_voltage(x: np.ndarray, i: float, p: BatteryParams) -> np.ndarray:
    cv = circuit_values(x[:, 0], p)
    return cv.E_o - x[:, 1] - x[:, 2] - i * cv.R_s


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    M = len(weights)
    positions = (u + np.arange(M)) / M
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="left")


def pf_step(
    ps: ParticleSet,
    y_meas: float,
    i_meas: float,
    h: float,
    p: BatteryParams,
    noise: FilterNoise = FilterNoise(),
) -> tuple[ParticleSet, Estimate]:
    if h <= 0:
        raise ValueError("sampling interval must be positive")
    M = ps.M
    x = propagate(ps.particles, i_meas, h, p)
    x += ps.rng.normal(size=(M, 3)) * np.asarray(noise.process, dtype=float)
    x[:, 0] = np.clip(x[:, 0], 0.0, 1.0)

    sigma = max(noise.measurement, 1e-12)
    with np.errstate(invalid="ignore", over="ignore"):
        res = (y_meas - predicted_voltage(x, i_meas, p)) / sigma
        loglik = -0.5 * res * res
    loglik[~np.isfinite(loglik)] = -np.inf
    if not np.isfinite(loglik).any() or loglik.max() < _LOG_TINY:
        raise WeightCollapse(
            f"all particle likelihoods underflow (y={y_meas:.4f} V, i={i_meas:.4f} A)"
        )
    with np.errstate(divide="ignore"):
        logw = np.log(ps.weights) + loglik
    w = np.exp(logw - logw.max())
    w /= w.sum()

    mean = w @ x
    var = w @ (x - mean) ** 2
    est = Estimate(BatteryState(*(float(v) for v in mean)), tuple(float(v) for v in var))

    if 1.0 / np.sum(w * w) < M / 2:
        idx = systematic_resample(w, ps.rng.random())
        x = x[idx]
        w = np.full(M, 1.0 / M)
    return ParticleSet(x, w, ps.rng, ps.rng_seed), est


class ParticleFilter:
    """Stateful convenience wrapper around :func:`pf_init` / :func:`pf_step`."""

    def __init__(self, p: BatteryParams, prior_mean: BatteryState, prior_std=(0.0, 0.0, 0.0),
                 M: int = 1000, seed: int = 0, noise: FilterNoise = FilterNoise(), h: float = 0.01):
        self.p = p
        self.h = h
        self.noise = noise
        self.ps = pf_init(prior_mean, prior_std, M, seed)

    def step(self, y_meas: float, i_meas: float) -> Estimate:
        self.ps, est = pf_step(self.ps, y_meas, i_meas, self.h, self.p, self.noise)
        return est

    def run(self, y, i) -> np.ndarray:
        """Estimates for a measurement sequence as rows ``(x1, x2, x3, var_x1)``."""
        out = np.empty((len(y), 4))
        for j, (yk, ik) in enumerate(zip(y, i)):
            est = self.step(float(yk), float(ik))
            out[j, :3] = tuple(est.x_hat)
            out[j, 3] = est.var[0]
        return out
