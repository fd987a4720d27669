"""Single simulated joint driven by velocity commands."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class PlantConfig:
    theta_min: float = -30.0  # deg
    theta_max: float = 30.0  # deg
    v_max: float = 120.0  # deg/s
    encoder_noise_sigma: float = 0.0
    latency: float = 20.0  # ms

    def __post_init__(self):
        if not self.theta_max > self.theta_min:
            raise ConfigurationError("theta_max must exceed theta_min")
        if not self.v_max > 0:
            raise ConfigurationError("v_max must be positive")
        if self.encoder_noise_sigma < 0:
            raise ConfigurationError("encoder_noise_sigma must be >= 0")
        if self.latency < 0:
            raise ConfigurationError("latency must be >= 0")

    @property
    def span(self) -> float:
        return self.theta_max - self.theta_min

    def normalize(self, theta: float) -> float:
        return (theta - self.theta_min) / self.span

    def denormalize(self, x: float) -> float:
        return self.theta_min + x * self.span


@dataclass
class PlantState:
    theta: float
    pending: deque = field(default_factory=deque)


class Plant:
    """Joint angle integrator with velocity saturation, joint limits and command latency."""

    def __init__(self, cfg: PlantConfig = PlantConfig(), theta0: float | None = None):
        self.cfg = cfg
        theta = cfg.denormalize(0.5) if theta0 is None else float(theta0)
        self.state = PlantState(float(np.clip(theta, cfg.theta_min, cfg.theta_max)))

    @property
    def theta(self) -> float:
        return self.state.theta

    def step(self, u: float, dt: float) -> PlantState:
        """Apply velocity command ``u`` (deg/s) for ``dt`` ms; the effective command lags by ``latency``."""
        if dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        cfg, st = self.cfg, self.state
        delay = int(round(cfg.latency / dt))
        st.pending.append(float(u))
        if len(st.pending) <= delay:
            effective = 0.0
        else:
            effective = st.pending.popleft()
        v = min(cfg.v_max, max(-cfg.v_max, effective))
        st.theta = min(cfg.theta_max, max(cfg.theta_min, st.theta + v * dt / 1000.0))
        return st

    def read_encoder(self, rng: np.random.Generator | None = None) -> float:
        """Normalised joint position in [0, 1], with optional Gaussian noise."""
        b = self.cfg.normalize(self.state.theta)
        if self.cfg.encoder_noise_sigma > 0:
            if rng is None:
                raise ConfigurationError("a generator is required for a noisy encoder")
            b += rng.normal(0.0, self.cfg.encoder_noise_sigma)
        return min(1.0, max(0.0, b))


def plant_step(plant: Plant, u: float, dt: float) -> PlantState:
    return plant.step(u, dt)


def read_encoder(plant: Plant, rng: np.random.Generator | None = None) -> float:
    return plant.read_encoder(rng)
