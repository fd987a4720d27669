"""Space-coding codec: Gaussian rate encoding, spike traces and center-of-mass decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .snn import SpikeEvent


@dataclass(frozen=True)
class EncoderConfig:
    n: int = 16
    rate_max: float = 250.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"population size must be >= 2, got {self.n}")
        if not self.rate_max > 0:
            raise ConfigurationError("rate_max must be positive")
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")


@dataclass(frozen=True)
class RateVector:
    rates: np.ndarray

    def __len__(self):
        return len(self.rates)


def encode_value(a: float, cfg: EncoderConfig = EncoderConfig()) -> RateVector:
    """Gaussian rate profile centred on ``a * (n - 1)`` with peak ``rate_max``."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"encoded value must lie in [0, 1], got {a}")
    mu = a * (cfg.n - 1)
    i = np.arange(cfg.n)
    return RateVector(np.exp(-((i - mu) ** 2) / (2 * cfg.sigma**2)) * cfg.rate_max)


@dataclass(frozen=True)
class TraceVector:
    """Exponentially decaying spike counts, one per output neuron.

    ``tau`` and ``last_update`` are in seconds.
    """

    values: np.ndarray
    tau: float
    last_update: float = 0.0

    @classmethod
    def zeros(cls, size: int, tau: float, t0: float = 0.0) -> "TraceVector":
        if not tau > 0:
            raise ConfigurationError(f"trace tau must be positive, got {tau}")
        return cls(np.zeros(size), float(tau), float(t0))

    def decayed(self, now: float) -> np.ndarray:
        return self.values * math.exp(-(now - self.last_update) / self.tau)


def update_trace(
    tr: TraceVector, spikes: Sequence[SpikeEvent], now: float, offset: int = 0
) -> TraceVector:
    """Advance ``tr`` to time ``now`` (s), adding 1 per spike.

    Spike times are in ms; ``spike.neuron - offset`` indexes the trace.  Spikes must be
    time ordered and fall inside ``[tr.last_update, now]``.
    """
    if now < tr.last_update:
        raise ValueError(f"cannot move a trace backwards ({now} < {tr.last_update})")
    values = tr.values.copy()
    last = tr.last_update
    for ev in spikes:
        ts = ev.t / 1000.0
        if ts < last - 1e-12 or ts > now + 1e-12:
            raise ValueError(f"spike at {ts} s is out of order (trace at {last} s, now {now} s)")
        if ts > last:
            values *= math.exp(-(ts - last) / tr.tau)
            last = ts
        j = ev.neuron - offset
        if not 0 <= j < len(values):
            raise ValueError(f"spike from neuron {ev.neuron} is outside the traced population")
        values[j] += 1.0
    if now > last:
        values *= math.exp(-(now - last) / tr.tau)
    return TraceVector(values, tr.tau, float(now))


@dataclass(frozen=True)
class DecodedValue:
    c: float | None
    confidence: float

    @property
    def defined(self) -> bool:
        return self.c is not None


def decode_com(tr: TraceVector | np.ndarray, n: int) -> DecodedValue:
    """Center of mass of the 2n-1 output traces, mapped to an error in [-1, 1].

    Index ``n - 1`` is zero error, index 0 is -1 and index ``2n - 2`` is +1.  With no
    trace mass the result is undefined (``c is None``).
    """
    e = tr.values if isinstance(tr, TraceVector) else np.asarray(tr, dtype=float)
    if len(e) != 2 * n - 1:
        raise ValueError(f"expected {2 * n - 1} output traces for n={n}, got {len(e)}")
    mass = float(e.sum())
    if not mass > 0:
        return DecodedValue(None, 0.0)
    j_hat = float(np.dot(e, np.arange(len(e)))) / mass
    x_c = j_hat / (2 * n - 2)
    c = min(1.0, max(-1.0, 2.0 * x_c - 1.0))
    return DecodedValue(c, mass)


def ideal_error_profile(rates_a: np.ndarray, rates_b: np.ndarray) -> np.ndarray:
    """Noiseless relational pipeline: mass on output index ``i - j + n - 1``.

    Each (i, j) pair contributes ``rates_a[i] * rates_b[j]``; this is the
    cross-correlation of the two profiles.
    """
    rates_a = np.asarray(rates_a, dtype=float)
    rates_b = np.asarray(rates_b, dtype=float)
    return np.correlate(rates_a, rates_b, mode="full")
