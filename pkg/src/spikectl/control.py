"""Closed proportional loop: target/encoder -> spiking relational network -> joint."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .plant import Plant
from .popcode import EncoderConfig, TraceVector, decode_com, encode_value, update_trace
from .snn import STREAM_ENCODER, NetworkGraph, SpikeEvent, Simulator, substream


@dataclass(frozen=True)
class LoopConfig:
    control_period: float = 20.0  # ms
    trace_read_period: float = 60.0  # ms
    kp: float = 100.0  # deg/s per unit of normalised error
    trace_tau: float = 0.3  # s
    dt: float = 1.0  # ms
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if not self.control_period > 0 or not self.trace_read_period > 0:
            raise ConfigurationError("loop periods must be positive")
        if not self.trace_tau > 0:
            raise ConfigurationError("trace_tau must be positive")
        for name in ("control_period", "trace_read_period"):
            ratio = getattr(self, name) / self.dt
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigurationError(f"{name} must be a multiple of dt")


@dataclass(frozen=True)
class Step:
    t_on: float
    a0: float
    a1: float

    def __post_init__(self):
        _check_unit(self.a0, self.a1)

    def __call__(self, t: float) -> float:
        return self.a1 if t >= self.t_on else self.a0


@dataclass(frozen=True)
class DiscreteSequence:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise ConfigurationError("a discrete target sequence needs at least one point")
        times = [t for t, _ in self.points]
        if times != sorted(times):
            raise ConfigurationError("target sequence times must be increasing")
        _check_unit(*(a for _, a in self.points))

    def __call__(self, t: float) -> float:
        value = self.points[0][1]
        for t_k, a_k in self.points:
            if t >= t_k:
                value = a_k
        return value


@dataclass(frozen=True)
class Sinusoid:
    period: float = 12.0
    center: float = 0.5
    amplitude: float = 0.3
    phase: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ConfigurationError("period must be positive")
        _check_unit(self.center - abs(self.amplitude), self.center + abs(self.amplitude))

    def __call__(self, t: float) -> float:
        return self.center + self.amplitude * math.sin(2 * math.pi * t / self.period + self.phase)


TargetProfile = Union[Step, DiscreteSequence, Sinusoid]


def _check_unit(*values: float) -> None:
    for a in values:
        if not 0.0 <= a <= 1.0:
            raise ConfigurationError(f"target value {a} outside [0, 1]")


@dataclass
class Trajectory:
    t: np.ndarray
    target: np.ndarray
    encoder: np.ndarray
    decoded: np.ndarray
    command: np.ndarray
    spike_t: np.ndarray  # ms
    spike_neuron: np.ndarray
    populations: dict = field(default_factory=dict)

    @property
    def expected(self) -> np.ndarray:
        return self.target - self.encoder

    def __len__(self):
        return len(self.t)

    def window(self, start: float, length: float) -> np.ndarray:
        return (self.t >= start - 1e-9) & (self.t <= start + length + 1e-9)

    def population_spikes(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Spike times (ms) and population-local indices for one population."""
        r = self.populations[name]
        m = (self.spike_neuron >= r[0]) & (self.spike_neuron < r[1])
        return self.spike_t[m], self.spike_neuron[m] - r[0]


def compute_command(c: float, kp: float) -> float:
    """Proportional command (deg/s) for decoded error ``c``."""
    return kp * c


def run_closed_loop(
    graph: NetworkGraph,
    plant: Plant,
    profile: TargetProfile,
    loop: LoopConfig = LoopConfig(),
    duration: float = 10.0,
    seed: int = 0,
    record_spikes: bool = True,
) -> Trajectory:
    """Simulate the closed loop for ``duration`` seconds.

    Every control period the target and encoder are sampled, the input rates re-set
    and a command issued from the latest decoded error.  The decode is refreshed from
    the output traces every trace read period; with no trace mass the previous value
    (and hence the previous command) is held.
    """
    if not duration > 0:
        raise ConfigurationError("duration must be positive")
    n = loop.encoder.n
    c_ids = graph.populations["C"]
    if len(c_ids) != 2 * n - 1:
        raise ConfigurationError("network output size does not match the encoder size")
    sim = Simulator(graph, dt=loop.dt, seed=seed)
    enc_rng = substream(seed, STREAM_ENCODER)
    dt = loop.dt
    n_steps = int(round(duration * 1000.0 / dt))
    ctrl_every = int(round(loop.control_period / dt))
    read_every = int(round(loop.trace_read_period / dt))

    trace = TraceVector.zeros(len(c_ids), loop.trace_tau)
    pending: list[SpikeEvent] = []
    c_now = 0.0
    u = 0.0
    rows = []
    spike_t: list[np.ndarray] = []
    spike_n: list[np.ndarray] = []

    for k in range(n_steps):
        if k % ctrl_every == 0:
            t_s = k * dt / 1000.0
            a = float(profile(t_s))
            b = plant.read_encoder(enc_rng)
            sim.set_rates("A", encode_value(a, loop.encoder).rates)
            sim.set_rates("B", encode_value(b, loop.encoder).rates)
            u = compute_command(c_now, loop.kp)
            rows.append((t_s, a, b, c_now, u))

        fired = sim.advance()
        plant.step(u, dt)
        if fired.size:
            if record_spikes:
                spike_t.append(np.full(fired.size, sim.t))
                spike_n.append(fired)
            out = fired[(fired >= c_ids.start) & (fired < c_ids.stop)]
            pending.extend(SpikeEvent(sim.t, int(i)) for i in out)

        if (k + 1) % read_every == 0:
            trace = update_trace(trace, pending, sim.t / 1000.0, offset=c_ids.start)
            pending = []
            decoded = decode_com(trace, n)
            if decoded.defined:
                c_now = decoded.c

    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return Trajectory(
        t=arr[:, 0],
        target=arr[:, 1],
        encoder=arr[:, 2],
        decoded=arr[:, 3],
        command=arr[:, 4],
        spike_t=np.concatenate(spike_t) if spike_t else np.zeros(0),
        spike_neuron=np.concatenate(spike_n) if spike_n else np.zeros(0, dtype=np.int64),
        populations={k: (r.start, r.stop) for k, r in graph.populations.items()},
    )
