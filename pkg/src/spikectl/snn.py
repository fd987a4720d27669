"""Fixed-step simulation engine for current-based LIF networks.

Neurons follow

    i_syn(t + dt) = i_syn(t) * exp(-dt / tau_syn) + jumps from last step's spikes
    v(t + dt)     = v(t) * exp(-dt / tau_mem) + (i_exc - i_inh + i_bias) * dt

A spike of weight ``w`` raises the synaptic current by ``|w| * (1 - exp(-dt/tau_syn)) / dt``
so that the total charge it delivers is ``|w|`` independently of ``dt``.  Every spike,
whether emitted by a neuron, a Poisson source or forced from outside, is delivered on
the following step.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError

STREAM_POISSON = 1
STREAM_MISMATCH = 2
STREAM_ENCODER = 3

_BLOCK = 1024


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``key`` under ``seed``.

    Streams are derived from the (seed, key) pair alone, so adding a stream never
    changes the draws of another.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class NeuronParams:
    tau_mem: float = 20.0
    v_thresh: float = 1.0
    v_reset: float = 0.0
    refractory: float = 2.0
    tau_syn_exc: float = 5.0
    tau_syn_inh: float = 5.0
    is_inhibitory: bool = False

    def __post_init__(self):
        if not self.tau_mem > 0:
            raise ConfigurationError(f"tau_mem must be positive, got {self.tau_mem}")
        if not (self.tau_syn_exc > 0 and self.tau_syn_inh > 0):
            raise ConfigurationError("synaptic time constants must be positive")
        if not self.v_thresh > self.v_reset:
            raise ConfigurationError(
                f"v_thresh ({self.v_thresh}) must exceed v_reset ({self.v_reset})"
            )
        if self.refractory < 0:
            raise ConfigurationError(f"refractory must be >= 0, got {self.refractory}")


@dataclass
class NeuronState:
    v: float
    i_exc: float
    i_inh: float
    refractory_until: float
    last_spike: float | None


@dataclass(frozen=True)
class Synapse:
    pre: int
    post: int
    weight: float
    role: str


@dataclass(frozen=True, order=True)
class SpikeEvent:
    t: float
    neuron: int


@dataclass
class PoissonSource:
    rate: float
    target: int
    weight: float

    def __post_init__(self):
        if self.rate < 0:
            raise ConfigurationError(f"rate must be >= 0, got {self.rate}")


def spike_probability(rate, dt: float):
    """Per-step Bernoulli probability ``rate * dt / 1000`` (rate in Hz, dt in ms)."""
    p = np.asarray(rate, dtype=float) * dt / 1000.0
    if np.any(p < 0):
        raise ConfigurationError("rates must be non-negative")
    if np.any(p > 1.0):
        raise ConfigurationError(
            f"rate * dt / 1000 exceeds 1 (max {float(np.max(p)):.3f}); lower the rate or dt"
        )
    return p


def poisson_tick(source: PoissonSource, dt: float, rng: np.random.Generator) -> bool:
    """Draw whether ``source`` fires during one step of length ``dt`` ms."""
    p = float(spike_probability(source.rate, dt))
    return bool(rng.random() < p)


class NetworkGraph:
    """Static network structure: neurons, signed synapses and Poisson sources.

    Neuron ids are global and contiguous.  Populations are named id ranges.
    Synapse weights are signed; the sign must match the presynaptic neuron type.
    """

    _PARAM_FIELDS = ("tau_mem", "v_thresh", "v_reset", "refractory", "tau_syn_exc", "tau_syn_inh")

    def __init__(self):
        self.populations: dict[str, range] = {}
        self._params = {f: np.zeros(0) for f in self._PARAM_FIELDS}
        self.is_inhibitory = np.zeros(0, dtype=bool)
        self.pre = np.zeros(0, dtype=np.int64)
        self.post = np.zeros(0, dtype=np.int64)
        self.weight = np.zeros(0)
        self.role = np.zeros(0, dtype=np.int64)
        self.role_names: list[str] = []
        self.source_target = np.zeros(0, dtype=np.int64)
        self.source_weight = np.zeros(0)
        self.source_groups: dict[str, range] = {}
        self.meta: dict = {}

    # -- construction -------------------------------------------------------------

    @property
    def n_neurons(self) -> int:
        return len(self.is_inhibitory)

    @property
    def n_synapses(self) -> int:
        return len(self.pre)

    @property
    def n_sources(self) -> int:
        return len(self.source_target)

    def __getattr__(self, name):
        # neuron parameter arrays, e.g. graph.tau_mem
        params = self.__dict__.get("_params")
        if params is not None and name in params:
            return params[name]
        raise AttributeError(name)

    def set_param(self, name: str, values) -> None:
        if name not in self._params:
            raise KeyError(name)
        arr = np.broadcast_to(np.asarray(values, dtype=float), (self.n_neurons,)).copy()
        self._params[name] = arr

    def add_population(self, name: str, size: int, params: NeuronParams = NeuronParams()) -> range:
        if name in self.populations:
            raise ConfigurationError(f"population {name!r} already exists")
        if size < 0:
            raise ConfigurationError("population size must be >= 0")
        start = self.n_neurons
        ids = range(start, start + size)
        for f in self._PARAM_FIELDS:
            self._params[f] = np.concatenate([self._params[f], np.full(size, getattr(params, f))])
        self.is_inhibitory = np.concatenate(
            [self.is_inhibitory, np.full(size, params.is_inhibitory, dtype=bool)]
        )
        self.populations[name] = ids
        return ids

    def _role_code(self, role: str) -> int:
        if role not in self.role_names:
            self.role_names.append(role)
        return self.role_names.index(role)

    def connect(self, pre, post, weight, role: str) -> None:
        """Add synapses ``pre[k] -> post[k]`` with magnitude ``|weight[k]|``.

        The sign is taken from the presynaptic neuron type.
        """
        pre = np.atleast_1d(np.asarray(pre, dtype=np.int64))
        post = np.atleast_1d(np.asarray(post, dtype=np.int64))
        pre, post = np.broadcast_arrays(pre, post)
        w = np.broadcast_to(np.abs(np.asarray(weight, dtype=float)), pre.shape)
        if pre.size == 0:
            return
        n = self.n_neurons
        if pre.min() < 0 or post.min() < 0 or pre.max() >= n or post.max() >= n:
            raise ConfigurationError("synapse endpoint outside the neuron id range")
        sign = np.where(self.is_inhibitory[pre], -1.0, 1.0)
        self.pre = np.concatenate([self.pre, pre.ravel()])
        self.post = np.concatenate([self.post, post.ravel()])
        self.weight = np.concatenate([self.weight, (sign * w).ravel()])
        self.role = np.concatenate([self.role, np.full(pre.size, self._role_code(role))])

    def add_sources(self, group: str, targets, weight: float) -> range:
        """Attach one Poisson source per target neuron, under a named group."""
        if group in self.source_groups:
            raise ConfigurationError(f"source group {group!r} already exists")
        targets = np.asarray(targets, dtype=np.int64)
        if targets.size and (targets.min() < 0 or targets.max() >= self.n_neurons):
            raise ConfigurationError("source target outside the neuron id range")
        start = self.n_sources
        self.source_target = np.concatenate([self.source_target, targets])
        self.source_weight = np.concatenate([self.source_weight, np.full(targets.size, abs(weight))])
        ids = range(start, start + targets.size)
        self.source_groups[group] = ids
        return ids

    def remove_synapses(self, mask) -> None:
        keep = ~np.asarray(mask, dtype=bool)
        self.pre, self.post = self.pre[keep], self.post[keep]
        self.weight, self.role = self.weight[keep], self.role[keep]

    # -- queries --------------------------------------------------------------------

    def copy(self) -> "NetworkGraph":
        return copy.deepcopy(self)

    def role_mask(self, role: str) -> np.ndarray:
        if role not in self.role_names:
            return np.zeros(self.n_synapses, dtype=bool)
        return self.role == self.role_names.index(role)

    def synapses(self) -> Iterator[Synapse]:
        for p, q, w, r in zip(self.pre, self.post, self.weight, self.role):
            yield Synapse(int(p), int(q), float(w), self.role_names[r])

    def neuron_params(self, i: int) -> NeuronParams:
        kw = {f: float(self._params[f][i]) for f in self._PARAM_FIELDS}
        return NeuronParams(is_inhibitory=bool(self.is_inhibitory[i]), **kw)

    def population_of(self, i: int) -> str | None:
        for name, ids in self.populations.items():
            if i in ids:
                return name
        return None

    def population_labels(self) -> np.ndarray:
        labels = np.empty(self.n_neurons, dtype=object)
        for name, ids in self.populations.items():
            labels[ids.start:ids.stop] = name
        return labels

    def validate(self) -> None:
        """Raise ``ConfigurationError`` when parameters or synapse signs are invalid."""
        p = self._params
        if np.any(p["tau_mem"] <= 0) or np.any(p["tau_syn_exc"] <= 0) or np.any(p["tau_syn_inh"] <= 0):
            raise ConfigurationError("time constants must be positive")
        if np.any(p["v_thresh"] <= p["v_reset"]):
            raise ConfigurationError("v_thresh must exceed v_reset for every neuron")
        if np.any(p["refractory"] < 0):
            raise ConfigurationError("refractory periods must be non-negative")
        bad = (self.weight < 0) != self.is_inhibitory[self.pre]
        bad &= self.weight != 0
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise ConfigurationError(
                f"synapse {int(self.pre[k])}->{int(self.post[k])} has weight {self.weight[k]} "
                "inconsistent with its presynaptic type"
            )


def apply_mismatch(graph: NetworkGraph, sigma_m: float, rng: np.random.Generator) -> NetworkGraph:
    """Return a copy of ``graph`` with multiplicative Gaussian parameter jitter.

    Each neuron's ``tau_mem`` and ``v_thresh`` and each synapse weight is scaled by an
    independent draw from Normal(1, sigma_m) clipped to [1 - 3 sigma_m, 1 + 3 sigma_m].
    """
    if not 0 <= sigma_m < 1:
        raise ConfigurationError(f"sigma_m must lie in [0, 1), got {sigma_m}")
    out = graph.copy()
    if sigma_m == 0:
        return out
    # keep factors positive so time constants and thresholds stay valid for large sigma
    lo, hi = max(1.0 - 3.0 * sigma_m, 1e-3), 1.0 + 3.0 * sigma_m

    def factors(n):
        return np.clip(rng.normal(1.0, sigma_m, n), lo, hi)

    n = graph.n_neurons
    out.set_param("tau_mem", graph.tau_mem * factors(n))
    thresh_f = factors(n)
    out.set_param("v_thresh", graph.v_reset + (graph.v_thresh - graph.v_reset) * thresh_f)
    out.weight = graph.weight * factors(graph.n_synapses)
    return out


class Simulator:
    """Mutable state for one run of a ``NetworkGraph`` at a fixed step ``dt`` (ms).

    The graph is only read; several simulators may share one graph.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        dt: float = 1.0,
        seed: int = 0,
        sink: Callable[[list[SpikeEvent]], None] | None = None,
    ):
        if dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        graph.validate()
        self.graph = graph
        self.dt = float(dt)
        self.seed = int(seed)
        self.sink = sink
        n = graph.n_neurons

        self.decay_mem = np.exp(-dt / graph.tau_mem)
        self.decay_exc = np.exp(-dt / graph.tau_syn_exc)
        self.decay_inh = np.exp(-dt / graph.tau_syn_inh)
        gain_exc = (1.0 - self.decay_exc) / dt
        gain_inh = (1.0 - self.decay_inh) / dt
        self.v_thresh = graph.v_thresh.copy()
        self.v_reset = graph.v_reset.copy()
        self.refractory_steps = np.round(graph.refractory / dt).astype(np.int64)
        self.is_inhibitory = graph.is_inhibitory.copy()

        # dense current-jump matrix, row = presynaptic neuron
        jump = np.abs(graph.weight) * np.where(
            graph.is_inhibitory[graph.pre], gain_inh[graph.post], gain_exc[graph.post]
        )
        self._jump = np.zeros((n, n))
        np.add.at(self._jump, (graph.pre, graph.post), jump)

        self.source_target = graph.source_target
        self.source_jump = graph.source_weight * gain_exc[graph.source_target]
        self.rates = np.zeros(graph.n_sources)
        self._p = np.zeros(graph.n_sources)
        self._rngs = [substream(self.seed, STREAM_POISSON, k) for k in range(graph.n_sources)]
        self._uniform = np.zeros((graph.n_sources, _BLOCK))

        self.v = graph.v_reset.copy()
        self.i_exc = np.zeros(n)
        self.i_inh = np.zeros(n)
        self.i_bias = np.zeros(n)
        self.refractory_until = np.full(n, -1, dtype=np.int64)
        self.last_spike = np.full(n, np.nan)
        self.step_index = 0
        self._pending_exc = np.zeros(0, dtype=np.int64)
        self._pending_inh = np.zeros(0, dtype=np.int64)
        self._pending_src = np.zeros(0, dtype=np.int64)

    @property
    def t(self) -> float:
        """Current simulation time (ms)."""
        return self.step_index * self.dt

    def set_rates(self, group: str | None, rates) -> None:
        """Set Poisson rates (Hz) for a source group, or all sources when ``group`` is None."""
        ids = range(self.graph.n_sources) if group is None else self.graph.source_groups[group]
        rates = np.broadcast_to(np.asarray(rates, dtype=float), (len(ids),))
        p = spike_probability(rates, self.dt)
        self.rates[ids.start:ids.stop] = rates
        self._p[ids.start:ids.stop] = p

    def neuron_state(self, i: int) -> NeuronState:
        last = self.last_spike[i]
        return NeuronState(
            v=float(self.v[i]),
            i_exc=float(self.i_exc[i]),
            i_inh=float(self.i_inh[i]),
            refractory_until=float(self.refractory_until[i] * self.dt),
            last_spike=None if np.isnan(last) else float(last),
        )

    def _draw_sources(self, k: int) -> np.ndarray:
        col = k % _BLOCK
        if col == 0:
            for s, rng in enumerate(self._rngs):
                self._uniform[s] = rng.random(_BLOCK)
        return np.flatnonzero(self._uniform[:, col] < self._p)

    def advance(self, forced: np.ndarray | None = None) -> np.ndarray:
        """Advance one step and return the ids of neurons that spiked (sorted).

        ``forced`` ids emit a spike this step without touching their own state.
        """
        k = self.step_index
        self.i_exc *= self.decay_exc
        self.i_inh *= self.decay_inh
        if self._pending_exc.size:
            self.i_exc += self._jump[self._pending_exc].sum(axis=0)
        if self._pending_inh.size:
            self.i_inh += self._jump[self._pending_inh].sum(axis=0)
        if self._pending_src.size:
            np.add.at(self.i_exc, self.source_target[self._pending_src], self.source_jump[self._pending_src])

        k += 1
        v = self.v
        v *= self.decay_mem
        v += (self.i_exc - self.i_inh + self.i_bias) * self.dt
        refractory = self.refractory_until >= k
        v[refractory] = self.v_reset[refractory]
        fired = np.flatnonzero(v >= self.v_thresh)
        if fired.size:
            v[fired] = self.v_reset[fired]
            self.refractory_until[fired] = k + self.refractory_steps[fired]
            self.last_spike[fired] = k * self.dt

        emitted = fired
        if forced is not None and len(forced):
            emitted = np.union1d(fired, forced)
        inh = self.is_inhibitory[emitted]
        self._pending_exc = emitted[~inh]
        self._pending_inh = emitted[inh]
        self._pending_src = self._draw_sources(k - 1) if self._p.size else self._pending_src
        self.step_index = k
        return fired

    def step(self, external_spikes: Iterable[SpikeEvent] = ()) -> list[SpikeEvent]:
        """Advance one step; ``external_spikes`` are forced emissions delivered next step."""
        ext = [e.neuron for e in external_spikes]
        n = self.graph.n_neurons
        for i in ext:
            if not 0 <= i < n:
                raise ConfigurationError(f"external spike names unknown neuron id {i}")
        fired = self.advance(np.asarray(ext, dtype=np.int64) if ext else None)
        t = self.t
        events = [SpikeEvent(t, int(i)) for i in fired]
        if self.sink is not None and events:
            self.sink(events)
        return events

    def run(self, n_steps: int) -> list[SpikeEvent]:
        events: list[SpikeEvent] = []
        for _ in range(n_steps):
            events.extend(self.step())
        return events


def step_network(sim: Simulator, external_spikes: Sequence[SpikeEvent] = ()) -> list[SpikeEvent]:
    """Advance ``sim`` by one step and return the spikes emitted at the new time."""
    return sim.step(external_spikes)


def lif_period(i_ss: float, params: NeuronParams, dt: float) -> float:
    """Inter-spike interval (ms) under a constant drive ``i_ss``, for ``v_reset == 0``.

    Continuous-time crossing of the discrete update; the simulated interval lies in
    ``[period, period + dt)``.
    """
    a = 1.0 - math.exp(-dt / params.tau_mem)
    denom = i_ss - params.v_thresh * a / dt
    if denom <= 0:
        return math.inf
    return params.refractory + params.tau_mem * math.log(i_ss / denom)
