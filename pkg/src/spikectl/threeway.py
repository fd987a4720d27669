"""Relational network computing ``c = a - b`` by space coding.

Input populations A and B (n neurons each) project onto a 2-D hidden layer H whose
k-diagonals (constant ``i - j``) converge on one output neuron of C (2n - 1 neurons).
Optional refinements: an inhibitory shadow layer H' per hidden copy, a twin hidden
copy, and direction neurons imposing competition between coarse error clusters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, TopologyError
from .snn import NetworkGraph, NeuronParams, SpikeEvent, Simulator

INHIBITORY = NeuronParams(is_inhibitory=True)

DIRECTION_LABELS = ("--", "-", "+", "++")


@dataclass(frozen=True)
class WeightTable:
    """Synaptic weight magnitudes, in units of delivered charge (threshold = 1)."""

    w_input: float = 1.5
    w_ab_h: float = 0.17
    w_h_c: float = 2.0
    w_self: float = 0.15
    w_lateral: float = 0.25
    w_to_inh: float = 1.0
    w_global_inh: float = 0.4
    w_h_shadow: float = 1.5
    w_shadow_inh: float = 0.3
    w_dir_exc: float = 0.8
    w_dir_inh: float = 0.6

    def check(self, params: NeuronParams = NeuronParams()) -> None:
        for name, value in asdict(self).items():
            if not value > 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if not self.w_lateral > self.w_self:
            raise ConfigurationError(
                f"w_lateral ({self.w_lateral}) must exceed w_self ({self.w_self})"
            )
        if reaches_threshold(self.w_ab_h, params):
            raise ConfigurationError(
                f"w_ab_h={self.w_ab_h} fires a hidden neuron on one 250 Hz input alone"
            )
        if not reaches_threshold(2 * self.w_ab_h, params):
            raise ConfigurationError(
                f"2*w_ab_h={2 * self.w_ab_h} fails to fire a hidden neuron within 50 ms at 250 Hz"
            )


def reaches_threshold(weight: float, params: NeuronParams, rate: float = 250.0,
                      window: float = 50.0, dt: float = 1.0) -> bool:
    """Whether a regular spike train of ``rate`` Hz and ``weight`` fires a neuron within ``window`` ms."""
    g = NetworkGraph()
    pre = g.add_population("pre", 1)
    post = g.add_population("post", 1, replace(params, is_inhibitory=False))
    g.connect(pre, post, weight, "probe")
    sim = Simulator(g, dt=dt)
    period = max(1, int(round(1000.0 / rate / dt)))
    for k in range(int(round(window / dt))):
        forced = [SpikeEvent(sim.t, pre.start)] if k % period == 0 else ()
        if any(e.neuron == post.start for e in sim.step(forced)):
            return True
    return False


@dataclass(frozen=True)
class TopologyConfig:
    n: int = 16
    twin_hidden: bool = True
    shadow_inhibition: bool = True
    direction_neurons: bool = True
    weights: WeightTable = field(default_factory=WeightTable)
    wta_sigma: float = 1.0
    direction_group_size: int = 1
    neuron: NeuronParams = field(default_factory=NeuronParams)
    inhibitory_neuron: NeuronParams = INHIBITORY

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"n must be >= 2, got {self.n}")
        if not self.wta_sigma > 0:
            raise ConfigurationError("wta_sigma must be positive")
        if self.direction_group_size < 1:
            raise ConfigurationError("direction_group_size must be >= 1")
        if not self.inhibitory_neuron.is_inhibitory or self.neuron.is_inhibitory:
            raise ConfigurationError("neuron / inhibitory_neuron types are swapped")


@dataclass(frozen=True)
class PopulationLayout:
    a: range
    b: range
    hidden: tuple[range, ...]
    shadow: tuple[range, ...]
    c: range
    global_inh: dict
    direction: dict

    @property
    def total(self) -> int:
        ranges = [self.a, self.b, *self.hidden, *self.shadow, self.c,
                  *self.global_inh.values(), *self.direction.values()]
        return sum(len(r) for r in ranges)

    @classmethod
    def from_graph(cls, graph: NetworkGraph) -> "PopulationLayout":
        p = graph.populations
        hidden = tuple(p[k] for k in ("H1", "H2") if k in p)
        shadow = tuple(p[k] for k in ("H1_shadow", "H2_shadow") if k in p)
        gi = {k: p[f"{k}_inh"] for k in ("A", "B", "C") if f"{k}_inh" in p}
        direction = {lab: p[f"dir{lab}"] for lab in DIRECTION_LABELS if f"dir{lab}" in p}
        return cls(p["A"], p["B"], hidden, shadow, p["C"], gi, direction)


def diag_index(i: int, j: int, n: int) -> int:
    """Output index of hidden cell (i, j): ``i - j + n - 1``."""
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"hidden cell ({i}, {j}) outside a {n}x{n} grid")
    return i - j + n - 1


def direction_clusters(n: int) -> dict[str, range]:
    """Output index ranges for the four direction classes; index n-1 is in none."""
    half = n - 1
    large = (half + 1) // 2
    return {
        "--": range(0, large),
        "-": range(large, half),
        "+": range(n, n + half - large),
        "++": range(n + half - large, 2 * n - 1),
    }


def _hidden_laterals(n: int) -> list[tuple[int, int, int, int]]:
    """(i, j) -> (i', j') lateral links: the three nearest cells on the same k-diagonal.

    Nearest first, ties broken toward increasing index: offsets -1, +1 and +2.
    """
    links = []
    for i in range(n):
        for j in range(n):
            for d in (-1, 1, 2):
                if 0 <= i + d < n and 0 <= j + d < n:
                    links.append((i, j, i + d, j + d))
    return links


def _shadow_targets(n: int) -> list[tuple[int, int, int, int]]:
    """(i, j) -> (i', j') cells sharing a row, a column or the anti-diagonal."""
    out = []
    for i in range(n):
        for j in range(n):
            seen = set()
            for k in range(n):
                seen.add((k, j))
                seen.add((i, k))
            for k in range(n):
                jj = i + j - k
                if 0 <= jj < n:
                    seen.add((k, jj))
            seen.discard((i, j))
            out.extend((i, j, p, q) for p, q in sorted(seen))
    return out


def _gaussian_recurrence(graph: NetworkGraph, ids: range, w: float, sigma: float) -> None:
    n = len(ids)
    radius = max(1, int(np.ceil(2 * sigma)))
    pre, post, weight = [], [], []
    for i in range(n):
        for k in range(max(0, i - radius), min(n, i + radius + 1)):
            pre.append(ids[i])
            post.append(ids[k])
            weight.append(w * np.exp(-((i - k) ** 2) / (2 * sigma**2)))
    graph.connect(pre, post, weight, "self")


def _global_inhibition(graph: NetworkGraph, name: str, ids: range, cfg: TopologyConfig) -> None:
    inh = graph.add_population(f"{name}_inh", 1, cfg.inhibitory_neuron)
    w = cfg.weights
    graph.connect(list(ids), inh.start, w.w_to_inh, "to_inh")
    graph.connect(inh.start, list(ids), w.w_global_inh, "global_inh")


def build_threeway(cfg: TopologyConfig = TopologyConfig()) -> NetworkGraph:
    """Construct the relational network (without direction neurons).

    With n = 16 and twin hidden layers plus shadows this has 1090 neurons.
    """
    cfg.weights.check(cfg.neuron)
    n, w = cfg.n, cfg.weights
    g = NetworkGraph()
    a = g.add_population("A", n, cfg.neuron)
    b = g.add_population("B", n, cfg.neuron)
    copies = ("H1", "H2") if cfg.twin_hidden else ("H1",)
    hidden = [g.add_population(name, n * n, cfg.neuron) for name in copies]
    shadows = []
    if cfg.shadow_inhibition:
        shadows = [g.add_population(f"{name}_shadow", n * n, cfg.inhibitory_neuron) for name in copies]
    c = g.add_population("C", 2 * n - 1, cfg.neuron)

    g.add_sources("A", list(a), w.w_input)
    g.add_sources("B", list(b), w.w_input)

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    cell = ii * n + jj
    lat = np.array(_hidden_laterals(n)).reshape(-1, 4)
    shadow_pairs = np.array(_shadow_targets(n)).reshape(-1, 4)
    for k, h in enumerate(hidden):
        base = h.start
        g.connect(a.start + ii, base + cell, w.w_ab_h, "a_h")
        g.connect(b.start + jj, base + cell, w.w_ab_h, "b_h")
        g.connect(base + cell, c.start + ii - jj + n - 1, w.w_h_c, "h_c")
        g.connect(base + cell, base + cell, w.w_self, "self")
        if len(lat):
            g.connect(base + lat[:, 0] * n + lat[:, 1], base + lat[:, 2] * n + lat[:, 3], w.w_lateral, "lateral")
        if shadows:
            s = shadows[k].start
            g.connect(base + cell, s + cell, w.w_h_shadow, "h_shadow")
            g.connect(
                s + shadow_pairs[:, 0] * n + shadow_pairs[:, 1],
                base + shadow_pairs[:, 2] * n + shadow_pairs[:, 3],
                w.w_shadow_inh,
                "shadow_inh",
            )

    _gaussian_recurrence(g, a, w.w_self, cfg.wta_sigma)
    _gaussian_recurrence(g, b, w.w_self, cfg.wta_sigma)
    cc = np.arange(2 * n - 1)
    g.connect(c.start + cc, c.start + cc, w.w_self, "self")
    g.connect(c.start + cc[:-1], c.start + cc[1:], w.w_lateral, "lateral")
    g.connect(c.start + cc[1:], c.start + cc[:-1], w.w_lateral, "lateral")

    for name, ids in (("A", a), ("B", b), ("C", c)):
        _global_inhibition(g, name, ids, cfg)

    g.meta.update(n=n, copies=list(copies), shadow=cfg.shadow_inhibition)
    return g


def build_direction_neurons(graph: NetworkGraph, cfg: TopologyConfig = TopologyConfig()) -> NetworkGraph:
    """Return a copy of ``graph`` with four inhibitory direction groups on C.

    Group g is driven by its own C cluster and inhibits every C neuron outside it.
    """
    out = graph.copy()
    n, w = cfg.n, cfg.weights
    c = out.populations["C"]
    if len(c) != 2 * n - 1:
        raise TopologyError("output population does not match the configured n")
    clusters = direction_clusters(n)
    for label, idx in clusters.items():
        grp = out.add_population(f"dir{label}", cfg.direction_group_size, cfg.inhibitory_neuron)
        members = np.array([c.start + k for k in idx])
        others = np.array([c.start + k for k in range(2 * n - 1) if k not in idx])
        for d in grp:
            out.connect(members, d, w.w_dir_exc, "dir_exc")
            out.connect(d, others, w.w_dir_inh, "dir_inh")
    out.meta["direction"] = True
    return out


def build_network(cfg: TopologyConfig = TopologyConfig()) -> NetworkGraph:
    """Full controller network: relational core plus direction neurons if enabled."""
    g = build_threeway(cfg)
    if cfg.direction_neurons:
        g = build_direction_neurons(g, cfg)
    return g


@dataclass(frozen=True)
class Violation:
    kind: str
    neuron: int | None
    detail: str


def validate_topology(graph: NetworkGraph) -> list[Violation]:
    """Structural checks on a built network; returns violations, never raises."""
    out: list[Violation] = []
    try:
        layout = PopulationLayout.from_graph(graph)
    except KeyError as exc:
        return [Violation("layout", None, f"missing population {exc}")]
    n = len(layout.a)
    if len(layout.b) != n or len(layout.c) != 2 * n - 1:
        out.append(Violation("layout", None, "A, B and C sizes are inconsistent"))
        return out

    ranges = sorted((r.start, r.stop, name) for name, r in graph.populations.items())
    pos = 0
    for start, stop, name in ranges:
        if start != pos:
            out.append(Violation("layout", start, f"population {name} is not contiguous with its predecessor"))
        pos = stop
    if pos != graph.n_neurons:
        out.append(Violation("layout", None, "populations do not cover all neurons"))
    if layout.total != graph.n_neurons:
        out.append(Violation("count", None, f"layout total {layout.total} != {graph.n_neurons} neurons"))

    sign_bad = (graph.weight < 0) != graph.is_inhibitory[graph.pre]
    for k in np.flatnonzero(sign_bad):
        out.append(Violation(
            "sign", int(graph.pre[k]),
            f"synapse {int(graph.pre[k])}->{int(graph.post[k])} weight {graph.weight[k]:+.3g} "
            f"contradicts presynaptic type",
        ))

    def counts(role: str, by: str) -> np.ndarray:
        m = graph.role_mask(role)
        ids = graph.post[m] if by == "post" else graph.pre[m]
        return np.bincount(ids, minlength=graph.n_neurons)

    a_in, b_in = counts("a_h", "post"), counts("b_h", "post")
    c_out, self_in = counts("h_c", "pre"), counts("self", "post")
    lat_out, shadow_out = counts("lateral", "pre"), counts("h_shadow", "pre")
    h_to_c = graph.role_mask("h_c")
    for copy_idx, h in enumerate(layout.hidden):
        for cell, nid in enumerate(h):
            checks = [("A-source", a_in[nid], 1), ("B-source", b_in[nid], 1),
                      ("C-target", c_out[nid], 1), ("self", self_in[nid], 1)]
            if layout.shadow:
                checks.append(("shadow partner", shadow_out[nid], 1))
            for what, got, want in checks:
                if got != want:
                    out.append(Violation("degree", nid, f"{what} count {got}, expected {want}"))
            if lat_out[nid] > 3:
                out.append(Violation("degree", nid, f"{lat_out[nid]} lateral links, at most 3 allowed"))
        # every cell of the copy maps to exactly its own diagonal's output neuron
        m = h_to_c & (graph.pre >= h.start) & (graph.pre < h.stop)
        cells = graph.pre[m] - h.start
        ok = graph.post[m] - layout.c.start == cells // n - cells % n + n - 1
        for k in np.flatnonzero(~ok):
            out.append(Violation("diagonal", int(graph.pre[m][k]), "hidden cell projects off its diagonal"))
        fan_in = np.bincount(graph.post[m][ok] - layout.c.start, minlength=2 * n - 1)
        for k in range(2 * n - 1):
            want = n - abs(k - (n - 1))
            if fan_in[k] != want:
                out.append(Violation(
                    "diagonal fan-in", layout.c.start + k,
                    f"C neuron {k} receives {fan_in[k]} cells from hidden copy {copy_idx + 1}, expected {want}",
                ))
    return out


def dump_topology(graph: NetworkGraph) -> dict:
    """JSON-serialisable adjacency listing: neurons with population and role-tagged edges."""
    labels = graph.population_labels()
    neurons = [
        {"id": i, "population": labels[i], "inhibitory": bool(graph.is_inhibitory[i])}
        for i in range(graph.n_neurons)
    ]
    edges = [
        {"pre": int(p), "post": int(q), "weight": round(float(w), 12), "role": graph.role_names[r]}
        for p, q, w, r in zip(graph.pre, graph.post, graph.weight, graph.role)
    ]
    sources = [
        {"group": grp, "target": int(graph.source_target[k]), "weight": float(graph.source_weight[k])}
        for grp, ids in graph.source_groups.items() for k in ids
    ]
    return {
        "populations": {k: [r.start, r.stop] for k, r in graph.populations.items()},
        "neurons": neurons,
        "edges": edges,
        "sources": sources,
    }


def write_topology(graph: NetworkGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(dump_topology(graph), fh, indent=1)
