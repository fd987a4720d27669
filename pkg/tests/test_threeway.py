import json
from dataclasses import replace

import numpy as np
import pytest

from spikectl.errors import ConfigurationError
from spikectl.snn import NeuronParams
from spikectl.threeway import (
    PopulationLayout,
    TopologyConfig,
    WeightTable,
    build_direction_neurons,
    build_network,
    build_threeway,
    diag_index,
    direction_clusters,
    dump_topology,
    validate_topology,
    write_topology,
)


@pytest.mark.parametrize("n", [2, 4, 16])
def test_diag_index_matches_enumeration(n):
    seen = {}
    for i in range(n):
        for j in range(n):
            seen.setdefault(i - j, []).append(diag_index(i, j, n))
    assert sorted(seen) == list(range(-(n - 1), n))
    for diff, idx in seen.items():
        assert set(idx) == {diff + n - 1}
        assert len(idx) == n - abs(diff)


def test_diag_index_bounds():
    with pytest.raises(IndexError):
        diag_index(16, 0, 16)


def test_diag_index_examples():
    assert diag_index(0, 0, 16) == 15
    assert diag_index(15, 0, 16) == 30
    assert diag_index(0, 15, 16) == 0


class TestBuild:
    def test_default_counts(self):
        g = build_threeway(TopologyConfig())
        assert g.n_neurons == 1090
        sizes = {k: len(v) for k, v in g.populations.items()}
        assert sizes == {"A": 16, "B": 16, "H1": 256, "H2": 256, "H1_shadow": 256, "H2_shadow": 256,
                         "C": 31, "A_inh": 1, "B_inh": 1, "C_inh": 1}
        assert PopulationLayout.from_graph(g).total == 1090

    def test_with_direction(self, default_graph):
        assert default_graph.n_neurons == 1094
        assert validate_topology(default_graph) == []

    @pytest.mark.parametrize("twin,shadow,direction", [
        (False, False, False), (True, False, True), (False, True, False),
    ])
    def test_variants_valid(self, twin, shadow, direction):
        cfg = TopologyConfig(twin_hidden=twin, shadow_inhibition=shadow, direction_neurons=direction)
        g = build_network(cfg)
        assert validate_topology(g) == []
        assert ("H2" in g.populations) == twin
        assert ("H1_shadow" in g.populations) == shadow

    def test_small_n(self):
        g = build_network(TopologyConfig(n=4))
        assert len(g.populations["C"]) == 7
        assert validate_topology(g) == []

    def test_inhibitory_types(self, default_graph):
        p = default_graph.populations
        for name in ("H1_shadow", "C_inh", "dir++"):
            assert default_graph.is_inhibitory[p[name].start]
        for name in ("A", "H1", "C"):
            assert not default_graph.is_inhibitory[p[name].start]

    def test_hidden_degrees(self, default_graph):
        g = default_graph
        h = g.populations["H1"]
        lat = g.role_mask("lateral") & (g.pre >= h.start) & (g.pre < h.stop)
        counts = np.bincount(g.pre[lat] - h.start, minlength=256)
        assert counts.max() == 3
        # laterals stay on the cell's own k-diagonal
        cells_pre, cells_post = g.pre[lat] - h.start, g.post[lat] - h.start
        assert np.all(cells_pre // 16 - cells_pre % 16 == cells_post // 16 - cells_post % 16)

    def test_shadow_targets(self, default_graph):
        g = default_graph
        h, s = g.populations["H1"], g.populations["H1_shadow"]
        i, j = 5, 9
        m = g.role_mask("shadow_inh") & (g.pre == s.start + i * 16 + j)
        targets = {(int(q - h.start) // 16, int(q - h.start) % 16) for q in g.post[m]}
        assert (i, j) not in targets
        expected = {(p, q) for p in range(16) for q in range(16)
                    if (p == i or q == j or p + q == i + j) and (p, q) != (i, j)}
        assert targets == expected

    def test_direction_clusters(self):
        cl = direction_clusters(16)
        assert cl["--"] == range(0, 8) and cl["-"] == range(8, 15)
        assert cl["+"] == range(16, 23) and cl["++"] == range(23, 31)
        covered = sorted(k for r in cl.values() for k in r)
        assert 15 not in covered and len(covered) == 30

    def test_direction_copy_leaves_input(self):
        g = build_threeway(TopologyConfig())
        out = build_direction_neurons(g)
        assert g.n_neurons == 1090 and out.n_neurons == 1094


class TestWeights:
    def test_defaults_pass(self):
        WeightTable().check(NeuronParams())

    def test_lateral_exceeds_self(self):
        with pytest.raises(ConfigurationError, match="w_lateral"):
            build_threeway(TopologyConfig(weights=WeightTable(w_self=0.5, w_lateral=0.4)))

    def test_nonpositive(self):
        with pytest.raises(ConfigurationError):
            WeightTable(w_h_c=0.0).check()

    def test_single_input_must_not_fire(self):
        with pytest.raises(ConfigurationError, match="alone"):
            WeightTable(w_ab_h=0.8).check()

    def test_coincidence_must_fire(self):
        with pytest.raises(ConfigurationError, match="fails"):
            WeightTable(w_ab_h=0.02).check()

    def test_swapped_types(self):
        with pytest.raises(ConfigurationError):
            TopologyConfig(neuron=NeuronParams(is_inhibitory=True))


class TestValidate:
    def test_deleted_h_to_c_edge(self, default_graph):
        g = default_graph.copy()
        k = int(np.flatnonzero(g.role_mask("h_c"))[40])
        target = int(g.post[k])
        mask = np.zeros(g.n_synapses, dtype=bool)
        mask[k] = True
        g.remove_synapses(mask)
        v = [x for x in validate_topology(g) if x.kind == "diagonal fan-in"]
        assert len(v) == 1 and v[0].neuron == target

    def test_negated_excitatory_weight(self, default_graph):
        g = default_graph.copy()
        k = int(np.flatnonzero(g.role_mask("a_h"))[0])
        g.weight[k] = -g.weight[k]
        v = validate_topology(g)
        assert [x.kind for x in v] == ["sign"]
        assert v[0].neuron == int(g.pre[k])

    def test_missing_population(self, default_graph):
        g = default_graph.copy()
        del g.populations["C"]
        v = validate_topology(g)
        assert v and v[0].kind == "layout"

    def test_never_raises_on_garbage(self, default_graph):
        g = default_graph.copy()
        g.populations["A"] = range(0, 5)
        assert validate_topology(g)


def test_dump_roundtrip(tmp_path):
    g = build_network(TopologyConfig(n=3, twin_hidden=False))
    path = tmp_path / "topo.json"
    write_topology(g, path)
    data = json.loads(path.read_text())
    assert data == json.loads(json.dumps(dump_topology(g)))
    assert len(data["neurons"]) == g.n_neurons and len(data["edges"]) == g.n_synapses
    assert {e["role"] for e in data["edges"]} >= {"a_h", "b_h", "h_c", "self", "lateral"}
    assert data["sources"][0]["group"] == "A"


def test_diag_index_shared_diagonal():
    assert diag_index(6, 3, 16) == diag_index(4, 1, 16) == 18
    assert all(diag_index(i, i, 16) == 15 for i in range(16))


def _fan_in(g):
    c = g.populations["C"]
    m = g.role_mask("h_c")
    return np.bincount(g.post[m] - c.start, minlength=len(c))


def test_two_by_two_hand_case():
    g = build_network(TopologyConfig(n=2, twin_hidden=False, shadow_inhibition=False, direction_neurons=False))
    assert [len(g.populations[k]) for k in ("A", "B", "H1", "C")] == [2, 2, 4, 3]
    assert _fan_in(g).tolist() == [1, 2, 1]
    a, h = g.populations["A"], g.populations["H1"]
    m = g.role_mask("a_h") & (g.pre == a.start)
    assert sorted((g.post[m] - h.start).tolist()) == [0, 1]


def test_twin_doubles_fan_in():
    single = build_network(TopologyConfig(twin_hidden=False))
    twin = build_network(TopologyConfig(twin_hidden=True))
    assert np.array_equal(_fan_in(twin), 2 * _fan_in(single))


class TestDirection:
    def test_off_leaves_core_unchanged(self):
        on = build_network(TopologyConfig(direction_neurons=True))
        off = build_network(TopologyConfig(direction_neurons=False))
        core = ~(on.role_mask("dir_exc") | on.role_mask("dir_inh"))
        assert np.array_equal(on.pre[core], off.pre)
        assert np.array_equal(on.post[core], off.post)
        assert np.array_equal(on.weight[core], off.weight)

    def test_mirror_symmetry(self, default_graph):
        g, n = default_graph, 16
        c = g.populations["C"]
        mirror = {"--": "++", "-": "+", "+": "-", "++": "--"}
        feeds = {}
        for label in mirror:
            d = g.populations[f"dir{label}"]
            m = g.role_mask("dir_exc") & (g.post == d.start)
            feeds[label] = set((g.pre[m] - c.start).tolist())
        for label, other in mirror.items():
            assert {2 * (n - 1) - k for k in feeds[label]} == feeds[other]

    def test_plus_plus_suppresses_other_clusters(self):
        from spikectl.popcode import encode_value
        from spikectl.snn import Simulator

        counts = {}
        for flag in (True, False):
            g = build_network(TopologyConfig(direction_neurons=flag))
            c = g.populations["C"]
            forced = np.array([c.start + k for k in range(24, 29)])
            sim = Simulator(g, seed=5)
            sim.set_rates("A", encode_value(0.35).rates)
            sim.set_rates("B", encode_value(0.5).rates)
            total = np.zeros(len(c))
            for k in range(1500):
                fired = sim.advance(forced if k % 4 == 0 else None)
                if k >= 500:
                    sel = fired[(fired >= c.start) & (fired < c.stop)] - c.start
                    np.add.at(total, sel, 1)
            counts[flag] = total
        others = [k for k in range(31) if k < 15 or 16 <= k < 23]
        assert counts[False][others].sum() > 0
        assert counts[True][others].sum() < counts[False][others].sum()
