import math

import numpy as np
import pytest

from spikectl.control import (
    DiscreteSequence,
    LoopConfig,
    Sinusoid,
    Step,
    compute_command,
    run_closed_loop,
)
from spikectl.errors import ConfigurationError
from spikectl.plant import Plant, PlantConfig
from spikectl.popcode import EncoderConfig
from spikectl.threeway import TopologyConfig, build_network

SMALL = TopologyConfig(n=8)
SMALL_LOOP = LoopConfig(encoder=EncoderConfig(n=8))


@pytest.fixture(scope="module")
def small_graph():
    return build_network(SMALL)


def test_compute_command_linear():
    assert compute_command(0.25, 100.0) == 25.0
    assert compute_command(-0.5, 40.0) == -20.0
    assert compute_command(0.3, 0.0) == 0.0
    assert compute_command(0.0, 100.0) == 0.0
    assert compute_command(0.55, 100.0) == pytest.approx(55.0, rel=1e-12)
    assert compute_command(-1.0, 50.0) == -50.0


class TestProfiles:
    def test_step(self):
        s = Step(2.0, 0.3, 0.85)
        assert s(1.999) == 0.3 and s(2.0) == 0.85

    def test_sequence(self):
        d = DiscreteSequence(((0.0, 0.3), (10.0, 0.85), (16.0, 0.3)))
        assert [d(5.0), d(12.0), d(20.0)] == [0.3, 0.85, 0.3]

    def test_sinusoid(self):
        s = Sinusoid(12.0, 0.5, 0.3)
        assert s(0.0) == 0.5
        assert s(3.0) == pytest.approx(0.8, rel=1e-12)
        assert s(9.0) == pytest.approx(0.2, rel=1e-12)

    @pytest.mark.parametrize("make", [
        lambda: Step(0.0, 0.2, 1.2),
        lambda: DiscreteSequence(()),
        lambda: DiscreteSequence(((5.0, 0.2), (1.0, 0.3))),
        lambda: Sinusoid(12.0, 0.5, 0.6),
        lambda: Sinusoid(0.0),
    ])
    def test_invalid(self, make):
        with pytest.raises(ConfigurationError):
            make()


class TestLoopConfig:
    @pytest.mark.parametrize("kw", [
        {"control_period": 0.0}, {"trace_tau": 0.0}, {"control_period": 20.5},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            LoopConfig(**kw)

    def test_size_mismatch(self, small_graph):
        with pytest.raises(ConfigurationError):
            run_closed_loop(small_graph, Plant(), Step(0, 0.5, 0.5), LoopConfig(), 0.1)


def test_hold_on_silence(small_graph):
    g = small_graph.copy()
    g.remove_synapses(g.role_mask("h_c"))
    plant = Plant(PlantConfig(), 0.0)
    tr = run_closed_loop(g, plant, Step(0.0, 0.9, 0.9), SMALL_LOOP, 0.5)
    assert np.all(tr.decoded == 0.0) and np.all(tr.command == 0.0)
    assert plant.theta == 0.0


def test_kp_zero_never_moves(small_graph):
    plant = Plant(PlantConfig(), 0.0)
    tr = run_closed_loop(small_graph, plant, Step(0.0, 0.9, 0.9), LoopConfig(kp=0.0, encoder=EncoderConfig(n=8)), 1.0)
    assert plant.theta == 0.0
    assert np.all(tr.encoder == 0.5)
    assert np.any(tr.decoded > 0)


def test_kp_doubling_doubles_first_command(small_graph):
    first = []
    for kp in (50.0, 100.0):
        loop = LoopConfig(kp=kp, encoder=EncoderConfig(n=8))
        tr = run_closed_loop(small_graph, Plant(PlantConfig(), 0.0), Step(0.0, 0.9, 0.9), loop, 0.2, seed=3)
        k = int(np.flatnonzero(tr.command)[0])
        first.append(tr.command[k])
    assert first[1] == pytest.approx(2 * first[0], rel=1e-12)


def test_equal_inputs_hold_still(small_graph):
    plant = Plant(PlantConfig(), 0.0)
    tr = run_closed_loop(small_graph, plant, Step(0.0, 0.5, 0.5), SMALL_LOOP, 2.0, seed=1)
    assert abs(float(np.mean(tr.decoded[10:]))) < 0.1
    assert np.max(np.abs(tr.encoder - 0.5)) < 0.05


def test_deterministic(small_graph):
    runs = [run_closed_loop(small_graph, Plant(), Step(0.2, 0.5, 0.8), SMALL_LOOP, 0.6, seed=7) for _ in range(2)]
    assert np.array_equal(runs[0].encoder, runs[1].encoder)
    assert np.array_equal(runs[0].spike_t, runs[1].spike_t)
    assert np.array_equal(runs[0].spike_neuron, runs[1].spike_neuron)


def test_sampling_grid(small_graph):
    tr = run_closed_loop(small_graph, Plant(), Step(0.0, 0.5, 0.5), SMALL_LOOP, 0.5, record_spikes=False)
    assert len(tr) == 25
    assert np.allclose(np.diff(tr.t), 0.02)
    assert tr.spike_t.size == 0
    assert math.isclose(tr.expected[0], tr.target[0] - tr.encoder[0])


def test_default_network_zero_error_steady_state(default_graph):
    loop = LoopConfig()
    tr = run_closed_loop(default_graph, Plant(), Step(0.0, 0.5, 0.5), loop, 4.0, seed=2)
    pitch = 2 / (2 * 16 - 2)
    settled = tr.t >= 2.0
    assert np.all(np.abs(tr.decoded[settled]) <= pitch)
    assert np.all(np.abs(tr.command[settled]) <= loop.kp * pitch)


def test_default_network_kp_zero_decodes_initial_error(default_graph):
    plant = Plant(PlantConfig(), PlantConfig().denormalize(0.3))
    tr = run_closed_loop(default_graph, plant, Step(0.0, 0.7, 0.7), LoopConfig(kp=0.0), 3.0, seed=2)
    assert np.all(tr.encoder == tr.encoder[0])
    assert abs(tr.decoded[-1] - 0.4) <= 2 / (2 * 16 - 2)
