import math

import numpy as np
import pytest

from spikectl.errors import ConfigurationError
from spikectl.popcode import (
    DecodedValue,
    EncoderConfig,
    TraceVector,
    decode_com,
    encode_value,
    ideal_error_profile,
    update_trace,
)
from spikectl.snn import SpikeEvent

# frozen with mpmath (30 digits)
RATE_EXP_HALF = 151.632664928158355900949883748  # 250 * exp(-1/2)
RATE_EXP_EIGHTH = 220.624225646148850716223035807  # 250 * exp(-1/8)
INV_E = 0.367879441171442321595523770161
COM_20_22 = 0.433333333333333333333333333333  # mass 1 @ 20, 3 @ 22, n = 16

REL = 1e-9


class TestEncode:
    def test_a_zero(self):
        r = encode_value(0.0).rates
        assert r[0] == pytest.approx(250.0, rel=REL)
        assert r[1] == pytest.approx(RATE_EXP_HALF, rel=REL)

    def test_a_one_mirrors_zero(self):
        assert np.allclose(encode_value(1.0).rates, encode_value(0.0).rates[::-1], rtol=REL, atol=0)
        assert encode_value(1.0).rates[15] == pytest.approx(250.0, rel=REL)

    def test_midpoint(self):
        r = encode_value(0.5).rates
        assert r[7] == pytest.approx(RATE_EXP_EIGHTH, rel=REL)
        assert r[8] == pytest.approx(RATE_EXP_EIGHTH, rel=REL)

    @pytest.mark.parametrize("a", [-0.01, 1.01, math.nan])
    def test_range(self, a):
        with pytest.raises(ValueError):
            encode_value(a)

    def test_bounds_and_length(self):
        r = encode_value(0.37, EncoderConfig(n=9, rate_max=80.0, sigma=1.5)).rates
        assert len(r) == 9 and r.min() >= 0 and r.max() <= 80.0

    @pytest.mark.parametrize("kw", [{"n": 1}, {"rate_max": 0}, {"sigma": -1}])
    def test_config_invariants(self, kw):
        with pytest.raises(ConfigurationError):
            EncoderConfig(**kw)


class TestTrace:
    def test_decay_one_tau(self):
        tr = TraceVector(np.array([1.0]), tau=0.75, last_update=0.0)
        out = update_trace(tr, [], 0.75)
        assert out.values[0] == pytest.approx(INV_E, rel=REL)
        assert out.last_update == 0.75

    def test_no_spikes_stays_zero(self):
        tr = TraceVector.zeros(31, 0.75)
        assert np.all(update_trace(tr, [], 10.0).values == 0)

    def test_two_spikes_same_step(self):
        tr = TraceVector.zeros(3, 0.75)
        out = update_trace(tr, [SpikeEvent(5.0, 1), SpikeEvent(5.0, 1)], 0.005)
        assert out.values[1] == pytest.approx(2.0, rel=REL)

    def test_decay_between_events(self):
        tr = TraceVector.zeros(2, 0.1)
        out = update_trace(tr, [SpikeEvent(0.0, 0), SpikeEvent(100.0, 1)], 0.2)
        assert out.values[0] == pytest.approx(math.exp(-2.0), rel=REL)
        assert out.values[1] == pytest.approx(math.exp(-1.0), rel=REL)

    def test_offset(self):
        out = update_trace(TraceVector.zeros(2, 1.0), [SpikeEvent(0.0, 101)], 0.0, offset=100)
        assert list(out.values) == [0.0, 1.0]

    def test_out_of_order(self):
        tr = TraceVector.zeros(3, 0.75)
        with pytest.raises(ValueError):
            update_trace(tr, [SpikeEvent(10.0, 0), SpikeEvent(5.0, 1)], 0.02)

    def test_backwards(self):
        tr = TraceVector(np.zeros(2), 0.75, last_update=1.0)
        with pytest.raises(ValueError):
            update_trace(tr, [], 0.5)

    def test_foreign_neuron(self):
        with pytest.raises(ValueError):
            update_trace(TraceVector.zeros(2, 1.0), [SpikeEvent(0.0, 9)], 0.0)

    def test_input_not_mutated(self):
        tr = TraceVector(np.array([1.0, 2.0]), 0.5)
        update_trace(tr, [SpikeEvent(0.0, 0)], 1.0)
        assert list(tr.values) == [1.0, 2.0]

    def test_bad_tau(self):
        with pytest.raises(ConfigurationError):
            TraceVector.zeros(3, 0.0)

    def test_decayed_view(self):
        tr = TraceVector(np.array([2.0]), 0.5, 1.0)
        assert tr.decayed(1.5)[0] == pytest.approx(2 * INV_E, rel=REL)


class TestDecode:
    def test_center(self):
        e = np.zeros(31)
        e[15] = 4.0
        d = decode_com(e, 16)
        assert d.c == 0.0 and d.confidence == 4.0 and d.defined

    def test_endpoints(self):
        e = np.zeros(31)
        e[30] = 1.0
        assert decode_com(e, 16).c == pytest.approx(1.0, rel=REL)
        e = np.zeros(31)
        e[0] = 1.0
        assert decode_com(e, 16).c == pytest.approx(-1.0, rel=REL)

    def test_symmetric_pair(self):
        e = np.zeros(31)
        e[14] = e[16] = 1.0
        assert decode_com(e, 16).c == pytest.approx(0.0, abs=1e-15)

    def test_hand_evaluated(self):
        e = np.zeros(31)
        e[20], e[22] = 1.0, 3.0
        assert decode_com(e, 16).c == pytest.approx(COM_20_22, rel=REL)

    def test_no_activity(self):
        d = decode_com(TraceVector.zeros(31, 1.0), 16)
        assert d == DecodedValue(None, 0.0) and not d.defined

    def test_wrong_size(self):
        with pytest.raises(ValueError):
            decode_com(np.ones(30), 16)


class TestIdealPipeline:
    def test_mass_on_diagonal_index(self):
        ra = np.zeros(4)
        rb = np.zeros(4)
        ra[3], rb[1] = 2.0, 5.0
        prof = ideal_error_profile(ra, rb)
        assert len(prof) == 7
        assert np.flatnonzero(prof).tolist() == [3 - 1 + 3]
        assert prof[5] == 10.0
