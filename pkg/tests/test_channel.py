import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabcode.channel import (
    ErasureChannel,
    decode_repetition,
    loss_trace_csv,
    read_loss_trace,
    repetition_encode,
    transmit,
)
from stabcode.quantization import DitheredQuantizer, independent_encodings


def test_rejects_bad_probability():
    for p in (-0.1, 1.5, math.nan):
        with pytest.raises(ValueError):
            ErasureChannel(p)


def test_lossless_and_total_loss():
    q = DitheredQuantizer(0.5, 3)
    ds = independent_encodings(0.7, q, 4, time=11)
    rec, kept = transmit(ds, ErasureChannel(0.0, 1))
    assert rec.received == frozenset({1, 2, 3, 4})
    assert kept.payloads == ds.payloads
    rec, kept = transmit(ds, ErasureChannel(1.0, 1))
    assert rec.received == frozenset()
    assert kept.payloads == {}


@given(st.integers(0, 10_000), st.floats(0, 1), st.integers(1, 6))
@settings(max_examples=50, deadline=None)
def test_received_is_subset_of_sent(t, p, k):
    ds = independent_encodings(0.1, DitheredQuantizer(1.0), k, t)
    rec, kept = transmit(ds, ErasureChannel(p, 5))
    assert rec.received <= set(ds.payloads)
    assert rec.time_index == t
    assert set(kept.payloads) == rec.received


def test_mean_survivors_binomial():
    mask = ErasureChannel(0.2, 7).received_mask(0, 1_000_000, 3)
    assert abs(mask.sum(axis=1).mean() - 2.4) < 0.01


def test_exchangeable_across_indices():
    n, k, p = 200_000, 4, 0.3
    mask = ErasureChannel(p, 9).received_mask(0, n, k)
    band = 3 * math.sqrt(p * (1 - p) / n)
    for rate in 1 - mask.mean(axis=0):
        assert abs(rate - p) < band


def test_independent_across_indices_and_time():
    mask = ErasureChannel(0.5, 13).received_mask(0, 200_000, 2).astype(float)
    band = 3 / math.sqrt(200_000)
    assert abs(np.corrcoef(mask[:, 0], mask[:, 1])[0, 1]) < band
    assert abs(np.corrcoef(mask[1:, 0], mask[:-1, 0])[0, 1]) < band


def test_seed_determinism_and_windowing():
    ch = ErasureChannel(0.37, 21)
    full = ch.received_mask(0, 1000, 3)
    assert np.array_equal(full, ErasureChannel(0.37, 21).received_mask(0, 1000, 3))
    # any window of the pattern is reproducible without replaying from the start
    assert np.array_equal(full[400:450], ch.received_mask(400, 50, 3))
    assert not np.array_equal(full, ErasureChannel(0.37, 22).received_mask(0, 1000, 3))


def test_losses_nested_in_p():
    lo = ErasureChannel(0.05, 4).received_mask(0, 50_000, 3)
    hi = ErasureChannel(0.2, 4).received_mask(0, 50_000, 3)
    assert np.all(hi <= lo)


class TestRepetition:
    def test_any_subset_same_reconstruction(self):
        q = DitheredQuantizer(0.8, 2)
        ds = repetition_encode(1.234, q, 3, time=5)
        assert decode_repetition(ds, q, {1, 3}) == decode_repetition(ds, q, {2})

    def test_copies_must_be_positive(self):
        with pytest.raises(ValueError):
            repetition_encode(0.0, DitheredQuantizer(1.0), 0, 0)

    def test_empty_reception_raises(self):
        q = DitheredQuantizer(1.0)
        with pytest.raises(ValueError):
            decode_repetition(repetition_encode(0.3, q, 2, 0), q, set())

    def test_no_gain_from_copies(self):
        rng = np.random.default_rng(0)
        q = DitheredQuantizer(1.0, 8)
        v = rng.normal(size=20_000)
        one = np.array([decode_repetition(repetition_encode(x, q, 1, t), q, {1}) for t, x in enumerate(v)])
        three = np.array([decode_repetition(repetition_encode(x, q, 3, t), q, {1, 2, 3}) for t, x in enumerate(v)])
        assert np.array_equal(one, three)
        assert abs(np.var(three - v) / (1 / 12) - 1) < 0.05

    def test_all_copies_lost_probability(self):
        assert 0.2**3 == pytest.approx(0.008)
        mask = ErasureChannel(0.2, 31).received_mask(0, 1_000_000, 3)
        frac = (~mask.any(axis=1)).mean()
        band = 3 * math.sqrt(0.008 * 0.992 / 1_000_000)
        assert abs(frac - 0.008) < band


def test_loss_trace_round_trip():
    mask = ErasureChannel(0.4, 1).received_mask(10, 25, 3)
    text = loss_trace_csv(mask, start=10)
    assert text.splitlines()[0] == "time,d1,d2,d3"
    assert text.splitlines()[1].startswith("10,")
    assert np.array_equal(read_loss_trace(text), mask)
