import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stlfd.temporal import SmapBuffer, TemporalConfig, compute_tmap


def _map_of(value, shape=(4, 4)):
    return np.full(shape, float(value))


class TestConfig:
    def test_default_gap(self):
        assert TemporalConfig().gap == 5

    def test_rejects_nonpositive_gap(self):
        with pytest.raises(ValueError, match=">= 1"):
            TemporalConfig(gap=0)


class TestBuffer:
    def test_capacity(self):
        assert SmapBuffer(5).capacity == 11

    def test_not_ready_after_2n_pushes(self):
        buf = SmapBuffer(5)
        for k in range(10):
            buf.push(_map_of(k), k)
        assert not buf.ready
        assert compute_tmap(buf) is None

    def test_ready_after_2n_plus_1_pushes(self):
        buf = SmapBuffer(5)
        for k in range(11):
            buf.push(_map_of(k), k)
        assert buf.ready
        newest, mid, oldest = buf.sampled_maps()
        assert newest[0, 0] == 10.0  # k
        assert mid[0, 0] == 5.0  # k - gap
        assert oldest[0, 0] == 0.0  # k - 2*gap

    def test_duplicate_index_rejected(self):
        buf = SmapBuffer(2)
        buf.push(_map_of(0), 7)
        with pytest.raises(ValueError, match="not consecutive"):
            buf.push(_map_of(0), 7)

    def test_gap_in_indices_rejected(self):
        buf = SmapBuffer(2)
        buf.push(_map_of(0), 0)
        with pytest.raises(ValueError, match="not consecutive"):
            buf.push(_map_of(0), 2)

    def test_can_start_at_any_index(self):
        buf = SmapBuffer(1)
        for k in (41, 42, 43):
            buf.push(_map_of(k), k)
        assert buf.ready

    def test_memory_bound(self):
        buf = SmapBuffer(3)
        for k in range(100):
            buf.push(_map_of(k), k)
            assert len(buf) <= buf.capacity
        assert len(buf) == 7

    def test_sampled_maps_requires_ready(self):
        with pytest.raises(ValueError, match="warming up"):
            SmapBuffer(1).sampled_maps()


class TestComputeTmap:
    def _full_buffer(self, maps, gap):
        buf = SmapBuffer(gap)
        for k, m in enumerate(maps):
            buf.push(m, k)
        return buf

    def test_range_of_three_values(self):
        # One pixel sees (0.64, 0, 0) across the sampled frames: the raw
        # range is 0.64, and it is the global peak so it normalizes to 1.
        gap = 1
        maps = [np.zeros((4, 4)) for _ in range(3)]
        maps[2][1, 2] = 0.64
        buf = self._full_buffer(maps, gap)
        tmap = compute_tmap(buf)
        assert tmap[1, 2] == 1.0
        raw_range = 0.64 - 0.0
        assert raw_range == pytest.approx(0.64)

    def test_static_maps_give_zero(self):
        same = np.random.default_rng(5).random((4, 4))
        buf = self._full_buffer([same.copy() for _ in range(3)], 1)
        assert not compute_tmap(buf).any()

    def test_warming_up_returns_none(self):
        buf = SmapBuffer(5)
        for k in range(10):
            buf.push(_map_of(k), k)
        assert compute_tmap(buf) is None

    def test_gap_reconfiguration_rejected(self):
        buf = self._full_buffer([_map_of(k) for k in range(3)], 1)
        with pytest.raises(ValueError, match="gap mismatch"):
            compute_tmap(buf, TemporalConfig(gap=2))

    def test_range_in_unit_interval(self, rng):
        maps = [rng.random((8, 8)) for _ in range(5)]
        buf = self._full_buffer(maps, 2)
        tmap = compute_tmap(buf)
        assert tmap.min() >= 0.0 and tmap.max() <= 1.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_permutation_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        three = [rng.random((6, 6)) for _ in range(3)]
        results = []
        for order in itertools.permutations(range(3)):
            buf = SmapBuffer(1)
            for k, idx in enumerate(order):
                buf.push(three[idx], k)
            results.append(compute_tmap(buf))
        for other in results[1:]:
            assert np.array_equal(results[0], other)
