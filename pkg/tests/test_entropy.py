import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import min_interior_cover

from relukit.entropy import (
    check_reduction,
    covering_bound,
    covering_reduction_bound,
    floored_distances,
    interior_covering_number,
    step_class,
)
from relukit.network import ArchitectureSpec

DELTAS = np.geomspace(0.01, 2, 10)
TAUS = np.geomspace(0.02, 1, 10)


class TestCoveringBound:
    def test_hand_case(self):
        b = covering_bound(ArchitectureSpec(1, (1, 2, 1), 4), 1, 1.0)
        assert b.V == 12
        assert b.raw == 1152 ** 5
        assert b.log_raw == pytest.approx(5 * math.log(1152))

    @given(st.lists(st.integers(1, 6), min_size=2, max_size=5))
    def test_v_is_width_product(self, widths):
        arch = ArchitectureSpec(len(widths) - 2, tuple(widths), 3)
        V = 1
        for m in widths:
            V *= m + 1
        assert covering_bound(arch, 2, 0.5).V == V

    @given(st.floats(1e-3, 10), st.floats(1.01, 10))
    def test_nonincreasing_in_delta(self, delta, factor):
        arch = ArchitectureSpec(2, (1, 3, 3, 2), 12)
        assert covering_bound(arch, 2, delta * factor).log_raw <= covering_bound(arch, 2, delta).log_raw

    @pytest.mark.parametrize("widths,s", [((1, 2, 1), 4), ((1, 4, 4, 3), 20), ((2, 8, 8, 8, 3), 60)])
    def test_substituted_dominates_raw(self, widths, s):
        arch = ArchitectureSpec(len(widths) - 2, widths, s)
        for delta in (0.01, 1.0):
            b = covering_bound(arch, widths[-1], delta)
            assert b.log_bound_substituted >= b.log_raw

    @pytest.mark.parametrize("widths,s", [((1, 2, 1), 4), ((1, 4, 4, 3), 20)])
    def test_log_forms_differ_by_extra_power(self, widths, s):
        L = len(widths) - 2
        b = covering_bound(ArchitectureSpec(L, widths, s), 3, 0.1)
        assert b.log_bound_substituted - b.log_bound == pytest.approx((s + 1) * L * math.log(s), rel=1e-12)

    def test_huge_raw_overflows_to_inf(self):
        b = covering_bound(ArchitectureSpec(2, (1, 50, 50, 3), 3000), 3, 1e-3)
        assert b.raw == math.inf and math.isfinite(b.log_raw)

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            covering_bound(ArchitectureSpec(1, (1, 2, 1), 4), 1, 0.0)


class TestCovers:
    def test_singleton(self):
        r = check_reduction(np.array([[0.3, 0.7]]), 0.1, 0.5)
        assert (r.log_cover, r.value_cover) == (1, 1)

    def test_tau_one_clamps_match(self):
        stmt = covering_reduction_bound(0.3, 1.0)
        assert stmt.log_floor == 0.0 and stmt.value_floor == 1.0
        t = step_class() * 2
        assert np.all((floored_distances(np.log(t), 0.0) == 0) == (floored_distances(t, 1.0) == 0))

    def test_step_class_shape(self):
        t = step_class()
        assert t.shape == (8, 4) and t.min() > 0

    @pytest.mark.parametrize("radius", [0.0, 0.05, 0.3, 0.6, 2.0])
    def test_matches_bitmask_oracle(self, radius):
        dist = floored_distances(step_class(), 0.05)
        assert interior_covering_number(dist, radius) == min_interior_cover(dist, radius)

    def test_random_classes_against_oracle(self):
        r = np.random.default_rng(8)
        for _ in range(30):
            table = r.random((int(r.integers(1, 10)), 3))
            dist = floored_distances(table, float(r.uniform(0, 0.5)))
            radius = float(r.uniform(0, 0.6))
            assert interior_covering_number(dist, radius) == min_interior_cover(dist, radius)

    def test_reduction_on_full_grid(self):
        table = step_class()
        for delta in DELTAS:
            for tau in TAUS:
                r = check_reduction(table, delta, tau)
                assert r.holds, (delta, tau, r)
                ld = floored_distances(np.log(table), math.log(tau))
                vd = floored_distances(table, tau)
                assert (r.log_cover, r.value_cover) == (min_interior_cover(ld, delta),
                                                        min_interior_cover(vd, delta * tau))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            check_reduction(np.array([[0.0, 1.0]]), 0.1, 0.5)
        with pytest.raises(ValueError):
            covering_reduction_bound(0.1, 0.0)
