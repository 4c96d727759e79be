import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import taylor_centered

from relukit.algebra import depth_synchronize, embed
from relukit.logapprox import (
    build_log_net,
    build_partition,
    coefficient_sum_bound,
    hat_function,
    hat_network,
    log_net_parameters,
    project,
    projection_net,
    strict_floor,
    t_beta,
    taylor_error_bound,
    taylor_piece,
)
from relukit.network import ArchitectureSpec, evaluate, sparsity, validate

BETAS = [0.8, 1.0, 1.5, 2.5]


def test_strict_floor():
    assert [strict_floor(b) for b in (0.8, 1, 1.5, 2, 2.5)] == [0, 0, 1, 1, 2]


class TestTaylor:
    def test_degree_zero_constant(self):
        piece = taylor_piece(0.3, 0)
        np.testing.assert_allclose(piece(np.linspace(0.1, 1, 7)), math.log(0.3))

    def test_degree_one_at_one(self):
        x = np.linspace(0.5, 2, 301)
        t = taylor_piece(1.0, 1)(x)
        np.testing.assert_allclose(t, x - 1, atol=1e-15)
        assert np.all(np.abs(np.log(x) - t) <= ((x - 1) / np.minimum(x, 1)) ** 2 / 2 + 1e-15)

    def test_matches_centered_form(self):
        r = np.random.default_rng(3)
        for _ in range(20):
            x, c, k = r.uniform(0.05, 1), r.uniform(0.05, 1), int(r.integers(0, 5))
            assert taylor_piece(c, k)(x) == pytest.approx(float(taylor_centered(x, c, k)), rel=1e-10, abs=1e-10)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.integers(0, 4))
    def test_remainder_bound(self, x, c, k):
        err = abs(math.log(x) - taylor_piece(c, k)(x))
        assert err <= taylor_error_bound(x, c, k) * (1 + 1e-9) + 1e-13

    @given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.integers(0, 4))
    def test_below_log_center(self, c, frac, k):
        x = max(c * frac, 1e-3)
        assert taylor_piece(c, k)(x) <= math.log(c) + 1e-12

    @given(st.floats(1e-3, math.e), st.integers(0, 4))
    def test_coefficient_sum(self, c, k):
        assert sum(abs(a) for a in taylor_piece(c, k).coeffs) <= coefficient_sum_bound(c, k) * (1 + 1e-12)

    def test_bad_center(self):
        with pytest.raises(ValueError):
            taylor_piece(0.0, 1)


class TestPartition:
    def test_hand_values(self):
        s = build_partition(1.0, 2)
        assert (s.ceil_beta, s.floor_beta) == (1, 0)
        assert s.a_r(1) == pytest.approx(0.4375, abs=1e-15)
        assert s.b_r(1) == 0.5

    @pytest.mark.parametrize("beta", BETAS)
    @pytest.mark.parametrize("M", [2, 10, 100, 1000])
    def test_invariants(self, beta, M):
        s = build_partition(beta, M)
        assert s.b_r(1) == 1 / M
        a1, aR = s.a_r(1), s.a_r(s.R)
        assert a1 <= 1 / M and aR >= 1 - 1 / M
        assert 0 < a1 and aR <= 1 + 1 / M
        assert np.all(np.diff(s.nodes) > 0)
        # R is minimal for the defining inequality
        cb, fb = s.ceil_beta, s.floor_beta

        def lhs(R):
            return (R / 2 + 2 ** cb * cb ** (fb / cb) - 0.75) ** cb / (2 ** (cb * cb) * cb ** fb * M)

        assert lhs(s.R) >= 1 - 1 / M
        assert s.R == 1 or lhs(s.R - 1) < 1 - 1 / M
        assert s.R <= 2 ** (cb + 1) * cb ** (fb / cb) * M ** (1 / cb)

    @pytest.mark.parametrize("beta", BETAS)
    def test_unity(self, beta):
        s = build_partition(beta, 100)
        x = np.linspace(s.a_r(1), s.a_r(s.R), 1000)
        total = sum(hat_function(s, r, k, x) for k, r in s.pieces())
        assert np.abs(total - 1).max() <= 1e-12

    def test_hat_endpoints(self):
        s = build_partition(1.5, 10)
        for r in range(2, s.R + 1):
            assert hat_function(s, r, "F", s.b_r(r - 1)) == 1.0
            assert hat_function(s, r, "F", s.a_r(r - 1)) == 0.0
            assert hat_function(s, r, "F", s.a_r(r)) == 0.0

    def test_at_most_one_of_each(self):
        s = build_partition(1.0, 50)
        x = np.linspace(s.a_r(1), s.a_r(s.R), 1000)
        f_active = sum((hat_function(s, r, "F", x) > 0).astype(int) for r in range(2, s.R + 1))
        h_active = sum((hat_function(s, r, "H", x) > 0).astype(int) for r in range(1, s.R + 1))
        assert f_active.max() <= 1 and h_active.max() <= 1

    def test_bad_index(self):
        s = build_partition(1.0, 10)
        with pytest.raises(ValueError):
            hat_function(s, s.R + 1, "H", 0.5)

    @pytest.mark.parametrize("args", [(0.0, 10), (1.0, 1.5)])
    def test_bad_arguments(self, args):
        with pytest.raises(ValueError):
            build_partition(*args)


class TestHatNetwork:
    @pytest.mark.parametrize("beta", [1.0, 2.5])
    def test_exact(self, beta):
        s = build_partition(beta, 20)
        x = np.linspace(s.a_r(1), min(s.a_r(s.R), 1), 1000)
        for kind, r in [("F", 2), ("H", 1), ("H", 3), ("H", s.R)]:
            net = hat_network(s, r, kind)
            np.testing.assert_allclose(evaluate(net, x).ravel(), hat_function(s, r, kind, x), atol=1e-12)
            assert validate(net) == []
            cb, fb = s.ceil_beta, s.floor_beta
            assert net.depth <= 3 * ((1 + cb) ** 2 + math.floor(math.log2(20 * cb ** fb)))


class TestProjection:
    def test_values(self):
        s = build_partition(1.0, 10)
        a1, aR = s.a_r(1), s.a_r(s.R)
        net = projection_net(a1, aR)
        x = np.linspace(a1, min(aR, 1), 50)
        np.testing.assert_allclose(evaluate(net, x).ravel(), x, atol=1e-15)
        assert evaluate(net, [0.0])[0] == pytest.approx(a1, abs=1e-15)
        assert evaluate(net, [1.0])[0] == pytest.approx(min(aR, 1.0), abs=1e-15)
        assert net.depth == 1 and sparsity(net) <= 8

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            projection_net(0.0, 1.0)


class TestBlend:
    @pytest.mark.parametrize("beta", BETAS)
    @pytest.mark.parametrize("M", [2, 10, 100])
    def test_error_bound(self, beta, M):
        s = build_partition(beta, M)
        x = np.linspace(0, 1, 10 ** 4)
        T = t_beta(s, project(s, x))
        # log form of |exp(T) - x| <= 1/M; exp(log(1/M)) itself rounds one ulp high
        assert np.all(T <= np.log(x + 1 / M))
        far = x > 1 / M
        assert np.all(T[far] >= np.log(x[far] - 1 / M))
        assert np.abs(np.exp(T) - x).max() <= 1 / M * (1 + 2 ** -51)

    def test_peak_values(self):
        # only the hat peaking at a node is active there; its Taylor center is the paired node
        s = build_partition(1.5, 10)
        r = s.R // 2
        assert t_beta(s, s.a_r(r)) == pytest.approx(taylor_piece(s.b_r(r), s.floor_beta)(s.a_r(r)), abs=1e-12)
        assert t_beta(s, s.b_r(r)) == pytest.approx(taylor_piece(s.a_r(r + 1), s.floor_beta)(s.b_r(r)), abs=1e-12)

    def test_exact_at_nodes_for_degree_zero(self):
        s = build_partition(1.0, 10)
        x = s.nodes[1:-1]
        assert np.all(np.abs(np.exp(t_beta(s, x)) - x) <= 1 / 10)

    @pytest.mark.parametrize("beta", BETAS)
    @pytest.mark.parametrize("lam", [1.0, 1.5, 3.0, 10.0, 100.0])
    def test_exp_weighted_error_on_window(self, beta, lam):
        # window [lam^c, (lam+1)^c] / (2^(c^2) c^f M), Taylor center at its right end
        M = 100
        s = build_partition(beta, M)
        cb, fb = s.ceil_beta, s.floor_beta
        den = 2 ** (cb * cb) * cb ** fb * M
        a, b = lam ** cb / den, (lam + 1) ** cb / den
        x = np.linspace(a, b, 102)[1:-1]
        err = np.abs(taylor_piece(b, fb)(x) - np.log(x))
        assert (b * err).max() <= 1 / M * (1 + 1e-12)

    def test_upper_slack(self):
        s = build_partition(2.5, 10)
        x = np.linspace(s.a_r(1), s.a_r(s.R), 5000)
        assert t_beta(s, x).max() <= math.log(s.a_r(s.R)) + 1e-2

    def test_outside_interval(self):
        s = build_partition(1.0, 10)
        with pytest.raises(ValueError):
            t_beta(s, 0.0)


class TestLogNet:
    @pytest.mark.parametrize("beta", BETAS)
    @pytest.mark.parametrize("M", [2, 10, 100])
    def test_bounds(self, beta, M):
        net, s, p = build_log_net(beta, M, return_parts=True)
        x = np.unique(np.concatenate([np.linspace(0, 1, 10 ** 4), s.nodes[s.nodes <= 1]]))
        G = evaluate(net, x).ravel()
        assert np.abs(np.exp(G) - x).max() <= 4 / M
        assert G.min() >= math.log(4 / M) - 1e-12
        assert net.depth <= p.depth_budget
        assert net.hidden_width() <= p.width_budget
        assert sparsity(net) <= p.sparsity_budget
        assert validate(net) == []

    def test_unchanged_by_padding(self):
        net = build_log_net(1.5, 10)
        x = np.linspace(0, 1, 2001)
        G = evaluate(net, x)
        np.testing.assert_allclose(evaluate(depth_synchronize(net, 3), x), G, atol=1e-12)
        wider = tuple([1] + [m + 2 for m in net.widths[1:-1]] + [1])
        padded = embed(net, ArchitectureSpec(net.depth, wider, sparsity(net)))
        np.testing.assert_allclose(evaluate(padded, x), G, atol=1e-12)

    def test_parameters(self):
        p = log_net_parameters(1.0, 100)
        assert p.norm == 200
        assert p.eta == math.ceil(math.log2(4 * 100 ** 2 * 3))

    @pytest.mark.parametrize("beta,M", [(1.5, 10), (1.0, 100), (2.5, 10)])
    def test_matches_floored_blend(self, beta, M):
        net, s, _ = build_log_net(beta, M, return_parts=True)
        x = np.linspace(s.a_r(1), min(s.a_r(s.R), 1), 2000)
        G = evaluate(net, x).ravel()
        # the only gap is the product-network error in the power blocks
        assert np.abs(G - np.maximum(t_beta(s, x), math.log(4 / M))).max() <= 1e-6

    def test_small_m(self):
        with pytest.raises(ValueError):
            build_log_net(1.0, 1.0)
