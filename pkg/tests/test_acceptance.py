"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the terminal summary prints after
the run (see ``conftest.py``).
"""

import math
import time

import numpy as np
import pytest

from relukit import experiments as ex
from relukit.entropy import covering_bound
from relukit.logapprox import build_log_net
from relukit.network import ArchitectureSpec, evaluate, sparsity, validate
from relukit.probnet import c_constant, verify_prob_net
from relukit.svb import p_alpha_family

BETAS = (0.8, 1.0, 1.5, 2.5)
MS = (2, 10, 100, 1000)

VERDICTS = {}


def record(number, ok, detail):
    VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[number])
    return ok


def all_pass(rows):
    bad = [r for r in rows if not r.passed]
    return not bad, bad


def test_log_network_bound():
    start = time.perf_counter()
    worst = (-math.inf, None)
    ok = True
    for beta in BETAS:
        for M in MS:
            net, scheme, _ = build_log_net(beta, M, return_parts=True)
            x = ex.log_net_grid(scheme, 10 ** 4)
            G = evaluate(net, x).ravel()
            err = float(np.abs(np.exp(G) - x).max())
            ok &= err <= 4 / M and G.min() >= math.log(4 / M) - 1e-12
            worst = max(worst, (err * M / 4, (beta, M)))
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    record(1, ok, f"worst |exp(G)-x| / (4/M) = {worst[0]:.4f} at (beta, M) = {worst[1]}; {elapsed:.1f}s")
    assert ok


def test_architecture_budgets():
    ok = True
    tight = 0.0
    for beta in BETAS:
        for M in MS:
            net = build_log_net(beta, M)
            lg = math.log2(M)
            depth = math.floor(40 * (beta + 2) ** 2 * lg)
            width = math.floor(48 * math.ceil(beta) ** 3 * 2 ** beta * M ** (1 / beta))
            sparse = 4284 * (beta + 2) ** 5 * 2 ** beta * M ** (1 / beta) * lg
            ok &= net.depth <= depth and net.hidden_width() <= width and sparsity(net) <= sparse
            ok &= validate(net) == []
            tight = max(tight, net.depth / depth, net.hidden_width() / width, sparsity(net) / sparse)
    record(2, ok, f"largest used fraction of any budget = {tight:.3f}")
    assert ok


def test_intermediate_bounds():
    rows = []
    for beta in BETAS:
        for M in MS:
            rows += ex.suite_partition(beta, M, n=10 ** 4, seed=0)
    ok, bad = all_pass(rows)
    record(3, ok, f"{len(rows)} checks, {len(bad)} violations")
    assert ok, bad


def test_mult_contract():
    rows = ex.suite_mult(seed=0)
    ok, bad = all_pass(rows)
    worst = max(r.lhs / r.rhs for r in rows if r.rhs > 0)
    record(4, ok, f"worst error / (3^D 2^-eta) = {worst:.3f}, {len(bad)} violations")
    assert ok, bad


def test_softmax_prob_net():
    ok = True
    parts = []
    grid = np.linspace(0, 1, 10 ** 4)
    for alpha in (0.5, 1.0):
        p0 = p_alpha_family(alpha)
        for M in (200, 400):
            net = ex.build_family_prob_net(p0, 1.0, M)
            rep = verify_prob_net(net, p0, M, grid)
            ok &= rep.passed and rep.error_bound == 2 * 3 * (4 + c_constant(1, 1, 1)) / M
            parts.append(f"a={alpha} M={M}: err {rep.sup_error:.3g}<= {rep.error_bound:.3g}, min {rep.min_prob:.3g}")
    record(5, ok, "; ".join(parts))
    assert ok


def test_rate_study():
    start = time.perf_counter()
    ok = True
    parts = []
    for alpha in (0.0, 0.5, 1.0):
        res = ex.rate_study(ex.RateStudyConfig(alpha=alpha))
        ok &= res.passed
        parts.append(f"alpha={alpha}: slope {res.slope:.3f} <= {res.slope_limit:.1f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 180
    record(6, ok, "; ".join(parts) + f"; {elapsed:.1f}s")
    assert ok


def test_inequality_fuzz():
    rows = (ex.suite_sandwich(seed=0) + ex.suite_moment(seed=0) + ex.suite_chi2(seed=0)
            + ex.suite_pseudometric(seed=0) + ex.suite_epsilon(seed=0) + ex.suite_lipschitz(seed=0)
            + ex.suite_fm())
    ok, bad = all_pass(rows)
    record(7, ok, f"{len(rows)} worst-case rows, {len(bad)} violations")
    assert ok, bad


def test_svb():
    rows = ex.suite_svb(seed=0)
    ok, bad = all_pass(rows)
    fits = [r.lhs for r in rows if r.name.startswith("svb_fit")]
    record(8, ok, f"max |alpha_hat - alpha| = {max(fits):.4f}, {len(bad)} violations")
    assert ok, bad


def test_infinite_risk():
    res = ex.infinite_risk()
    ok = res.passed
    record(9, ok, f"slope {res.slope:.4f} vs {res.expected_slope:.4f}, control max {max(res.control)}, "
                  f"training CE {res.train_ce}")
    assert ok


def test_entropy():
    b = covering_bound(ArchitectureSpec(1, (1, 2, 1), 4), 1, 1.0)
    rows = ex.suite_entropy_toy()
    ok, bad = all_pass(rows)
    ok &= b.V == 12 and b.raw == 1152 ** 5
    record(10, ok, f"V = {b.V}, raw = 1152^5: {b.raw == 1152 ** 5}, reduction violations {len(bad)}")
    assert ok, bad


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    request.config._acceptance_verdicts = dict(VERDICTS)
