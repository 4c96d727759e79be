"""Verification suites, the approximation-rate study and the infinite-risk demo.

Each suite returns a list of :class:`CheckRow`; a row passes when ``lhs <= rhs``
and ``margin = rhs - lhs``. Suites with many random trials report the worst
trial per inequality so the tables stay short.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import divergence as dv
from .algebra import mult_net
from .entropy import check_reduction, covering_bound, step_class
from .logapprox import (
    build_log_net,
    build_partition,
    coefficient_sum_bound,
    hat_function,
    project,
    t_beta,
    taylor_error_bound,
    taylor_eval,
    taylor_piece,
)
from .network import ArchitectureSpec, evaluate, sparsity, validate
from .probnet import (
    CondProbFn,
    HolderSpec,
    build_softmax_prob_net,
    c_constant,
    check_log_softmax_lipschitz,
    constant_probs,
    holder_interp_net,
)
from .svb import (
    DEFAULT_T_GRID,
    p_alpha_family,
    svb_fit,
    svb_verify,
    uniform_sampler,
    zero_class_family,
)

DEFAULT_GRID_POINTS = 10 ** 4
SMALL_T = DEFAULT_T_GRID[DEFAULT_T_GRID <= 0.1]


def grid_points(default: int = DEFAULT_GRID_POINTS) -> int:
    raw = os.environ.get("RELUKIT_GRID_POINTS")
    if raw is None:
        return default
    value = int(raw)
    if value < 2:
        raise ValueError("RELUKIT_GRID_POINTS must be at least 2")
    return value


@dataclass(frozen=True)
class CheckRow:
    name: str
    params: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        # equal infinite sides (e.g. KL = chi^2 = inf) are a tie, not nan
        return 0.0 if self.lhs == self.rhs else self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs)

    def as_csv(self) -> list:
        return [self.name, self.params, repr(float(self.lhs)), repr(float(self.rhs)),
                repr(float(self.margin)), "pass" if self.passed else "FAIL"]


CSV_HEADER = ["name", "params", "lhs", "rhs", "margin", "verdict"]


def _worst(name: str, params: str, lhs, rhs) -> CheckRow:
    lhs, rhs = np.broadcast_arrays(np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float))
    with np.errstate(invalid="ignore"):
        gap = rhs - lhs
    gap = np.where(np.isnan(gap), np.where(lhs == rhs, 0.0, -np.inf), gap)
    i = int(np.argmin(gap)) if gap.size else 0
    return CheckRow(name, params, float(lhs.flat[i]), float(rhs.flat[i]))


# ---------------------------------------------------------------- log network

def log_net_grid(scheme, n: int) -> np.ndarray:
    x = np.concatenate([np.linspace(0.0, 1.0, n), scheme.a, scheme.b])
    return np.unique(x[(x >= 0) & (x <= 1)])


def suite_log_net(beta: float = 1.0, M: float = 10.0, n: int | None = None, **_) -> list[CheckRow]:
    net, scheme, params = build_log_net(beta, M, return_parts=True)
    x = log_net_grid(scheme, n or grid_points())
    G = evaluate(net, x).ravel()
    p = f"beta={beta} M={M}"
    return [
        CheckRow("log-net sup |exp(G)-x|", p, float(np.abs(np.exp(G) - x).max()), 4 / M),
        CheckRow("log-net lower bound (log(4/M) - 1e-12 <= min G)", p, params.lower - 1e-12, float(G.min())),
        CheckRow("log-net depth", p, net.depth, params.depth_budget),
        CheckRow("log-net hidden width", p, net.hidden_width(), params.width_budget),
        CheckRow("log-net sparsity", p, sparsity(net), params.sparsity_budget),
        CheckRow("log-net parameter issues", p, len(validate(net)), 0),
    ]


def blend_bound_violations(scheme, x) -> int:
    """Grid points where ``|exp(T(pi(x))) - x| > 1/M``, compared in log space.

    ``exp(log(1/M))`` rounds one ulp above ``1/M``, so the equivalent form
    ``log(x - 1/M) <= T <= log(x + 1/M)`` is evaluated instead.
    """
    x = np.asarray(x, dtype=float)
    T = t_beta(scheme, project(scheme, x))
    h = 1 / scheme.M
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(x > h, np.log(x - h), -np.inf)
    return int(np.sum((T > np.log(x + h)) | (T < lo)))


def suite_partition(beta: float = 1.0, M: float = 10.0, n: int | None = None, seed: int = 0, **_) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    scheme = build_partition(beta, M)
    p = f"beta={beta} M={M}"
    lo, hi = scheme.a_r(1), scheme.a_r(scheme.R)
    x = np.unique(np.concatenate([np.linspace(lo, hi, n or grid_points()), scheme.nodes]))
    total = sum(hat_function(scheme, r, kind, x) for kind, r in scheme.pieces())
    rows = [
        CheckRow("partition of unity |sum - 1|", p, float(np.abs(total - 1).max()), 1e-12),
        CheckRow("first right node |b_1 - 1/M|", p, abs(scheme.b_r(1) - 1 / M), 0.0),
    ]
    xs = np.linspace(0.0, 1.0, n or grid_points())
    rows.append(CheckRow("blended Taylor |exp(T(pi(x))) - x| <= 1/M: violations", p,
                         blend_bound_violations(scheme, xs), 0))
    bounds = [coefficient_sum_bound(pc.center, pc.degree) - float(np.abs(pc.coeffs).sum())
              for pc in scheme.taylor_pieces if pc.center <= math.e]
    rows.append(CheckRow("coefficient sums within bound (worst slack)", p, -min(bounds), 0.0))
    # random (x, c, degree) triples for the Taylor remainder bound
    xr, cr = rng.uniform(0.01, 1, 1000), rng.uniform(0.01, 1, 1000)
    kr = rng.integers(0, 4, 1000)
    err = np.array([abs(math.log(a) - taylor_eval(taylor_piece(c, int(k)), a)) for a, c, k in zip(xr, cr, kr)])
    bnd = np.array([taylor_error_bound(a, c, int(k)) for a, c, k in zip(xr, cr, kr)])
    rows.append(_worst("Taylor remainder |log x - T(x)|", "1000 random (x, c, k)", err, bnd * (1 + 1e-12) + 1e-14))
    return rows


def suite_mult(seed: int = 0, **_) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for d in (1, 2, 3):
        axis = np.linspace(0, 1, 101)
        pts = np.stack(np.meshgrid(*[axis] * d, indexing="ij"), -1).reshape(-1, d)
        for eta in (4, 8, 12):
            net = mult_net(eta, d)
            err = np.abs(evaluate(net, pts).ravel() - pts.prod(axis=1)).max()
            rows.append(CheckRow("mult error", f"D={d} eta={eta}", float(err), 3.0 ** d * 2.0 ** -eta))
            z = rng.random((1000, d))
            z[np.arange(1000), rng.integers(0, d, 1000)] = 0.0
            rows.append(CheckRow("mult zero absorption |out|", f"D={d} eta={eta}",
                                 float(np.abs(evaluate(net, z)).max()), 0.0))
    return rows


# ------------------------------------------------------------ inequality fuzz

def _pairs(seed: int, K: int = 4, trials: int = 10 ** 4):
    rng = np.random.default_rng(seed)
    for conc in (1.0, 0.05):
        p, q = dv.dirichlet_pairs(K, trials, conc, rng)
        yield f"Dirichlet({conc}) K={K}", p, q


def suite_sandwich(seed: int = 0, trials: int = 10 ** 4, **_) -> list[CheckRow]:
    rows = []
    for label, p, q in _pairs(seed, trials=trials):
        for B in (2.0, 5.0, 10.0):
            h2, kl2, klb, top = dv.sandwich_terms(p, q, B)
            par = f"{label} B={B}"
            rows.append(_worst("H^2 <= KL_2/2", par, h2, kl2 + 1e-12))
            rows.append(_worst("KL_2/2 <= KL_B/2", par, kl2, klb + 1e-12))
            rows.append(_worst("KL_B/2 <= 2exp(B/2)H^2", par, klb, top + 1e-12))
    return rows


def suite_moment(seed: int = 0, trials: int = 10 ** 4, **_) -> list[CheckRow]:
    rows = []
    for label, p, q in _pairs(seed, trials=trials):
        for B in (2.0, 5.0, 10.0):
            for m in range(2, 7):
                lhs, rhs = dv.moment_terms(p, q, B, m)
                rows.append(_worst("moment inequality", f"{label} B={B} m={m}", lhs, rhs + 1e-12 * np.maximum(1, rhs)))
    return rows


def suite_chi2(seed: int = 0, trials: int = 10 ** 4, **_) -> list[CheckRow]:
    rows = []
    for label, p, q in _pairs(seed, trials=trials):
        rows.append(_worst("KL <= chi^2", label, dv.kl(p, q), dv.chi2(p, q) + 1e-12))
    return rows


def suite_pseudometric(seed: int = 0, trials: int = 10 ** 4, **_) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    rows = []
    n_triples = trials
    for label, conc in (("Dirichlet(1.0)", 1.0), ("Dirichlet(0.05)", 0.05)):
        with np.errstate(divide="ignore"):
            f, g, h = (np.log(rng.dirichlet(np.full(3, conc), (n_triples, 8))) for _ in range(3))
        for tau in (-math.inf, -5.0, -1.0):
            par = f"{label} tau={tau} grid=8"
            d_fg = np.array([dv.d_tau(a, b, tau) for a, b in zip(f, g)])
            d_gf = np.array([dv.d_tau(b, a, tau) for a, b in zip(f, g)])
            d_fh = np.array([dv.d_tau(a, c, tau) for a, c in zip(f, h)])
            d_hg = np.array([dv.d_tau(c, b, tau) for b, c in zip(g, h)])
            d_ff = np.array([dv.d_tau(a, a, tau) for a in f])
            rows.append(_worst("d_tau(f, f) = 0", par, d_ff, 0.0))
            rows.append(_worst("d_tau nonnegative", par, -d_fg, 0.0))
            with np.errstate(invalid="ignore"):
                asym = np.where(d_fg == d_gf, 0.0, np.abs(d_fg - d_gf))
            rows.append(_worst("d_tau symmetric |d(f,g) - d(g,f)|", par, asym, 0.0))
            rows.append(_worst("d_tau triangle", par, d_fg, d_fh + d_hg + 1e-12))
    return rows


def suite_epsilon(seed: int = 0, trials: int = 10 ** 5, **_) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    a = rng.exponential(1.0, trials)
    c = rng.exponential(1.0, trials) * rng.choice([0.0, 1.0], trials, p=[0.1, 0.9])
    d = rng.exponential(1.0, trials)
    slack = 2 * np.sqrt(a) * c + d
    b = a + rng.uniform(-1, 1, trials) * slack
    eps = rng.uniform(1e-3, 1.0, trials)
    eps[: trials // 10] = 1.0
    lower = (1 - eps) * (b - d) - (1 - eps) ** 2 / eps * c * c
    upper = (1 + eps) * (b + d) + (1 + eps) ** 2 / eps * c * c
    tol = 1e-12 * np.maximum.reduce([np.ones(trials), a, np.abs(b), c * c, d])
    return [
        _worst("hypothesis |a-b| <= 2sqrt(a)c + d", f"{trials} tuples", np.abs(a - b), slack * (1 + 1e-15)),
        _worst("epsilon-aid lower bound", f"{trials} tuples", lower, a + tol),
        _worst("epsilon-aid upper bound", f"{trials} tuples", a, upper + tol),
    ]


def suite_lipschitz(seed: int = 0, trials: int = 10 ** 4, **_) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for K in (2, 3, 10):
        for scale in (1.0, 30.0):
            z1, z2 = rng.normal(0, scale, (2, trials, K))
            lhs, rhs = check_log_softmax_lipschitz(z1, z2)
            rows.append(_worst("log-softmax Lipschitz constant K", f"K={K} scale={scale}", lhs, rhs * (1 + 1e-12) + 1e-12))
    return rows


def suite_fm(n: int = 10 ** 4, **_) -> list[CheckRow]:
    u = np.linspace(1e-6, 1 - 1e-6, n)
    rows = []
    for m in (2, 3, 4):
        vals = dv.f_m(u, m)
        rows.append(CheckRow("F_m strictly decreasing (max step)", f"m={m} grid={n}", float(np.diff(vals).max()), -1e-300))
    near = np.array([1 - 1e-6, 1 + 1e-6])
    rows.append(_worst("|F_2(u) - 2| near u=1", "u=1+-1e-6", np.abs(dv.f_m(near, 2) - 2), 1e-3))
    for m in (3, 4, 5):
        rows.append(_worst("|F_m(u)| near u=1", f"m={m} u=1+-1e-6", np.abs(dv.f_m(near, m)), 1e-3))
    return rows


def suite_svb(seed: int = 0, n: int = 10 ** 6, **_) -> list[CheckRow]:
    sampler = uniform_sampler(1)
    rows = []
    for alpha in (0.5, 1.0, 2.0):
        p = p_alpha_family(alpha)
        est = svb_fit(p, sampler, 0, n=n, seed=seed)
        rows.append(CheckRow("svb_fit |alpha_hat - alpha|", f"alpha={alpha} n={n}", abs(est.alpha - alpha), 0.05))
        ok = svb_verify(p, sampler, alpha, 3 ** alpha, n=n, seed=seed + 1)
        rows.append(CheckRow("svb_verify passes at (alpha, 3^alpha): -worst margin", f"alpha={alpha}", -ok.worst_margin, 0.0))
        # a larger exponent must be rejected; alpha = 2 needs more samples to resolve the gap
        n_strict = n if alpha < 2 else 10 * n
        bad = svb_verify(p, sampler, alpha + 0.5, 3 ** alpha, SMALL_T, n=n_strict, seed=seed + 2)
        rows.append(CheckRow("svb_verify rejects (alpha+0.5, 3^alpha) on t <= 0.1: worst margin", f"alpha={alpha} n={n_strict}",
                             bad.worst_margin, 0.0))
    return rows


def suite_entropy_toy(**_) -> list[CheckRow]:
    arch = ArchitectureSpec(1, (1, 2, 1), 4)
    eb = covering_bound(arch, 1, 1.0)
    rows = [CheckRow("covering V for widths (1,2,1)", "|V - 12|", abs(eb.V - 12), 0),
            CheckRow("covering raw bound vs 1152^5", "relative error", abs(eb.raw / 1152 ** 5 - 1), 1e-15)]
    table = step_class()
    checks = [check_reduction(table, dl, tau) for dl in np.logspace(-2, 0.5, 10) for tau in np.logspace(-2, 0, 10)]
    worst = min(checks, key=lambda c: c.value_cover - c.log_cover)
    rows.append(CheckRow("toy reduction N(delta, log G) <= N(delta*tau, G)",
                         f"worst delta={worst.delta:.4g} tau={worst.tau:.4g} over 10x10",
                         worst.log_cover, worst.value_cover))
    return rows


SUITES = {
    "log-net": suite_log_net,
    "partition": suite_partition,
    "mult": suite_mult,
    "sandwich": suite_sandwich,
    "moment": suite_moment,
    "chi2": suite_chi2,
    "epsilon": suite_epsilon,
    "pseudometric": suite_pseudometric,
    "lipschitz": suite_lipschitz,
    "fm": suite_fm,
    "svb": suite_svb,
    "entropy-toy": suite_entropy_toy,
}


# ------------------------------------------------------------- prob networks

def p_family(alpha: float) -> CondProbFn:
    return zero_class_family() if alpha == 0 else p_alpha_family(alpha)


def build_family_prob_net(p0: CondProbFn, beta: float, M: float, Q: float = 1.0,
                          check_hypothesis: bool = True):
    spec = HolderSpec(beta, Q, p0.d, p0.K)
    H = [holder_interp_net(lambda u, k=k: p0(u)[:, k], spec, M) for k in range(p0.K)]
    return build_softmax_prob_net(H, beta, M, Q, p0.d, check_hypothesis=check_hypothesis)


def kl_risk_bound(alpha: float, K: int, M: float, Q: float, beta: float, d: int) -> float:
    """Right side of the KL approximation bound with ``C = 3^alpha`` and ``C1 = 2K(4 + C_Q)``."""
    C = 3.0 ** alpha
    C1 = 2 * K * (4 + c_constant(Q, beta, d))
    a1 = min(alpha, 1.0)
    extra = 1 / (1 - alpha) if alpha < 1 else 0.0
    return C * K * (C1 + 1) ** (2 + a1) / M ** (1 + a1) * (1 + extra + math.log(M))


@dataclass
class RateStudyConfig:
    alpha: float
    beta: float = 1.0
    K: int = 3
    M_grid: tuple[float, ...] = (50, 100, 200, 400, 800)
    grid_points: int = 10 ** 5
    Q: float = 1.0
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if any(m < 2 for m in self.M_grid):
            raise ValueError("every M must be at least 2")
        if self.K != 3:
            raise ValueError("the built-in probability family has K = 3")


@dataclass
class RateStudyResult:
    config: RateStudyConfig
    rows: list = field(default_factory=list)
    slope: float = math.nan

    @property
    def slope_limit(self) -> float:
        return -(1 + min(self.config.alpha, 1.0)) + 0.3

    @property
    def passed(self) -> bool:
        return self.slope <= self.slope_limit and all(r["risk"] >= 0 and r["risk"] <= r["bound"] for r in self.rows)


def rate_study(cfg: RateStudyConfig) -> RateStudyResult:
    """KL risk of the softmax network against ``M`` with midpoint quadrature.

    M values below the construction's hypothesis threshold are built anyway
    and flagged in the ``hypothesis`` column.
    """
    p0 = p_family(cfg.alpha)
    x = (np.arange(cfg.grid_points) + 0.5) / cfg.grid_points
    need = cfg.K * (4 + c_constant(cfg.Q, cfg.beta, 1))
    res = RateStudyResult(cfg)
    for M in cfg.M_grid:
        net = build_family_prob_net(p0, cfg.beta, M, cfg.Q, check_hypothesis=False)
        rep = dv.risk_estimate(p0, CondProbFn.from_network(net), math.inf, points=x)
        res.rows.append({"M": M, "risk": rep.value, "bound": kl_risk_bound(cfg.alpha, cfg.K, M, cfg.Q, cfg.beta, 1),
                         "hypothesis": M > need})
    logs = np.log([r["risk"] for r in res.rows])
    res.slope = float(np.polyfit(np.log(cfg.M_grid), logs, 1)[0])
    return res


# --------------------------------------------------------- infinite risk demo

class RejectionBudgetExceeded(RuntimeError):
    pass


def corner_estimator(d: int = 1) -> CondProbFn:
    """``p_1 = 0`` on the lower corner cube, ``1`` on the upper one, ``1/2`` in between."""

    def fn(x):
        p1 = np.full(x.shape[0], 0.5)
        p1[np.all(x <= 1 / 3, axis=1)] = 0.0
        p1[np.all(x >= 2 / 3, axis=1)] = 1.0
        return np.column_stack([p1, 1 - p1])

    return CondProbFn(d, 2, fn)


def corner_event_sample(n: int, d: int, rng: np.random.Generator, budget: int = 10 ** 7) -> dv.LabeledSample:
    """Data from the fair-coin model conditioned on every point fitting the corner estimator."""
    p0 = constant_probs([0.5, 0.5], d)
    draws = 0
    batch = max(1, min(budget, 2 ** 16))
    while draws < budget:
        x = rng.random((batch, n, d))
        labels = rng.integers(0, 2, (batch, n))
        low = np.all(x <= 1 / 3, axis=2)
        high = np.all(x >= 2 / 3, axis=2)
        ok = np.all((low & (labels == 1)) | (high & (labels == 0)), axis=1)
        draws += batch
        if ok.any():
            i = int(np.argmax(ok))
            return dv.LabeledSample.from_labels(x[i], labels[i], p0.K)
    raise RejectionBudgetExceeded(
        f"no sample of size n={n} fitting the corner estimator in {budget} draws; "
        f"acceptance probability is 3^(-{d}n), reduce n")


@dataclass
class InfiniteRiskResult:
    rows: list
    slope: float
    expected_slope: float
    control: list
    train_ce: float

    @property
    def passed(self) -> bool:
        return (abs(self.slope - self.expected_slope) <= 0.2 * self.expected_slope
                and all(c == 0 for c in self.control) and self.train_ce == 0)


def infinite_risk(B_grid=(2, 4, 8, 16, 32, 64), n: int = 5, d: int = 1, seed: int = 0,
                  mc: int = 10 ** 5) -> InfiniteRiskResult:
    """Truncated KL risk of the corner estimator as the truncation level grows."""
    rng = np.random.default_rng(seed)
    data = corner_event_sample(n, d, rng)
    est = corner_estimator(d)
    p0 = constant_probs([0.5, 0.5], d)
    sampler = uniform_sampler(d)
    rows, control = [], []
    for B in B_grid:
        rep = dv.risk_estimate(p0, est, B, sampler=sampler, n=mc, seed=seed + 1)
        rows.append({"B": B, "risk": rep.value, "std_error": rep.std_error,
                     "closed_form": (1 / 3) ** d * (B - math.log(2)),
                     "zero_region": (1 / 3) ** d * B})
        control.append(dv.risk_estimate(p0, p0, B, sampler=sampler, n=mc, seed=seed + 1).value)
    slope = math.nan
    if len(B_grid) > 1:
        slope = float(np.polyfit(np.asarray(B_grid, dtype=float), [r["risk"] for r in rows], 1)[0])
    return InfiniteRiskResult(rows, slope, (1 / 3) ** d, control, dv.ce_loss(est, data))
