"""Losses, divergences and the elementary inequalities relating them.

Probability vectors live on the last axis, so every pointwise function
accepts a single vector or a stack of them. The convention ``0 log 0 = 0``
is used throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .probnet import CondProbFn


@dataclass(frozen=True)
class LabeledSample:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise ValueError(f"labels of shape {Y.shape} do not match {X.shape[0]} inputs")
        if not (np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=1) == 1)):
            raise ValueError("each label must be a one-hot vector")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y.astype(float))

    @classmethod
    def from_labels(cls, X, labels, K: int) -> LabeledSample:
        labels = np.asarray(labels, dtype=int)
        return cls(X, np.eye(K)[labels])

    @property
    def n(self) -> int:
        return self.X.shape[0]


def sample_labels(p: CondProbFn, X, rng: np.random.Generator) -> LabeledSample:
    probs = p(X)
    u = rng.random(probs.shape[0])[:, None]
    labels = (u > np.cumsum(probs, axis=1)).sum(axis=1)
    return LabeledSample.from_labels(X, np.minimum(labels, p.K - 1), p.K)


def ce_loss(p, data: LabeledSample) -> float:
    """Average negative log-likelihood; ``inf`` if an observed class gets probability 0."""
    probs = p(data.X)
    if probs.shape != data.Y.shape:
        raise ValueError(f"predictions {probs.shape} do not match labels {data.Y.shape}")
    observed = (probs * data.Y).sum(axis=1)
    if np.any(observed <= 0):
        return math.inf
    return 0.0 - math.fsum(np.log(observed)) / data.n


def _xlogy_ratio(p, q, B):
    """Per-coordinate ``p min(B, log(p/q))`` with the zero conventions."""
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    out = np.zeros(p.shape)
    pos = p > 0
    with np.errstate(divide="ignore"):
        ratio = np.where(pos & (q > 0), np.log(np.where(pos, p, 1.0)) - np.log(np.where(q > 0, q, 1.0)), np.inf)
    out[pos] = p[pos] * np.minimum(B, ratio[pos])
    hits = pos & (ratio > B)
    return out, hits


def kl_truncated_point(p, q, B: float = math.inf):
    """``sum_k p_k min(B, log(p_k / q_k))`` along the last axis."""
    if B < 2:
        warnings.warn(f"B={B} < 2: truncated KL may be negative", stacklevel=2)
    terms, _ = _xlogy_ratio(p, q, B)
    return terms.sum(axis=-1)


def kl(p, q):
    return kl_truncated_point(p, q, math.inf)


@dataclass(frozen=True)
class DivergenceReport:
    value: float
    B: float
    truncation_hits: int
    sample_size: int
    std_error: float = 0.0


def risk_estimate(p0: CondProbFn, q, B: float = math.inf, points=None, sampler=None,
                  n: int = 10 ** 5, seed: int = 0) -> DivergenceReport:
    """Average of ``KL_B(p0(x), q(x))`` over quadrature ``points`` or ``n`` sampled inputs.

    With ``points`` the equal-weight average is returned (midpoint rule on a
    uniform grid); with ``sampler`` the Monte Carlo mean and its standard error.
    """
    if (points is None) == (sampler is None):
        raise ValueError("give exactly one of points or sampler")
    if points is None:
        x = sampler(n, np.random.default_rng(seed))
    else:
        x = np.asarray(points, dtype=float)
    if B < 2:
        warnings.warn(f"B={B} < 2: truncated KL may be negative", stacklevel=2)
    terms, hits = _xlogy_ratio(p0(x), q(x), B)
    vals = terms.sum(axis=1)
    m = vals.size
    mean = math.fsum(vals) / m
    se = 0.0
    if points is None and m > 1 and math.isfinite(mean):
        se = math.sqrt(math.fsum((vals - mean) ** 2) / (m - 1) / m)
    return DivergenceReport(mean, B, int(hits.sum()), m, se)


def hellinger_sq(p, q):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return 0.5 * ((np.sqrt(p) - np.sqrt(q)) ** 2).sum(axis=-1)


def chi2(p, q):
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, (p - q) ** 2 / np.where(q > 0, q, 1.0), np.where(p > 0, np.inf, 0.0))
    return terms.sum(axis=-1)


@dataclass(frozen=True)
class SandwichVerdict:
    hellinger_le_kl2: np.ndarray
    kl2_le_klb: np.ndarray
    klb_le_hellinger: np.ndarray

    @property
    def all(self) -> bool:
        return bool(np.all(self.hellinger_le_kl2) and np.all(self.kl2_le_klb) and np.all(self.klb_le_hellinger))


def sandwich_terms(p, q, B: float):
    """``(H^2, KL_2 / 2, KL_B / 2, 2 e^(B/2) H^2)``, each along the last axis."""
    h2 = hellinger_sq(p, q)
    return h2, 0.5 * kl_truncated_point(p, q, 2.0), 0.5 * kl_truncated_point(p, q, B), 2 * math.exp(B / 2) * h2


def check_sandwich(p, q, B: float, tol: float = 1e-12) -> SandwichVerdict:
    """``H^2 <= KL_2/2 <= KL_B/2 <= 2 e^(B/2) H^2`` up to absolute rounding ``tol``."""
    if B < 2:
        raise ValueError("the sandwich needs B >= 2")
    a, b, c, d = sandwich_terms(p, q, B)
    return SandwichVerdict(a <= b + tol, b <= c + tol, c <= d + tol)


def d_tau(f_vals, g_vals, tau: float) -> float:
    """``sup_x max_k |max(tau, f_k(x)) - max(tau, g_k(x))|`` over tabulated values."""
    f_vals, g_vals = np.asarray(f_vals, dtype=float), np.asarray(g_vals, dtype=float)
    if f_vals.shape != g_vals.shape:
        raise ValueError("functions must be tabulated on a common grid")
    if f_vals.size == 0:
        return 0.0
    with np.errstate(invalid="ignore"):
        diff = np.maximum(tau, f_vals) - np.maximum(tau, g_vals)
    # both values at -inf when tau = -inf and f = g = -inf
    diff = np.where(np.isnan(diff), 0.0, diff)
    return float(np.abs(diff).max())


def delta_n(p_hat, candidates, data: LabeledSample) -> float:
    """Empirical CE of ``p_hat`` minus the smallest empirical CE over ``candidates``."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate")
    return ce_loss(p_hat, data) - min(ce_loss(c, data) for c in candidates)


def moment_terms(p, q, B: float, m: int):
    """Both sides of the moment inequality for truncated log-ratios."""
    if B <= 1:
        raise ValueError("B must exceed 1")
    terms, _ = _xlogy_ratio(p, q, B)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        capped = np.where(p > 0, terms / np.where(p > 0, p, 1.0), 0.0)
    lhs = (p * np.abs(capped) ** m).sum(axis=-1)
    rhs = max(math.factorial(m), B ** m / (B - 1)) * terms.sum(axis=-1)
    return lhs, rhs


def check_moment_lemma(p, q, B: float, m: int, rtol: float = 1e-12):
    lhs, rhs = moment_terms(p, q, B, m)
    return lhs <= rhs + rtol * np.maximum(1.0, np.abs(rhs))


@dataclass(frozen=True)
class EpsilonAidVerdict:
    hypothesis: bool
    lower_ok: bool
    upper_ok: bool
    lower: float
    upper: float


def check_epsilon_aid(a: float, b: float, c: float, d: float, eps: float, tol: float = 1e-12) -> EpsilonAidVerdict:
    """Sandwich ``a`` given ``|a - b| <= 2 sqrt(a) c + d`` and ``0 < eps <= 1``."""
    if a < 0 or not 0 < eps <= 1:
        raise ValueError("need a >= 0 and eps in (0, 1]")
    hyp = abs(a - b) <= 2 * math.sqrt(a) * c + d
    lower = (1 - eps) * (b - d) - (1 - eps) ** 2 / eps * c * c
    upper = (1 + eps) * (b + d) + (1 + eps) ** 2 / eps * c * c
    scale = tol * max(1.0, abs(a), abs(b), abs(c) ** 2, abs(d))
    return EpsilonAidVerdict(hyp, lower <= a + scale, a <= upper + scale, lower, upper)


def f_m(u, m: int):
    """``|log u|^m / (u - log u - 1)`` with its limits at ``u = 1``."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("u must be positive")
    if m < 2:
        raise ValueError("m must be at least 2")
    lu = np.log(u)
    den = u - lu - 1
    near = np.abs(u - 1) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.abs(lu) ** m / den
    # series: u - log u - 1 = w^2/2 - w^3/3 + ... with w = u - 1, log u = w - w^2/2 + ...
    w = u - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        series = np.abs(w - w * w / 2 + w ** 3 / 3) ** m / (w * w / 2 - w ** 3 / 3 + w ** 4 / 4)
    limit = 2.0 if m == 2 else 0.0
    series = np.where(w == 0, limit, series)
    out = np.where(near, series, direct)
    return out if out.ndim else float(out)


def rate_phi(K: int, n: float, alpha: float, beta: float, d: int) -> float:
    if n <= 1:
        raise ValueError("n must exceed 1")
    a = (1 + alpha) * beta
    return K ** ((a + (3 + alpha) * d) / (a + d)) * n ** (-a / (a + d))


@dataclass(frozen=True)
class InverseMomentVerdict:
    estimate: float
    std_error: float
    bound: float
    passed: bool


def inverse_moment_bound(H: float, alpha: float, C: float) -> float:
    if alpha < 1:
        return math.inf if H == 0 else C * H ** (alpha - 1) / (1 - alpha)
    return math.inf if H == 0 else C * (1 - math.log(H))


def inverse_moment_bound_check(p_fn, sampler, H: float, alpha: float, C: float,
                               n: int = 10 ** 5, seed: int = 0) -> InverseMomentVerdict:
    """Monte Carlo estimate of ``E[1{p(X) >= H} / p(X)]`` against its SVB bound."""
    if not 0 <= H <= 1:
        raise ValueError("H must lie in [0, 1]")
    x = sampler(n, np.random.default_rng(seed))
    p = np.asarray(p_fn(x), dtype=float).reshape(-1)
    keep = (p >= H) & (p > 0)
    vals = np.zeros(p.size)
    vals[keep] = 1 / p[keep]
    mean = math.fsum(vals) / p.size
    se = float(vals.std(ddof=1) / math.sqrt(p.size)) if p.size > 1 else 0.0
    bound = inverse_moment_bound(H, alpha, C)
    return InverseMomentVerdict(mean, se, bound, mean - 3 * se <= bound)


def dirichlet_pairs(K: int, n: int, concentration: float, rng: np.random.Generator):
    """Random probability vector pairs, each of shape ``(n, K)``."""
    a = np.full(K, concentration)
    return rng.dirichlet(a, n), rng.dirichlet(a, n)
