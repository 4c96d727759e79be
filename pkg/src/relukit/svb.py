"""Small-value-bound diagnostics: how often a class probability is near zero."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .probnet import CondProbFn

DEFAULT_T_GRID = np.logspace(-4, 0, 30)


def uniform_sampler(d: int = 1):
    def sample(n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.random((n, d))

    return sample


def p_alpha_family(alpha: float) -> CondProbFn:
    """Three classes on [0, 1]: ``p_1 = min(x^(1/alpha), 1/3)``, ``p_2 = 1/3``, ``p_3 = 2/3 - p_1``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")

    def fn(x):
        p1 = np.minimum(x[:, 0] ** (1 / alpha), 1 / 3)
        return np.column_stack([p1, np.full_like(p1, 1 / 3), 2 / 3 - p1])

    return CondProbFn(1, 3, fn)


def zero_class_family() -> CondProbFn:
    """Limit of :func:`p_alpha_family` as alpha -> 0: class one never occurs."""
    return CondProbFn(1, 3, lambda x: np.tile([0.0, 1 / 3, 2 / 3], (x.shape[0], 1)))


@dataclass(frozen=True)
class SvbEstimate:
    alpha: float
    C: float
    t_grid: np.ndarray
    tails: np.ndarray
    n: int
    flag: str = ""


def _class_values(p: CondProbFn, sampler, k: int, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = sampler(n, rng)
    return p(x)[:, k]


def empirical_tails(values: np.ndarray, t_grid) -> np.ndarray:
    s = np.sort(values)
    return np.searchsorted(s, np.asarray(t_grid), side="right") / s.size


def svb_fit(p: CondProbFn, sampler, k: int, t_grid=None, n: int = 10 ** 6, seed: int = 0,
            fit_max_t: float = 0.1, min_count: int = 25) -> SvbEstimate:
    """Fit ``P(p_k(X) <= t) ~ C t^alpha`` by weighted least squares in log-log scale.

    Grid points with fewer than ``min_count`` hits are too noisy and dropped.
    Flags: ``"zero-mass"`` if ``p_k`` vanishes with positive probability
    (alpha = 0), ``"unbounded"`` if no small values are seen at all (any alpha
    fits), ``"undefined"`` if too few usable points remain.
    """
    t_grid = DEFAULT_T_GRID if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(t_grid > 1):
        raise ValueError("t_grid must lie in (0, 1]")
    vals = _class_values(p, sampler, k, n, seed)
    tails = empirical_tails(vals, t_grid)
    if np.mean(vals <= 0) > 0:
        return SvbEstimate(0.0, float(tails.max()), t_grid, tails, n, "zero-mass")
    use = (t_grid <= fit_max_t) & (tails * n >= min_count)
    if not np.any((t_grid <= fit_max_t) & (tails > 0)):
        return SvbEstimate(math.inf, 0.0, t_grid, tails, n, "unbounded")
    if use.sum() < 2:
        return SvbEstimate(math.nan, math.nan, t_grid, tails, n, "undefined")
    lt, ly = np.log(t_grid[use]), np.log(tails[use])
    w = tails[use] * n
    slope, intercept = np.polyfit(lt, ly, 1, w=np.sqrt(w))
    return SvbEstimate(float(slope), float(math.exp(intercept)), t_grid, tails, n)


@dataclass(frozen=True)
class SvbVerdict:
    passed: bool
    worst_margin: float
    worst_t: float
    worst_class: int


def svb_verify(p: CondProbFn, sampler, alpha: float, C: float, t_grid=None, n: int = 10 ** 6,
               seed: int = 0, classes=None) -> SvbVerdict:
    """Check ``P(p_k(X) <= t) <= C t^alpha + 3 SE`` at every grid ``t`` and class."""
    t_grid = DEFAULT_T_GRID if t_grid is None else np.asarray(t_grid, dtype=float)
    rng = np.random.default_rng(seed)
    probs = p(sampler(n, rng))
    classes = range(probs.shape[1]) if classes is None else classes
    worst = (math.inf, math.nan, -1)
    for k in classes:
        tails = empirical_tails(probs[:, k], t_grid)
        se = np.sqrt(tails * (1 - tails) / n)
        margin = C * t_grid ** alpha + 3 * se - tails
        i = int(margin.argmin())
        if margin[i] < worst[0]:
            worst = (float(margin[i]), float(t_grid[i]), int(k))
    return SvbVerdict(worst[0] >= 0, *worst)
