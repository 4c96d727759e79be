"""Closed-form covering-number bounds for softmax network classes.

The bounds themselves are formulas; exact covering numbers are only computed
for tiny tabulated function classes, where they serve as an oracle for the
log-class reduction inequality.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .network import ArchitectureSpec


@dataclass(frozen=True)
class EntropyBound:
    V: int
    raw: float
    log_raw: float
    log_bound: float
    log_bound_substituted: float
    delta: float
    depth: int
    widths: tuple[int, ...]
    K: int
    s: int


def covering_bound(arch: ArchitectureSpec, K: int, delta: float) -> EntropyBound:
    """Covering bound ``(4 K (L+1) V^2 / delta)^(s+1)`` for the softmax class on ``arch``.

    ``log_bound`` is the compact logarithmic form with ``s^L``;
    ``log_bound_substituted`` plugs ``V <= d K s^L 2^(L+2)`` into the
    raw bound and therefore carries ``s^(2L)``. Only the latter is guaranteed
    to dominate ``log_raw`` (when every hidden width is at most ``s``).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    L, s = arch.depth, arch.sparsity
    widths = tuple(int(w) for w in arch.widths)
    d = widths[0]
    V = math.prod(w + 1 for w in widths)
    base = 4 / delta * K * (L + 1) * V * V
    log_raw = (s + 1) * math.log(base)
    try:
        raw = base ** (s + 1)
    except OverflowError:
        raw = math.inf
    log_s = math.log(s) if s > 0 else -math.inf
    log_bound = (s + 1) * ((2 * L + 6) * math.log(2) - math.log(delta) + math.log(L + 1)
                           + 3 * math.log(K) + 2 * math.log(d) + L * log_s)
    v_sub = math.log(d) + math.log(K) + L * log_s + (L + 2) * math.log(2)
    log_sub = (s + 1) * (math.log(4 / delta * K * (L + 1)) + 2 * v_sub)
    return EntropyBound(V, raw, log_raw, log_bound, log_sub, delta, L, widths, K, s)


@dataclass(frozen=True)
class ReductionStatement:
    """``N(delta, log G, d_{log tau}) <= N(delta * tau, G, d_tau)``."""

    log_radius: float
    log_floor: float
    value_radius: float
    value_floor: float


def covering_reduction_bound(delta: float, tau: float) -> ReductionStatement:
    if delta <= 0 or tau <= 0:
        raise ValueError("delta and tau must be positive")
    return ReductionStatement(delta, math.log(tau), delta * tau, tau)


def floored_distances(table: np.ndarray, floor: float) -> np.ndarray:
    """Pairwise ``d_floor`` between rows of ``table`` (functions tabulated on a domain)."""
    t = np.maximum(floor, np.asarray(table, dtype=float))
    return np.abs(t[:, None, :] - t[None, :, :]).max(axis=-1)


def interior_covering_number(dist: np.ndarray, radius: float) -> int:
    """Smallest number of class members whose closed ``radius``-balls cover the class.

    Exhaustive search over center subsets of increasing size; meant for
    classes of a few dozen functions.
    """
    n = dist.shape[0]
    if n == 0:
        return 0
    within = dist <= radius
    for size in range(1, n + 1):
        for centers in itertools.combinations(range(n), size):
            if within[list(centers)].any(axis=0).all():
                return size
    raise AssertionError("every class covers itself")


def step_class() -> np.ndarray:
    """Eight positive step functions on the domain {0, 1, 2, 3}."""
    x = np.arange(4)
    rows = [np.where(x >= j, h, h / 10) for h in (0.5, 1.0) for j in range(4)]
    return np.array(rows)


@dataclass(frozen=True)
class ReductionCheck:
    delta: float
    tau: float
    log_cover: int
    value_cover: int

    @property
    def holds(self) -> bool:
        return self.log_cover <= self.value_cover


def check_reduction(table: np.ndarray, delta: float, tau: float) -> ReductionCheck:
    """Exact covering numbers on both sides of the reduction for a positive tabulated class."""
    table = np.asarray(table, dtype=float)
    if np.any(table <= 0):
        raise ValueError("tabulated functions must be positive")
    stmt = covering_reduction_bound(delta, tau)
    log_cover = interior_covering_number(floored_distances(np.log(table), stmt.log_floor), stmt.log_radius)
    value_cover = interior_covering_number(floored_distances(table, stmt.value_floor), stmt.value_radius)
    return ReductionCheck(delta, tau, log_cover, value_cover)
