"""Softmax networks approximating conditional class probabilities.

Each class probability is first approximated by a network ``H_k`` with
values in [0, 1]; the log network ``G`` is applied channelwise and a softmax
head turns ``(G(H_1), ..., G(H_K))`` back into a probability vector that is
close to the target and bounded away from zero.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .algebra import (
    compose,
    parallelize,
    postcompose_linear,
    precompose_linear,
    scale_net,
    synchronize_all,
)
from .logapprox import build_log_net
from .network import Network, ShapeError, evaluate


class UnsupportedConstruction(NotImplementedError):
    """The built-in approximator does not cover this smoothness/dimension."""


@dataclass(frozen=True)
class CondProbFn:
    """A map from [0, 1]^d to the probability simplex in R^K."""

    d: int
    K: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1 and self.d == 1:
            x = x[:, None]
        elif x.ndim == 1:
            x = x[None, :]
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape != (x.shape[0], self.K):
            raise ShapeError(f"expected output of shape {(x.shape[0], self.K)}, got {out.shape}")
        return out

    @classmethod
    def from_network(cls, net: Network) -> CondProbFn:
        if net.output != "softmax":
            raise ValueError("need a softmax-output network")
        return cls(net.input_dim, net.output_dim, lambda x: evaluate(net, x))


def constant_probs(p, d: int = 1) -> CondProbFn:
    p = np.asarray(p, dtype=float)
    return CondProbFn(d, p.size, lambda x: np.broadcast_to(p, (x.shape[0], p.size)).copy())


@dataclass(frozen=True)
class HolderSpec:
    beta: float
    Q: float
    d: int = 1
    K: int = 2

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.Q < 1 / self.K:
            raise ValueError(f"radius Q={self.Q} must be at least 1/K={1 / self.K}")
        if self.d < 1:
            raise ValueError("dimension must be positive")


def c_constant(Q: float, beta: float, d: int) -> float:
    return (2 * Q + 1) * (1 + d * d + beta * beta) * 6 ** d + Q * 3 ** beta


def interp_cells(spec: HolderSpec, M: float) -> int:
    """Coarsest uniform grid with ``Q h^beta <= C/M``."""
    C = c_constant(spec.Q, spec.beta, spec.d)
    return max(1, math.ceil((spec.Q * M / C) ** (1 / spec.beta)))


def _clamp_unit(net: Network) -> Network:
    """Append ``y -> min(max(y, 0), 1)`` as one extra hidden layer."""
    both = postcompose_linear(net, [[1.0], [1.0]])
    return compose(both, Network.from_layers([[[1.0, -1.0]]]), [0.0, 1.0])


def holder_interp_net(f, spec: HolderSpec, M: float, n_cells: int | None = None) -> Network:
    """Piecewise-linear interpolant of ``f`` on a uniform grid, clipped to [0, 1].

    ``f`` is either a callable on [0, 1] or the array of its values at the
    ``n + 1`` grid nodes ``i / n``.
    """
    if spec.d != 1 or spec.beta > 1:
        raise UnsupportedConstruction(
            "built-in approximators cover d = 1 and beta <= 1 only; pass your own H_k networks"
        )
    if callable(f):
        n = n_cells or interp_cells(spec, M)
        values = np.asarray(f(np.linspace(0.0, 1.0, n + 1)), dtype=float).reshape(-1)
    else:
        values = np.asarray(f, dtype=float).reshape(-1)
        n = values.size - 1
        if n < 1:
            raise ValueError("need values at two or more nodes")
    slopes = np.diff(values) * n
    kinks = np.diff(slopes, prepend=0.0)
    out_w = np.concatenate([[values[0]], kinks])
    size = max(1.0, float(np.abs(out_w).max()))
    nodes = np.arange(n) / n
    # unit 0 is the constant relu(0*x + 1); unit i >= 1 is relu(x - t_{i-1})
    w0 = np.concatenate([[[0.0]], np.ones((n, 1))])
    v1 = np.concatenate([[-1.0], nodes])
    net = Network.from_layers([w0, [out_w / size]], [[0.0], v1])
    if size > 1:
        net = compose(net, scale_net(size))
    return _clamp_unit(net)


def prob_net_budget(K: int, d: int, beta: float, M: float) -> tuple[int, int, float]:
    """Depth, width and sparsity allowed for the softmax network."""
    cb = math.ceil(beta)
    log2m = math.log2(M)
    depth = (3 * math.ceil(log2m * (d / beta + 1)) * (1 + math.ceil(math.log2(d + beta)))
             + math.floor(40 * (beta + 2) ** 2 * log2m) + 2)
    width = math.floor(48 * K * (d + cb ** 3) * 2 ** beta * M ** (d / beta))
    sparse = 4707 * K * (d + beta + 1) ** (4 + d) * 2 ** beta * M ** (d / beta) * log2m * (d / beta + 1)
    return depth, width, sparse


def build_softmax_prob_net(H, beta: float, M: float, Q: float = 1.0, d: int | None = None,
                           check_hypothesis: bool = True) -> Network:
    """Softmax of ``G(H_k(x))`` over the classes ``k``.

    ``H`` is a list of identity-output networks with values in [0, 1] on a
    common input. ``M`` must exceed ``K (4 + c_constant(Q, beta, d))`` unless
    ``check_hypothesis`` is off, in which case the construction is the same
    but the approximation guarantees are no longer implied.
    """
    H = list(H)
    K = len(H)
    if K < 2:
        raise ValueError("need at least two classes")
    d = H[0].input_dim if d is None else d
    if any(h.input_dim != H[0].input_dim for h in H):
        raise ShapeError("all H_k must share the input width")
    if any(h.output_dim != 1 or h.output != "identity" for h in H):
        raise ShapeError("each H_k must be a scalar identity-output network")
    need = K * (4 + c_constant(Q, beta, d))
    if check_hypothesis and not M > need:
        raise ValueError(f"M={M} must exceed K(4 + C_Q,beta,d) = {need:.6g}")
    inner = parallelize(*synchronize_all(H))
    G = build_log_net(beta, M)
    channels = []
    for k in range(K):
        pick = np.zeros((1, K))
        pick[0, k] = 1.0
        channels.append(precompose_linear(G, pick))
    net = compose(inner, parallelize(*channels))
    return Network.from_layers(net.weights, net.shifts, "softmax")


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    zmax = z.max(axis=-1, keepdims=True)
    return z - zmax - np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))


def check_log_softmax_lipschitz(z1, z2) -> tuple[np.ndarray, np.ndarray]:
    """Left and right sides of ``|log softmax(z1) - log softmax(z2)|_inf <= K |z1 - z2|_inf``."""
    z1, z2 = np.atleast_2d(z1), np.atleast_2d(z2)
    K = z1.shape[-1]
    lhs = np.abs(log_softmax(z1) - log_softmax(z2)).max(axis=-1)
    rhs = K * np.abs(z1 - z2).max(axis=-1)
    return lhs, rhs


@dataclass(frozen=True)
class ProbNetReport:
    sup_error: float
    error_bound: float
    worst_x: float
    min_prob: float
    min_bound: float
    simplex_error: float
    passed: bool


def verify_prob_net(qnet, p0: CondProbFn, M: float, grid, Q: float = 1.0, beta: float = 1.0) -> ProbNetReport:
    """Check the sup-error and the lower bound of a softmax network on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    q = qnet(grid) if callable(qnet) and not isinstance(qnet, Network) else evaluate(qnet, grid)
    p = p0(grid)
    K = p.shape[1]
    bound = 2 * K * (4 + c_constant(Q, beta, p0.d)) / M
    err = np.abs(q - p).max(axis=1)
    worst = int(err.argmax())
    simplex = float(np.abs(q.sum(axis=1) - 1).max())
    min_prob = float(q.min())
    ok = err[worst] <= bound and min_prob >= 1 / M and simplex <= 1e-12 and min_prob > 0
    worst_x = grid[worst] if grid.ndim == 1 else grid[worst, 0]
    return ProbNetReport(float(err[worst]), bound, float(worst_x), min_prob, 1 / M, simplex, bool(ok))

