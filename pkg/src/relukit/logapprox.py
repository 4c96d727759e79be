"""A ReLU network ``G`` with ``|exp(G(x)) - x| <= 4/M`` and ``G >= log(4/M)`` on [0, 1].

The logarithm is approximated piece by piece: Taylor polynomials of degree
``floor(beta)`` (strict floor) around a geometric-type grid of centers are
blended by a partition of unity made of hat functions. Every piece becomes a
small network (hat, products of the hat with powers of the input), the pieces
are summed, clamped from below and rescaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .algebra import (
    compose,
    extend_negative,
    mult_net,
    parallelize,
    precompose_linear,
    scale_net,
    synchronize_all,
)
from .network import Network, evaluate


def strict_floor(x: float) -> int:
    """Largest integer strictly below ``x`` (so ``strict_floor(2) == 1``)."""
    return math.ceil(x) - 1


@dataclass(frozen=True)
class TaylorPiece:
    """Degree-``degree`` Taylor polynomial of ``log`` at ``center`` in monomial form."""

    center: float
    degree: int
    coeffs: tuple[float, ...]

    def __call__(self, x):
        return taylor_eval(self, x)


def taylor_piece(center: float, degree: int) -> TaylorPiece:
    if center <= 0:
        raise ValueError("center must be positive")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    coeffs = [math.log(center) - sum(1.0 / a for a in range(1, degree + 1))]
    for g in range(1, degree + 1):
        s = sum(math.comb(a, g) / a for a in range(g, degree + 1))
        coeffs.append(s * center ** (-g) * (-1) ** (1 - g))
    return TaylorPiece(float(center), degree, tuple(coeffs))


def taylor_eval(piece: TaylorPiece, x):
    """Evaluate ``sum_g c_g x^g`` (Horner)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c in reversed(piece.coeffs):
        out = out * x + c
    return out if out.ndim else float(out)


def taylor_error_bound(x, center: float, degree: int):
    """``|(x - c) / min(x, c)|^(k+1) / (k+1)``, an upper bound on the log error."""
    x = np.asarray(x, dtype=float)
    return np.abs((x - center) / np.minimum(x, center)) ** (degree + 1) / (degree + 1)


def coefficient_sum_bound(center: float, degree: int) -> float:
    """Bound on ``sum |c_g|`` valid for centers in (0, e]."""
    return (degree + 1) * 2.0 ** (degree + 1) * min(1.0, center) ** (-degree - 1)


@dataclass(frozen=True, eq=False)
class PartitionScheme:
    """Breakpoints of the partition of unity for smoothness ``beta`` and level ``M``.

    ``a[r-1]`` holds ``a_r`` for ``r = 1..R`` and ``b[r]`` holds ``b_r`` for
    ``r = 0..R`` with ``b_0 = a_1`` and ``b_R = a_R``.
    """

    beta: float
    M: float
    ceil_beta: int
    floor_beta: int
    R: int
    a: np.ndarray
    b: np.ndarray

    def a_r(self, r: int) -> float:
        return float(self.a[r - 1])

    def b_r(self, r: int) -> float:
        return float(self.b[r])

    @cached_property
    def nodes(self) -> np.ndarray:
        """Merged breakpoints ``a_1 < b_1 < a_2 < ... < b_{R-1} < a_R``."""
        out = np.empty(2 * self.R - 1)
        out[0::2] = self.a
        out[1::2] = self.b[1:self.R]
        return out

    def pieces(self) -> list[tuple[str, int]]:
        """Hat labels in node order: H_1, F_2, H_2, F_3, ..., F_R, H_R."""
        out = [("H", 1)]
        for r in range(2, self.R + 1):
            out += [("F", r), ("H", r)]
        return out

    def center(self, kind: str, r: int) -> float:
        """Taylor center attached to a hat: ``a_r`` for F_r and ``b_r`` for H_r."""
        return self.a_r(r) if kind == "F" else self.b_r(r)

    @cached_property
    def taylor_pieces(self) -> list[TaylorPiece]:
        return [taylor_piece(self.center(k, r), self.floor_beta) for k, r in self.pieces()]

    @property
    def coefficient_bound(self) -> float:
        """Upper bound on the slopes of all hats."""
        cb, fb = self.ceil_beta, self.floor_beta
        return 2.0 ** (1 + 2 * cb + cb * cb) * cb ** fb * self.M


def build_partition(beta: float, M: float) -> PartitionScheme:
    if beta <= 0:
        raise ValueError("beta must be positive")
    if M < 2:
        raise ValueError("M must be at least 2")
    cb = math.ceil(beta)
    fb = strict_floor(beta)
    base = 2.0 ** cb * cb ** (fb / cb)

    # Writing the points as ((base + t)/base)^cb / M keeps b_1 = 1/M exact.
    def point(t):
        return ((base + t) / base) ** cb / M

    R = math.ceil(2 * base * (M - 1) ** (1 / cb) - 2 * (base - 0.75))
    R = max(R, 2)
    while point(R / 2 - 0.75) < 1 - 1 / M:
        R += 1
    while R > 2 and point((R - 1) / 2 - 0.75) >= 1 - 1 / M:
        R -= 1
    r = np.arange(1, R + 1)
    a = point(r / 2 - 0.75)
    b = np.empty(R + 1)
    b[1:R] = point(r[:-1] / 2 - 0.5)
    b[0], b[R] = a[0], a[-1]
    a.setflags(write=False)
    b.setflags(write=False)
    return PartitionScheme(float(beta), float(M), cb, fb, R, a, b)


def _hat_nodes(scheme: PartitionScheme, r: int, kind: str):
    R = scheme.R
    if kind == "F":
        if not 2 <= r <= R:
            raise ValueError(f"F_r needs 2 <= r <= {R}, got {r}")
        return (scheme.a_r(r - 1), scheme.b_r(r - 1), scheme.a_r(r)), (0.0, 1.0, 0.0)
    if kind == "H":
        if not 1 <= r <= R:
            raise ValueError(f"H_r needs 1 <= r <= {R}, got {r}")
        if r == 1:
            return (scheme.a_r(1), scheme.b_r(1)), (1.0, 0.0)
        if r == R:
            return (scheme.b_r(R - 1), scheme.a_r(R)), (0.0, 1.0)
        return (scheme.b_r(r - 1), scheme.a_r(r), scheme.b_r(r)), (0.0, 1.0, 0.0)
    raise ValueError(f"kind must be 'F' or 'H', got {kind!r}")


def hat_function(scheme: PartitionScheme, r: int, kind: str, x):
    """Piecewise-linear bump ``F_r`` or ``H_r``.

    ``H_1`` stays at 1 left of ``a_1`` and ``H_R`` stays at 1 right of
    ``a_R``, so the family sums to one on the whole line.
    """
    xs, ys = _hat_nodes(scheme, r, kind)
    out = np.interp(np.asarray(x, dtype=float), xs, ys)
    return out if np.ndim(out) else float(out)


def _hat_units(scheme: PartitionScheme, r: int, kind: str):
    """First-layer ReLUs of a hat as (input weight, shift, normalized output weight).

    Kinks at positions >= 1 are never reached from the projected input and
    are left out, which keeps every shift inside [-1, 1].
    """
    xs, ys = _hat_nodes(scheme, r, kind)
    if len(xs) == 3:
        left, peak, right = xs
        up, down = 1.0 / (peak - left), 1.0 / (right - peak)
        units = [(1.0, left, up), (1.0, peak, -(up + down))]
    elif ys[0] == 1.0:  # H_1 falls from a_1 to b_1
        left, right = xs
        units = [(-1.0, -right, 1.0 / (right - left))]
    else:  # H_R rises from b_{R-1} to a_R
        left, right = xs
        units = [(1.0, left, 1.0 / (right - left))]
    bound = scheme.coefficient_bound
    out = []
    for w, v, c in units:
        if abs(v) >= 1:
            continue
        c = c / bound
        if abs(c) > 1:
            # the slope bound is attained for ceil(beta) = 1; allow rounding only
            if abs(c) > 1 + 1e-12:
                raise ArithmeticError(f"hat slope {c * bound} exceeds its bound {bound}")
            c = math.copysign(1.0, c)
        out.append((w, v, c))
    return out or [(0.0, 0.0, 0.0)]


def hat_network(scheme: PartitionScheme, r: int, kind: str) -> Network:
    """ReLU network equal to a hat function on ``[a_1, min(a_R, 1)]``.

    A first layer of (at most) two ReLUs produces the rising edge and the
    kink at the peak, divided by ``scheme.coefficient_bound``; the clamp at
    zero beyond the support comes from the ReLU that joins it to the
    scaling chain, which multiplies back by the same constant.
    """
    units = _hat_units(scheme, r, kind)
    edge = Network.from_layers(
        [[[u[0]] for u in units], [[u[2] for u in units]]],
        [[0.0], [u[1] for u in units]],
    )
    return compose(edge, scale_net(scheme.coefficient_bound))


def _hat_bank(scheme: PartitionScheme) -> Network:
    """Input ``y``; outputs ``(y, hat_1(y), ..., hat_n(y))`` in :meth:`pieces` order.

    Same network as ``parallelize(identity_chain(d), *hat_networks)``, but the
    shared scaling chain is tiled with Kronecker products instead of being
    rebuilt for every hat.
    """
    units = [_hat_units(scheme, r, kind) for kind, r in scheme.pieces()]
    n = len(units)
    sizes = np.array([len(u) for u in units])
    flat = [u for us in units for u in us]
    w0 = np.array([[1.0]] + [[u[0]] for u in flat])
    v1 = np.array([0.0] + [u[1] for u in flat])
    owner = np.repeat(np.arange(n), sizes)
    w1 = sp.csr_matrix(
        (np.concatenate([[1.0], [u[2] for u in flat]]),
         (np.concatenate([[0], owner + 1]), np.arange(1 + len(flat)))),
        shape=(n + 1, 1 + len(flat)),
    )
    chain = scale_net(scheme.coefficient_bound)
    eye = sp.identity(n, format="csr")
    weights = [w0, w1]
    shifts = [np.zeros(1), v1, np.zeros(n + 1)]
    for j, w in enumerate(chain.weights):
        weights.append(sp.block_diag([sp.identity(1), sp.kron(eye, w)], format="csr"))
        if j:
            shifts.append(np.concatenate([[0.0], np.tile(chain.shifts[j], n)]))
    return Network.from_layers(weights, shifts)


def projection_net(a1: float, aR: float) -> Network:
    """``x -> max(a1, min(x, aR, 1))`` as one hidden layer of three ReLUs."""
    if a1 <= 0:
        raise ValueError("a1 must be positive")
    if aR <= a1:
        raise ValueError("need a1 < aR")
    if a1 > 1:
        raise ValueError("a1 must not exceed 1")
    return Network.from_layers(
        [[[0.0], [1.0], [1.0]], [[1.0, 1.0, -1.0]]],
        [[0.0], [-a1, a1, min(aR, 1.0)]],
    )


def project(scheme: PartitionScheme, x):
    return np.clip(x, scheme.a_r(1), scheme.a_r(scheme.R))


def t_beta(scheme: PartitionScheme, x):
    """Blend of Taylor pieces weighted by the partition of unity (reference)."""
    x = np.asarray(x, dtype=float)
    lo, hi = scheme.a_r(1), scheme.a_r(scheme.R)
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError(f"x must lie in [{lo}, {hi}]")
    nodes = scheme.nodes
    labels = scheme.pieces()
    pieces = scheme.taylor_pieces
    j = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
    out = np.zeros_like(x)
    for shift in (0, 1):
        idx = j + shift
        for i in np.unique(idx):
            sel = idx == i
            kind, r = labels[i]
            out[sel] += hat_function(scheme, r, kind, x[sel]) * taylor_eval(pieces[i], x[sel])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LogNetParameters:
    beta: float
    M: float
    eta: int
    norm: float
    lower: float
    depth_budget: int
    width_budget: int
    sparsity_budget: float


def log_net_parameters(beta: float, M: float) -> LogNetParameters:
    cb, fb = math.ceil(beta), strict_floor(beta)
    eta = math.ceil(math.log2(cb * 2.0 ** (fb + 2) * float(M) ** (cb + 1) * 3.0 ** cb))
    norm = cb * 2.0 ** (fb + 1) * float(M) ** cb
    log2m = math.log2(M)
    return LogNetParameters(
        beta=float(beta),
        M=float(M),
        eta=eta,
        norm=norm,
        lower=math.log(4 / M),
        depth_budget=math.floor(40 * (beta + 2) ** 2 * log2m),
        width_budget=math.floor(48 * cb ** 3 * 2 ** beta * M ** (1 / beta)),
        sparsity_budget=4284 * (beta + 2) ** 5 * 2 ** beta * M ** (1 / beta) * log2m,
    )


def _power_block(eta: int, degree: int) -> Network:
    """Input ``(h, y)``; outputs ``Mult(h, y, ..., y)`` with ``g`` copies of ``y`` for g = 0..degree."""
    branches = []
    for g in range(degree + 1):
        spread = np.zeros((g + 1, 2))
        spread[0, 0] = 1.0
        spread[1:, 1] = 1.0
        branches.append(precompose_linear(mult_net(eta, g + 1), spread))
    return parallelize(*synchronize_all(branches))


def _tile_blocks(block: Network, n: int, hat_cols: np.ndarray, y_col: int, n_in: int,
                 out_rows: np.ndarray) -> Network:
    """``n`` copies of ``block`` in parallel, copy ``i`` reading inputs (hat_cols[i], y_col).

    Equivalent to parallelizing ``precompose_linear(block, selection_i)`` for
    each ``i`` and stacking the outputs with ``out_rows`` (``n`` rows of the
    per-copy output combination), but built with Kronecker products.
    """
    w0 = block.weights[0].tocsc()
    eye = sp.identity(n, format="csr")
    first_hat = sp.kron(eye, w0[:, [0]], format="csr")
    first_hat = sp.csr_matrix((first_hat.data, hat_cols[first_hat.indices], first_hat.indptr),
                              shape=(first_hat.shape[0], n_in))
    first_y = sp.kron(np.ones((n, 1)), w0[:, [1]], format="csr")
    first_y = sp.csr_matrix((first_y.data, np.full(first_y.nnz, y_col), first_y.indptr),
                            shape=(first_y.shape[0], n_in))
    weights = [(first_hat + first_y).tocsr()]
    for w in block.weights[1:-1]:
        weights.append(sp.kron(eye, w, format="csr"))
    weights.append(_combine_last(block.weights[-1], out_rows))
    shifts = [np.zeros(n_in)] + [np.tile(v, n) for v in block.shifts[1:]]
    return Network.from_layers(weights, shifts)


def _combine_last(last: sp.csr_matrix, coefs: np.ndarray) -> sp.csr_matrix:
    """Row ``k`` is ``hstack_i(coefs[k, i, :] @ last)``."""
    k_out = coefs.shape[0]
    dense_last = last.toarray()
    rows = np.einsum("kig,gw->kiw", coefs, dense_last).reshape(k_out, -1)
    return sp.csr_matrix(rows)


def build_log_net(beta: float, M: float, return_parts: bool = False):
    """Assemble ``G``; with ``return_parts`` also return the scheme and parameters."""
    if M < 2:
        raise ValueError("M must be at least 2")
    scheme = build_partition(beta, M)
    params = log_net_parameters(beta, M)
    labels = scheme.pieces()
    n = len(labels)

    proj = projection_net(scheme.a_r(1), scheme.a_r(scheme.R))
    # outputs: (pi(x), hat_0(pi(x)), ..., hat_{n-1}(pi(x)))
    local = compose(proj, _hat_bank(scheme))

    block = _power_block(params.eta, scheme.floor_beta)
    coefs = np.array([p.coeffs for p in scheme.taylor_pieces]) / params.norm
    if np.abs(coefs).max() > 1:
        raise ArithmeticError("normalized Taylor coefficients exceed one")
    # row 0: sum of all pieces; row 1: zero row feeding the constant unit
    out_rows = np.zeros((2, n, coefs.shape[1]))
    out_rows[0] = coefs
    pieces = _tile_blocks(block, n, np.arange(1, n + 1), 0, n + 1, out_rows)

    lower = params.lower / params.norm
    tail = extend_negative(scale_net(params.norm), -1, [0])
    while True:
        clamp_tail = precompose_linear(tail, [[1.0, lower]])
        floor_value = float(evaluate(clamp_tail, [0.0, 1.0])[0])
        if math.exp(floor_value) <= 4 / M:
            break
        lower = math.nextafter(lower, -math.inf)
    net = compose(compose(local, pieces), clamp_tail, [lower, -1.0])
    if return_parts:
        return net, scheme, params
    return net
