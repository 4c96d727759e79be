"""Combinators on ReLU networks and the reusable building blocks.

All constructors keep every weight and shift in [-1, 1]; large constants are
produced by chains of doubling blocks (:func:`scale_net`).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp

from .network import ArchitectureSpec, Network, ShapeError, evaluate, sparsity


def _check_bound(mat, what: str) -> None:
    data = mat.data if sp.issparse(mat) else np.asarray(mat)
    if data.size and np.abs(data).max() > 1:
        raise ValueError(f"{what} produces a parameter of size {np.abs(data).max():.6g} > 1")


def affine_net(a) -> Network:
    """Depth-zero network ``x -> A x``."""
    return Network.from_layers([a])


def compose(f: Network, g: Network, v=None) -> Network:
    """The network ``x -> g(relu(f(x) - v))`` of depth ``L_f + L_g + 1``."""
    if f.output != "identity":
        raise ValueError("the inner network of a composition must have identity output")
    if f.output_dim != g.input_dim:
        raise ShapeError(f"cannot feed {f.output_dim} outputs into {g.input_dim} inputs")
    v = np.zeros(f.output_dim) if v is None else np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (f.output_dim,):
        raise ShapeError("composition shift has the wrong length")
    _check_bound(v, "composition shift")
    return Network.from_layers(
        list(f.weights) + list(g.weights),
        list(f.shifts) + [v] + list(g.shifts[1:]),
        g.output,
    )


def precompose_linear(net: Network, a) -> Network:
    """``x -> net(A x)``, folding ``A`` into the first weight matrix."""
    a = sp.csr_matrix(np.asarray(a, dtype=float)) if not sp.issparse(a) else sp.csr_matrix(a)
    if a.shape[0] != net.input_dim:
        raise ShapeError("linear map output does not match the network input")
    w0 = (net.weights[0] @ a).tocsr()
    _check_bound(w0, "precomposition")
    shifts = list(net.shifts)
    shifts[0] = np.zeros(a.shape[1])
    return Network.from_layers([w0] + list(net.weights[1:]), shifts, net.output)


def postcompose_linear(net: Network, a) -> Network:
    """``x -> A net(x)``, folding ``A`` into the last weight matrix."""
    if net.output != "identity":
        raise ValueError("can only postcompose identity-output networks")
    a = sp.csr_matrix(np.asarray(a, dtype=float)) if not sp.issparse(a) else sp.csr_matrix(a)
    if a.shape[1] != net.output_dim:
        raise ShapeError("linear map input does not match the network output")
    wl = (a @ net.weights[-1]).tocsr()
    _check_bound(wl, "postcomposition")
    return Network.from_layers(list(net.weights[:-1]) + [wl], net.shifts, net.output)


def parallelize(*nets: Network) -> Network:
    """Run networks side by side on a shared input; outputs are concatenated."""
    if len(nets) == 1 and not isinstance(nets[0], Network):
        nets = tuple(nets[0])
    if not nets:
        raise ValueError("nothing to parallelize")
    first = nets[0]
    for n in nets[1:]:
        if n.input_dim != first.input_dim:
            raise ShapeError("parallelized networks must share the input width")
        if n.depth != first.depth:
            raise ShapeError(f"depth mismatch {n.depth} != {first.depth}; synchronize first")
    if any(n.output != "identity" for n in nets):
        raise ValueError("parallelized networks must have identity output")
    weights = [sp.vstack([n.weights[0] for n in nets], format="csr")]
    for j in range(1, first.depth + 1):
        weights.append(sp.block_diag([n.weights[j] for n in nets], format="csr"))
    shifts = [np.zeros(first.input_dim)]
    for j in range(1, first.depth + 1):
        shifts.append(np.concatenate([n.shifts[j] for n in nets]))
    return Network.from_layers(weights, shifts)


def identity_chain(depth: int, dim: int = 1) -> Network:
    """Forward ``dim`` nonnegative inputs through ``depth`` ReLU layers."""
    if depth < 0 or dim < 1:
        raise ValueError("depth must be >= 0 and dim >= 1")
    eye = sp.identity(dim, format="csr")
    return Network.from_layers([eye] * (depth + 1))


def depth_synchronize(f: Network, a: int) -> Network:
    """Prepend ``a`` identity layers of width ``m_0``; exact on nonnegative inputs."""
    if a <= 0:
        raise ValueError("number of added layers must be positive")
    eye = sp.identity(f.input_dim, format="csr")
    return Network.from_layers(
        [eye] * a + list(f.weights),
        [np.zeros(f.input_dim)] * (a + 1) + list(f.shifts[1:]),
        f.output,
    )


def synchronize_all(nets, depth: int | None = None) -> list[Network]:
    """Bring all networks to a common depth by prepending identity layers."""
    depth = max(n.depth for n in nets) if depth is None else depth
    return [n if n.depth == depth else depth_synchronize(n, depth - n.depth) for n in nets]


def embed(net: Network, target: ArchitectureSpec) -> Network:
    """Zero-pad ``net`` into the (larger) architecture ``target``."""
    w = net.widths
    if target.depth != net.depth:
        raise ValueError("enlarging keeps the depth fixed")
    if target.widths[0] != w[0] or target.widths[-1] != w[-1]:
        raise ValueError("enlarging keeps input and output widths fixed")
    if any(t < m for t, m in zip(target.widths, w)):
        raise ValueError(f"target widths {target.widths} smaller than {w}")
    if target.sparsity < sparsity(net):
        raise ValueError("target sparsity budget is below the network's sparsity")
    if target.output != net.output:
        raise ValueError("enlarging keeps the output activation")
    tw = target.widths
    weights = [sp.csr_matrix((wj.data, wj.indices, np.concatenate([wj.indptr, np.full(tw[j + 1] - wj.shape[0], wj.nnz)])),
                             shape=(tw[j + 1], tw[j]))
               for j, wj in enumerate(net.weights)]
    shifts = [np.concatenate([v, np.zeros(tw[j] - v.size)]) for j, v in enumerate(net.shifts)]
    return Network.from_layers(weights, shifts, net.output)


def remove_inactive(net: Network) -> Network:
    """Drop hidden units that are constantly zero or never read."""
    weights = [w.tocsr() for w in net.weights]
    shifts = [v.copy() for v in net.shifts]
    changed = True
    while changed:
        changed = False
        for j in range(1, len(weights)):
            incoming = weights[j - 1]
            outgoing = weights[j].tocsc()
            has_in = np.diff(incoming.indptr) > 0
            has_out = np.diff(outgoing.indptr) > 0
            keep = (has_in | (shifts[j] < 0)) & has_out
            if not keep.all():
                changed = True
                idx = np.flatnonzero(keep)
                weights[j - 1] = incoming[idx]
                weights[j] = outgoing[:, idx].tocsr()
                shifts[j] = shifts[j][idx]
    return Network.from_layers(weights, shifts, net.output)


def full_param_count(arch: ArchitectureSpec) -> int:
    """Number of weights and shifts in a fully connected network of ``arch``."""
    m = arch.widths
    return sum((m[j] + 1) * m[j + 1] for j in range(arch.depth + 1)) - m[-1]


def extend_negative(net: Network, sign: int, neg_indices=(0,), check: bool = True) -> Network:
    """Extend ``net`` evenly (``sign=+1``) or oddly (``sign=-1``) in the flagged inputs.

    ``net`` must vanish whenever a flagged coordinate is nonpositive; one
    reflected copy per subset of flagged coordinates is run in parallel.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    idx = sorted({int(i) for i in neg_indices})
    if any(i < 0 or i >= net.input_dim for i in idx):
        raise ShapeError("flagged index out of range")
    if check and idx:
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(16, net.input_dim))
        for i in idx:
            probe = pts.copy()
            probe[:, i] = -np.abs(probe[:, i])
            if np.any(evaluate(net, probe) != 0):
                raise ValueError(f"network does not vanish for nonpositive input {i}")
    copies, signs = [], []
    for r in range(len(idx) + 1):
        for subset in itertools.combinations(idx, r):
            d = np.ones(net.input_dim)
            d[list(subset)] = -1
            copies.append(precompose_linear(net, sp.diags(d)) if subset else net)
            signs.append(sign ** len(subset))
    if len(copies) == 1:
        return net
    both = parallelize(*copies)
    k = net.output_dim
    combine = sp.hstack([s * sp.identity(k) for s in signs], format="csr")
    return postcompose_linear(both, combine)


def _doubling_count(c: float) -> int:
    k = max(1, math.ceil(math.log2(abs(c))))
    while abs(c) / 2.0 ** k > 1:
        k += 1
    return k


def scale_net(c: float) -> Network:
    """Network for ``x -> c * max(x, 0)`` with all parameters in [-1, 1].

    For ``|c| > 1`` this chains ``k = ceil(log2 |c|)`` doubling blocks and
    rescales the last weight row by ``c / 2**k``: depth ``2k - 1``, sparsity
    ``4k``.
    """
    c = float(c)
    if c == 0 or not math.isfinite(c):
        raise ValueError("scale factor must be finite and nonzero")
    if abs(c) <= 1:
        return Network.from_layers([[[1.0]], [[c]]])
    k = _doubling_count(c)
    block = Network.from_layers([[[1.0], [1.0]], [[1.0, 1.0]]])
    net = block
    for _ in range(k - 1):
        net = compose(net, block)
    last = net.weights[-1] * (c / 2.0 ** k)
    return Network.from_layers(list(net.weights[:-1]) + [last], net.shifts)


def _tent_depth(eta: int) -> int:
    # Each squaring error is at most 2^(-2m-2); the product picks up two of them.
    return max(1, math.ceil((eta - 1) / 2))


def pair_mult_net(eta: int) -> Network:
    """Approximate ``(x, y) -> x*y`` on [0, 1]^2 to within ``2^-eta``.

    Uses ``x*y = g(a) - g(b) + (x+y)/2 - 1/4`` with ``g(t) = t(1-t)``,
    ``a = (x-y+1)/2``, ``b = (x+y)/2``. ``g`` is the sum of scaled iterated
    tent maps; three final layers clip the result to ``min(., x, y)`` so that
    it is exactly zero when either factor is zero and never leaves [0, 1].
    """
    m = _tent_depth(eta)
    weights, shifts = [], [np.zeros(2)]
    # layer 1: [ua1, ua2, ub1, ub2, fx, fy]
    weights.append([[0.25, -0.25], [0.5, -0.5], [0.25, 0.25], [0.5, 0.5], [1, 0], [0, 1]])
    shifts.append(np.array([-0.25, 0.0, 0.0, 0.5, 0.0, 0.0]))
    has_acc = False
    for k in range(2, m + 1):
        # previous layout: [ua1, ua2, (acc_a), ub1, ub2, (acc_b), fx, fy]
        n_prev = 8 if has_acc else 6
        ia = [0, 1, 2] if has_acc else [0, 1, None]
        off = 3 if has_acc else 2
        ib = [off, off + 1, off + 2] if has_acc else [off, off + 1, None]
        fx, fy = n_prev - 2, n_prev - 1
        w = np.zeros((8, n_prev))
        for base, (u1, u2, acc) in ((0, ia), (3, ib)):
            w[base, u1], w[base, u2] = 0.5, -0.5
            w[base + 1, u1], w[base + 1, u2] = 1.0, -1.0
            w[base + 2, u1], w[base + 2, u2] = 1.0, -1.0
            if acc is not None:
                w[base + 2, acc] = 1.0
        w[6, fx] = w[7, fy] = 1.0
        t = 2.0 ** (1 - 2 * k)
        weights.append(w)
        shifts.append(np.array([0.0, t, 0.0, 0.0, t, 0.0, 0.0, 0.0]))
        has_acc = True
    n_prev = 8 if has_acc else 6
    fx, fy = n_prev - 2, n_prev - 1
    z = np.zeros(n_prev)
    if has_acc:
        z[:6] = [1, -1, 1, -1, 1, -1]
    else:
        z[[0, 1, 2, 3]] = [1, -1, -1, 1]
    z[fx] = z[fy] = 0.5
    w_a = np.zeros((3, n_prev))
    w_a[0] = z
    w_a[1, fx] = w_a[2, fy] = 1.0
    weights.append(w_a)
    shifts.append(np.array([0.25, 0.0, 0.0]))
    # layer B: [p = relu(x - w), fx, fy]
    weights.append([[-1, 1, 0], [0, 1, 0], [0, 0, 1]])
    shifts.append(np.zeros(3))
    # layer C: [relu(x - p), relu(x - p - y)]
    weights.append([[-1, 1, 0], [-1, 1, -1]])
    shifts.append(np.zeros(2))
    weights.append([[1.0, -1.0]])
    return Network.from_layers(weights, shifts)


def _select(rows: list[int], dim: int) -> sp.csr_matrix:
    return sp.csr_matrix((np.ones(len(rows)), (np.arange(len(rows)), rows)), shape=(len(rows), dim))


def mult_net(eta: int, d: int) -> Network:
    """Approximate the product of ``d`` inputs in [0, 1] to within ``3^d 2^-eta``.

    Pairwise products are combined along a balanced binary tree; an odd
    leftover factor is forwarded by identity layers. The result lies in
    [0, 1] and is exactly zero as soon as one input is zero.
    """
    if eta < 1 or d < 1:
        raise ValueError("need eta >= 1 and d >= 1")
    if d == 1:
        return identity_chain(1, 1)
    pair = pair_mult_net(eta)
    net = None
    n = d
    while n > 1:
        parts = [precompose_linear(pair, _select([2 * i, 2 * i + 1], n)) for i in range(n // 2)]
        if n % 2:
            parts.append(precompose_linear(identity_chain(pair.depth, 1), _select([n - 1], n)))
        level = parallelize(*parts)
        net = level if net is None else compose(net, level)
        n = (n + 1) // 2
    return net


def mult_depth(eta: int, d: int) -> int:
    if d == 1:
        return 1
    levels = math.ceil(math.log2(d))
    return levels * (_tent_depth(eta) + 3) + levels - 1
