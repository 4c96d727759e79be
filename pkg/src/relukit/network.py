"""Feed-forward ReLU networks with shifted activations and bounded parameters.

A network of depth ``L`` with widths ``m_0, ..., m_{L+1}`` computes

    x -> psi(W_L relu(... W_1 relu(W_0 x - v_1) ... - v_L))

where ``relu(y - v)`` is applied componentwise and ``psi`` is either the
identity or a softmax. Weights are kept as CSR matrices; the constructions in
this package routinely produce layers that are thousands of units wide but
have only a handful of nonzeros per row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

OUTPUTS = ("identity", "softmax")

# Layers with at most this many dense entries are written as nested lists.
DENSE_SERIALIZE_LIMIT = 1 << 20


class ShapeError(ValueError):
    """Input or layer dimensions do not line up."""


class ParseError(ValueError):
    """A serialized network document could not be decoded."""


class NetworkValidationError(ValueError):
    """A network violates the parameter-bound or structural invariants."""


def _as_csr(w) -> sp.csr_matrix:
    if sp.issparse(w):
        m = sp.csr_matrix(w, dtype=float, copy=True)
    else:
        a = np.asarray(w, dtype=float)
        if a.ndim != 2:
            raise ShapeError(f"weight matrix must be 2-d, got shape {a.shape}")
        m = sp.csr_matrix(a)
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable ReLU network.

    ``weights[j]`` is ``W_j`` with shape ``(m_{j+1}, m_j)`` and ``shifts[j]``
    is ``v_j`` with length ``m_j``; ``shifts[0]`` is kept only so that a
    nonzero input shift can be reported by :func:`validate`.
    """

    widths: tuple[int, ...]
    weights: tuple[sp.csr_matrix, ...]
    shifts: tuple[np.ndarray, ...]
    output: str = "identity"

    @classmethod
    def from_layers(cls, weights, shifts=None, output="identity") -> Network:
        ws = tuple(_as_csr(w) for w in weights)
        if not ws:
            raise ShapeError("a network needs at least one weight matrix")
        widths = [ws[0].shape[1]] + [w.shape[0] for w in ws]
        if shifts is None:
            shifts = [np.zeros(m) for m in widths[:-1]]
        vs = tuple(np.array(v, dtype=float).reshape(-1) for v in shifts)
        for v in vs:
            v.setflags(write=False)
        return cls(tuple(int(m) for m in widths), ws, vs, output)

    @property
    def depth(self) -> int:
        return len(self.widths) - 2

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def dense_weights(self) -> list[np.ndarray]:
        return [w.toarray() for w in self.weights]

    def max_abs_param(self) -> float:
        vals = [abs(w.data).max() for w in self.weights if w.nnz]
        vals += [abs(v).max() for v in self.shifts if v.size]
        return float(max(vals, default=0.0))

    def hidden_width(self) -> int:
        return max(self.widths[1:-1], default=0)

    def __call__(self, x, chunk: int = 1024) -> np.ndarray:
        return evaluate(self, x, chunk=chunk)


@dataclass(frozen=True)
class ArchitectureSpec:
    """A network class label: depth, widths, sparsity budget and output map."""

    depth: int
    widths: tuple[int, ...]
    sparsity: int
    output: str = "identity"

    def __post_init__(self):
        if len(self.widths) != self.depth + 2:
            raise ShapeError("widths must have depth + 2 entries")
        if any(m <= 0 for m in self.widths):
            raise ValueError("widths must be positive")
        if self.sparsity < 0:
            raise ValueError("sparsity budget must be nonnegative")
        if self.output not in OUTPUTS:
            raise ValueError(f"unknown output activation {self.output!r}")

    @classmethod
    def of(cls, net: Network) -> ArchitectureSpec:
        return cls(net.depth, tuple(net.widths), sparsity(net), net.output)

    def contains(self, net: Network) -> bool:
        return (
            net.depth == self.depth
            and net.output == self.output
            and all(a <= b for a, b in zip(net.widths, self.widths))
            and net.widths[0] == self.widths[0]
            and net.widths[-1] == self.widths[-1]
            and sparsity(net) <= self.sparsity
            and not validate(net)
        )


@numba.njit(cache=True)
def _layer(indptr, indices, data, act, live_in, shift, out, live_out, hidden):
    """One affine layer restricted to live inputs, then optionally ``relu(. - shift)``.

    Rows of ``act`` whose ``live_in`` flag is off are treated as zero and
    never read, so they need not be initialized. Accumulation runs in
    column-index order for every row.
    """
    n, batch = out.shape
    for i in range(n):
        row = out[i]
        started = False
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if not live_in[j]:
                continue
            a = data[k]
            src = act[j]
            if not started:
                for t in range(batch):
                    row[t] = a * src[t]
                started = True
            else:
                for t in range(batch):
                    row[t] += a * src[t]
        if not hidden:
            if not started:
                row[:] = 0.0
            live_out[i] = True
            continue
        v = shift[i]
        if not started:
            if v < 0:
                row[:] = -v
                live_out[i] = True
            else:
                live_out[i] = False
            continue
        any_pos = False
        for t in range(batch):
            val = row[t] - v
            if val > 0.0:
                row[t] = val
                any_pos = True
            else:
                row[t] = 0.0
        live_out[i] = any_pos


def _forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Propagate a chunk of inputs, skipping units that are zero on the whole chunk.

    For one-dimensional inputs sorted along a grid most pieces of the
    constructions here are inactive on a chunk, and their rows are never
    touched.
    """
    act = np.ascontiguousarray(x.T)
    live = np.ones(act.shape[0], dtype=np.bool_)
    batch = x.shape[0]
    last = net.depth
    for j, w in enumerate(net.weights):
        out = np.empty((w.shape[0], batch))
        live_out = np.empty(w.shape[0], dtype=np.bool_)
        shift = net.shifts[j + 1] if j < last else _EMPTY
        _layer(w.indptr, w.indices, w.data, act, live, shift, out, live_out, j < last)
        act, live = out, live_out
    return act.T


_EMPTY = np.zeros(0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def evaluate(net: Network, x, chunk: int = 1024) -> np.ndarray:
    """Evaluate ``net`` on one input vector or on a batch of row vectors.

    A 1-d ``x`` of length ``m_0`` returns a 1-d output. For scalar-input
    networks a 1-d array whose length differs from 1 is read as a batch.
    """
    arr = np.asarray(x, dtype=float)
    m0 = net.input_dim
    single = False
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        single = True
    elif arr.ndim == 1:
        if arr.shape[0] == m0:
            arr = arr.reshape(1, m0)
            single = True
        elif m0 == 1:
            arr = arr.reshape(-1, 1)
        else:
            raise ShapeError(f"expected input of length {m0}, got {arr.shape[0]}")
    if arr.ndim != 2 or arr.shape[1] != m0:
        raise ShapeError(f"expected inputs with {m0} columns, got shape {arr.shape}")
    out = np.empty((arr.shape[0], net.output_dim))
    for start in range(0, arr.shape[0], chunk):
        out[start:start + chunk] = _forward(net, arr[start:start + chunk])
    if net.output == "softmax":
        out = softmax(out)
    return out[0] if single else out


def sparsity(net: Network) -> int:
    """Number of nonzero weights and shifts."""
    return int(sum(w.count_nonzero() for w in net.weights)
               + sum(np.count_nonzero(v) for v in net.shifts))


def validate(net: Network) -> list[str]:
    """List every violated structural or parameter-bound invariant."""
    issues = []
    L = len(net.weights) - 1
    if len(net.widths) != L + 2:
        issues.append(f"shape: {len(net.widths)} widths for {L + 1} weight matrices")
    if len(net.shifts) != L + 1:
        issues.append(f"shape: {len(net.shifts)} shift vectors for {L + 1} weight matrices")
    for j, w in enumerate(net.weights):
        if j + 1 < len(net.widths):
            want = (net.widths[j + 1], net.widths[j])
            if w.shape != want:
                issues.append(f"shape: W_{j} is {w.shape}, expected {want}")
        if w.nnz and not np.all(np.isfinite(w.data)):
            issues.append(f"finite: W_{j} has non-finite entries")
        elif w.nnz and np.abs(w.data).max() > 1:
            issues.append(f"bound: W_{j} has entry of size {np.abs(w.data).max():.6g} > 1")
    for j, v in enumerate(net.shifts):
        if j < len(net.widths) and v.shape != (net.widths[j],):
            issues.append(f"shape: v_{j} has length {v.size}, expected {net.widths[j]}")
        if v.size and not np.all(np.isfinite(v)):
            issues.append(f"finite: v_{j} has non-finite entries")
        elif v.size and np.abs(v).max() > 1:
            issues.append(f"bound: v_{j} has entry of size {np.abs(v).max():.6g} > 1")
    if net.shifts and np.any(net.shifts[0] != 0):
        issues.append("convention: v_0 must be identically zero")
    if net.output not in OUTPUTS:
        issues.append(f"output: unknown activation {net.output!r}")
    return issues


def _encode_matrix(w: sp.csr_matrix, dense: bool):
    if dense:
        return w.toarray().tolist()
    coo = w.tocoo()
    return {
        "shape": list(coo.shape),
        "row": coo.row.tolist(),
        "col": coo.col.tolist(),
        "val": coo.data.tolist(),
    }


def serialize(net: Network, layout: str = "auto") -> str:
    """JSON text for ``net``.

    ``layout`` is ``"dense"`` (nested row lists), ``"sparse"`` (coordinate
    triples) or ``"auto"``, which picks dense unless some layer would exceed
    ``DENSE_SERIALIZE_LIMIT`` entries.
    """
    if layout == "auto":
        big = max(w.shape[0] * w.shape[1] for w in net.weights)
        layout = "dense" if big <= DENSE_SERIALIZE_LIMIT else "sparse"
    if layout not in ("dense", "sparse"):
        raise ValueError(f"unknown layout {layout!r}")
    doc = {
        "L": net.depth,
        "widths": list(net.widths),
        "layers": [
            {"W": _encode_matrix(w, layout == "dense"), "v": v.tolist()}
            for w, v in zip(net.weights, net.shifts)
        ],
        "output": net.output,
    }
    return json.dumps(doc)


def _decode_matrix(obj, where: str, rows: int, cols: int):
    if isinstance(obj, dict):
        try:
            shape = tuple(int(s) for s in obj["shape"])
            return sp.csr_matrix(
                (np.asarray(obj["val"], float), (np.asarray(obj["row"], int), np.asarray(obj["col"], int))),
                shape=shape,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: malformed sparse matrix ({exc})") from exc
    if not isinstance(obj, list) or any(not isinstance(r, list) for r in obj):
        raise ParseError(f"{where}: expected a list of rows")
    if not obj:
        return sp.csr_matrix((rows, cols))
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: rows are ragged or non-numeric ({exc})") from exc
    if arr.ndim != 2:
        raise ParseError(f"{where}: rows are ragged")
    return arr


def deserialize(text, strict: bool = False) -> Network:
    """Rebuild a network from :func:`serialize` output.

    With ``strict`` the result must also pass :func:`validate`.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level: expected an object")
    for key in ("L", "widths", "layers"):
        if key not in doc:
            raise ParseError(f"top level: missing key {key!r}")
    widths, layers = doc["widths"], doc["layers"]
    if not isinstance(layers, list) or not isinstance(widths, list):
        raise ParseError("top level: 'widths' and 'layers' must be lists")
    if len(layers) != doc["L"] + 1 or len(widths) != doc["L"] + 2:
        raise ParseError(f"top level: L={doc['L']} disagrees with {len(layers)} layers / {len(widths)} widths")
    weights, shifts = [], []
    for j, layer in enumerate(layers):
        where = f"layers[{j}]"
        if not isinstance(layer, dict) or "W" not in layer or "v" not in layer:
            raise ParseError(f"{where}: expected an object with 'W' and 'v'")
        weights.append(_decode_matrix(layer["W"], where + ".W", widths[j + 1], widths[j]))
        try:
            shifts.append(np.asarray(layer["v"], dtype=float).reshape(-1))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}.v: {exc}") from exc
    net = Network.from_layers(weights, shifts, doc.get("output", "identity"))
    if tuple(widths) != net.widths:
        raise ParseError(f"top level: widths {widths} disagree with layer shapes {list(net.widths)}")
    if strict:
        issues = validate(net)
        if issues:
            raise NetworkValidationError("; ".join(issues))
    return net


def equal_params(a: Network, b: Network) -> bool:
    """Bitwise equality of architecture and every stored parameter."""
    if a.widths != b.widths or a.output != b.output:
        return False
    for wa, wb in zip(a.weights, b.weights):
        if (wa != wb).nnz:
            return False
    return all(np.array_equal(va, vb) for va, vb in zip(a.shifts, b.shifts))
