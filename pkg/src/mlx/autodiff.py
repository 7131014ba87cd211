"""Reverse-mode automatic differentiation over dense float64 arrays.

The engine is define-by-run: calling an op executes it eagerly on numpy
arrays and links the result :class:`Tensor` to its parents, so the graph
hanging off any tensor doubles as the computation record. Every op's
vector-Jacobian product is itself expressed with these same ops, which
makes the backward pass differentiable and gives second-order gradients
(double backprop) for free via nested :func:`grad` calls.

Conventions chosen for determinism:

* all arithmetic is float64; any NaN/Inf produced by an op raises
  :class:`NonFiniteError` immediately,
* relu'(0) = 0 and d|x|/dx at 0 = 0 (subgradient, frozen as constants in
  the backward graph, so second derivatives treat relu as piecewise
  linear with the activation pattern locked at the evaluation point).

Supported primitives: add, mul, div, neg, matmul, transpose, reshape,
relu, absval, exp, log, sum, broadcast_to, gather_rows, scatter_rows.
Affine layers, log-softmax and cross-entropy are stable compositions of
these (log-sum-exp uses a detached max shift, which is exact at every
differentiation order).
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the op."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _checked(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")
    return data


def _quiet():
    # overflow/invalid warnings are redundant: every op output is checked
    return np.errstate(over="ignore", divide="ignore", invalid="ignore")


class Tensor:
    """Node of the computation graph: a float64 array plus provenance.

    ``op`` is the primitive name ('const' for leaves), ``parents`` the
    input tensors, ``aux`` the non-differentiable op arguments (axes,
    shapes, index arrays, frozen masks) needed to replay the node.
    """

    __slots__ = ("data", "op", "parents", "aux")

    def __init__(self, data, op: str = "const", parents: tuple = (), aux: tuple = ()):
        self.data = _as_array(data)
        self.op = op
        self.parents = parents
        self.aux = aux

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # Arithmetic sugar; keeps client code readable.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(value) -> Tensor:
    """Wrap an array-like as a leaf tensor."""
    arr = _as_array(value)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("leaf tensor holds non-finite values")
    return Tensor(arr)


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else tensor(value)


# ---------------------------------------------------------------------------
# primitives


def _unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    """Reduce a broadcast cotangent back to ``shape`` (sum over expanded axes)."""
    if g.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    with _quiet():
        return Tensor(_checked(a.data + b.data, "add"), "add", (a, b))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    with _quiet():
        return Tensor(_checked(a.data * b.data, "mul"), "mul", (a, b))


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    with _quiet():
        return Tensor(_checked(a.data / b.data, "div"), "div", (a, b))


def neg(a) -> Tensor:
    a = _lift(a)
    return Tensor(-a.data, "neg", (a,))


def sub(a, b) -> Tensor:
    return add(a, neg(b))


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    with _quiet():
        return Tensor(_checked(a.data @ b.data, "matmul"), "matmul", (a, b))


def transpose(a) -> Tensor:
    a = _lift(a)
    return Tensor(a.data.T.copy(), "transpose", (a,))


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(int(s) for s in shape)
    return Tensor(a.data.reshape(shape), "reshape", (a,), (shape,))


def broadcast_to(a, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(int(s) for s in shape)
    return Tensor(np.broadcast_to(a.data, shape).copy(), "broadcast_to", (a,), (shape,))


def relu(a) -> Tensor:
    a = _lift(a)
    mask = (a.data > 0).astype(np.float64)
    return Tensor(np.maximum(a.data, 0.0), "relu", (a,), (mask,))


def absval(a) -> Tensor:
    a = _lift(a)
    sign = np.sign(a.data)
    return Tensor(np.abs(a.data), "absval", (a,), (sign,))


def exp(a) -> Tensor:
    a = _lift(a)
    with _quiet():
        return Tensor(_checked(np.exp(a.data), "exp"), "exp", (a,))


def log(a) -> Tensor:
    a = _lift(a)
    with _quiet():
        return Tensor(_checked(np.log(a.data), "log"), "log", (a,))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    if axis is not None:
        if not isinstance(axis, tuple):
            axis = (int(axis),)
        axis = tuple(ax % a.data.ndim for ax in axis)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return Tensor(np.asarray(out, dtype=np.float64), "sum", (a,), (axis, keepdims, a.shape))


def gather_rows(a, idx) -> Tensor:
    """out[i] = a[i, idx[i]] for a 2-D tensor and integer index vector."""
    a = _lift(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2 or idx.ndim != 1 or idx.shape[0] != a.shape[0]:
        raise ShapeError(f"gather_rows expects (n,k) and (n,) index, got {a.shape}, {idx.shape}")
    if idx.min(initial=0) < 0 or idx.max(initial=-1) >= a.shape[1]:
        raise IndexError("gather_rows index out of range")
    rows = np.arange(a.shape[0])
    return Tensor(a.data[rows, idx], "gather_rows", (a,), (idx,))


def scatter_rows(v, idx, width: int) -> Tensor:
    """Inverse of gather_rows: place v[i] at column idx[i] of a zero (n,width) array."""
    v = _lift(v)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((v.shape[0], int(width)), dtype=np.float64)
    out[np.arange(v.shape[0]), idx] = v.data
    return Tensor(out, "scatter_rows", (v,), (idx, int(width)))


_VJPS = {
    "add": lambda t, g: (_unbroadcast(g, t.parents[0].shape), _unbroadcast(g, t.parents[1].shape)),
    "mul": lambda t, g: (
        _unbroadcast(mul(g, t.parents[1]), t.parents[0].shape),
        _unbroadcast(mul(g, t.parents[0]), t.parents[1].shape),
    ),
    "div": lambda t, g: (
        _unbroadcast(div(g, t.parents[1]), t.parents[0].shape),
        _unbroadcast(neg(div(mul(g, t), t.parents[1])), t.parents[1].shape),
    ),
    "neg": lambda t, g: (neg(g),),
    "matmul": lambda t, g: (matmul(g, transpose(t.parents[1])), matmul(transpose(t.parents[0]), g)),
    "transpose": lambda t, g: (transpose(g),),
    "reshape": lambda t, g: (reshape(g, t.parents[0].shape),),
    "broadcast_to": lambda t, g: (_unbroadcast(g, t.parents[0].shape),),
    "relu": lambda t, g: (mul(g, Tensor(t.aux[0])),),
    "absval": lambda t, g: (mul(g, Tensor(t.aux[0])),),
    "exp": lambda t, g: (mul(g, t),),
    "log": lambda t, g: (div(g, t.parents[0]),),
    "sum": lambda t, g: (_sum_vjp(t, g),),
    "gather_rows": lambda t, g: (scatter_rows(g, t.aux[0], t.parents[0].shape[1]),),
    "scatter_rows": lambda t, g: (gather_rows(g, t.aux[0]),),
}


def _sum_vjp(t: Tensor, g: Tensor) -> Tensor:
    axis, keepdims, in_shape = t.aux
    if axis is None:
        return broadcast_to(reshape(g, (1,) * len(in_shape)), in_shape) if in_shape else g
    if not keepdims:
        kd = list(in_shape)
        for ax in axis:
            kd[ax] = 1
        g = reshape(g, tuple(kd))
    return broadcast_to(g, in_shape)


# ---------------------------------------------------------------------------
# compositions used by every model in the package


def affine(x, w, b) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    return add(matmul(x, w), b)


def logsumexp(z, axis: int = -1) -> Tensor:
    z = _lift(z)
    axis = axis % z.data.ndim
    # Detached max shift: exact at every order since d(lse)/d(shift) == 0.
    shift = Tensor(np.max(z.data, axis=axis, keepdims=True))
    return add(log(tsum(exp(sub(z, shift)), axis=axis, keepdims=True)), shift)


def log_softmax(z, axis: int = -1) -> Tensor:
    return sub(z, logsumexp(z, axis=axis))


def cross_entropy(logits, labels, reduction: str = "mean") -> Tensor:
    """Softmax cross-entropy; labels are integer class indices.

    reduction 'none' keeps the per-example loss vector, 'mean'/'sum'
    reduce over the batch.
    """
    logits = _lift(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (n, classes) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= logits.shape[1]:
        raise IndexError(f"label out of range [0, {logits.shape[1]})")
    nll = neg(gather_rows(log_softmax(logits, axis=-1), labels))
    if reduction == "none":
        return nll
    if reduction == "sum":
        return tsum(nll)
    if reduction == "mean":
        return div(tsum(nll), tensor(float(labels.shape[0])))
    raise ValueError(f"unknown reduction {reduction!r}")


def mean(a) -> Tensor:
    a = _lift(a)
    return div(tsum(a), tensor(float(a.size)))


def square(a) -> Tensor:
    a = _lift(a)
    return mul(a, a)


# ---------------------------------------------------------------------------
# reverse pass


def _topo(outputs) -> list:
    order, seen = [], set()
    stack = [(t, False) for t in outputs]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
        else:
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
    return order


def grad(output: Tensor, wrt, seed: Tensor | None = None) -> list[Tensor]:
    """Reverse-mode gradients of a scalar ``output`` w.r.t. each tensor in ``wrt``.

    The returned tensors are graph nodes themselves, so a scalar built
    from them can be passed to ``grad`` again for second-order
    derivatives. A non-scalar output requires an explicit ``seed``
    cotangent of the same shape.
    """
    wrt = list(wrt)
    wrt_ids = {id(w) for w in wrt}
    if seed is None:
        if output.size != 1:
            raise ShapeError("grad of non-scalar output requires an explicit seed")
        seed = Tensor(np.ones_like(output.data))
    elif seed.shape != output.shape:
        raise ShapeError("seed shape must match output shape")

    order = _topo([output])
    # Only propagate into nodes from which a requested tensor is reachable.
    needed = set()
    for node in order:  # parents precede children
        if id(node) in wrt_ids or any(id(p) in needed for p in node.parents):
            needed.add(id(node))

    cotangent: dict[int, Tensor] = {id(output): seed}
    final: dict[int, Tensor] = {}
    for node in reversed(order):
        g = cotangent.pop(id(node), None)
        if g is None:
            continue
        if id(node) in wrt_ids:
            final[id(node)] = g
        if not node.parents or not any(id(p) in needed for p in node.parents):
            continue
        parent_grads = _VJPS[node.op](node, g)
        for parent, pg in zip(node.parents, parent_grads):
            if id(parent) not in needed:
                continue
            prev = cotangent.get(id(parent))
            cotangent[id(parent)] = pg if prev is None else add(prev, pg)

    return [final.get(id(w), Tensor(np.zeros_like(w.data))) for w in wrt]


# ---------------------------------------------------------------------------
# replayable record

_REPLAY = {
    "add": lambda vals, aux: vals[0] + vals[1],
    "mul": lambda vals, aux: vals[0] * vals[1],
    "div": lambda vals, aux: vals[0] / vals[1],
    "neg": lambda vals, aux: -vals[0],
    "matmul": lambda vals, aux: vals[0] @ vals[1],
    "transpose": lambda vals, aux: vals[0].T.copy(),
    "reshape": lambda vals, aux: vals[0].reshape(aux[0]),
    "broadcast_to": lambda vals, aux: np.broadcast_to(vals[0], aux[0]).copy(),
    "relu": lambda vals, aux: np.maximum(vals[0], 0.0),
    "absval": lambda vals, aux: np.abs(vals[0]),
    "exp": lambda vals, aux: np.exp(vals[0]),
    "log": lambda vals, aux: np.log(vals[0]),
    "sum": lambda vals, aux: np.asarray(np.sum(vals[0], axis=aux[0], keepdims=aux[1]), dtype=np.float64),
    "gather_rows": lambda vals, aux: vals[0][np.arange(vals[0].shape[0]), aux[0]],
    "scatter_rows": lambda vals, aux: _replay_scatter(vals[0], aux),
}


def _replay_scatter(v, aux):
    idx, width = aux
    out = np.zeros((v.shape[0], width), dtype=np.float64)
    out[np.arange(v.shape[0]), idx] = v
    return out


class ComputationRecord:
    """Topologically ordered trace of primitive ops, replayable on new inputs.

    ``inputs`` designates the leaf tensors that may be rebound on
    replay; every other leaf (weights captured as constants, frozen
    relu masks, detached shifts) keeps its recorded value. Replaying
    with the original input arrays reproduces the recorded outputs
    bit for bit.
    """

    def __init__(self, inputs: list[Tensor], outputs: list[Tensor]):
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.nodes = _topo(self.outputs)
        input_ids = {id(t) for t in self.inputs}
        for node in self.nodes:
            if node.parents and id(node) in input_ids:
                raise ValueError("designated inputs must be leaf tensors")

    def forward(self, input_arrays: list[np.ndarray]) -> list[np.ndarray]:
        """Re-execute the record with the designated inputs bound to new arrays."""
        if len(input_arrays) != len(self.inputs):
            raise ShapeError(f"record expects {len(self.inputs)} inputs")
        vals: dict[int, np.ndarray] = {}
        for slot, arr in zip(self.inputs, input_arrays):
            arr = _as_array(arr)
            if arr.shape != slot.shape:
                raise ShapeError(f"input shape {arr.shape} != recorded {slot.shape}")
            vals[id(slot)] = arr
        for node in self.nodes:
            if id(node) in vals:
                continue
            if not node.parents:
                vals[id(node)] = node.data
                continue
            args = [vals[id(p)] for p in node.parents]
            vals[id(node)] = _checked(_REPLAY[node.op](args, node.aux), node.op)
        return [vals[id(t)] for t in self.outputs]
