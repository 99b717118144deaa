"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: only the operations the question-generation model needs.
Values are stored row-major in a numpy float64 array; every operation checks
its result for NaN/Inf and raises instead of propagating. Recorded graphs are
traversed in exact reverse creation order, which is a valid topological order
because an op's output is always created after its inputs.
"""

from contextlib import contextmanager
from itertools import count

import numpy as np

from .errors import ContractError

EPS_FLOOR = 1e-12  # inside log, keeps early-training losses finite

_grad_enabled = True
_seq_counter = count()


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A dense value node. Leaf tensors may carry gradients; op outputs
    remember their parents and how to push gradients back to them."""

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "leaf")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self.parents = ()
        self._backward = None
        self._seq = next(_seq_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """Flat row-major view of the stored values."""
        return self.data.reshape(-1)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        """Accumulate gradients of self w.r.t. every reachable parent.

        `seed` defaults to ones (i.e. gradients of sum(self))."""
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ValueError(f"seed shape {seed.shape} != tensor shape {self.data.shape}")
        _accumulate(self, seed)
        for node in reversed(ComputeGraph.trace(self).nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


class ComputeGraph:
    """Reachable op nodes of one backward pass, in creation (topological) order."""

    __slots__ = ("nodes",)

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        # Iterative DFS: recurrent nets build chains deeper than the
        # interpreter recursion limit.
        seen = set()
        nodes = []
        stack = [root]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node.requires_grad:
                nodes.append(node)
                stack.extend(node.parents)
        nodes.sort(key=lambda t: t._seq)
        return cls(nodes)


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def _result(data, op, parents, backward):
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    _check_finite(arr, op)
    out.data = arr
    out.grad = None
    out.op = op
    out._seq = next(_seq_counter)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out.parents = ()
        out._backward = None
    return out


def constant(value):
    return Tensor(value, requires_grad=False)


def _binary_broadcast(a, b, op):
    """Only equal shapes or scalar (size-1) vs tensor are supported."""
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad, tensor):
    """Collapse a broadcast gradient back to the shape of `tensor`."""
    if grad.shape == tensor.data.shape:
        return grad
    assert tensor.size == 1, "broadcast gradient without a scalar operand"
    return np.full(tensor.data.shape, grad.sum())


def add(a, b):
    _binary_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, _reduce_to(g, a))
        _accumulate(b, _reduce_to(g, b))

    return _result(a.data + b.data, "add", (a, b), backward)


def sub(a, b):
    _binary_broadcast(a, b, "sub")

    def backward(g):
        _accumulate(a, _reduce_to(g, a))
        _accumulate(b, _reduce_to(-g, b))

    return _result(a.data - b.data, "sub", (a, b), backward)


def mul(a, b):
    _binary_broadcast(a, b, "mul")

    def backward(g):
        _accumulate(a, _reduce_to(g * b.data, a))
        _accumulate(b, _reduce_to(g * a.data, b))

    return _result(a.data * b.data, "mul", (a, b), backward)


def tanh(a):
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _result(out_data, "tanh", (a,), backward)


def sigmoid(a):
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                        np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _result(out_data, "sigmoid", (a,), backward)


def matmul(a, b):
    """2-D @ 2-D or 2-D @ 1-D matrix product."""
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ValueError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    if b.data.ndim == 2:
        def backward(g):
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
    else:
        def backward(g):
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, "matmul", (a, b), backward)


def transpose(a):
    if a.data.ndim != 2:
        raise ValueError(f"transpose: expected 2-D, got shape {a.shape}")

    def backward(g):
        _accumulate(a, g.T)

    return _result(a.data.T.copy(), "transpose", (a,), backward)


def reshape(a, shape):
    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _result(a.data.reshape(shape).copy(), "reshape", (a,), backward)


def concat(tensors, axis=0):
    if not tensors:
        raise ValueError("concat: empty input list")
    first = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(first) or any(
                i != axis and t.shape[i] != first[i] for i in range(len(first))):
            raise ValueError(f"concat: mismatched shapes {[t.shape for t in tensors]} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            _accumulate(t, piece)

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   "concat", tuple(tensors), backward)


def slice1d(a, start, stop):
    if a.data.ndim != 1:
        raise ValueError(f"slice1d: expected 1-D, got shape {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accumulate(a, full)

    return _result(a.data[start:stop].copy(), "slice1d", (a,), backward)


def row(a, i):
    """Row i of a 2-D tensor as a 1-D tensor."""
    if a.data.ndim != 2:
        raise ValueError(f"row: expected 2-D, got shape {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[i] = g
        _accumulate(a, full)

    return _result(a.data[i].copy(), "row", (a,), backward)


def softmax(x):
    """Numerically stable softmax over a 1-D tensor."""
    if x.data.ndim != 1 or x.size < 1:
        raise ValueError(f"softmax: expected non-empty 1-D, got shape {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    out_data = e / e.sum()

    def backward(g):
        _accumulate(x, out_data * (g - np.dot(g, out_data)))

    return _result(out_data, "softmax", (x,), backward)


def embedding_lookup(table, ids):
    """Gather rows of a 2-D table; gradients scatter back into those rows."""
    if table.data.ndim != 2:
        raise ValueError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    n_rows = table.shape[0]
    ids = list(ids)
    for i in ids:
        if not 0 <= i < n_rows:
            raise IndexError(f"embedding_lookup: id {i} outside [0, {n_rows})")
    idx = np.asarray(ids, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    out = table.data[idx] if ids else np.zeros((0, table.shape[1]))
    return _result(out, "embedding_lookup", (table,), backward)


def scatter_sum(x, ids, size):
    """out[ids[i]] += x[i]; the transpose of a gather, used for copy mass."""
    if x.data.ndim != 1 or len(ids) != x.size:
        raise ValueError(f"scatter_sum: need 1-D x matching ids, got {x.shape} vs {len(ids)} ids")
    for i in ids:
        if not 0 <= i < size:
            raise IndexError(f"scatter_sum: id {i} outside [0, {size})")
    idx = np.asarray(ids, dtype=np.intp)

    def backward(g):
        _accumulate(x, g[idx])

    out = np.zeros(size)
    np.add.at(out, idx, x.data)
    return _result(out, "scatter_sum", (x,), backward)


def tsum(a):
    """Sum of all elements, as a scalar tensor."""

    def backward(g):
        _accumulate(a, np.full(a.data.shape, float(g)))

    return _result(a.data.sum(), "sum", (a,), backward)


def nll_loss(dist, target_id):
    """Negative log likelihood of `target_id` under a probability vector."""
    if dist.data.ndim != 1:
        raise ValueError(f"nll_loss: expected 1-D distribution, got shape {dist.shape}")
    if not 0 <= target_id < dist.size:
        raise IndexError(f"nll_loss: target {target_id} outside [0, {dist.size})")
    total = dist.data.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"nll_loss: input sums to {total}, not a distribution")
    p = dist.data[target_id] + EPS_FLOOR

    def backward(g):
        full = np.zeros_like(dist.data)
        full[target_id] = -float(g) / p
        _accumulate(dist, full)

    return _result(-np.log(p), "nll_loss", (dist,), backward)


def grad_check(fn, x, eps=1e-6):
    """Compare analytic gradients of a scalar-valued `fn` against central
    differences, coordinate by coordinate; returns the worst relative error."""
    if eps <= 0:
        raise ContractError("grad_check: eps must be positive")
    probe = Tensor(x.data.copy(), requires_grad=True)
    out = fn(probe)
    if out.size != 1:
        raise ContractError(f"grad_check: fn must be scalar-valued, got shape {out.shape}")
    out.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    worst = 0.0
    flat = x.data.copy().reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn(Tensor(flat.reshape(x.data.shape))).item()
            flat[i] = orig - eps
            f_minus = fn(Tensor(flat.reshape(x.data.shape))).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
