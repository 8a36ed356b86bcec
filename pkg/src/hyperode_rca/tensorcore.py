"""Dense float64 tensors recorded on a reverse-mode gradient tape.

Everything downstream (hypergraph attention, the latent ODE, fusion, the
training objective) is built from the primitives in this module. Design
constraints:

- 64-bit floats everywhere: the models are desk-scale, so precision beats
  speed and finite-difference testing stays trustworthy.
- Broadcasting is restricted to leading dimensions (an operand may equal the
  trailing suffix of the other operand's shape, scalars included) so every
  gradient rule is auditable.
- A ``Tape`` is an append-only node list; append order doubles as the
  topological order for the backward sweep, so backward visits each node
  exactly once in reverse.
"""

from __future__ import annotations

import hashlib
import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "ShapeError",
    "SeededRng",
    "Tape",
    "Tensor",
    "add",
    "apply",
    "backward",
    "clip",
    "concat",
    "current_tape",
    "div",
    "exp",
    "gather_rows",
    "glorot_uniform",
    "grad_check",
    "l1_norm",
    "l2_norm",
    "layer_norm",
    "leaky_relu",
    "log",
    "matmul",
    "maximum",
    "mean",
    "mul",
    "neg",
    "put_coords",
    "record_custom",
    "relu",
    "reshape",
    "sample",
    "sigmoid",
    "silu",
    "slice_",
    "softmax",
    "softplus",
    "sqrt",
    "sub",
    "sum",
    "tanh",
    "transpose",
    "zeros_param",
]


class ShapeError(ValueError):
    """Operands whose shapes are incompatible for the requested primitive."""


class DomainError(ValueError):
    """Primitive applied outside its mathematical domain (log(<=0), x/0, ...)."""


_STATE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


def current_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    """One recorded primitive application.

    ``parents`` holds tape node ids (``None`` for untracked inputs) and
    ``grad_fn`` maps the output cotangent to one cotangent per parent.
    """

    __slots__ = ("prim", "parents", "grad_fn", "shape")

    def __init__(self, prim, parents, grad_fn, shape):
        self.prim = prim
        self.parents = parents
        self.grad_fn = grad_fn
        self.shape = shape


class Tape:
    """Append-only record of primitive applications, acyclic by construction."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise RuntimeError("tape context exited out of order")
        return False

    def watch(self, tensor: "Tensor") -> int:
        """Register ``tensor`` as a leaf of this tape and return its node id."""
        if tensor._tape is self:
            return tensor._node_id
        node_id = len(self.nodes)
        self.nodes.append(Node("leaf", (), None, tensor.data.shape))
        tensor._tape = self
        tensor._node_id = node_id
        return node_id

    def _id_for(self, tensor: "Tensor") -> int | None:
        """Node id of ``tensor`` on this tape; leaves with requires_grad are
        watched on first use, plain constants return None."""
        if tensor._tape is self:
            return tensor._node_id
        if tensor.requires_grad:
            return self.watch(tensor)
        return None

    def grad(self, grads: dict, tensor: "Tensor") -> "Tensor | None":
        """Look up the gradient of ``tensor`` in a ``backward`` result."""
        if tensor._tape is not self or tensor._node_id is None:
            return None
        return grads.get(tensor._node_id)


class Tensor:
    """A dense float64 array, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "_tape", "_node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self._node_id = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def node_id(self):
        return self._node_id

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", param" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})\n{self.data!r}"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return slice_(self, key)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(prim: str, out_data: np.ndarray, parents: Sequence[Tensor], grad_fn) -> Tensor:
    """Wrap ``out_data`` in a Tensor, recording a node if any parent is tracked."""
    out = Tensor(out_data)
    tape = current_tape()
    if tape is None:
        return out
    ids = tuple(tape._id_for(p) for p in parents)
    if all(i is None for i in ids):
        return out
    node_id = len(tape.nodes)
    tape.nodes.append(Node(prim, ids, grad_fn, out_data.shape))
    out._tape = tape
    out._node_id = node_id
    return out


def record_custom(prim: str, out_data, parents: Sequence[Tensor], grad_fn) -> Tensor:
    """Record one node with a caller-supplied vector-Jacobian product.

    Used for composite operations (the adjoint ODE solve) whose internals are
    computed off-tape for speed; ``grad_fn(g)`` must return one cotangent per
    parent, aligned and shaped like the parent data.
    """
    return _record(prim, np.asarray(out_data, dtype=np.float64), parents, grad_fn)


def backward(tape: Tape, loss: Tensor) -> dict:
    """Reverse sweep from a scalar ``loss``; returns {node_id: gradient Tensor}.

    Every watched leaf appears in the result, with a zero gradient if the loss
    never touched it.
    """
    if loss._tape is not tape or loss._node_id is None:
        raise ValueError("loss is not recorded on this tape")
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss._node_id: np.ones_like(loss.data)}
    for node_id in range(loss._node_id, -1, -1):
        g = grads.get(node_id)
        if g is None:
            continue
        node = tape.nodes[node_id]
        if node.grad_fn is None:
            continue
        for pid, pg in zip(node.parents, node.grad_fn(g)):
            if pid is None or pg is None:
                continue
            acc = grads.get(pid)
            grads[pid] = pg if acc is None else acc + pg
    out = {}
    for node_id, node in enumerate(tape.nodes):
        if node_id in grads:
            out[node_id] = Tensor(grads[node_id])
        elif node.prim == "leaf":
            out[node_id] = Tensor(np.zeros(node.shape))
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers (leading dimensions only)
# ---------------------------------------------------------------------------

def _check_broadcast(sa: tuple, sb: tuple) -> tuple:
    """Output shape for elementwise ops; raises unless one shape is a trailing
    suffix of the other (equal shapes and scalars included)."""
    if sa == sb:
        return sa
    if len(sa) >= len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    raise ShapeError(f"shapes {sa} and {sb} do not leading-broadcast")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    out = a.data + b.data

    def grad_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _record("add", out, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    out = a.data - b.data

    def grad_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return _record("sub", out, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)

    return _record("mul", out, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    if (b.data == 0.0).any():
        raise DomainError("division by zero")
    out = a.data / b.data
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _reduce_to(g / bd, a.shape), _reduce_to(-g * ad / (bd * bd), b.shape)

    return _record("div", out, (a, b), grad_fn)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def grad_fn(g):
        return (-g,)

    return _record("neg", -a.data, (a,), grad_fn)


def matmul(a, b) -> Tensor:
    """Matrix/vector product covering (n,k)@(k,m), (n,k)@(k,), (k,)@(k,m)
    and the 1-D dot product."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.ndim > 2 or bd.ndim > 2:
        raise ShapeError(f"matmul supports 1-D and 2-D operands, got {a.shape} @ {b.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = ad @ bd

    def grad_fn(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad

    return _record("matmul", out, (a, b), grad_fn)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def grad_fn(g):
        return (g * out,)

    return _record("exp", out, (a,), grad_fn)


def log(a) -> Tensor:
    a = as_tensor(a)
    if (a.data <= 0.0).any():
        raise DomainError("log requires strictly positive input")
    ad = a.data

    def grad_fn(g):
        return (g / ad,)

    return _record("log", np.log(ad), (a,), grad_fn)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if (a.data < 0.0).any():
        raise DomainError("sqrt requires nonnegative input")
    out = np.sqrt(a.data)

    def grad_fn(g):
        # derivative clamped to 0 at x == 0 to keep gradients finite
        return (np.where(out > 0.0, 0.5 * g / np.where(out > 0.0, out, 1.0), 0.0),)

    return _record("sqrt", out, (a,), grad_fn)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", out, (a,), grad_fn)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # overflow-safe in both tails
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid_np(a.data)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", out, (a,), grad_fn)


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid_np(a.data)
    ad = a.data

    def grad_fn(g):
        return (g * (s + ad * s * (1.0 - s)),)

    return _record("silu", ad * s, (a,), grad_fn)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = np.maximum(ad, 0.0) + np.log1p(np.exp(-np.abs(ad)))

    def grad_fn(g):
        return (g * _sigmoid_np(ad),)

    return _record("softplus", out, (a,), grad_fn)


def relu(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def grad_fn(g):
        return (g * (ad > 0.0),)

    return _record("relu", np.maximum(ad, 0.0), (a,), grad_fn)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def grad_fn(g):
        return (g * np.where(ad > 0.0, 1.0, slope),)

    return _record("leaky_relu", np.where(ad > 0.0, ad, slope * ad), (a,), grad_fn)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties split the gradient evenly between operands."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    ad, bd = a.data, b.data
    out = np.maximum(ad, bd)

    def grad_fn(g):
        wa = np.where(ad > bd, 1.0, np.where(ad < bd, 0.0, 0.5))
        return _reduce_to(g * wa, a.shape), _reduce_to(g * (1.0 - wa), b.shape)

    return _record("maximum", out, (a, b), grad_fn)


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = np.clip(ad, lo, hi)

    def grad_fn(g):
        return (g * ((ad > lo) & (ad < hi)),)

    return _record("clip", out, (a,), grad_fn)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", out, (a,), grad_fn)


def layer_norm(a, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine)."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = centered * inv

    def grad_fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * out).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return _record("layer_norm", out, (a,), grad_fn)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - numpy-style name
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return _record("sum", out, (a,), grad_fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.shape
    count = a.data.size if axis is None else a.shape[axis]

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, shape).copy(),)

    return _record("mean", out, (a,), grad_fn)


def concat(parts: Iterable, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def grad_fn(g):
        grads = []
        offset = 0
        for size in sizes:
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + size)
            grads.append(g[tuple(idx)].copy())
            offset += size
        return grads

    return _record("concat", out, tuple(parts), grad_fn)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    out = a.data.reshape(shape)

    def grad_fn(g):
        return (g.reshape(old),)

    return _record("reshape", out, (a,), grad_fn)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got shape {a.shape}")

    def grad_fn(g):
        return (g.T.copy(),)

    return _record("transpose", a.data.T.copy(), (a,), grad_fn)


def slice_(a, key) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data[key], dtype=np.float64).copy()
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape)
        full[key] = g
        return (full,)

    return _record("slice", out, (a,), grad_fn)


def gather_rows(a, indices) -> Tensor:
    """Select rows by integer index; duplicate indices accumulate gradient."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out = a.data[idx]
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _record("gather_rows", out, (a,), grad_fn)


def put_coords(base, flat_indices, values) -> Tensor:
    """Copy of ``base`` with ``values`` written at flat coordinate positions.

    The workhorse behind parameter-subset gradient checks: the written
    coordinates route gradient to ``values``, everything else to ``base``.
    """
    base, values = as_tensor(base), as_tensor(values)
    idx = np.asarray(flat_indices, dtype=np.int64)
    if idx.size != values.size:
        raise ShapeError("put_coords index/value size mismatch")
    out = base.data.copy()
    out.flat[idx] = values.data.reshape(-1)

    def grad_fn(g):
        gb = g.copy()
        gb.flat[idx] = 0.0
        gv = g.flat[idx].reshape(values.shape).copy()
        return gb, gv

    return _record("put_coords", out, (base, values), grad_fn)


def l1_norm(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def grad_fn(g):
        return (g * np.sign(ad),)

    return _record("l1_norm", np.abs(ad).sum(), (a,), grad_fn)


def l2_norm(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = float(np.sqrt((ad * ad).sum()))

    def grad_fn(g):
        if out == 0.0:
            return (np.zeros_like(ad),)
        return (g * ad / out,)

    return _record("l2_norm", np.float64(out), (a,), grad_fn)


_PRIMITIVES: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "silu": silu,
    "softplus": softplus,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "maximum": maximum,
    "clip": clip,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "sum": sum,
    "mean": mean,
    "concat": concat,
    "reshape": reshape,
    "transpose": transpose,
    "slice": slice_,
    "gather_rows": gather_rows,
    "put_coords": put_coords,
    "l1_norm": l1_norm,
    "l2_norm": l2_norm,
}


def apply(primitive: str, *inputs, **kwargs) -> Tensor:
    """Apply a primitive by name (``apply("matmul", a, b)``)."""
    try:
        fn = _PRIMITIVES[primitive]
    except KeyError:
        raise KeyError(f"unknown primitive {primitive!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# seeded randomness
# ---------------------------------------------------------------------------

def _mix_seed(seed: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SeededRng:
    """Deterministic random source with a documented, portable stream.

    Backed by numpy's PCG64 bit generator, whose stream for a given seed is
    stable across platforms. Gumbel variates use the inverse-CDF form
    ``-log(-log(u))`` with ``u`` clipped to [1e-12, 1-1e-12].
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape=()) -> Tensor:
        return Tensor(self._gen.standard_normal(shape))

    def uniform(self, shape=()) -> Tensor:
        return Tensor(self._gen.random(shape))

    def gumbel(self, shape=()) -> Tensor:
        u = np.clip(self._gen.random(shape), 1e-12, 1.0 - 1e-12)
        return Tensor(-np.log(-np.log(u)))

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size=size)

    def shuffled(self, seq: Sequence) -> list:
        order = np.arange(len(seq))
        self._gen.shuffle(order)
        return [seq[i] for i in order]

    def split(self, tag: str) -> "SeededRng":
        """Independent child stream derived from this seed and a label."""
        return SeededRng(_mix_seed(self.seed, tag))


def sample(rng: SeededRng, dist: str, shape=()) -> Tensor:
    """Draw a tensor from {normal, gumbel, uniform}."""
    if dist == "normal":
        return rng.normal(shape)
    if dist == "gumbel":
        return rng.gumbel(shape)
    if dist == "uniform":
        return rng.uniform(shape)
    raise KeyError(f"unknown distribution {dist!r}")


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

def glorot_uniform(rng: SeededRng, shape: tuple) -> Tensor:
    """Weight init: uniform in +-sqrt(6/(fan_in+fan_out)); vectors use fan_out 1."""
    fan_in = shape[0] if len(shape) >= 1 else 1
    fan_out = shape[1] if len(shape) >= 2 else 1
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(limit * (2.0 * rng._gen.random(shape) - 1.0), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5) -> float:
    """Max relative error between the tape gradient of ``f`` at ``x`` and a
    central finite difference with the given step.

    Relative error per coordinate is |analytic - numeric| divided by
    (|analytic| + |numeric| + 1e-8).
    """
    if not (1e-7 <= step <= 1e-3):
        raise ValueError("step must lie in [1e-7, 1e-3]")
    x = as_tensor(x)
    with Tape() as tape:
        tracked = Tensor(x.data.copy(), requires_grad=True)
        tape.watch(tracked)
        loss = f(tracked)
        grads = backward(tape, loss)
        analytic = tape.grad(grads, tracked).data

    flat = x.data.reshape(-1).copy()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        hi = f(Tensor(bumped.reshape(x.shape))).item()
        bumped[i] = flat[i] - step
        lo = f(Tensor(bumped.reshape(x.shape))).item()
        numeric[i] = (hi - lo) / (2.0 * step)
    a = analytic.reshape(-1)
    rel = np.abs(a - numeric) / (np.abs(a) + np.abs(numeric) + 1e-8)
    return float(rel.max()) if rel.size else 0.0
