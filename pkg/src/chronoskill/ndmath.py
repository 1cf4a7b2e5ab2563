"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation below computes its result eagerly with numpy.  When a
:class:`Tape` is active on the current thread the operation is also recorded
together with a closure that maps the output gradient to input gradients, and
:func:`backward` replays those closures in reverse order.

Forward matrix products are evaluated as a stack of independent
row-times-matrix products, so each output row is summed in the same order
whatever the batch size.  A single observation
and the same observation inside a minibatch therefore give bitwise-equal
results, which keeps PPO probability ratios at exactly one before the first
update.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, UsageError

LOG_2PI = math.log(2.0 * math.pi)
_ENTROPY_CONST = 0.5 * (1.0 + LOG_2PI)


class Tensor:
    """A float64 array that can take part in recorded computations.

    Tensors hash by identity, so they can key gradient dictionaries.
    """

    __slots__ = ("data", "name")

    def __init__(self, data, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, name: str | None = None) -> "Tensor":
        t = object.__new__(cls)
        t.data = arr
        t.name = name
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


@dataclass
class _Node:
    kind: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], tuple]


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tape:
    """Records operations executed inside its ``with`` block.

    Nodes are appended in execution order, so the list is topologically
    sorted by construction.  Tapes are meant to be used for one forward pass
    and then discarded.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _record(kind: str, inputs: tuple, out: np.ndarray, grad_fn) -> Tensor:
    if not np.isfinite(out).all():
        raise NumericError(f"{kind} produced non-finite values")
    result = Tensor._wrap(out)
    tape = active_tape()
    if tape is not None and any(isinstance(x, Tensor) for x in inputs):
        tape.nodes.append(_Node(kind, inputs, result, grad_fn))
    return result


def _same_shape(kind: str, a: np.ndarray, b: np.ndarray):
    if b.ndim != 0 and a.shape != b.shape:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- primitives


def rowwise_matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w`` computed one row at a time (batch-size independent bits)."""
    return np.matmul(x[:, None, :], w)[:, 0, :]


def affine(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` for ``x`` of shape [batch, in]."""
    xd, wd, bd = _data(x), _data(weight), _data(bias)
    if xd.ndim != 2 or wd.ndim != 2 or bd.ndim != 1 or xd.shape[1] != wd.shape[0] or bd.shape[0] != wd.shape[1]:
        raise DimensionError(
            f"affine: input {xd.shape}, weight {wd.shape}, bias {bd.shape} do not conform"
        )
    out = rowwise_matmul(xd, wd) + bd

    def grad_fn(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _record("affine", (x, weight, bias), out, grad_fn)


def tanh(x) -> Tensor:
    xd = _data(x)
    out = np.tanh(xd)
    return _record("tanh", (x,), out, lambda g: (g * (1.0 - out * out),))


tanh_activation = tanh


def exp(x) -> Tensor:
    out = np.exp(_data(x))
    return _record("exp", (x,), out, lambda g: (g * out,))


def square(x) -> Tensor:
    xd = _data(x)
    return _record("square", (x,), xd * xd, lambda g: (2.0 * xd * g,))


def neg(x) -> Tensor:
    return _record("neg", (x,), -_data(x), lambda g: (-g,))


def add(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    _same_shape("add", ad, bd)
    if bd.ndim == 0:
        return _record("add", (a, b), ad + bd, lambda g: (g, g.sum()))
    return _record("add", (a, b), ad + bd, lambda g: (g, g))


def sub(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    _same_shape("sub", ad, bd)
    if bd.ndim == 0:
        return _record("sub", (a, b), ad - bd, lambda g: (g, -g.sum()))
    return _record("sub", (a, b), ad - bd, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    ad, bd = _data(a), _data(b)
    _same_shape("mul", ad, bd)
    if bd.ndim == 0:
        return _record("mul", (a, b), ad * bd, lambda g: (g * bd, (g * ad).sum()))
    return _record("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    xd = _data(x)
    return _record("sum", (x,), np.asarray(xd.sum()), lambda g: (np.full_like(xd, g),))


def mean(x) -> Tensor:
    xd = _data(x)
    n = xd.size
    return _record("mean", (x,), np.asarray(xd.mean()), lambda g: (np.full_like(xd, g / n),))


def reshape(x, shape) -> Tensor:
    xd = _data(x)
    try:
        out = xd.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {xd.shape} as {shape}") from None
    return _record("reshape", (x,), out, lambda g: (np.reshape(g, xd.shape),))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; the gradient passes only strictly inside."""
    xd = _data(x)
    inside = (xd > lo) & (xd < hi)
    return _record("clip", (x,), np.clip(xd, lo, hi), lambda g: (g * inside,))


def minimum(a, b) -> Tensor:
    """Elementwise minimum.  Ties send the gradient to ``b``."""
    ad, bd = _data(a), _data(b)
    _same_shape("minimum", ad, bd)
    take_a = ad < bd
    return _record(
        "minimum", (a, b), np.where(take_a, ad, bd), lambda g: (g * take_a, g * ~take_a)
    )


def select_heads(options: Sequence[Tensor], index) -> Tensor:
    """Route row ``b`` of the output from ``options[index[b]]``.

    ``options`` are either all [batch, d] (per-sample outputs) or all [d]
    (per-head parameters shared by every sample).  Options never chosen get
    an exactly-zero gradient.
    """
    idx = np.asarray(index, dtype=np.intp)
    if not options:
        raise DimensionError("select_heads: no options")
    datas = [_data(o) for o in options]
    shape = datas[0].shape
    if any(d.shape != shape for d in datas):
        raise DimensionError(f"select_heads: option shapes {[d.shape for d in datas]} differ")
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= len(options))):
        raise DimensionError("select_heads: index out of range")
    stacked = np.stack(datas)
    masks = [idx == h for h in range(len(options))]
    if len(shape) == 2:
        if shape[0] != idx.size:
            raise DimensionError(f"select_heads: batch {shape[0]} vs index length {idx.size}")
        out = stacked[idx, np.arange(idx.size)]

        def grad_fn(g):
            return tuple(np.where(m[:, None], g, 0.0) for m in masks)

    elif len(shape) == 1:
        out = stacked[idx]

        def grad_fn(g):
            return tuple(g[m].sum(axis=0) if m.any() else np.zeros(shape) for m in masks)

    else:
        raise DimensionError(f"select_heads: unsupported option shape {shape}")
    return _record("select_heads", tuple(options), out, grad_fn)


def gaussian_logprob(mean, logstd, action) -> Tensor:
    """Diagonal Gaussian log-density, summed over the last axis."""
    md, ld, ad = _data(mean), _data(logstd), _data(action)
    if md.shape != ld.shape or md.shape != ad.shape or md.ndim == 0 or md.shape[-1] < 1:
        raise DimensionError(
            f"gaussian_logprob: mean {md.shape}, logstd {ld.shape}, action {ad.shape}"
        )
    inv_std = np.exp(-ld)
    z = (ad - md) * inv_std
    out = np.sum(-0.5 * z * z - ld - 0.5 * LOG_2PI, axis=-1)

    def grad_fn(g):
        g = np.asarray(g)[..., None]
        dmean = g * z * inv_std
        return dmean, g * (z * z - 1.0), -dmean

    return _record("gaussian_logprob", (mean, logstd, action), out, grad_fn)


def gaussian_entropy(logstd) -> Tensor:
    ld = _data(logstd)
    if ld.ndim == 0 or ld.shape[-1] < 1:
        raise DimensionError(f"gaussian_entropy: logstd {ld.shape}")
    out = np.sum(ld + _ENTROPY_CONST, axis=-1)
    return _record(
        "gaussian_entropy", (logstd,), out, lambda g: (np.broadcast_to(np.asarray(g)[..., None], ld.shape).copy(),)
    )


# ------------------------------------------------------------------ backward


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] | None = None) -> dict:
    """Gradients of the scalar ``loss`` with respect to leaf tensors.

    With ``params`` given the result has exactly those keys, and any
    parameter with no path to the loss gets an all-zero gradient.  Without
    it, every leaf tensor that reached the loss is returned.
    """
    position = None
    for i, node in enumerate(tape.nodes):
        if node.output is loss:
            position = i
    if position is None:
        raise UsageError("loss was not recorded on this tape")
    if loss.data.size != 1:
        raise UsageError(f"loss must be a scalar, got shape {loss.shape}")

    produced = {id(n.output) for n in tape.nodes[: position + 1]}
    grads = {id(loss): np.ones_like(loss.data)}
    owners = {id(loss): loss}
    for node in reversed(tape.nodes[: position + 1]):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not isinstance(inp, Tensor):
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.array(gi, dtype=np.float64)
                owners[key] = inp

    leaves = {owners[k]: g for k, g in grads.items() if k not in produced}
    if params is None:
        return leaves
    return {p: leaves.get(p, np.zeros_like(p.data)) for p in params}


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(_data(x), dtype=np.float64)
    grad = np.zeros_like(base)
    for i in range(base.size):
        up = base.copy()
        down = base.copy()
        up.flat[i] += eps
        down.flat[i] -= eps
        fu, fd = float(f(up)), float(f(down))
        if not (math.isfinite(fu) and math.isfinite(fd)):
            raise NumericError(f"non-finite function value at coordinate {i}")
        grad.flat[i] = (fu - fd) / (2.0 * eps)
    return grad


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        arrays = [_data(p) for p in params]
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(params, grads, state: AdamState, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; inputs are not modified.  All
    parameters are updated as one flat vector, then split back to shape.
    """
    params = [_data(p) for p in params]
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError("adam_step: parameter, gradient and state counts differ")
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not (p.shape == g.shape == m.shape == v.shape):
            raise DimensionError(
                f"adam_step: param {p.shape}, grad {g.shape}, moments {m.shape}/{v.shape}"
            )
    if not params:
        return [], AdamState([], [], state.step + 1)
    t = state.step + 1
    flat = [np.concatenate([a.ravel() for a in arrs]) for arrs in (params, grads, state.m, state.v)]
    p, g, m, v = flat
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    p = p - lr * (m / (1.0 - beta1**t)) / (np.sqrt(v / (1.0 - beta2**t)) + eps)
    cuts = np.cumsum([a.size for a in params])[:-1]

    def unflatten(vec):
        return [piece.reshape(a.shape) for piece, a in zip(np.split(vec, cuts), params)]

    return unflatten(p), AdamState(unflatten(m), unflatten(v), t)


def clip_grad_norm(grads, max_norm: float):
    """Scale gradients so their joint L2 norm is at most ``max_norm``.

    Returns ``(clipped, norm_before_clipping)``.
    """
    flat = np.concatenate([np.ravel(g) for g in grads]) if len(grads) else np.zeros(0)
    total = math.sqrt(float(flat @ flat))
    if not math.isfinite(total):
        raise NumericError("gradient norm is not finite")
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads, total


class Adam:
    """Adam over a fixed list of tensors, updated in place.

    The tensors' storage is moved into one flat buffer (each ``.data``
    becomes a view into it) so a step is a handful of vector operations.
    Same arithmetic as :func:`adam_step`.
    """

    def __init__(self, params: Sequence[Tensor], lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        sizes = [p.data.size for p in self.params]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self._flat = np.concatenate([p.data.ravel() for p in self.params]) if sizes else np.zeros(0)
        self._bind()
        self._m = np.zeros_like(self._flat)
        self._v = np.zeros_like(self._flat)
        self.steps = 0

    def _bind(self):
        for p, lo, hi in zip(self.params, self._offsets[:-1], self._offsets[1:]):
            p.data = self._flat[lo:hi].reshape(p.data.shape)

    def _views(self, flat):
        return [flat[lo:hi].reshape(p.data.shape)
                for p, lo, hi in zip(self.params, self._offsets[:-1], self._offsets[1:])]

    @property
    def state(self) -> AdamState:
        return AdamState([a.copy() for a in self._views(self._m)], [a.copy() for a in self._views(self._v)], self.steps)

    def step(self, grads):
        if len(grads) != len(self.params):
            raise DimensionError(f"Adam.step: {len(grads)} gradients for {len(self.params)} parameters")
        for p, g in zip(self.params, grads):
            if np.shape(g) != p.data.shape:
                raise DimensionError(f"Adam.step: gradient {np.shape(g)} for parameter {p.data.shape}")
        if any(p.data.base is not self._flat for p in self.params):
            # a parameter was reassigned (e.g. loaded); re-gather before updating
            self._flat = np.concatenate([p.data.ravel() for p in self.params])
            self._bind()
        g = np.concatenate([np.ravel(g) for g in grads]) if grads else np.zeros(0)
        self.steps += 1
        b1, b2 = self.beta1, self.beta2
        self._m *= b1
        self._m += (1.0 - b1) * g
        self._v *= b2
        self._v += (1.0 - b2) * (g * g)
        m_hat = self._m / (1.0 - b1**self.steps)
        v_hat = self._v / (1.0 - b2**self.steps)
        self._flat -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------- MLP


def init_affine(rng: np.random.Generator, fan_in: int, fan_out: int, name: str, scale: float = 1.0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights times ``scale``; zero bias."""
    bound = math.sqrt(1.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out)) * scale
    return Tensor(w, f"{name}.weight"), Tensor(np.zeros(fan_out), f"{name}.bias")


def mlp(x, layers: Sequence[tuple], activate_last: bool = False) -> Tensor:
    """Chain of affine layers with tanh between them."""
    h = x
    for i, (w, b) in enumerate(layers):
        h = affine(h, w, b)
        if activate_last or i < len(layers) - 1:
            h = tanh(h)
    return h
