"""Reverse-mode automatic differentiation over dense float64 arrays.

Small define-by-run tape: every operation returns a new Tensor node holding
its value, parents, and a backward closure. backward() walks the graph once
in reverse topological order with deterministic accumulation, and skips
subgraphs that cannot reach a parameter. Includes the recurrent cells, Adam,
and a central-finite-difference gradient checker.
"""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np

from ._kernels import kernels
from .rng import Rng


class ShapeMismatch(ValueError):
    pass


class NonScalarLoss(ValueError):
    pass


class KeyMismatch(KeyError):
    pass


class EmptySequence(ValueError):
    pass


class Tensor:
    """A node in the computation graph; data is always float64."""

    __slots__ = ("data", "grad", "requires", "_parents", "_bwd")

    def __init__(self, data, requires: bool = False):
        self.data = np.array(data, dtype=np.float64)  # own copy: value semantics
        self.grad: np.ndarray | None = None
        self.requires = requires
        self._parents: tuple[Tensor, ...] = ()
        self._bwd: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple["Tensor", ...],
              bwd: Callable[[np.ndarray], None] | None) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires = any(p.requires for p in parents)
        t._parents = parents if t.requires else ()
        t._bwd = bwd if t.requires else None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires={self.requires})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accum(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    """Add g into t.grad. owned=True lets t.grad take the array without a
    copy; only safe for arrays this backward closure freshly allocated and
    hands to a single parent."""
    if not t.requires:
        return
    if g.shape != t.data.shape:
        raise ShapeMismatch(f"gradient {g.shape} for tensor {t.data.shape}")
    if t.grad is None:
        t.grad = g if owned else g.copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable .grad."""
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss has shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)


# ---------------------------------------------------------------------------
# elementwise / linear ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor._node(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return Tensor._node(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape), owned=True)
        _accum(b, _unbroadcast(g * a.data, b.data.shape), owned=True)

    return Tensor._node(out, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def bwd(g):
        if a.requires:
            _accum(a, g @ b.data.T, owned=True)
        if b.requires:
            _accum(b, a.data.T @ g, owned=True)

    return Tensor._node(out, (a, b), bwd)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0
    out = np.maximum(t.data, 0.0)

    def bwd(g):
        _accum(t, g * mask, owned=True)

    return Tensor._node(out, (t,), bwd)


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)

    def bwd(g):
        _accum(t, g * (1.0 - out * out), owned=True)

    return Tensor._node(out, (t,), bwd)


def sigmoid(t: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-t.data))

    def bwd(g):
        _accum(t, g * out * (1.0 - out), owned=True)

    return Tensor._node(out, (t,), bwd)


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)

    def bwd(g):
        _accum(t, g * out, owned=True)

    return Tensor._node(out, (t,), bwd)


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes where lo <= x <= hi, zero outside."""
    out = np.clip(t.data, lo, hi)
    mask = (t.data >= lo) & (t.data <= hi)

    def bwd(g):
        _accum(t, g * mask, owned=True)

    return Tensor._node(out, (t,), bwd)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    m = np.max(t.data, axis=axis, keepdims=True)
    e = np.exp(t.data - m)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        _accum(t, (g - dot) * out, owned=True)

    return Tensor._node(out, (t,), bwd)


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    m = np.max(t.data, axis=axis, keepdims=True)
    shifted = t.data - m
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse

    def bwd(g):
        _accum(t, g - np.exp(out) * np.sum(g, axis=axis, keepdims=True), owned=True)

    return Tensor._node(out, (t,), bwd)


def logsumexp(t: Tensor, axis: int = -1) -> Tensor:
    """Stable log-sum-exp; the max is subtracted before exponentiating."""
    m = np.max(t.data, axis=axis, keepdims=True)
    out_k = m + np.log(np.sum(np.exp(t.data - m), axis=axis, keepdims=True))
    out = np.squeeze(out_k, axis=axis)

    def bwd(g):
        w = np.exp(t.data - out_k)
        _accum(t, np.expand_dims(g, axis) * w, owned=True)

    return Tensor._node(out, (t,), bwd)


def concat(ts: list[Tensor], axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in ts]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(ts, np.split(g, offsets, axis=axis)):
            _accum(t, piece)

    return Tensor._node(out, tuple(ts), bwd)


def slice_(t: Tensor, key) -> Tensor:
    out = np.ascontiguousarray(t.data[key])

    def bwd(g):
        z = np.zeros_like(t.data)
        z[key] = g
        _accum(t, z, owned=True)

    return Tensor._node(out, (t,), bwd)


def gather_row(t: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; repeated indices accumulate gradient."""
    if t.data.ndim != 2:
        raise ShapeMismatch(f"gather_row needs 2-D, got {t.data.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    out = t.data[idx]

    def bwd(g):
        z = np.zeros_like(t.data)
        np.add.at(z, idx, g)
        _accum(t, z, owned=True)

    return Tensor._node(out, (t,), bwd)


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = t.data.reshape(shape).copy()

    def bwd(g):
        _accum(t, g.reshape(t.data.shape), owned=True)

    return Tensor._node(out, (t,), bwd)


def reduce_sum(t: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = np.sum(t.data, axis=axis, keepdims=keepdims)

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        _accum(t, np.broadcast_to(gg, t.data.shape).copy(), owned=True)

    return Tensor._node(np.asarray(out), (t,), bwd)


def reduce_mean(t: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = t.data.size if axis is None else t.data.shape[axis]
    out = np.mean(t.data, axis=axis, keepdims=keepdims)

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        _accum(t, np.broadcast_to(gg, t.data.shape).copy() / count, owned=True)

    return Tensor._node(np.asarray(out), (t,), bwd)


def conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Valid-padding 2-D correlation; x (N,C,H,W), w (K,C,kh,kw)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeMismatch(f"conv2d {x.data.shape} with kernel {w.data.shape}")
    n, c, h, wd = x.data.shape
    k, ck, kh, kw = w.data.shape
    if ck != c or kh > h or kw > wd:
        raise ShapeMismatch(f"conv2d {x.data.shape} with kernel {w.data.shape}")
    out = kernels.conv2d_fwd(x.data, w.data, stride)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires:
            _accum(x, kernels.conv2d_bwd_x(w.data, g, h, wd, stride), owned=True)
        if w.requires:
            _accum(w, kernels.conv2d_bwd_w(x.data, g, kh, kw, stride), owned=True)

    return Tensor._node(out, (x, w), bwd)


# ---------------------------------------------------------------------------
# recurrent cells


def gru_cell(x: Tensor, h: Tensor, p: dict[str, Tensor], prefix: str) -> Tensor:
    """One GRU step; gates follow the update/reset/candidate convention with
    the candidate computed from the reset-scaled hidden state."""
    z = sigmoid(add(add(matmul(x, p[prefix + "wxz"]), matmul(h, p[prefix + "whz"])), p[prefix + "bz"]))
    r = sigmoid(add(add(matmul(x, p[prefix + "wxr"]), matmul(h, p[prefix + "whr"])), p[prefix + "br"]))
    n = tanh(add(add(matmul(x, p[prefix + "wxn"]), matmul(mul(r, h), p[prefix + "whn"])), p[prefix + "bn"]))
    return add(mul(sub(1.0, z), h), mul(z, n))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, p: dict[str, Tensor], prefix: str) -> tuple[Tensor, Tensor]:
    hid = h.data.shape[1]
    gates = add(add(matmul(x, p[prefix + "wx"]), matmul(h, p[prefix + "wh"])), p[prefix + "b"])
    i = sigmoid(gates[:, 0 * hid:1 * hid])
    f = sigmoid(gates[:, 1 * hid:2 * hid])
    g = tanh(gates[:, 2 * hid:3 * hid])
    o = sigmoid(gates[:, 3 * hid:4 * hid])
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def bilstm_encode(seq: Tensor, p: dict[str, Tensor], prefix: str, hidden: int) -> Tensor:
    """Encode a (N, T, D) sequence into (N, 2*hidden).

    Runs an LSTM forward and another backward over the steps and concatenates
    the two final hidden states.
    """
    if seq.data.ndim != 3:
        raise ShapeMismatch(f"bilstm_encode needs (N,T,D), got {seq.data.shape}")
    n, steps, _ = seq.data.shape
    if steps == 0:
        raise EmptySequence("cannot encode an empty sequence")
    finals = []
    for direction, order in (("fwd.", range(steps)), ("bwd.", range(steps - 1, -1, -1))):
        h = Tensor(np.zeros((n, hidden)))
        c = Tensor(np.zeros((n, hidden)))
        for t in order:
            x = seq[:, t, :]
            h, c = lstm_cell(x, h, c, p, prefix + direction)
        finals.append(h)
    return concat(finals, axis=1)


# ---------------------------------------------------------------------------
# parameters, initialization, optimizer


def xavier_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


class ParamStore:
    """Named parameter tensors plus Adam state, in insertion order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.adam_t: int = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyMismatch(f"duplicate parameter {name!r}")
        t = Tensor(data, requires=True)
        self._params[name] = t
        self.adam_m[name] = np.zeros_like(t.data)
        self.adam_v[name] = np.zeros_like(t.data)
        return t

    def add_dense(self, rng: Rng, name: str, fan_in: int, fan_out: int) -> Tensor:
        lim = xavier_limit(fan_in, fan_out)
        return self.add(name, rng.uniform_array((fan_in, fan_out), -lim, lim))

    def add_conv(self, rng: Rng, name: str, k: int, c: int, kh: int, kw: int) -> Tensor:
        lim = xavier_limit(c * kh * kw, k * kh * kw)
        return self.add(name, rng.uniform_array((k, c, kh, kw), -lim, lim))

    def add_zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.add(name, np.zeros(shape))

    def add_bias(self, rng: Rng, name: str, shape: tuple[int, ...], scale: float = 0.05) -> Tensor:
        # small nonzero init keeps pre-activations off the exact relu kink,
        # where central differences disagree with any one-sided subgradient
        return self.add(name, rng.uniform_array(shape, -scale, scale))

    def names(self) -> list[str]:
        return list(self._params)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def as_dict(self) -> dict[str, Tensor]:
        return self._params

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self._params.items():
            out[name] = np.zeros_like(t.data) if t.grad is None else t.grad
        return out


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update with bias correction."""
    if set(grads) != set(store.names()):
        missing = set(store.names()) ^ set(grads)
        raise KeyMismatch(f"gradient keys do not match parameters: {sorted(missing)}")
    store.adam_t += 1
    t = store.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    scale = lr / c1
    rc2 = math.sqrt(c2)
    for name, p in store.items():
        g = grads[name]
        m = store.adam_m[name]
        v = store.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        u = np.sqrt(v)
        u /= rc2
        u += eps
        np.divide(m, u, out=u)
        u *= scale
        p.data -= u


def grad_check(f: Callable[[ParamStore], Tensor], store: ParamStore, eps: float = 1e-5) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    relative error = |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
    maximized over every coordinate of every parameter.
    """
    store.zero_grad()
    loss = f(store)
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in store.items()}
    worst = 0.0
    for name, p in store.items():
        flat = p.data.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(store).item()
            flat[i] = orig - eps
            fm = f(store).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
