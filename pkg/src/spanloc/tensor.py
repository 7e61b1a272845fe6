"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation computes its result eagerly with numpy and, when an input
requires gradients and a :class:`Tape` is active, records a backward rule.
``Tape.backward`` replays the recorded rules in reverse creation order,
which is a valid topological order by construction.

A tape and the tensors recorded on it form a single-threaded unit of work;
independent tapes (e.g. one per batch element) may run concurrently as long
as parameter updates stay serialized.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError


class _TapeStack(threading.local):
    """Per-thread stack of active tapes, so independent tapes may run on
    separate threads concurrently."""

    def __init__(self):
        self.stack: list["Tape"] = []


_TAPES = _TapeStack()


class Tensor:
    """A dense row-major float64 array plus an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(g, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Run backward from this scalar on the innermost active tape."""
        if not _TAPES.stack:
            raise DimensionError("backward requires an active Tape")
        _TAPES.stack[-1].backward(self)

    def __getitem__(self, key) -> "Tensor":
        if isinstance(key, slice):
            start, stop, step = key.indices(self.data.shape[0])
            if step != 1:
                raise DimensionError("only contiguous row slices are supported")
            return slice_axis(self, 0, start, stop)
        raise DimensionError("tensor indexing supports row slices only")

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _make(data: np.ndarray, requires_grad: bool) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = requires_grad
    return out


class Tape:
    """Ordered record of operations for one backward pass.

    Operations append themselves in creation order, so the record is already
    topologically sorted; backward walks it once, in reverse.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPES.stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPES.stack.pop()

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._records.append((out, backward_fn))

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor that contributed to ``loss``."""
        if loss.data.ndim != 0:
            raise DimensionError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        loss.accumulate_grad(np.ones((), dtype=np.float64))
        for out, backward_fn in reversed(self._records):
            if out.grad is not None:
                backward_fn(out.grad)


def _record(out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
    stack = _TAPES.stack
    if out.requires_grad and stack:
        stack[-1]._records.append((out, backward_fn))


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return _make(np.zeros(shape, dtype=np.float64), requires_grad)


def ones(shape) -> Tensor:
    return _make(np.ones(shape, dtype=np.float64), False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of the forward broadcast)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_binary_shapes(a: np.ndarray, b: np.ndarray, op: str) -> None:
    """Equal shapes, or one operand is a scalar or broadcastable row vector."""
    if a.shape == b.shape:
        return
    for x, y in ((a, b), (b, a)):
        if x.ndim == 0:
            return
        if x.ndim == 1 and y.ndim == 2 and y.shape[1] == x.shape[0]:
            return
        if x.ndim == 2 and x.shape[0] == 1 and y.ndim == 2 and y.shape[1] == x.shape[1]:
            return
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def _binary(a, b, op: str, forward, da, db) -> Tensor:
    a_t = a if isinstance(a, Tensor) else None
    b_t = b if isinstance(b, Tensor) else None
    a_d = a_t.data if a_t is not None else np.float64(a)
    b_d = b_t.data if b_t is not None else np.float64(b)
    if a_t is not None and b_t is not None:
        _check_binary_shapes(a_d, b_d, op)
    req = (a_t is not None and a_t.requires_grad) or (
        b_t is not None and b_t.requires_grad
    )
    out = _make(forward(a_d, b_d), req)

    def backward(g: np.ndarray) -> None:
        if a_t is not None and a_t.requires_grad:
            a_t.accumulate_grad(_unbroadcast(da(g, a_d, b_d), a_d.shape))
        if b_t is not None and b_t.requires_grad:
            b_t.accumulate_grad(_unbroadcast(db(g, a_d, b_d), b_d.shape))

    _record(out, backward)
    return out


def add(a, b) -> Tensor:
    return _binary(a, b, "add", lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, "sub", lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(
        a, b, "mul", lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: shapes {a.data.shape} and {b.data.shape} are incompatible"
        )
    out = _make(a.data @ b.data, a.requires_grad or b.requires_grad)
    a_d, b_d = a.data, b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g @ b_d.T)
        if b.requires_grad:
            b.accumulate_grad(a_d.T @ g)

    _record(out, backward)
    return out


def _unary(x: Tensor, forward, dx) -> Tensor:
    out_d = forward(x.data)
    out = _make(out_d, x.requires_grad)
    if x.requires_grad:
        x_d = x.data

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(dx(g, x_d, out_d))

        _record(out, backward)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # Branch on sign so exp never overflows.
    def fwd(v):
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out

    return _unary(x, fwd, lambda g, v, y: g * y * (1.0 - y))


def tanh(x: Tensor) -> Tensor:
    return _unary(x, np.tanh, lambda g, v, y: g * (1.0 - y * y))


def relu(x: Tensor) -> Tensor:
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda g, v, y: g * (v > 0))


def exp(x: Tensor) -> Tensor:
    return _unary(x, np.exp, lambda g, v, y: g * y)


def log(x: Tensor) -> Tensor:
    return _unary(x, np.log, lambda g, v, y: g / v)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    # Gradient passes wherever the value was kept (inclusive bounds).
    return _unary(
        x,
        lambda v: np.clip(v, lo, hi),
        lambda g, v, y: g * ((v >= lo) & (v <= hi)),
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.data.ndim == 0 or x.data.shape[axis] == 0:
        raise DimensionError(f"softmax: empty axis {axis} for shape {x.data.shape}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    out = _make(y, x.requires_grad)

    def backward(g: np.ndarray) -> None:
        inner = np.sum(g * y, axis=axis, keepdims=True)
        x.accumulate_grad((g - inner) * y)

    _record(out, backward)
    return out


def _check_axis(x: Tensor, axis: int | None) -> None:
    if axis is not None and not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"axis {axis} out of range for shape {x.data.shape}")


def reduce_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    _check_axis(x, axis)
    out = _make(np.sum(x.data, axis=axis, keepdims=keepdims), x.requires_grad)
    shape = x.data.shape

    def backward(g: np.ndarray) -> None:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate_grad(np.broadcast_to(g, shape))

    _record(out, backward)
    return out


def reduce_mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    _check_axis(x, axis)
    count = x.data.size if axis is None else x.data.shape[axis]
    out = _make(np.mean(x.data, axis=axis, keepdims=keepdims), x.requires_grad)
    shape = x.data.shape

    def backward(g: np.ndarray) -> None:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x.accumulate_grad(np.broadcast_to(g, shape) / count)

    _record(out, backward)
    return out


def reduce_max(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Max reduction; backward routes all gradient to the first argmax."""
    _check_axis(x, axis)
    out = _make(np.max(x.data, axis=axis, keepdims=keepdims), x.requires_grad)
    x_d = x.data

    def backward(g: np.ndarray) -> None:
        if x.grad is None:
            x.grad = np.zeros_like(x_d)
        if axis is None:
            flat_idx = int(np.argmax(x_d))
            x.grad.reshape(-1)[flat_idx] += float(g)
        else:
            gx = np.zeros_like(x_d)
            idx = np.expand_dims(np.argmax(x_d, axis=axis), axis)
            gexp = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(gx, idx, gexp, axis=axis)
            x.grad += gx

    _record(out, backward)
    return out


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise DimensionError("concat of no parts")
    base = parts[0].data.shape
    for p in parts[1:]:
        other = p.data.shape
        if len(other) != len(base) or any(
            b != o for i, (b, o) in enumerate(zip(base, other)) if i != axis % len(base)
        ):
            raise DimensionError(f"concat: shapes {base} and {other} differ off-axis")
    out = _make(
        np.concatenate([p.data for p in parts], axis=axis),
        any(p.requires_grad for p in parts),
    )
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g: np.ndarray) -> None:
        offset = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + size)
                p.accumulate_grad(g[tuple(sl)])
            offset += size

    _record(out, backward)
    return out


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    size = x.data.shape[axis]
    if not (0 <= start <= stop <= size):
        raise DimensionError(
            f"slice [{start}:{stop}] out of bounds for axis {axis} of shape {x.data.shape}"
        )
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = _make(x.data[sl], x.requires_grad)
    if x.requires_grad:
        shape = x.data.shape

        def backward(g: np.ndarray) -> None:
            # Accumulate straight into the slice to avoid a full-size temp.
            if x.grad is None:
                x.grad = np.zeros(shape, dtype=np.float64)
            x.grad[sl] += g

        _record(out, backward)
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _make(np.reshape(x.data, shape), x.requires_grad)
    if x.requires_grad:
        orig = x.data.shape

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(np.reshape(g, orig))

        _record(out, backward)
    return out


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.data.shape}")
    out = _make(x.data.T, x.requires_grad)
    if x.requires_grad:

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(g.T)

        _record(out, backward)
    return out


def take_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Row lookup (embedding); backward scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or table.data.ndim != 2:
        raise DimensionError("take_rows expects a matrix table and 1-d indices")
    out = _make(table.data[idx], table.requires_grad)
    if table.requires_grad:

        def backward(g: np.ndarray) -> None:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

        _record(out, backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    """Standardize each row to zero mean / unit variance, then affine.

    A constant row normalizes to zeros, so the output row equals ``bias``.
    """
    if x.data.ndim != 2:
        raise DimensionError(f"layer_norm expects a matrix, got shape {x.data.shape}")
    if gain.data.shape != (x.data.shape[1],) or bias.data.shape != (x.data.shape[1],):
        raise DimensionError(
            f"layer_norm: gain/bias {gain.data.shape}/{bias.data.shape} "
            f"do not match width {x.data.shape[1]}"
        )
    mu = np.mean(x.data, axis=1, keepdims=True)
    var = np.mean((x.data - mu) ** 2, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    req = x.requires_grad or gain.requires_grad or bias.requires_grad
    out = _make(xhat * gain.data + bias.data, req)

    def backward(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))
        if gain.requires_grad:
            gain.accumulate_grad((g * xhat).sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            m1 = gh.mean(axis=1, keepdims=True)
            m2 = (gh * xhat).mean(axis=1, keepdims=True)
            x.accumulate_grad((gh - m1 - xhat * m2) * inv)

    _record(out, backward)
    return out


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def gru_scan(
    x: Tensor,
    h0: Tensor,
    gate_weight: Tensor,
    gate_bias: Tensor,
    cand_weight: Tensor,
    cand_bias: Tensor,
    reverse: bool = False,
) -> Tensor:
    """GRU over all rows of x in one tape record; returns the T x H states.

    ``gate_weight`` maps [x ; h] to the 2H update/reset pre-activations and
    ``cand_weight`` maps [x ; r*h] to the H candidate pre-activation. With
    ``reverse`` the recurrence consumes rows last to first; output row t
    always holds the state after consuming row t.
    """
    steps, d_in = x.data.shape
    hid = h0.data.shape[-1]
    if steps == 0:
        raise DimensionError("gru_scan on an empty sequence")
    if gate_weight.data.shape != (d_in + hid, 2 * hid):
        raise DimensionError(
            f"gru_scan: gate weight {gate_weight.data.shape} does not match "
            f"input {d_in} + hidden {hid}"
        )
    w_gx, w_gh = gate_weight.data[:d_in], gate_weight.data[d_in:]
    w_cx, w_ch = cand_weight.data[:d_in], cand_weight.data[d_in:]
    pre_gx = x.data @ w_gx + gate_bias.data
    pre_cx = x.data @ w_cx + cand_bias.data
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    states = np.empty((steps, hid))
    z_all = np.empty((steps, hid))
    r_all = np.empty((steps, hid))
    cand_all = np.empty((steps, hid))
    prev_all = np.empty((steps, hid))
    h = h0.data.reshape(hid)
    for t in order:
        zr = _sigmoid_np(pre_gx[t] + h @ w_gh)
        z, r = zr[:hid], zr[hid:]
        cand = np.tanh(pre_cx[t] + (r * h) @ w_ch)
        prev_all[t] = h
        z_all[t], r_all[t], cand_all[t] = z, r, cand
        h = h + z * (cand - h)
        states[t] = h
    req = any(
        t.requires_grad
        for t in (x, h0, gate_weight, gate_bias, cand_weight, cand_bias)
    )
    out = _make(states, req)

    def backward(g: np.ndarray) -> None:
        dzr_all = np.empty((steps, 2 * hid))
        dpre_c_all = np.empty((steps, hid))
        carry = np.zeros(hid)
        for t in reversed(order):
            dh = g[t] + carry
            z, r, cand, prev = z_all[t], r_all[t], cand_all[t], prev_all[t]
            dpre_c = dh * z * (1.0 - cand * cand)
            dxrh_h = dpre_c @ w_ch.T
            dzr = np.concatenate([dh * (cand - prev) * z * (1.0 - z),
                                  dxrh_h * prev * r * (1.0 - r)])
            carry = dh * (1.0 - z) + dxrh_h * r + dzr @ w_gh.T
            dzr_all[t] = dzr
            dpre_c_all[t] = dpre_c
        if gate_weight.requires_grad:
            xh = np.concatenate([x.data, prev_all], axis=1)
            gate_weight.accumulate_grad(xh.T @ dzr_all)
        if gate_bias.requires_grad:
            gate_bias.accumulate_grad(dzr_all.sum(axis=0))
        if cand_weight.requires_grad:
            xrh = np.concatenate([x.data, r_all * prev_all], axis=1)
            cand_weight.accumulate_grad(xrh.T @ dpre_c_all)
        if cand_bias.requires_grad:
            cand_bias.accumulate_grad(dpre_c_all.sum(axis=0))
        if x.requires_grad:
            x.accumulate_grad(dzr_all @ w_gx.T + dpre_c_all @ w_cx.T)
        if h0.requires_grad:
            h0.accumulate_grad(carry.reshape(h0.data.shape))

    _record(out, backward)
    return out


def lstm_scan(
    x: Tensor,
    h0: Tensor,
    c0: Tensor,
    gate_weight: Tensor,
    gate_bias: Tensor,
    reverse: bool = False,
) -> Tensor:
    """LSTM over all rows of x in one tape record; returns T x 2H rows of
    [hidden ; cell] states.

    ``gate_weight`` maps [x ; h] to the 4H pre-activations ordered as input,
    forget, output gates (sigmoid) then the tanh cell candidate.
    """
    steps, d_in = x.data.shape
    hid = h0.data.shape[-1]
    if steps == 0:
        raise DimensionError("lstm_scan on an empty sequence")
    if gate_weight.data.shape != (d_in + hid, 4 * hid):
        raise DimensionError(
            f"lstm_scan: gate weight {gate_weight.data.shape} does not match "
            f"input {d_in} + hidden {hid}"
        )
    w_x, w_h = gate_weight.data[:d_in], gate_weight.data[d_in:]
    pre_x = x.data @ w_x + gate_bias.data
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    states = np.empty((steps, 2 * hid))
    gates_all = np.empty((steps, 3 * hid))
    u_all = np.empty((steps, hid))
    hprev_all = np.empty((steps, hid))
    cprev_all = np.empty((steps, hid))
    tanh_c_all = np.empty((steps, hid))
    h = h0.data.reshape(hid)
    c = c0.data.reshape(hid)
    for t in order:
        pre = pre_x[t] + h @ w_h
        gates = _sigmoid_np(pre[: 3 * hid])
        i, f, o = gates[:hid], gates[hid : 2 * hid], gates[2 * hid :]
        u = np.tanh(pre[3 * hid :])
        hprev_all[t], cprev_all[t] = h, c
        gates_all[t], u_all[t] = gates, u
        c = f * c + i * u
        tanh_c = np.tanh(c)
        tanh_c_all[t] = tanh_c
        h = o * tanh_c
        states[t, :hid] = h
        states[t, hid:] = c
    req = any(t.requires_grad for t in (x, h0, c0, gate_weight, gate_bias))
    out = _make(states, req)

    def backward(g: np.ndarray) -> None:
        dpre_all = np.empty((steps, 4 * hid))
        carry_h = np.zeros(hid)
        carry_c = np.zeros(hid)
        for t in reversed(order):
            dh = g[t, :hid] + carry_h
            gates, u, tanh_c = gates_all[t], u_all[t], tanh_c_all[t]
            i, f, o = gates[:hid], gates[hid : 2 * hid], gates[2 * hid :]
            dc = g[t, hid:] + carry_c + dh * o * (1.0 - tanh_c * tanh_c)
            dpre = dpre_all[t]
            dpre[:hid] = dc * u * i * (1.0 - i)
            dpre[hid : 2 * hid] = dc * cprev_all[t] * f * (1.0 - f)
            dpre[2 * hid : 3 * hid] = dh * tanh_c * o * (1.0 - o)
            dpre[3 * hid :] = dc * i * (1.0 - u * u)
            carry_h = dpre @ w_h.T
            carry_c = dc * f
        if gate_weight.requires_grad:
            xh = np.concatenate([x.data, hprev_all], axis=1)
            gate_weight.accumulate_grad(xh.T @ dpre_all)
        if gate_bias.requires_grad:
            gate_bias.accumulate_grad(dpre_all.sum(axis=0))
        if x.requires_grad:
            x.accumulate_grad(dpre_all @ w_x.T)
        if h0.requires_grad:
            h0.accumulate_grad(carry_h.reshape(h0.data.shape))
        if c0.requires_grad:
            c0.accumulate_grad(carry_c.reshape(c0.data.shape))

    _record(out, backward)
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Zero entries with probability ``rate`` and rescale survivors.

    Identity in eval mode or at rate 0; masks are a pure function of ``rng``.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode requires an rng")
    scale = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = _make(x.data * scale, x.requires_grad)
    if x.requires_grad:

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(g * scale)

        _record(out, backward)
    return out
