"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the graph in reverse topological order and accumulates gradients.
Model arithmetic is float32; gradient-check tests feed float64 tensors
through the same code paths.

Heavy layers (conv2d, maxpool2d, lstm_layer, lstm_cell, the fused losses)
are single graph nodes with hand-written backward passes; everything else
composes from the primitive ops below.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("cannot wrap a Tensor in a Tensor")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=self.data.dtype)

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- primitives

def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, -g)

    return _node(-a.data, (a,), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(data, (a, b), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data**2))

    return _node(data, (a,), backward)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    data = stable_sigmoid(a.data)

    def backward(g):
        _accum(a, g * data * (1.0 - data))

    return _node(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0))

    return _node(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        _accum(a, g * data)

    return _node(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _node(data, (a,), backward)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(np.asarray(data), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape) / count)

    return _node(np.asarray(data), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(data, (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    data = a.data.transpose(axes)

    def backward(g):
        inv = None if axes is None else np.argsort(axes)
        _accum(a, g.transpose(inv))

    return _node(data, (a,), backward)


def flip0(a: Tensor) -> Tensor:
    """Reverse the leading (time) axis."""
    data = a.data[::-1].copy()

    def backward(g):
        _accum(a, g[::-1])

    return _node(data, (a,), backward)


def getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]
    if np.isscalar(data) or data.ndim == 0:
        data = np.asarray(data)

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _accum(a, full)

    return _node(np.ascontiguousarray(data), (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accum(t, g[tuple(index)])

    return _node(data, tuple(tensors), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accum(a, data * (g - dot))

    return _node(data, (a,), backward)


def embedding(table: Tensor, index: int) -> Tensor:
    """Row lookup: returns table[index] as a (1, D) tensor."""
    if not 0 <= index < table.data.shape[0]:
        raise IndexError(f"embedding index {index} out of range {table.data.shape[0]}")
    data = table.data[index:index + 1].copy()

    def backward(g):
        full = np.zeros_like(table.data)
        full[index] = g[0]
        _accum(table, full)

    return _node(data, (table,), backward)


# ------------------------------------------------------------- fused losses

def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log softmax probability of each target token."""
    targets = np.asarray(targets, dtype=np.int64)
    n, vocab = logits.data.shape
    if targets.ndim != 1 or targets.shape[0] != n:
        raise ShapeError(f"targets shape {targets.shape} does not match logits {logits.data.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(f"target id outside [0, {vocab})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    data = np.asarray(-log_probs[np.arange(n), targets].mean(), dtype=logits.data.dtype)

    def backward(g):
        probs = np.exp(log_probs)
        probs[np.arange(n), targets] -= 1.0
        _accum(logits, float(g) * probs / n)

    return _node(data, (logits,), backward)


def sigmoid_bce(logit: Tensor, target: float) -> Tensor:
    """Binary cross-entropy of sigmoid(logit) against target, numerically stable."""
    z = logit.data
    data = np.asarray((np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))).sum(),
                      dtype=z.dtype)

    def backward(g):
        _accum(logit, float(g) * (stable_sigmoid(z) - target))

    return _node(data, (logit,), backward)


# ------------------------------------------------------------ fused layers

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding=(0, 0)) -> Tensor:
    """Cross-correlation of x [C, T, F] with weight [Co, C, kh, kw]."""
    if isinstance(padding, int):
        padding = (padding, padding)
    c_in, t_in, f_in = x.data.shape
    c_out, c_w, kh, kw = weight.data.shape
    if c_w != c_in:
        raise ShapeError(f"conv2d input has {c_in} channels, kernel expects {c_w}")
    pt, pf = padding
    t_out = (t_in + 2 * pt - kh) // stride + 1
    f_out = (f_in + 2 * pf - kw) // stride + 1
    if t_out < 1 or f_out < 1:
        raise ShapeError(f"kernel {kh}x{kw} does not fit padded input {t_in}x{f_in}")

    xp = np.pad(x.data, ((0, 0), (pt, pt), (pf, pf)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # [C, t_out, f_out, kh, kw]
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(t_out * f_out, c_in * kh * kw)
    w_mat = weight.data.reshape(c_out, -1)
    out2 = cols @ w_mat.T
    if bias is not None:
        out2 = out2 + bias.data
    data = out2.reshape(t_out, f_out, c_out).transpose(2, 0, 1)

    def backward(g):
        g2 = g.transpose(1, 2, 0).reshape(t_out * f_out, c_out)
        _accum(weight, (g2.T @ cols).reshape(weight.data.shape))
        if bias is not None:
            _accum(bias, g2.sum(axis=0))
        if x.requires_grad:
            dcols = g2 @ w_mat
            dwin = dcols.reshape(t_out, f_out, c_in, kh, kw)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + t_out * stride:stride, j:j + f_out * stride:stride] += \
                        dwin[:, :, :, i, j].transpose(2, 0, 1)
            _accum(x, dxp[:, pt:pt + t_in, pf:pf + f_in])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(data, parents, backward)


def maxpool2d(x: Tensor, window: int = 2, stride: int | None = None) -> Tensor:
    """Max pooling with ceil-mode output (odd tails padded with -inf)."""
    if stride is None:
        stride = window
    if stride != window:
        raise ShapeError("maxpool2d supports stride == window only")
    c, t_in, f_in = x.data.shape
    t_out = -(-t_in // window)
    f_out = -(-f_in // window)
    xp = np.full((c, t_out * window, f_out * window), -np.inf, dtype=x.data.dtype)
    xp[:, :t_in, :f_in] = x.data
    tiles = xp.reshape(c, t_out, window, f_out, window).transpose(0, 1, 3, 2, 4)
    tiles = tiles.reshape(c, t_out, f_out, window * window)
    argmax = tiles.argmax(axis=3)
    data = np.take_along_axis(tiles, argmax[..., None], axis=3)[..., 0]

    def backward(g):
        dtiles = np.zeros((c, t_out, f_out, window * window), dtype=x.data.dtype)
        np.put_along_axis(dtiles, argmax[..., None], g[..., None], axis=3)
        dxp = dtiles.reshape(c, t_out, f_out, window, window).transpose(0, 1, 3, 2, 4)
        dxp = dxp.reshape(c, t_out * window, f_out * window)
        _accum(x, dxp[:, :t_in, :f_in])

    return _node(data, (x,), backward)


def conv1d_same(x: Tensor, weight: Tensor) -> Tensor:
    """Same-length 1-D cross-correlation: x [U] with weight [C, k] -> [U, C]."""
    (u,) = x.data.shape
    c, k = weight.data.shape
    left = (k - 1) // 2
    right = k - 1 - left
    xp = np.pad(x.data, (left, right))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k)  # [U, k]
    data = windows @ weight.data.T  # [U, C]

    def backward(g):
        _accum(weight, g.T @ windows)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            dwin = g @ weight.data  # [U, k]
            for j in range(k):
                dxp[j:j + u] += dwin[:, j]
            _accum(x, dxp[left:left + u])

    return _node(data, (x, weight), backward)


# ------------------------------------------------------------------- LSTM

def _lstm_scan(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
               h0: np.ndarray, c0: np.ndarray):
    """Run an LSTM over time; returns (h, cache arrays for backward)."""
    t_len = x.shape[0]
    hidden = wh.shape[0]
    xw = x @ wx + b  # [T, 4H]
    h = np.zeros((t_len, hidden), dtype=x.dtype)
    c = np.zeros((t_len, hidden), dtype=x.dtype)
    gi = np.zeros((t_len, hidden), dtype=x.dtype)
    gf = np.zeros((t_len, hidden), dtype=x.dtype)
    gg = np.zeros((t_len, hidden), dtype=x.dtype)
    go = np.zeros((t_len, hidden), dtype=x.dtype)
    h_prev, c_prev = h0, c0
    for t in range(t_len):
        gates = xw[t] + h_prev @ wh
        gi[t] = stable_sigmoid(gates[:hidden])
        gf[t] = stable_sigmoid(gates[hidden:2 * hidden])
        gg[t] = np.tanh(gates[2 * hidden:3 * hidden])
        go[t] = stable_sigmoid(gates[3 * hidden:])
        c[t] = gf[t] * c_prev + gi[t] * gg[t]
        h[t] = go[t] * np.tanh(c[t])
        h_prev, c_prev = h[t], c[t]
    return h, c, (gi, gf, gg, go)


def _lstm_backward(x, wx, wh, h, c, gates, h0, c0, dh_out, dh_last, dc_last):
    """BPTT for _lstm_scan; dh_out is [T, H] gradient on every h_t."""
    gi, gf, gg, go = gates
    t_len, hidden = h.shape
    tc = np.tanh(c)
    d_gates = np.zeros((t_len, 4 * hidden), dtype=x.dtype)
    dh_next = dh_last.copy()
    dc_next = dc_last.copy()
    for t in range(t_len - 1, -1, -1):
        dh = dh_out[t] + dh_next
        do = dh * tc[t]
        dc = dc_next + dh * go[t] * (1.0 - tc[t] ** 2)
        c_prev = c[t - 1] if t > 0 else c0
        di = dc * gg[t]
        df = dc * c_prev
        dg = dc * gi[t]
        dc_next = dc * gf[t]
        dgate = np.concatenate([
            di * gi[t] * (1.0 - gi[t]),
            df * gf[t] * (1.0 - gf[t]),
            dg * (1.0 - gg[t] ** 2),
            do * go[t] * (1.0 - go[t]),
        ])
        d_gates[t] = dgate
        dh_next = dgate @ wh.T
    dx = d_gates @ wx.T
    dwx = x.T @ d_gates
    h_prevs = np.concatenate([h0[None, :], h[:-1]], axis=0)
    dwh = h_prevs.T @ d_gates
    db = d_gates.sum(axis=0)
    dh0 = dh_next
    dc0 = dc_next
    return dx, dwx, dwh, db, dh0, dc0


def lstm_layer(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
               reverse: bool = False) -> Tensor:
    """Unidirectional LSTM over x [T, D] -> hidden states [T, H].

    With reverse=True the scan runs right to left and the output stays in
    input time order. Initial states are zero. One graph node; backward is
    hand-rolled BPTT.
    """
    t_len, d_in = x.data.shape
    hidden = wh.data.shape[0]
    if wx.data.shape != (d_in, 4 * hidden) or b.data.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm_layer shapes: x {x.data.shape}, wx {wx.data.shape}, "
            f"wh {wh.data.shape}, b {b.data.shape}")
    xs = x.data[::-1] if reverse else x.data
    h0 = np.zeros(hidden, dtype=x.data.dtype)
    c0 = np.zeros(hidden, dtype=x.data.dtype)
    h, c, gates = _lstm_scan(xs, wx.data, wh.data, b.data, h0, c0)
    data = h[::-1].copy() if reverse else h

    def backward(g):
        dh_out = g[::-1] if reverse else g
        dx, dwx, dwh, db, _, _ = _lstm_backward(
            xs, wx.data, wh.data, h, c, gates, h0, c0, dh_out,
            np.zeros(hidden, dtype=x.data.dtype), np.zeros(hidden, dtype=x.data.dtype))
        _accum(x, dx[::-1] if reverse else dx)
        _accum(wx, dwx)
        _accum(wh, dwh)
        _accum(b, db)

    return _node(data, (x, wx, wh, b), backward)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """One LSTM step; returns [1, 2H] = concat(h_t, c_t) along axis 1."""
    if x.data.ndim != 2 or x.data.shape[0] != 1:
        raise ShapeError(f"lstm_cell expects x of shape (1, D), got {x.data.shape}")
    hidden = wh.data.shape[0]
    if h_prev.data.shape != (1, hidden) or c_prev.data.shape != (1, hidden):
        raise ShapeError("lstm_cell state shapes must be (1, H)")
    if wx.data.shape != (x.data.shape[1], 4 * hidden):
        raise ShapeError(f"lstm_cell wx shape {wx.data.shape} does not match input")
    h, c, gates = _lstm_scan(x.data, wx.data, wh.data, b.data,
                             h_prev.data[0], c_prev.data[0])
    data = np.concatenate([h, c], axis=1)

    def backward(g):
        dh_out = g[:, :hidden]
        dc_last = g[0, hidden:]
        dx, dwx, dwh, db, dh0, dc0 = _lstm_backward(
            x.data, wx.data, wh.data, h, c, gates,
            h_prev.data[0], c_prev.data[0], dh_out,
            np.zeros(hidden, dtype=x.data.dtype), dc_last)
        _accum(x, dx)
        _accum(h_prev, dh0[None, :])
        _accum(c_prev, dc0[None, :])
        _accum(wx, dwx)
        _accum(wh, dwh)
        _accum(b, db)

    return _node(data, (x, h_prev, c_prev, wx, wh, b), backward)


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step returning (h_t, c_t) separately."""
    hidden = wh.data.shape[0]
    hc = lstm_cell(x, h_prev, c_prev, wx, wh, b)
    return hc[:, :hidden], hc[:, hidden:]


def bilstm_layer(x: Tensor, fwd: dict, bwd: dict) -> Tensor:
    """Bidirectional LSTM: [T, D] -> [T, 2H], forward half then backward half."""
    h_f = lstm_layer(x, fwd["wx"], fwd["wh"], fwd["b"], reverse=False)
    h_b = lstm_layer(x, bwd["wx"], bwd["wh"], bwd["b"], reverse=True)
    return concat([h_f, h_b], axis=1)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x [T, Din] @ weight [Din, Dout] + bias [Dout]."""
    return add(matmul(x, weight), bias)
