"""Dense NCHW tensor engine with reverse-mode gradients.

Implements exactly the operations the segmentation network needs: same-padded
stride-1 convolution, 2x2 max pooling, nearest-neighbour 2x upsampling, ReLU,
sigmoid, channel concatenation, inverted dropout, a summed binary
cross-entropy loss, plus the scalar glue ops (add / scale / tensor_sum) used
to combine losses.  Values live in numpy arrays; feature maps follow the
(batch, channels, height, width) convention.  Parameters default to float32;
the same ops run in float64, which the gradient-check tests rely on.

Gradients flow through a recorded operation graph.  ``backward(loss)``
deposits d loss / d leaf into ``.grad`` of every reachable leaf tensor that
has ``requires_grad`` set, accumulating across calls until the grads are
explicitly zeroed.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BCE_EPS = 1e-7


class Tensor:
    """A node in the operation graph wrapping a dense numpy array.

    Leaf tensors (inputs, parameters) are created directly; interior nodes
    are created by the ops below and carry a backward closure.  Only leaf
    tensors with ``requires_grad`` receive a ``.grad`` buffer.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _op(data, parents, vjp) -> Tensor:
    """Build an interior node; the backward closure is kept only if needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse-mode pass from a scalar loss node.

    Accumulates into ``.grad`` of every reachable requires_grad leaf;
    repeated calls without zeroing add up.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is not None:
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        else:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g


# ---------------------------------------------------------------------------
# network ops


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation with zero same-padding.

    x: (B, C, H, W); weight: (O, C, kh, kw) with odd kh, kw; bias: (O,).
    Output spatial dims equal input spatial dims.  1x1 kernels take a plain
    matmul path; larger kernels go through im2col, with the column buffer
    kept for the backward pass.
    """
    if x.data.ndim != 4:
        raise ValueError(f"conv2d expects a 4-d input, got shape {x.data.shape}")
    B, C, H, W = x.data.shape
    O, Ci, kh, kw = weight.data.shape
    if Ci != C:
        raise ValueError(f"conv2d channel mismatch: input has {C} channels, kernel expects {Ci}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernels must have odd spatial dims, got {kh}x{kw}")
    if bias.data.shape != (O,):
        raise ValueError(f"conv2d bias shape {bias.data.shape} does not match {O} output channels")

    if kh == 1 and kw == 1:
        x2 = x.data.reshape(B, C, H * W)
        w2 = weight.data.reshape(O, C)
        out = (w2 @ x2).reshape(B, O, H, W) + bias.data[None, :, None, None]

        def vjp1(g):
            g2 = g.reshape(B, O, H * W)
            dw = np.matmul(g2, x2.transpose(0, 2, 1)).sum(axis=0).reshape(O, C, 1, 1)
            db = g.sum(axis=(0, 2, 3))
            dx = (w2.T @ g2).reshape(B, C, H, W) if x.requires_grad else None
            return dx, dw, db

        return _op(out, (x, weight, bias), vjp1)

    ph, pw = kh // 2, kw // 2
    xp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=x.data.dtype)
    xp[:, :, ph : ph + H, pw : pw + W] = x.data
    wmat = weight.data.reshape(O, C * kh * kw)
    # kernel-major im2col: (C*kh*kw, B*H*W) reads the padded planes in raster
    # order, which copies far faster than a pixel-major gather
    cols = np.ascontiguousarray(
        sliding_window_view(xp, (kh, kw), axis=(2, 3)).transpose(1, 4, 5, 0, 2, 3)
    ).reshape(C * kh * kw, B * H * W)
    out = np.ascontiguousarray(
        (wmat @ cols).reshape(O, B, H, W).transpose(1, 0, 2, 3)
    ) + bias.data[None, :, None, None]

    def vjp(g):
        g_km = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(O, B * H * W)
        dw = (g_km @ cols.T).reshape(O, C, kh, kw)
        db = g.sum(axis=(0, 2, 3))
        if not x.requires_grad:
            return None, dw, db
        # input grad = same-padded correlation of g with the flipped kernels
        wfmat = np.ascontiguousarray(
            weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        ).reshape(C, O * kh * kw)
        gp = np.zeros((B, O, H + 2 * ph, W + 2 * pw), dtype=g.dtype)
        gp[:, :, ph : ph + H, pw : pw + W] = g
        gcols = np.ascontiguousarray(
            sliding_window_view(gp, (kh, kw), axis=(2, 3)).transpose(1, 4, 5, 0, 2, 3)
        ).reshape(O * kh * kw, B * H * W)
        dx = np.ascontiguousarray((wfmat @ gcols).reshape(C, B, H, W).transpose(1, 0, 2, 3))
        return dx, dw, db

    return _op(out, (x, weight, bias), vjp)


def maxpool2(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """2x2 max pooling, stride 2.  Returns (output, argmax indices).

    The indices select the winner inside each 2x2 window (0..3, row-major)
    and are what the backward pass routes gradients through.
    """
    B, C, H, W = x.data.shape
    if H % 2 or W % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {H}x{W}")
    win = (
        x.data.reshape(B, C, H // 2, 2, W // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, H // 2, W // 2, 4)
    )
    idx = win.argmax(axis=-1)
    out = win.max(axis=-1)

    def vjp(g):
        dwin = np.zeros_like(win)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        dx = (
            dwin.reshape(B, C, H // 2, W // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(B, C, H, W)
        )
        return (dx,)

    return _op(out, (x,), vjp), idx


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling: each pixel becomes a 2x2 block."""
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def vjp(g):
        B, C, H2, W2 = g.shape
        return (g.reshape(B, C, H2 // 2, 2, W2 // 2, 2).sum(axis=(3, 5)),)

    return _op(out, (x,), vjp)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def vjp(g):
        return (g * (x.data > 0),)

    return _op(out, (x,), vjp)


def _sigmoid_stable(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid_stable(x.data)

    def vjp(g):
        return (g * s * (1.0 - s),)

    return _op(s, (x,), vjp)


def concat_channels(inputs: list[Tensor]) -> Tensor:
    """Concatenate along the channel axis; batch and spatial dims must match."""
    if not inputs:
        raise ValueError("concat_channels needs at least one input")
    b, _, h, w = inputs[0].data.shape
    for k, t in enumerate(inputs[1:], start=1):
        tb, _, th, tw = t.data.shape
        if (tb, th, tw) != (b, h, w):
            raise ValueError(
                f"concat_channels input {k} has batch/spatial dims "
                f"{(tb, th, tw)}, expected {(b, h, w)}"
            )
    out = np.concatenate([t.data for t in inputs], axis=1)
    sizes = [t.data.shape[1] for t in inputs]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(inputs)))

    return _op(out, tuple(inputs), vjp)


def maxpool3_same(x: Tensor) -> Tensor:
    """3x3 max pooling at stride 1 with same padding (inception pool branch).

    Forward runs as a separable max filter; the backward pass recomputes the
    per-window argmax (first occurrence wins, so ties route deterministically)
    and scatter-adds the incoming gradient to each winner.
    """
    B, C, H, W = x.data.shape
    xp = np.full((B, C, H + 2, W + 2), -np.inf, dtype=x.data.dtype)
    xp[:, :, 1 : H + 1, 1 : W + 1] = x.data
    rows = np.maximum(np.maximum(xp[:, :, :H], xp[:, :, 1 : H + 1]), xp[:, :, 2 : H + 2])
    out = np.maximum(np.maximum(rows[:, :, :, :W], rows[:, :, :, 1 : W + 1]), rows[:, :, :, 2 : W + 2])

    def vjp(g):
        # winning column among the three row-max candidates, then the winning
        # row within that column; earlier positions win ties
        r0 = rows[:, :, :, 0:W]
        r1 = rows[:, :, :, 1 : W + 1]
        r2 = rows[:, :, :, 2 : W + 2]
        j = np.where(r1 > r0, 1, 0)
        j = np.where(r2 > np.maximum(r0, r1), 2, j)
        col = j + np.arange(W)
        x0 = np.take_along_axis(xp[:, :, 0:H], col, axis=3)
        x1 = np.take_along_axis(xp[:, :, 1 : H + 1], col, axis=3)
        x2 = np.take_along_axis(xp[:, :, 2 : H + 2], col, axis=3)
        i = np.where(x1 > x0, 1, 0)
        i = np.where(x2 > np.maximum(x0, x1), 2, i)
        flat = (i + np.arange(H)[None, None, :, None]) * (W + 2) + col
        dxp = np.zeros((B, C, (H + 2) * (W + 2)), dtype=g.dtype)
        b_ix = np.arange(B)[:, None, None, None]
        ch_ix = np.arange(C)[None, :, None, None]
        np.add.at(dxp, (b_ix, ch_ix, flat), g)
        return (dxp.reshape(B, C, H + 2, W + 2)[:, :, 1 : H + 1, 1 : W + 1],)

    return _op(out, (x,), vjp)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a seeded generator")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    scale_mask = keep / (1.0 - rate)
    out = x.data * scale_mask

    def vjp(g):
        return (g * scale_mask,)

    return _op(out, (x,), vjp)


def bce_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Binary cross-entropy summed over every element.

    Predictions are clamped to [BCE_EPS, 1-BCE_EPS] before the logs; targets
    must be exactly 0 or 1.
    """
    t = target.data
    if pred.data.shape != t.shape:
        raise ValueError(f"bce_loss shape mismatch: pred {pred.data.shape} vs target {t.shape}")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("bce_loss targets must be exactly 0 or 1")
    pc = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    total = -np.sum(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc), dtype=np.float64)
    out = np.asarray(total, dtype=pred.data.dtype)

    def vjp(g):
        # derivative taken at the clamped value; sigmoid outputs stay interior
        return (g * (pc - t) / (pc * (1.0 - pc)), None)

    return _op(out, (pred, target), vjp)


# ---------------------------------------------------------------------------
# scalar glue


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")

    def vjp(g):
        return g, g

    return _op(a.data + b.data, (a, b), vjp)


def scale(x: Tensor, k: float) -> Tensor:
    def vjp(g):
        return (g * k,)

    return _op(x.data * k, (x,), vjp)


def tensor_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype)

    def vjp(g):
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype),)

    return _op(out, (x,), vjp)
