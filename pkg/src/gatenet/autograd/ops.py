"""Differentiable rank-4 operators (batch, channel, height, width).

Every op takes and returns :class:`Tensor` objects and records a vector-
Jacobian product on the active :class:`GradTape` when any input needs a
gradient.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import expit

from .tensor import Tensor, make_output

BCE_CLAMP = 1e-7


def _check4(x, what="input"):
    if x.ndim != 4:
        raise ValueError(f"{what} must be rank 4 (batch, channels, height, width), got shape {x.shape}")


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(frozen=True)
class ConvSpec:
    """Static geometry of a 2-D convolution."""

    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ValueError(f"invalid convolution geometry {self}")

    def output_size(self, size, kernel):
        span = self.dilation * (kernel - 1) + 1
        out = (size + 2 * self.padding - span) // self.stride + 1
        if out <= 0:
            raise ValueError(
                f"kernel span {span} with padding {self.padding} does not fit spatial size {size}"
            )
        return out


# --------------------------------------------------------------------------
# convolution


def _windows(xp, kh, kw, ho, wo, spec):
    b, c = xp.shape[:2]
    sb, sc, sh, sw = xp.strides
    d, s = spec.dilation, spec.stride
    return as_strided(
        xp,
        shape=(b, c, kh, kw, ho, wo),
        strides=(sb, sc, sh * d, sw * d, sh * s, sw * s),
        writeable=False,
    )


def _wide(a):
    # float32 forward sums are accumulated in float64: long dot products in
    # single precision drift by several ulps from the exact result
    return a.astype(np.float64) if a.dtype == np.float32 else a


def conv2d(x, weight, bias=None, stride=1, padding=0, dilation=1):
    """Cross-correlation of ``x`` with ``weight`` (out, in, kh, kw)."""
    spec = ConvSpec(stride, padding, dilation)
    _check4(x)
    _check4(weight, "weight")
    b, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise ValueError(f"weight expects {ci} input channels, input has {c} (dimension 1)")
    if bias is not None and bias.shape != (o,):
        raise ValueError(f"bias must have shape ({o},), got {bias.shape}")
    ho = spec.output_size(h, kh)
    wo = spec.output_size(w, kw)

    p = spec.padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    inputs = (x, weight) if bias is None else (x, weight, bias)
    if spec.stride == 1 and o * kh * kw <= c:
        return _conv_few_outputs(x, xp, weight, bias, inputs, ho, wo, spec)
    cols = _windows(xp, kh, kw, ho, wo, spec).transpose(1, 2, 3, 0, 4, 5).reshape(c * kh * kw, b * ho * wo)
    wmat = weight.data.reshape(o, -1)
    out = _wide(wmat) @ _wide(cols)
    out = out.reshape(o, b, ho, wo)
    if bias is not None:
        out += bias.data.reshape(o, 1, 1, 1)
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3), dtype=x.dtype)

    def vjp(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (g2 @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        if x.requires_grad:
            d = spec.dilation
            if spec.stride == 1 and o < c:
                # input gradient as a correlation of g with the flipped, transposed kernel:
                # its column matrix has o*k*k rows instead of c*k*k and needs no scatter
                gp = np.pad(g, ((0, 0), (0, 0), (d * (kh - 1),) * 2, (d * (kw - 1),) * 2))
                hp, wp = xp.shape[2:]
                gcols = _windows(gp, kh, kw, hp, wp, ConvSpec(1, 0, d))
                gcols = gcols.transpose(1, 2, 3, 0, 4, 5).reshape(o * kh * kw, b * hp * wp)
                wflip = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)
                gxp = (wflip @ gcols).reshape(c, b, hp, wp)
            else:
                dcols = (wmat.T @ g2).reshape(c, kh, kw, b, ho, wo)
                # accumulate in (c, b, h, w) order to match dcols, transpose once at the end
                gxp = np.zeros((c, b) + xp.shape[2:], dtype=g.dtype)
                s = spec.stride
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i * d: i * d + s * (ho - 1) + 1: s, j * d: j * d + s * (wo - 1) + 1: s] += dcols[:, i, j]
            gx = gxp[:, :, p: p + h, p: p + w] if p else gxp
            gx = np.ascontiguousarray(gx.transpose(1, 0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_output(out, inputs, "conv2d", vjp, spec=spec)


def _conv_few_outputs(x, xp, weight, bias, inputs, ho, wo, spec):
    # stride-1 path for narrow outputs: one matmul of the (o*k*k, c) weight
    # matrix against the padded input, then shift-and-add of o*k*k planes
    b, c, hp, wp = xp.shape
    o, _, kh, kw = weight.shape
    d, p = spec.dilation, spec.padding
    h, w = x.shape[2:]
    xflat = np.ascontiguousarray(xp).reshape(b, c, hp * wp)
    wmat = weight.data.transpose(0, 2, 3, 1).reshape(o * kh * kw, c)
    planes = (_wide(wmat) @ _wide(xflat)).reshape(b, o, kh, kw, hp, wp)
    out = np.zeros((b, o, ho, wo), dtype=planes.dtype)
    for i in range(kh):
        for j in range(kw):
            out += planes[:, :, i, j, i * d: i * d + ho, j * d: j * d + wo]
    if bias is not None:
        out += bias.data.reshape(1, o, 1, 1)
    out = out.astype(x.dtype, copy=False)

    def vjp(g):
        spread = np.zeros((b, o, kh, kw, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                spread[:, :, i, j, i * d: i * d + ho, j * d: j * d + wo] = g
        spread = spread.reshape(b, o * kh * kw, hp * wp)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.einsum("bkn,bcn->kc", spread, xflat, optimize=True)
            gw = gw.reshape(o, kh, kw, c).transpose(0, 3, 1, 2)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gxp = (wmat.T @ spread).reshape(b, c, hp, wp)
            gx = np.ascontiguousarray(gxp[:, :, p: p + h, p: p + w]) if p else gxp
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_output(out, inputs, "conv2d", vjp, spec=spec)


def fold2x2(x):
    """Space-to-depth over 2x2 windows: out[b, 4c+2dy+dx, i, j] = x[b, c, 2i+dy, 2j+dx]."""
    _check4(x)
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"fold2x2 needs even height and width, got {h}x{w}")
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 5, 2, 4).reshape(b, 4 * c, h // 2, w // 2)

    def vjp(g):
        return (_unfold_array(g),)

    return make_output(np.ascontiguousarray(out), (x,), "fold2x2", vjp)


def _unfold_array(a):
    b, c4, h, w = a.shape
    c = c4 // 4
    return np.ascontiguousarray(a.reshape(b, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, c, 2 * h, 2 * w))


def _fold_array(a):
    b, c, h, w = a.shape
    return np.ascontiguousarray(
        a.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 5, 2, 4).reshape(b, 4 * c, h // 2, w // 2)
    )


def unfold2x2(x):
    """Depth-to-space inverse of :func:`fold2x2`."""
    _check4(x)
    if x.shape[1] % 4:
        raise ValueError(f"unfold2x2 needs a channel count divisible by 4, got {x.shape[1]}")

    def vjp(g):
        return (_fold_array(g),)

    return make_output(_unfold_array(x.data), (x,), "unfold2x2", vjp)


def folded_atrous_conv(x, weight, bias=None, dilation=1):
    """Fold, dilated size-preserving convolution, unfold.

    ``weight`` lives in the folded domain: (out, 4*in, k, k) with ``out``
    divisible by 4. The result has the spatial size of ``x`` and out/4
    channels.
    """
    k = weight.shape[-1]
    if weight.shape[-2] != k or k % 2 == 0:
        raise ValueError(f"folded convolution needs an odd square kernel, got {weight.shape[-2:]}")
    if weight.shape[0] % 4:
        raise ValueError(f"folded convolution output channels must be divisible by 4, got {weight.shape[0]}")
    pad = dilation * (k - 1) // 2
    return unfold2x2(conv2d(fold2x2(x), weight, bias, padding=pad, dilation=dilation))


# --------------------------------------------------------------------------
# pointwise


def relu(x):
    mask = x.data > 0

    def vjp(g):
        return (g * mask,)

    return make_output(x.data * mask, (x,), "relu", vjp)


def sigmoid(x):
    y = expit(x.data)

    def vjp(g):
        return (g * y * (1.0 - y),)

    return make_output(y, (x,), "sigmoid", vjp)


def elementwise(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def add(x, y):
    if x.shape != y.shape:
        raise ValueError(f"add needs equal shapes, got {x.shape} and {y.shape}")

    def vjp(g):
        return (g if x.requires_grad else None, g if y.requires_grad else None)

    return make_output(x.data + y.data, (x, y), "add", vjp)


def scale_by_gate(x, gate):
    """Multiply every sample of ``x`` by its own scalar gate.

    ``gate`` is a tensor with one value per sample (shape (b,), (b,1) or
    (b,1,1,1)) or a plain Python number applied to all samples.
    """
    _check4(x)
    b = x.shape[0]
    if not isinstance(gate, Tensor):
        return make_output(x.data * float(gate), (x,), "scale_by_gate", lambda g: (g * float(gate),))
    if gate.size != b:
        raise ValueError(f"gate needs one value per sample ({b}), got shape {gate.shape}")
    gv = gate.data.reshape(b, 1, 1, 1)

    def vjp(g):
        gx = g * gv if x.requires_grad else None
        gg = None
        if gate.requires_grad:
            gg = (g * x.data).sum(axis=(1, 2, 3)).reshape(gate.shape)
        return gx, gg

    return make_output(x.data * gv, (x, gate), "scale_by_gate", vjp)


# --------------------------------------------------------------------------
# pooling and resampling


def global_avg_pool(x):
    _check4(x)
    h, w = x.shape[2:]
    if h < 1 or w < 1:
        raise ValueError("global_avg_pool needs non-empty spatial dims")

    def vjp(g):
        return (np.broadcast_to(g / (h * w), x.shape).copy(),)

    return make_output(x.data.mean(axis=(2, 3), keepdims=True), (x,), "global_avg_pool", vjp)


def max_pool2x2(x):
    _check4(x)
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max_pool2x2 needs even height and width, got {h}x{w}")
    win = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        gw = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        return (gx,)

    return make_output(out, (x,), "max_pool2x2", vjp)


def interp_matrix(src, dst, dtype=np.float64):
    """Linear-interpolation weights (dst, src) with half-pixel centres.

    Source coordinate of output ``i`` is ``(i + 0.5) * src / dst - 0.5``,
    clamped to the valid range, so each row sums to one.
    """
    m = np.zeros((dst, src), dtype=dtype)
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    rows = np.arange(dst)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def bilinear_upsample(x, th, tw):
    """Bilinear resize of ``x`` to (th, tw); target must not be smaller."""
    _check4(x)
    h, w = x.shape[2:]
    if th < h or tw < w:
        raise ValueError(f"upsample target {th}x{tw} is smaller than source {h}x{w}")
    if (th, tw) == (h, w):
        return make_output(x.data.copy(), (x,), "bilinear_upsample", lambda g: (g,))
    ah = interp_matrix(h, th, x.dtype)
    aw = interp_matrix(w, tw, x.dtype)
    out = np.einsum("ih,bchw,jw->bcij", ah, x.data, aw, optimize=True)

    def vjp(g):
        return (np.einsum("ih,bcij,jw->bchw", ah, g, aw, optimize=True),)

    return make_output(out, (x,), "bilinear_upsample", vjp, size=(th, tw))


# --------------------------------------------------------------------------
# structure


def concat_channels(xs):
    xs = list(xs)
    if not xs:
        raise ValueError("concat_channels needs at least one tensor")
    for t in xs:
        _check4(t)
    ref = xs[0].shape
    for k, t in enumerate(xs[1:], 1):
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(f"concat_channels: tensor {k} has shape {t.shape}, incompatible with {ref}")
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def vjp(g):
        return tuple(
            g[:, bounds[k]: bounds[k + 1]] if t.requires_grad else None for k, t in enumerate(xs)
        )

    return make_output(np.concatenate([t.data for t in xs], axis=1), tuple(xs), "concat_channels", vjp)


def channel_slice(x, start, stop):
    _check4(x)
    c = x.shape[1]
    if not 0 <= start < stop <= c:
        raise ValueError(f"channel slice [{start}:{stop}] out of range for {c} channels")

    def vjp(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, start:stop] = g
        return (gx,)

    return make_output(x.data[:, start:stop].copy(), (x,), "channel_slice", vjp)


# --------------------------------------------------------------------------
# reductions and losses


def sum_all(x):
    def vjp(g):
        return (np.broadcast_to(g.reshape(()), x.shape).copy(),)

    return make_output(np.array(x.data.sum(), dtype=x.dtype), (x,), "sum", vjp)


def mean_all(x):
    n = x.size

    def vjp(g):
        return (np.full(x.shape, g.reshape(()) / n, dtype=x.dtype),)

    return make_output(np.array(x.data.mean(), dtype=x.dtype), (x,), "mean", vjp)


def bce(prob, target):
    """Mean binary cross-entropy of probabilities against a {0,1} target.

    Probabilities are clamped to [1e-7, 1-1e-7]; the clamp passes no
    gradient where it is active.
    """
    y = target.data if isinstance(target, Tensor) else np.asarray(target)
    if y.shape != prob.shape:
        raise ValueError(f"target shape {y.shape} does not match prediction shape {prob.shape}")
    y = y.astype(prob.dtype, copy=False)
    p = np.clip(prob.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = p.size
    val = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean()
    inside = (prob.data >= BCE_CLAMP) & (prob.data <= 1.0 - BCE_CLAMP)

    def vjp(g):
        gp = (-(y / p) + (1.0 - y) / (1.0 - p)) / n
        return (g.reshape(()) * gp * inside,)

    return make_output(np.array(val, dtype=prob.dtype), (prob,), "bce", vjp)
