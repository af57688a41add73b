"""Forward/backward kernels for every layer SINet needs.

All spatial tensors are NCHW.  Kernels preserve the input dtype; convolution
dot products are accumulated in float64 and cast back.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    dilation: tuple = (1, 1)
    groups: int = 1
    has_bias: bool = False

    def __post_init__(self):
        for f in ("kernel", "stride", "padding", "dilation"):
            object.__setattr__(self, f, _pair(getattr(self, f)))
        if self.in_channels <= 0 or self.out_channels <= 0 or self.groups <= 0:
            raise ConfigError("channel and group counts must be positive")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels // self.groups) + self.kernel

    def output_hw(self, h, w):
        (kh, kw), (sh, sw) = self.kernel, self.stride
        (ph, pw), (dh, dw) = self.padding, self.dilation
        oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        ow = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        return oh, ow

    def macs(self, h, w, batch=1):
        """Multiply-accumulates for one forward pass at input size ``h`` x ``w``."""
        oh, ow = self.output_hw(h, w)
        kh, kw = self.kernel
        return batch * self.out_channels * oh * ow * (self.in_channels // self.groups) * kh * kw


def same_padding(kernel, dilation=1):
    kh, kw = _pair(kernel)
    dh, dw = _pair(dilation)
    return dh * (kh - 1) // 2, dw * (kw - 1) // 2


def _check4d(x, what="input"):
    if x.ndim != 4:
        raise DimensionError(f"{what} must be 4-D NCHW, got shape {x.shape}", axis="ndim")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _tap_slices(spec, i, j, oh, ow):
    (sh, sw), (dh, dw) = spec.stride, spec.dilation
    r0, c0 = i * dh, j * dw
    return (slice(r0, r0 + sh * (oh - 1) + 1, sh), slice(c0, c0 + sw * (ow - 1) + 1, sw))


def conv2d(x, weight, bias=None, spec=None):
    """Grouped, strided, dilated 2-D cross-correlation with zero padding."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check4d(x)
    n, c, h, w = x.shape
    if spec is None:
        spec = ConvSpec(c, weight.shape[0], kernel=weight.shape[2:])
    if c != spec.in_channels:
        raise DimensionError(
            f"input has {c} channels, conv expects {spec.in_channels}", axis="channels"
        )
    if weight.shape != spec.weight_shape:
        raise DimensionError(
            f"weight shape {weight.shape} != expected {spec.weight_shape}", axis="weight"
        )
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (spec.out_channels,):
            raise DimensionError(f"bias shape {bias.shape} != ({spec.out_channels},)", axis="bias")
    oh, ow = spec.output_hw(h, w)
    if oh < 1 or ow < 1:
        raise ConfigError(f"conv output would be {oh}x{ow} for input {h}x{w}")

    g = spec.groups
    cg, og = c // g, spec.out_channels // g
    kh, kw = spec.kernel
    ph, pw = spec.padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    xp64 = xp.astype(np.float64, copy=False)
    wd = weight.data.astype(np.float64, copy=False)
    pointwise_per_channel = cg == 1 and og == 1

    out = np.zeros((n, spec.out_channels, oh, ow), dtype=np.float64)
    if pointwise_per_channel:
        for i in range(kh):
            for j in range(kw):
                rs, cs = _tap_slices(spec, i, j, oh, ow)
                out += xp64[:, :, rs, cs] * wd[None, :, 0, i, j, None, None]
    else:
        outg = out.reshape(n, g, og, oh * ow)
        wg = wd.reshape(g, og, cg, kh, kw)
        for i in range(kh):
            for j in range(kw):
                rs, cs = _tap_slices(spec, i, j, oh, ow)
                patch = xp64[:, :, rs, cs].reshape(n, g, cg, oh * ow)
                outg += np.matmul(wg[None, :, :, :, i, j], patch)
    if bias is not None:
        out += bias.data.astype(np.float64)[None, :, None, None]

    def backward(gout):
        go = gout.astype(np.float64, copy=False)
        if bias is not None and bias.requires_grad:
            bias._accumulate(go.sum(axis=(0, 2, 3)))
        need_x, need_w = x.requires_grad, weight.requires_grad
        gxp = np.zeros(xp.shape, dtype=np.float64) if need_x else None
        gw = np.zeros(wd.shape, dtype=np.float64) if need_w else None
        if pointwise_per_channel:
            for i in range(kh):
                for j in range(kw):
                    rs, cs = _tap_slices(spec, i, j, oh, ow)
                    if need_w:
                        gw[:, 0, i, j] = np.einsum("nchw,nchw->c", go, xp64[:, :, rs, cs])
                    if need_x:
                        gxp[:, :, rs, cs] += go * wd[None, :, 0, i, j, None, None]
        else:
            gog = go.reshape(n, g, og, oh * ow)
            wg_ = wd.reshape(g, og, cg, kh, kw)
            gwg = gw.reshape(g, og, cg, kh, kw) if need_w else None
            for i in range(kh):
                for j in range(kw):
                    rs, cs = _tap_slices(spec, i, j, oh, ow)
                    if need_w:
                        patch = xp64[:, :, rs, cs].reshape(n, g, cg, oh * ow)
                        gwg[:, :, :, i, j] = np.einsum("ngop,ngcp->goc", gog, patch)
                    if need_x:
                        gpatch = np.matmul(wg_[None, :, :, :, i, j].transpose(0, 1, 3, 2), gog)
                        gxp[:, :, rs, cs] += gpatch.reshape(n, c, oh, ow)
        if need_w:
            weight._accumulate(gw)
        if need_x:
            x._accumulate(gxp[:, :, ph:ph + h, pw:pw + w])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out.astype(x.dtype, copy=False), parents, backward)


# ---------------------------------------------------------------------------
# pooling / resampling
# ---------------------------------------------------------------------------

def avg_pool2d(x, kernel, stride=None):
    """Non-overlapping mean pooling; ragged right/bottom edges are dropped."""
    x = as_tensor(x)
    _check4d(x)
    p = int(kernel)
    if stride is not None and int(stride) != p:
        raise ConfigError("avg_pool2d supports stride == kernel only")
    if p < 1:
        raise ConfigError(f"pool kernel must be >= 1, got {p}")
    n, c, h, w = x.shape
    if p > h or p > w:
        raise ConfigError(f"pool kernel {p} exceeds spatial extent {h}x{w}")
    if p == 1:
        return Tensor._make(x.data.copy(), (x,), lambda g: x._accumulate(g))
    oh, ow = h // p, w // p
    blocks = x.data[:, :, :oh * p, :ow * p].reshape(n, c, oh, p, ow, p)
    out = blocks.mean(axis=(3, 5), dtype=np.float64).astype(x.dtype)

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        spread = np.broadcast_to(g[:, :, :, None, :, None] / (p * p), (n, c, oh, p, ow, p))
        gx[:, :, :oh * p, :ow * p] = spread.reshape(n, c, oh * p, ow * p)
        x._accumulate(gx)

    return Tensor._make(out, (x,), backward)


def interp_matrix(in_size, out_size, dtype=np.float64):
    """Row-stochastic 1-D linear interpolation matrix, half-pixel centers.

    Source coordinate for output index ``d`` is ``(d + 0.5) * in/out - 0.5``,
    clamped at 0; the upper neighbour is clamped at ``in_size - 1``.
    """
    m = np.zeros((out_size, in_size), dtype=dtype)
    scale = in_size / out_size
    for d in range(out_size):
        src = max((d + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), in_size - 1)
        i1 = min(i0 + 1, in_size - 1)
        t = src - i0
        m[d, i0] += 1.0 - t
        m[d, i1] += t
    return m


def bilinear_upsample(x, out_h, out_w):
    """Bilinear resize (align_corners=False) to ``out_h`` x ``out_w``."""
    x = as_tensor(x)
    _check4d(x)
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = x.shape[2:]
    if (h, w) == (out_h, out_w):
        return Tensor._make(x.data.copy(), (x,), lambda g: x._accumulate(g))
    ry = interp_matrix(h, out_h)
    rx = interp_matrix(w, out_w)
    out = np.matmul(np.matmul(ry, x.data.astype(np.float64)), rx.T)

    def backward(g):
        x._accumulate(np.matmul(np.matmul(ry.T, g.astype(np.float64)), rx))

    return Tensor._make(out.astype(x.dtype), (x,), backward)


def global_avg_pool(x):
    x = as_tensor(x)
    _check4d(x)
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(x.dtype)

    def backward(g):
        x._accumulate(np.broadcast_to(g / (h * w), x.shape))

    return Tensor._make(out, (x,), backward)


# ---------------------------------------------------------------------------
# normalisation and activations
# ---------------------------------------------------------------------------

def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel batch normalisation.

    In training mode batch statistics are used and ``running_mean`` /
    ``running_var`` (plain ndarrays) are updated in place with the unbiased
    variance, as most frameworks do.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _check4d(x)
    if eps < 0 or (eps == 0 and training):
        raise ConfigError(f"batch norm eps must be positive, got {eps}")
    c = x.shape[1]
    for name, v in (("gamma", gamma.data), ("beta", beta.data),
                    ("running_mean", running_mean), ("running_var", running_var)):
        if np.shape(v) != (c,):
            raise DimensionError(f"{name} has shape {np.shape(v)}, expected ({c},)", axis="channels")
    xd = x.data.astype(np.float64)
    if training:
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean = np.asarray(running_mean, dtype=np.float64)
        var = np.asarray(running_var, dtype=np.float64)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[None, :, None, None]) * inv[None, :, None, None]
    gd = gamma.data.astype(np.float64)
    out = xhat * gd[None, :, None, None] + beta.data.astype(np.float64)[None, :, None, None]

    def backward(g):
        g = g.astype(np.float64)
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxhat = g * gd[None, :, None, None]
            if training:
                gx = (gxhat - gxhat.mean(axis=(0, 2, 3), keepdims=True)
                      - xhat * (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True))
                gx *= inv[None, :, None, None]
            else:
                gx = gxhat * inv[None, :, None, None]
            x._accumulate(gx)

    return Tensor._make(out.astype(x.dtype), (x, gamma, beta), backward)


def prelu(x, slope):
    """Per-channel PReLU; ``slope`` has one entry per channel of ``x``."""
    x, slope = as_tensor(x), as_tensor(slope)
    if slope.shape != (x.shape[1],):
        raise DimensionError(f"slope shape {slope.shape} != ({x.shape[1]},)", axis="channels")
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    a = slope.data.reshape(bshape)
    pos = x.data >= 0
    out = np.where(pos, x.data, a * x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.where(pos, g, a * g))
        if slope.requires_grad:
            axes = (0,) + tuple(range(2, x.ndim))
            slope._accumulate(np.where(pos, 0, g * x.data).sum(axis=axes))

    return Tensor._make(out, (x, slope), backward)


def sigmoid(x):
    x = as_tensor(x)
    xd = x.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(xd))
    out = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)

    def backward(g):
        x._accumulate(g * out * (1 - out))

    return Tensor._make(out, (x,), backward)


def softmax_channels(x):
    """Softmax over axis 1."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        x._accumulate(out * (g - (g * out).sum(axis=1, keepdims=True)))

    return Tensor._make(out, (x,), backward)


def log_softmax_channels(x):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse

    def backward(g):
        p = np.exp(out)
        x._accumulate(g - p * g.sum(axis=1, keepdims=True))

    return Tensor._make(out, (x,), backward)


def max_channels(x):
    """Per-pixel maximum over axis 1, keeping the axis.  Ties route to the first."""
    x = as_tensor(x)
    idx = x.data.argmax(axis=1)[:, None]
    out = np.take_along_axis(x.data, idx, axis=1)

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        np.put_along_axis(gx, idx, g, axis=1)
        x._accumulate(gx)

    return Tensor._make(out, (x,), backward)


# ---------------------------------------------------------------------------
# channel plumbing
# ---------------------------------------------------------------------------

def shuffle_permutation(channels, groups):
    """Source index for each output channel of a channel shuffle."""
    if groups < 1 or channels % groups:
        raise ConfigError(f"{channels} channels are not divisible into {groups} groups")
    return np.arange(channels).reshape(groups, channels // groups).T.reshape(-1)


def channel_shuffle(x, groups):
    """Interleave channel groups: input channel g*(C/groups)+i lands at i*groups+g."""
    x = as_tensor(x)
    perm = shuffle_permutation(x.shape[1], groups)
    if groups == 1:
        return Tensor._make(x.data.copy(), (x,), lambda g: x._accumulate(g))
    inverse = np.argsort(perm)
    return Tensor._make(x.data[:, perm], (x,), lambda g: x._accumulate(g[:, inverse]))


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        other[axis] = ref[axis]
        if other != ref:
            raise DimensionError(f"cannot concat shapes {tensors[0].shape} and {t.shape}", axis="spatial")
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor._make(out, tuple(tensors), backward)
