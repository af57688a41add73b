"""Composite SINet blocks: CBR, SE, DSConv+SE, S2-block, S2-module, decoders."""

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import functional as F
from .errors import ConfigError, DimensionError
from .nn import BatchNorm2d, Module, PReLU, conv
from .tensor import Tensor

VALID_CONV_KERNELS = (3, 5)
VALID_POOL_KERNELS = (0, 1, 2, 4, 8)


class DecoderKind(enum.Enum):
    IB = "IB"
    REVERSE_IB = "ReverseIB"
    REMOVE_IB = "RemoveIB"
    GAU = "GAU"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        for kind in cls:
            if kind.value.lower() == str(text).lower() or kind.name.lower() == str(text).lower():
                return kind
        raise ConfigError(f"unknown decoder kind {text!r}; choose from {[k.value for k in cls]}")


@dataclass(frozen=True)
class S2BlockConfig:
    channels: int
    conv_kernel: int = 3
    pool_kernel: int = 1
    factorized: bool = False

    def __post_init__(self):
        if self.conv_kernel not in VALID_CONV_KERNELS:
            raise ConfigError(f"conv_kernel must be one of {VALID_CONV_KERNELS}")
        if self.pool_kernel not in VALID_POOL_KERNELS:
            raise ConfigError(f"pool_kernel must be one of {VALID_POOL_KERNELS}")


@dataclass(frozen=True)
class S2ModuleConfig:
    in_channels: int
    out_channels: int
    block_a: tuple = (3, 1)
    block_b: tuple = (5, 1)
    groups: int = None
    residual: bool = None
    factorized: bool = False

    def __post_init__(self):
        if self.out_channels % 2:
            raise ConfigError("S2-module output channels must be even")
        half = self.out_channels // 2
        if self.groups is None:
            even = self.in_channels % 2 == 0 and half % 2 == 0
            object.__setattr__(self, "groups", 2 if even else 1)
        if self.in_channels % self.groups or half % self.groups:
            raise ConfigError(f"groups={self.groups} must divide {self.in_channels} and {half}")
        if self.residual is None:
            object.__setattr__(self, "residual", self.in_channels == self.out_channels)
        if self.residual and self.in_channels != self.out_channels:
            raise ConfigError(
                f"residual needs in_channels == out_channels, got {self.in_channels} -> {self.out_channels}"
            )

    def block_configs(self):
        half = self.out_channels // 2
        return tuple(S2BlockConfig(half, k, p, self.factorized) for k, p in (self.block_a, self.block_b))


class CBR(Module):
    """3x3 conv (stride 2 by default) -> BN -> PReLU."""

    def __init__(self, cin, cout, rng, stride=2, k=3):
        super().__init__()
        self.conv = conv(rng, cin, cout, k=k, stride=stride)
        self.bn = BatchNorm2d(cout)
        self.act = PReLU(cout)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))

    def out_shape(self, in_shape):
        return self.conv.out_shape(in_shape)

    def macs(self, in_shape):
        return self.conv.macs(in_shape)


class SEBlock(Module):
    """Squeeze-and-excitation: pool -> FC reduce -> PReLU -> FC expand -> sigmoid gate."""

    def __init__(self, channels, rng, reduction=4):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.channels = channels
        self.reduce = conv(rng, channels, hidden, k=1, bias=True)
        self.act = PReLU(hidden)
        self.expand = conv(rng, hidden, channels, k=1, bias=True)

    def gate(self, x):
        return F.sigmoid(self.expand(self.act(self.reduce(F.global_avg_pool(x)))))

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise DimensionError(f"SE expects {self.channels} channels, got {x.shape[1]}", axis="channels")
        return x * self.gate(x)

    def macs(self, in_shape):
        c = in_shape[0]
        return self.reduce.macs((c, 1, 1)) + self.expand.macs((self.reduce.spec.out_channels, 1, 1))


class DSConvSE(Module):
    """Depthwise 3x3 (stride 2) -> BN -> PReLU -> pointwise -> BN -> SE -> PReLU."""

    def __init__(self, cin, cout, rng, stride=2, se_reduction=4):
        super().__init__()
        self.dw = conv(rng, cin, cin, k=3, stride=stride, groups=cin)
        self.bn1 = BatchNorm2d(cin)
        self.act1 = PReLU(cin)
        self.pw = conv(rng, cin, cout, k=1)
        self.bn2 = BatchNorm2d(cout)
        self.se = SEBlock(cout, rng, se_reduction)
        self.act2 = PReLU(cout)

    def forward(self, x):
        y = self.act1(self.bn1(self.dw(x)))
        return self.act2(self.se(self.bn2(self.pw(y))))

    def out_shape(self, in_shape):
        return self.pw.out_shape(self.dw.out_shape(in_shape))

    def macs(self, in_shape):
        mid = self.dw.out_shape(in_shape)
        out = self.pw.out_shape(mid)
        return self.dw.macs(in_shape) + self.pw.macs(mid) + self.se.macs(out)


class S2Block(Module):
    """avg-pool(p) -> depthwise(k) -> BN -> PReLU -> pointwise -> upsample -> BN.

    ``p == 0`` is a plain depthwise-separable conv: no pooling, no upsample and
    no factorisation.  With ``factorized`` the k x k depthwise conv becomes
    k x 1 and 1 x k depthwise convs whose outputs are summed.
    """

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        c, k = cfg.channels, cfg.conv_kernel
        self.factorized = cfg.factorized and cfg.pool_kernel > 0
        if self.factorized:
            self.dw_v = conv(rng, c, c, k=(k, 1), groups=c)
            self.dw_h = conv(rng, c, c, k=(1, k), groups=c)
        else:
            self.dw = conv(rng, c, c, k=k, groups=c)
        self.bn1 = BatchNorm2d(c)
        self.act = PReLU(c)
        self.pw = conv(rng, c, c, k=1)
        self.bn2 = BatchNorm2d(c)

    def _depthwise(self, x):
        if self.factorized:
            return self.dw_v(x) + self.dw_h(x)
        return self.dw(x)

    def forward(self, x):
        h, w = x.shape[2:]
        p = self.cfg.pool_kernel
        y = F.avg_pool2d(x, p) if p > 1 else x
        y = self.pw(self.act(self.bn1(self._depthwise(y))))
        if p > 1:
            y = F.bilinear_upsample(y, h, w)
        return self.bn2(y)

    def _squeezed(self, in_shape):
        c, h, w = in_shape
        p = self.cfg.pool_kernel
        if p > 1:
            if p > h or p > w:
                raise ConfigError(f"pool kernel {p} exceeds spatial extent {h}x{w}")
            return c, h // p, w // p
        return in_shape

    def out_shape(self, in_shape):
        self._squeezed(in_shape)
        return in_shape

    def macs(self, in_shape):
        sq = self._squeezed(in_shape)
        if self.factorized:
            dw = self.dw_v.macs(sq) + self.dw_h.macs(sq)
        else:
            dw = self.dw.macs(sq)
        return dw + self.pw.macs(sq)


class S2Module(Module):
    """Group pointwise + shuffle -> two S2-blocks -> concat -> BN (+ residual) -> PReLU."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        half = cfg.out_channels // 2
        self.reduce = conv(rng, cfg.in_channels, half, k=1, groups=cfg.groups)
        self.reduce_bn = BatchNorm2d(half)
        cfg_a, cfg_b = cfg.block_configs()
        self.block_a = S2Block(cfg_a, rng)
        self.block_b = S2Block(cfg_b, rng)
        self.bn = BatchNorm2d(cfg.out_channels)
        self.act = PReLU(cfg.out_channels)

    def forward(self, x):
        if x.shape[1] != self.cfg.in_channels:
            raise DimensionError(
                f"S2-module expects {self.cfg.in_channels} channels, got {x.shape[1]}", axis="channels"
            )
        y = F.channel_shuffle(self.reduce_bn(self.reduce(x)), self.cfg.groups)
        y = self.bn(F.concat([self.block_a(y), self.block_b(y)]))
        if self.cfg.residual:
            y = y + x
        return self.act(y)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.cfg.in_channels:
            raise DimensionError(f"S2-module expects {self.cfg.in_channels} channels, got {c}", axis="channels")
        mid = (self.cfg.out_channels // 2, h, w)
        self.block_a.out_shape(mid)
        self.block_b.out_shape(mid)
        return self.cfg.out_channels, h, w

    def macs(self, in_shape):
        mid = self.reduce.out_shape(in_shape)
        return self.reduce.macs(in_shape) + self.block_a.macs(mid) + self.block_b.macs(mid)


class ConfidenceMaps(NamedTuple):
    probs: Tensor
    confidence: Tensor
    blocking: Tensor


def confidence_maps(logits):
    """Class probabilities, per-pixel max probability ``c`` and blocking map ``1 - c``."""
    probs = F.softmax_channels(logits)
    c = F.max_channels(probs)
    return ConfidenceMaps(probs, c, 1.0 - c)


class Decoder(Module):
    """Fuse upsampled low-resolution logits with a projected high-resolution feature."""

    def __init__(self, high_channels, num_class, kind, rng):
        super().__init__()
        self.kind = DecoderKind.parse(kind)
        self.num_class = num_class
        self.proj = conv(rng, high_channels, num_class, k=1)
        self.proj_bn = BatchNorm2d(num_class)
        if self.kind is DecoderKind.GAU:
            self.gau_conv = conv(rng, num_class, num_class, k=1)
            self.gau_bn = BatchNorm2d(num_class)

    def project(self, high):
        return self.proj_bn(self.proj(high))

    def forward(self, low, high):
        lh, lw = low.shape[2:]
        hh, hw = high.shape[2:]
        if (hh, hw) != (2 * lh, 2 * lw):
            raise ConfigError(f"decoder needs a 2x spatial ratio, got {lh}x{lw} -> {hh}x{hw}")
        if low.shape[1] != self.num_class:
            raise DimensionError(f"low-res input must have {self.num_class} channels", axis="channels")
        up = F.bilinear_upsample(low, hh, hw)
        feat = self.project(high)
        if self.kind is DecoderKind.REMOVE_IB:
            return up + feat
        if self.kind is DecoderKind.GAU:
            gate = F.sigmoid(self.gau_bn(self.gau_conv(F.global_avg_pool(low))))
            return up + gate * feat
        maps = confidence_maps(up)
        weight = maps.blocking if self.kind is DecoderKind.IB else maps.confidence
        return up + weight * feat

    def macs(self, high_shape):
        c, h, w = high_shape
        total = self.proj.macs(high_shape)
        if self.kind is DecoderKind.GAU:
            total += self.gau_conv.macs((self.num_class, 1, 1))
        return total
