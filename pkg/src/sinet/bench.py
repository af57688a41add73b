"""Wall-clock micro-benchmark of depthwise-separable dilated convolutions.

Timings are informational: they depend on the host and the numpy build.
"""

import csv
import io
import itertools
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import functional as F
from .functional import ConvSpec
from .nn import kaiming_uniform
from .tensor import Tensor, no_grad

FULL_CHANNELS = (32, 128)
FULL_SIZES = (48, 120, 320)
FULL_DILATIONS = (2, 6, 12, 18)


@dataclass(frozen=True)
class BenchRow:
    channels: int
    size: int
    dilation: int
    iterations: int
    min_ms: float
    mean_ms: float
    max_ms: float
    total_ms: float


@dataclass
class BenchReport:
    rows: list

    def records(self):
        return [dict(zip([f.name for f in fields(BenchRow)], astuple(r))) for r in self.rows]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f.name for f in fields(BenchRow)])
        for r in self.rows:
            w.writerow([f"{v:.4f}" if isinstance(v, float) else v for v in astuple(r)])
        return buf.getvalue()


class DilatedSeparable:
    """Depthwise 3x3 dilated conv (same padding) followed by a pointwise conv."""

    def __init__(self, channels, dilation, seed=0):
        rng = np.random.default_rng(seed)
        self.dw_spec = ConvSpec(channels, channels, kernel=3, padding=dilation, dilation=dilation,
                                groups=channels)
        self.pw_spec = ConvSpec(channels, channels, kernel=1)
        self.dw = Tensor(kaiming_uniform(rng, self.dw_spec.weight_shape))
        self.pw = Tensor(kaiming_uniform(rng, self.pw_spec.weight_shape))

    def __call__(self, x):
        with no_grad():
            return F.conv2d(F.conv2d(x, self.dw, spec=self.dw_spec), self.pw, spec=self.pw_spec)


def bench_input(channels, size, seed=0):
    return Tensor(np.random.default_rng(seed).standard_normal((1, channels, size, size)).astype(np.float32))


def bench_dilated(channels, size, dilations, iterations=100, pause=0.0, seed=0, outputs=None):
    """Time ``iterations`` forward passes per dilation rate on a ``(1, c, s, s)`` input.

    ``pause`` seconds are slept between configurations.  When ``outputs`` is a
    dict, the last output of each configuration is stored there by dilation.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    x = bench_input(channels, size, seed)
    rows = []
    for k, d in enumerate(dilations):
        if k and pause:
            time.sleep(pause)
        op = DilatedSeparable(channels, d, seed)
        times = []
        for _ in range(iterations):
            t0 = time.perf_counter()
            y = op(x)
            times.append((time.perf_counter() - t0) * 1e3)
        if outputs is not None:
            outputs[d] = y.data
        rows.append(BenchRow(channels, size, d, iterations, min(times), float(np.mean(times)),
                             max(times), float(np.sum(times))))
    return BenchReport(rows)


def bench_matrix(channels=FULL_CHANNELS, sizes=FULL_SIZES, dilations=FULL_DILATIONS, iterations=100,
                 pause=0.0, seed=0):
    """One row per (channels, size, dilation) combination."""
    rows = []
    for c, s in itertools.product(channels, sizes):
        rows.extend(bench_dilated(c, s, dilations, iterations, pause, seed).rows)
    return BenchReport(rows)
