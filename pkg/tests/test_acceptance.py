"""Headline acceptance checks; each prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from sinet import functional as F
from sinet.blocks import (Decoder, DecoderKind, S2Block, S2BlockConfig, S2Module, S2ModuleConfig,
                          SEBlock, confidence_maps)
from sinet.data import ToyDatasetConfig, make_toy_dataset
from sinet.functional import ConvSpec
from sinet.gradcheck import grad_check
from sinet.losses import LossConfig, boundary_weighted_ce
from sinet.model import build_sinet, count_flops, count_params
from sinet.morphology import boundary_band
from sinet.nn import BatchNorm2d, PReLU
from sinet.tensor import Tensor, no_grad
from sinet.train import TwoStageSchedule, ablate_decoders, evaluate_miou, train_two_stage
from sinet.weights import load_weights, save_weights

from oracles import band_loop

# published reference values
PORTRAIT_PARAMS = 86_900
PORTRAIT_GFLOPS = 0.064
CITY_PARAMS = 120_000
CITY_GFLOPS = 1.2

PORTRAIT_SHAPES = [
    ((3, 224, 224), (12, 112, 112)), ((12, 112, 112), (16, 56, 56)), ((16, 56, 56), (48, 56, 56)),
    ((48, 56, 56), (48, 56, 56)), ((64, 56, 56), (48, 28, 28)), ((48, 28, 28), (96, 28, 28)),
] + [((96, 28, 28), (96, 28, 28))] * 7 + [((144, 28, 28), (2, 28, 28))]

CITY_SHAPES = [
    ((3, 1024, 2048), (16, 512, 1024)), ((16, 512, 1024), (20, 256, 512)), ((20, 256, 512), (24, 128, 256)),
    ((24, 128, 256), (60, 128, 256)), ((60, 128, 256), (60, 128, 256)), ((60, 128, 256), (60, 128, 256)),
    ((84, 128, 256), (60, 64, 128)), ((60, 64, 128), (84, 64, 128)), ((84, 64, 128), (84, 64, 128)),
    ((84, 64, 128), (84, 64, 128)), ((84, 64, 128), (84, 64, 128)), ((84, 64, 128), (108, 64, 128)),
] + [((108, 64, 128), (108, 64, 128))] * 5 + [((168, 64, 128), (20, 64, 128))]


def rel(value, ref):
    return abs(value - ref) / ref


def test_portrait_parameter_count(criterion):
    t = time.perf_counter()
    n = count_params(build_sinet("portrait")).total_params
    dt = time.perf_counter() - t
    criterion("portrait parameters", rel(n, PORTRAIT_PARAMS) <= 0.05 and dt < 1.0,
              f"{n:,} vs {PORTRAIT_PARAMS:,} ({100 * (n / PORTRAIT_PARAMS - 1):+.1f}%, tol 5%), {dt:.2f}s")


def test_portrait_flops(criterion, capsys):
    t = time.perf_counter()
    model = build_sinet("portrait")
    g = {c: count_flops(model, (224, 224), c).total_flops / 1e9 for c in ("mac", "2mac")}
    dt = time.perf_counter() - t
    best = min(g, key=lambda c: rel(g[c], PORTRAIT_GFLOPS))
    both = ", ".join(f"{c}={v:.4f}G" for c, v in g.items())
    criterion("portrait FLOPs @224x224", rel(g[best], PORTRAIT_GFLOPS) <= 0.15 and dt < 1.0,
              f"{both}; best '{best}' {100 * (g[best] / PORTRAIT_GFLOPS - 1):+.1f}% vs {PORTRAIT_GFLOPS}G "
              f"(tol 15%), {dt:.2f}s")


def test_cityscapes_cost(criterion):
    t = time.perf_counter()
    model = build_sinet("cityscapes")
    n = count_params(model).total_params
    sizes = {"2048x512": (512, 2048), "2048x1024": (1024, 2048)}
    g = {k: count_flops(model, hw).total_flops / 1e9 for k, hw in sizes.items()}
    dt = time.perf_counter() - t
    hits = [k for k, v in g.items() if rel(v, CITY_GFLOPS) <= 0.20]
    flops = ", ".join(f"{k}={v:.3f}G ({100 * (v / CITY_GFLOPS - 1):+.1f}%)" for k, v in g.items())
    criterion("cityscapes parameters and FLOPs", rel(n, CITY_PARAMS) <= 0.10 and bool(hits) and dt < 5.0,
              f"{n:,} params ({100 * (n / CITY_PARAMS - 1):+.1f}%, tol 10%); {flops}; "
              f"1.2G matched within 20% at {hits or 'neither'}; {dt:.2f}s")


def test_shape_audit(criterion):
    p = [(tuple(i), tuple(o)) for _, i, o in build_sinet("portrait").row_shapes((224, 224))]
    c = [(tuple(i), tuple(o)) for _, i, o in build_sinet("cityscapes").row_shapes((1024, 2048))]
    bad_p = [k + 1 for k, (a, b) in enumerate(zip(p, PORTRAIT_SHAPES)) if a != b]
    bad_c = [k + 1 for k, (a, b) in enumerate(zip(c, CITY_SHAPES)) if a != b]
    ok = len(p) == 14 and len(c) == 18 and not bad_p and not bad_c
    criterion("shape audit", ok, f"portrait {len(p) - len(bad_p)}/14 rows exact, "
                                 f"cityscapes {len(c) - len(bad_c)}/18 rows exact")


# ---------------------------------------------------------------- gradient suite

SEEDS = range(20)
CONV_VARIANTS = {
    "3x3 s2 dense": dict(cin=3, cout=4, kernel=3, stride=2, padding=1),
    "3x3 s2 depthwise": dict(cin=4, cout=4, kernel=3, stride=2, padding=1, groups=4),
    "1x1 pointwise": dict(cin=4, cout=6, kernel=1),
    "1x1 grouped": dict(cin=4, cout=6, kernel=1, groups=2),
    "1x1 bias": dict(cin=4, cout=2, kernel=1, has_bias=True),
    "3x3 bias": dict(cin=2, cout=2, kernel=3, padding=1, has_bias=True),
    "5x5 depthwise": dict(cin=3, cout=3, kernel=5, padding=2, groups=3),
    "5x1 depthwise": dict(cin=3, cout=3, kernel=(5, 1), padding=(2, 0), groups=3),
    "1x5 depthwise": dict(cin=3, cout=3, kernel=(1, 5), padding=(0, 2), groups=3),
    "3x3 d2 depthwise": dict(cin=3, cout=3, kernel=3, padding=2, dilation=2, groups=3),
}


def _r(rng, *shape):
    return Tensor(rng.standard_normal(shape))


def _conv_case(kw):
    spec = ConvSpec(kw["cin"], kw["cout"], kernel=kw["kernel"], stride=kw.get("stride", 1),
                    padding=kw.get("padding", 0), dilation=kw.get("dilation", 1),
                    groups=kw.get("groups", 1), has_bias=kw.get("has_bias", False))

    def make(rng):
        ins = [_r(rng, 2, spec.in_channels, 6, 6), _r(rng, *spec.weight_shape)]
        if spec.has_bias:
            ins.append(_r(rng, spec.out_channels))
        return (lambda x, w, b=None: F.conv2d(x, w, b, spec)), ins

    return make


def _module_case(build, *shapes, evaluate=False):
    def make(rng):
        m = build(rng).to(np.float64)
        for name, p in m.named_parameters():
            # move PReLU slopes and BN affine terms off their symmetric init
            p.data[...] = p.data + 0.1 * rng.standard_normal(p.data.shape)
        if evaluate:
            # a bias feeding a batch-statistics BN has an identically zero
            # gradient; eval mode with random running stats keeps every
            # parameter's gradient non-trivial
            for name, b in m.named_buffers():
                b[...] = rng.uniform(0.5, 2.0, b.shape) if name.endswith("var") else rng.standard_normal(b.shape)
            m.eval()
        params = [p for _, p in m.named_parameters()]
        ins = [_r(rng, *s) for s in shapes]
        k = len(ins)
        return (lambda *a: m(*a[:k])), ins + params

    return make


def _bn_case(training):
    def make(rng):
        bn = BatchNorm2d(3).to(np.float64)
        bn.running_mean[...] = rng.standard_normal(3)
        bn.running_var[...] = rng.uniform(0.5, 2.0, 3)
        bn.train(training)
        bn.weight.data[...] = rng.standard_normal(3)
        bn.bias.data[...] = rng.standard_normal(3)
        return (lambda x, g, b: bn(x)), [_r(rng, 2, 3, 4, 4), bn.weight, bn.bias]

    return make


def _loss_case(rng):
    gt = np.zeros((2, 12, 12), np.uint8)
    for n in range(2):
        y, x = rng.integers(1, 6, 2)
        gt[n, y:y + 5, x:x + 6] = 1
    return (lambda z: boundary_weighted_ce(z, gt, LossConfig(0.5, 5))), [_r(rng, 2, 2, 12, 12)]


GRAD_CASES = {f"conv2d {k}": _conv_case(v) for k, v in CONV_VARIANTS.items()}
GRAD_CASES.update({
    "avg_pool p2": lambda rng: ((lambda x: F.avg_pool2d(x, 2)), [_r(rng, 2, 3, 8, 8)]),
    "avg_pool p4 ragged": lambda rng: ((lambda x: F.avg_pool2d(x, 4)), [_r(rng, 1, 2, 9, 10)]),
    "bilinear x2": lambda rng: ((lambda x: F.bilinear_upsample(x, 8, 10)), [_r(rng, 2, 2, 4, 5)]),
    "bilinear x4": lambda rng: ((lambda x: F.bilinear_upsample(x, 12, 12)), [_r(rng, 1, 2, 3, 3)]),
    "batch norm train": _bn_case(True),
    "batch norm eval": _bn_case(False),
    "prelu": lambda rng: ((lambda x, a: F.prelu(x, a)), [_r(rng, 2, 3, 4, 4), _r(rng, 3)]),
    "squeeze-excite": _module_case(lambda rng: SEBlock(8, rng), (2, 8, 4, 4)),
    "s2-block k3 p2": _module_case(lambda rng: S2Block(S2BlockConfig(4, 3, 2), rng), (2, 4, 8, 8)),
    "s2-block k5 p4 factorised": _module_case(lambda rng: S2Block(S2BlockConfig(4, 5, 4, True), rng),
                                              (2, 4, 8, 8)),
    "s2-block k3 p0": _module_case(lambda rng: S2Block(S2BlockConfig(4, 3, 0), rng), (2, 4, 6, 6)),
    "s2-module 4->8": _module_case(lambda rng: S2Module(S2ModuleConfig(4, 8, (3, 1), (5, 2)), rng),
                                   (2, 4, 8, 8), evaluate=True),
    "s2-module residual": _module_case(lambda rng: S2Module(S2ModuleConfig(6, 6, (3, 2), (3, 4)), rng),
                                       (2, 6, 8, 8), evaluate=True),
    "boundary loss": _loss_case,
})
for _kind in DecoderKind:
    GRAD_CASES[f"decoder {_kind.value}"] = _module_case(
        lambda rng, k=_kind: Decoder(5, 2, k, rng), (2, 2, 4, 4), (2, 5, 8, 8))


def test_gradient_suite(criterion):
    worst, t = {}, time.perf_counter()
    for name, make in GRAD_CASES.items():
        errs = []
        for seed in SEEDS:
            fn, inputs = make(np.random.default_rng(1000 + seed))
            errs.append(grad_check(fn, inputs, seed=seed, kink_safe=True))
        worst[name] = max(errs)
    top = max(worst, key=worst.get)
    failing = [k for k, v in worst.items() if not v < 1e-4]
    criterion("gradient suite", not failing,
              f"{len(GRAD_CASES)} ops x {len(SEEDS)} seeds, max rel err {worst[top]:.2e} ({top}), "
              f"tol 1e-4{'; failing: ' + ', '.join(failing) if failing else ''}; "
              f"{time.perf_counter() - t:.0f}s")


# ---------------------------------------------------------------- morphology and loss

def test_morphology_oracle_and_loss_closed_forms(criterion):
    rng = np.random.default_rng(7)
    mismatches = 0
    for k in range(200):
        density = rng.uniform(0.05, 0.95)
        m = (rng.random((32, 32)) < density).astype(np.uint8)
        if k % 4 == 0:  # blob-like masks as well as noise
            m = np.zeros((32, 32), np.uint8)
            y, x, h, w = rng.integers(0, 24, 4)
            m[y:y + h + 1, x:x + w + 1] = 1
        mismatches += int(not np.array_equal(boundary_band(m, 15), band_loop(m, 15)))
    gt = np.zeros((1, 64, 64), np.uint8)
    gt[0, 22:42, 22:42] = 1
    z = Tensor(np.zeros((1, 2, 64, 64)))
    l0 = boundary_weighted_ce(z, gt, LossConfig(lam=0.0)).item()
    l5 = boundary_weighted_ce(z, gt, LossConfig(lam=0.5)).item()
    ok = mismatches == 0 and abs(l0 - math.log(2)) <= 1e-6 and abs(l5 - 1.5 * math.log(2)) <= 1e-6
    criterion("morphology oracle and loss closed forms", ok,
              f"{200 - mismatches}/200 bands exact; lam=0 loss {l0:.9f} (ln2 {math.log(2):.9f}); "
              f"lam=0.5 loss {l5:.9f} (1.5 ln2 {1.5 * math.log(2):.9f})")


# ---------------------------------------------------------------- information blocking

def test_information_blocking_invariant(criterion):
    rng = np.random.default_rng(11)
    low = np.zeros((2, 2, 28, 28))
    margin = rng.uniform(-80, 80, (2, 28, 28))
    low[:, 0], low[:, 1] = margin / 2, -margin / 2
    high = rng.standard_normal((2, 48, 56, 56))
    delta = 10.0 * rng.choice([-1.0, 1.0], high.shape)
    up = F.bilinear_upsample(Tensor(low), 56, 56)
    sat = (confidence_maps(up).confidence.data >= 1 - 1e-9)  # (n, 1, h, w)
    results = {}
    for kind in (DecoderKind.IB, DecoderKind.REMOVE_IB):
        d = Decoder(48, 2, kind, np.random.default_rng(3)).to(np.float64).eval()
        d.proj_bn.running_mean[...] = rng.standard_normal(2)
        d.proj_bn.running_var[...] = rng.uniform(0.5, 2, 2)
        with no_grad():
            for sign in (1, -1):
                diff = d(Tensor(low), Tensor(high + sign * delta)).data - d(Tensor(low), Tensor(high)).data
                proj = d.project(Tensor(high + sign * delta)).data - d.project(Tensor(high)).data
                mask = np.broadcast_to(sat, diff.shape)
                results.setdefault(kind, []).append((np.abs(diff[mask]).max(),
                                                     np.abs(diff[mask] - proj[mask]).max(),
                                                     np.abs(proj[mask]).mean()))
    ib_change = max(r[0] for r in results[DecoderKind.IB])
    rm_err = max(r[1] for r in results[DecoderKind.REMOVE_IB])
    rm_mag = min(r[2] for r in results[DecoderKind.REMOVE_IB])
    frac = sat.mean()
    ok = frac > 0.2 and ib_change <= 1e-6 and rm_err <= 1e-9 * max(1.0, rm_mag) and rm_mag > 1.0
    criterion("information-blocking invariant", ok,
              f"{100 * frac:.0f}% saturated pixels; IB max change {ib_change:.1e} (tol 1e-6); "
              f"RemoveIB change = projected perturbation to {rm_err:.1e} (mean |proj| {rm_mag:.2f})")


# ---------------------------------------------------------------- training

def test_toy_overfit(criterion):
    ds = make_toy_dataset(ToyDatasetConfig(8, 64, "portrait", seed=0))
    model = build_sinet("tiny")
    t = time.perf_counter()
    report = train_two_stage(model, ds, TwoStageSchedule(40, 40, 4, 4))
    dt = time.perf_counter() - t
    final = evaluate_miou(model, ds)
    criterion("toy overfit", final > 0.95 and dt <= 300,
              f"training mIoU {final:.4f} (> 0.95) after 40+40 epochs, batch 4, 8 images; {dt:.0f}s (<= 300s)")


def test_rotation_ablation_direction(criterion):
    train = make_toy_dataset(ToyDatasetConfig(16, 64, "portrait", seed=100))
    val = make_toy_dataset(ToyDatasetConfig(32, 64, "portrait", seed=200))
    t = time.perf_counter()
    res = ablate_decoders(train, val, kinds=("IB", "RemoveIB"), angles=(0, 90), seeds=(0, 1, 2),
                          schedule=TwoStageSchedule(40, 40, 4, 4))
    dt = time.perf_counter() - t
    ib, rm = res.median_drop(DecoderKind.IB), res.median_drop(DecoderKind.REMOVE_IB)
    per = {k.value: [round(v, 3) for v in res.drops(k)] for k in res.kinds}
    criterion("rotation-ablation direction", ib <= rm and dt <= 1200,
              f"median mIoU drop 0->90 deg: IB {ib:.4f} vs RemoveIB {rm:.4f}; per-seed drops {per}; {dt:.0f}s")


# ---------------------------------------------------------------- serialization

def test_portrait_weights_round_trip(criterion, tmp_path):
    model = build_sinet("portrait", seed=5)
    # make every tensor non-trivial, including BN statistics
    rng = np.random.default_rng(0)
    for arr in model.state_dict().values():
        arr[...] = rng.standard_normal(arr.shape).astype(arr.dtype)
    path = tmp_path / "portrait.sinw"
    save_weights(model, path)
    back = load_weights(path)
    src, dst = model.state_dict(), back.state_dict()
    same = list(src) == list(dst) and all(
        src[k].dtype == dst[k].dtype and src[k].shape == dst[k].shape and src[k].tobytes() == dst[k].tobytes()
        for k in src)
    save_weights(back, tmp_path / "again.sinw")
    same_file = path.read_bytes() == (tmp_path / "again.sinw").read_bytes()
    criterion("weight container round trip", same and same_file,
              f"{len(src)} tensors bitwise identical: {same}; re-saved file identical: {same_file}")
