"""Command-line entry point: ``sinet <command> [options]``.

Every command writes records to stdout as an aligned table (default), CSV or
JSON lines (``--format``); ``--figures DIR`` additionally renders PNG figures.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .arch import PRESETS, load_table
from .blocks import DecoderKind
from .errors import SINetError

log = logging.getLogger("sinet")

FORMATS = ("table", "csv", "json-lines")
DEFAULT_INPUTS = {"portrait": ["224x224"], "cityscapes": ["512x2048", "1024x2048"], "tiny": ["64x64"]}


def parse_hw(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h <= 0 or w <= 0:
        raise argparse.ArgumentTypeError(f"sizes must be positive, got {text!r}")
    return h, w


def emit(records, fmt, out=None):
    """Write a list of flat dicts in the chosen format."""
    out = out or sys.stdout
    if not records:
        return
    cols = list(records[0])
    for r in records[1:]:
        cols += [k for k in r if k not in cols]
    if fmt == "json-lines":
        for r in records:
            out.write(json.dumps(r) + "\n")
    elif fmt == "csv":
        w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(records)
    else:
        cells = [[_cell(r.get(c, "")) for c in cols] for r in records]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        out.write("  ".join(c.ljust(wd) for c, wd in zip(cols, widths)).rstrip() + "\n")
        for row in cells:
            out.write("  ".join(v.rjust(wd) if _numeric(v) else v.ljust(wd)
                                for v, wd in zip(row, widths)).rstrip() + "\n")


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _numeric(text):
    try:
        float(text.replace(",", ""))
        return True
    except ValueError:
        return False


def _load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def _figure(args, name):
    if not args.figures:
        return None
    return Path(args.figures) / name


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_summarize(args):
    from .model import CONVENTIONS, build_sinet, count_flops

    table = load_table(args.table) if args.table else None
    model = build_sinet(args.preset, num_class=args.num_class, decoder=args.decoder, table=table)
    name = args.preset if table is None else table.name
    inputs = args.input or [parse_hw(s) for s in DEFAULT_INPUTS.get(name, ["x".join(map(str, model.table.input_hw))])]
    records, totals = [], []
    for hw in inputs:
        summary = count_flops(model, hw, convention=args.convention)
        size = f"{hw[0]}x{hw[1]}"
        for layer in summary.layers:
            records.append({"input": size, "layer": layer.name, "params": layer.params, "macs": layer.macs,
                            **{f"flops_{c}": layer.macs * k for c, k in CONVENTIONS.items()}})
        total = {"input": size, "layer": "TOTAL", "params": summary.total_params, "macs": summary.total_macs,
                 **{f"flops_{c}": summary.flops(c) for c in CONVENTIONS}}
        records.append(total)
        totals.append(total)
        fig = _figure(args, f"summary_{name}_{size}.png")
        if fig:
            from .plotting import plot_summary
            plot_summary(summary, fig, title=f"{name} @ {size}")
    emit(records, args.format)
    if args.format == "table":
        for t in totals:
            print(f"# {name} @ {t['input']}: {t['params']:,} params; "
                  + "; ".join(f"{t[f'flops_{c}'] / 1e9:.4f} GFLOPs ({c})" for c in CONVENTIONS)
                  + f"; selected convention: {args.convention}")
    return 0


def cmd_infer(args):
    from . import functional as F
    from .imageio import read_pnm, to_chw, write_mask
    from .tensor import Tensor, no_grad
    from .weights import load_weights

    model = load_weights(args.weights).eval()
    img = read_pnm(args.image)
    x = to_chw(img)[None].astype(model.classifier.weight.dtype)
    h, w = x.shape[2:]
    d = model.downsample
    # resample to the nearest size the encoder accepts, then back to the input size
    hh, ww = max(d, round(h / d) * d), max(d, round(w / d) * d)
    with no_grad():
        t = Tensor(x)
        if (hh, ww) != (h, w):
            t = F.bilinear_upsample(t, hh, ww)
        logits = F.bilinear_upsample(model(t), h, w)
    mask = logits.data.argmax(axis=1)[0]
    if model.num_class == 2:
        write_mask(args.out, mask.astype(np.uint8))
    else:
        from .imageio import write_pnm
        write_pnm(args.out, mask.astype(np.uint8))
    emit([{"image": str(args.image), "out": str(args.out), "height": h, "width": w,
           "foreground_fraction": float((mask > 0).mean())}], args.format)
    return 0


def _dataset(cfg):
    from .data import ToyDatasetConfig, make_toy_dataset
    return make_toy_dataset(ToyDatasetConfig(**cfg))


def _training_parts(cfg):
    from .losses import LossConfig
    from .optim import OptimConfig
    from .train import TwoStageSchedule
    return (TwoStageSchedule(**cfg.get("schedule", {})), OptimConfig(**cfg.get("optim", {})),
            LossConfig(**cfg.get("loss", {})))


def cmd_train_toy(args):
    from .model import build_sinet
    from .train import train_two_stage

    cfg = _load_config(args.config)
    ds = _dataset(cfg.get("dataset", {}))
    schedule, optim_cfg, loss_cfg = _training_parts(cfg)
    table = load_table(cfg["table"]) if "table" in cfg else None
    model = build_sinet(cfg.get("preset", "tiny"), decoder=cfg.get("decoder", "IB"),
                        seed=cfg.get("seed", 0), table=table)
    checkpoint = args.checkpoint or cfg.get("checkpoint")
    report = train_two_stage(model, ds, schedule, optim_cfg, loss_cfg, checkpoint=checkpoint,
                             on_epoch=lambda r: log.info("stage %(stage)d epoch %(epoch)d loss %(loss).4f "
                                                         "miou %(miou).4f", r))
    emit(report.records, args.format)
    if args.format == "table":
        print(f"# best training mIoU {report.best_miou:.4f}"
              + (f"; checkpoint {checkpoint}" if checkpoint else ""))
    fig = _figure(args, "training.png")
    if fig and report.records:
        from .plotting import plot_training
        plot_training(report.records, fig)
    return 0


def cmd_ablate(args):
    from .train import ablate_decoders

    cfg = _load_config(args.config)
    train_set = _dataset(cfg.get("train", {}))
    val_set = _dataset(cfg["val"]) if "val" in cfg else None
    schedule, optim_cfg, loss_cfg = _training_parts(cfg)
    table = load_table(cfg["table"]) if "table" in cfg else None
    res = ablate_decoders(train_set, val_set, kinds=cfg.get("kinds", [k.value for k in DecoderKind]),
                          angles=cfg.get("angles", [0, 90]), seeds=cfg.get("seeds", [0]),
                          schedule=schedule, optim_cfg=optim_cfg, loss_cfg=loss_cfg,
                          preset=cfg.get("preset", "tiny"), table=table,
                          eval_seed=cfg.get("eval_seed", 1234))
    records = res.records()
    med = res.table()
    for i, k in enumerate(res.kinds):
        for j, a in enumerate(res.angles):
            records.append({"kind": k.value, "seed": "median", "angle": a, "miou": float(med[i, j])})
    emit(records, args.format)
    if args.format == "table":
        for k in res.kinds:
            print(f"# {k.value}: median drop {res.angles[0]} -> {res.angles[-1]} deg = {res.median_drop(k):.4f}")
    fig = _figure(args, "ablation.png")
    if fig:
        from .plotting import plot_ablation
        plot_ablation(res, fig)
    return 0


def cmd_bench(args):
    from .bench import FULL_CHANNELS, FULL_DILATIONS, FULL_SIZES, bench_matrix

    cfg = _load_config(args.config) if args.config else {}
    report = bench_matrix(cfg.get("channels", FULL_CHANNELS), cfg.get("sizes", FULL_SIZES),
                          cfg.get("dilations", FULL_DILATIONS), cfg.get("iterations", 100),
                          cfg.get("pause", 0.0), cfg.get("seed", 0))
    emit(report.records(), args.format)
    if cfg.get("csv"):
        Path(cfg["csv"]).write_text(report.to_csv())
    fig = _figure(args, "bench.png")
    if fig:
        from .plotting import plot_bench
        plot_bench(report, fig)
    return 0


def cmd_datagen(args):
    from . import datagen as D

    if args.action == "expand":
        spec = D.CropSpec(args.scale_w, args.scale_h, args.down_shift)
        boxes = D.read_boxes(args.boxes)
        rects = {k: D.expand_face_box(b, args.image_size, spec) for k, b in boxes.items()}
        if args.manifest_out:
            D.write_manifest([D.ManifestEntry(k, args.image_pattern.format(id=k), args.mask_pattern.format(id=k), r)
                              for k, r in rects.items()], args.manifest_out)
        emit([{"id": k, **r._asdict()} for k, r in rects.items()], args.format)
    elif args.action == "crop":
        from .imageio import read_mask, read_pnm, write_mask, write_pnm

        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        base = Path(args.manifest).parent
        records = []
        for e in D.read_manifest(args.manifest):
            img, mask = D.crop_pair(read_pnm(base / e.image), read_mask(base / e.mask), e.rect)
            ext = ".pgm" if img.ndim == 2 else ".ppm"
            write_pnm(out_dir / f"{e.id}{ext}", img)
            write_mask(out_dir / f"{e.id}_mask.pgm", mask)
            records.append({"id": e.id, **e.rect._asdict(), "image": f"{e.id}{ext}", "mask": f"{e.id}_mask.pgm"})
        emit(records, args.format)
    else:
        entries = D.read_manifest(args.manifest)
        review = D.review_manifest(entries, D.read_decisions(args.decisions))
        if args.out:
            done = {e.id: e for e in review.accepted + review.rejected + review.pending}
            D.write_manifest([done[e.id] for e in entries], args.out)
        emit([{"id": e.id, "image": e.image, "mask": e.mask, "decision": e.decision} for e in review.accepted],
             args.format)
        print(f"# accepted {len(review.accepted)}, rejected {len(review.rejected)}, "
              f"pending {len(review.pending)}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS, default="table", help="output format (default: table)")
    common.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="sinet", description="SINet portrait segmentation toolkit")
    sub = p.add_subparsers(dest="command", metavar="command")

    s = sub.add_parser("summarize", parents=[common], help="per-layer parameter and FLOP counts")
    s.add_argument("--preset", choices=PRESETS, default="portrait")
    s.add_argument("--table", metavar="FILE", help="architecture table file instead of a preset")
    s.add_argument("--input", type=parse_hw, action="append", metavar="HxW",
                   help="input size (repeatable); defaults depend on the preset")
    s.add_argument("--convention", choices=("mac", "2mac"), default="mac",
                   help="convention named in the totals line; both are always printed")
    s.add_argument("--decoder", default="IB", type=DecoderKind.parse)
    s.add_argument("--num-class", type=int)
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("infer", parents=[common], help="segment one PGM/PPM image")
    s.add_argument("--weights", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True, help="output mask (PGM, 0/255)")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("train-toy", parents=[common], help="two-stage training on synthetic data")
    s.add_argument("--config", required=True, help="JSON config")
    s.add_argument("--checkpoint", help="override the checkpoint path")
    s.set_defaults(func=cmd_train_toy)

    s = sub.add_parser("ablate-decoders", parents=[common], help="decoder kinds under random rotation")
    s.add_argument("--config", required=True, help="JSON config")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("bench", parents=[common], help="dilated separable conv latency")
    s.add_argument("--config", help="JSON config (defaults: full 24-configuration matrix)")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("datagen", parents=[common], help="portrait crops from face boxes")
    acts = s.add_subparsers(dest="action", metavar="action", required=True)
    a = acts.add_parser("expand", parents=[common], help="face boxes -> crop rectangles")
    a.add_argument("--boxes", required=True, help="CSV of id,x,y,w,h")
    a.add_argument("--image-size", required=True, type=parse_hw, metavar="HxW")
    a.add_argument("--scale-w", type=float, default=2.5)
    a.add_argument("--scale-h", type=float, default=2.5)
    a.add_argument("--down-shift", type=float, default=0.3)
    a.add_argument("--manifest-out", help="also write a pending review manifest")
    a.add_argument("--image-pattern", default="{id}.ppm")
    a.add_argument("--mask-pattern", default="{id}_mask.pgm")
    a = acts.add_parser("crop", parents=[common], help="crop every manifest entry")
    a.add_argument("--manifest", required=True)
    a.add_argument("--out-dir", required=True)
    a = acts.add_parser("review", parents=[common], help="apply accept/reject decisions")
    a.add_argument("--manifest", required=True)
    a.add_argument("--decisions", required=True, help="CSV of id,decision")
    a.add_argument("--out", help="write the reviewed manifest here")
    s.set_defaults(func=cmd_datagen)
    return p


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SINetError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"sinet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
