"""Two-stage training, rotation evaluation and the decoder ablation."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .blocks import DecoderKind
from .data import Dataset, rotate_augment, rotate_dataset
from .errors import ConfigError, DivergenceError
from .losses import LossConfig, boundary_weighted_ce
from .metrics import confusion_matrix, iou_per_class
from .model import build_sinet
from .optim import Adam, OptimConfig
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TwoStageSchedule:
    stage1_epochs: int = 300
    stage2_epochs: int = 300
    batch1: int = 36
    batch2: int = 24
    train_rotation: float = 0.0  # max degrees of random rotation applied to training batches

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch1 < 1 or self.batch2 < 1:
            raise ConfigError("batch sizes must be positive")


@dataclass
class TrainReport:
    records: list = field(default_factory=list)  # dicts: epoch, stage, loss, miou
    best_miou: float = float("nan")
    best_state: dict = None

    def losses(self, stage=None):
        return [r["loss"] for r in self.records if stage is None or r["stage"] == stage]


def _batches(n, batch, rng):
    order = rng.permutation(n)
    return [order[i:i + batch] for i in range(0, n, batch)]


def evaluate_miou(model, ds, forward=None, batch=16):
    """Pooled-confusion-matrix mIoU in eval mode."""
    forward = forward or model.forward
    was_training = model.training
    model.eval()
    cm = np.zeros((model.num_class, model.num_class), dtype=np.int64)
    with no_grad():
        for i in range(0, len(ds), batch):
            x = Tensor(ds.images[i:i + batch])
            pred = forward(x).data.argmax(axis=1)
            cm += confusion_matrix(pred, ds.masks[i:i + batch], model.num_class)
    model.train(was_training)
    return float(iou_per_class(cm).mean())


def recalibrate_bn(model, ds, forward=None, batch=32):
    """Replace BN running statistics with averages over ``ds`` under the current
    weights, so eval mode matches what training converged to."""
    from .nn import BatchNorm2d

    forward = forward or model.forward
    bns = [m for m in _modules(model) if isinstance(m, BatchNorm2d)]
    saved = [bn.momentum for bn in bns]
    for bn in bns:
        bn.running_mean[...] = 0
        bn.running_var[...] = 1
    was_training = model.training
    model.train()
    with no_grad():
        for k, i in enumerate(range(0, len(ds), batch)):
            for bn in bns:
                bn.momentum = 1.0 / (k + 1)
            forward(Tensor(ds.images[i:i + batch]))
    for bn, mom in zip(bns, saved):
        bn.momentum = mom
    model.train(was_training)


def _modules(module):
    yield module
    for _, child in module.named_children():
        yield from _modules(child)


def _snapshot(model):
    return {k: np.array(v, copy=True) for k, v in model.state_dict().items()}


def _run_stage(model, ds, stage, epochs, batch, params, forward, optim_cfg, loss_cfg,
               rng, report, rotation, on_epoch):
    opt = Adam(params, optim_cfg)
    best, best_state = -1.0, None
    for epoch in range(1, epochs + 1):
        model.train()
        total, count = 0.0, 0
        for idx in _batches(len(ds), batch, rng):
            images, masks = ds.images[idx], ds.masks[idx]
            if rotation:
                angles = rng.uniform(-rotation, rotation, len(idx))
                pairs = [rotate_augment(im, m, a) for im, m, a in zip(images, masks, angles)]
                images = np.stack([p[0] for p in pairs])
                masks = np.stack([p[1] for p in pairs])
            opt.zero_grad()
            loss = boundary_weighted_ce(forward(Tensor(images)), masks, loss_cfg)
            if not np.isfinite(loss.item()):
                raise DivergenceError(f"stage {stage} epoch {epoch}: loss is {loss.item()}")
            loss.backward()
            try:
                opt.step()
            except DivergenceError as exc:
                raise DivergenceError(f"stage {stage} epoch {epoch}: {exc}") from exc
            total += loss.item() * len(idx)
            count += len(idx)
        recalibrate_bn(model, ds, forward)
        miou = evaluate_miou(model, ds, forward)
        rec = {"epoch": epoch, "stage": stage, "loss": total / count, "miou": miou}
        report.records.append(rec)
        log.debug("stage %d epoch %d loss %.4f miou %.4f", stage, epoch, rec["loss"], miou)
        if on_epoch:
            on_epoch(rec)
        if miou > best:
            best, best_state = miou, _snapshot(model)
    return best, best_state


def train_two_stage(model, ds, schedule=TwoStageSchedule(), optim_cfg=OptimConfig(),
                    loss_cfg=LossConfig(), checkpoint=None, on_epoch=None):
    """Stage 1 trains the encoder through an upsampled auxiliary head; stage 2
    restarts from the best stage-1 encoder and trains everything.

    The best-by-training-mIoU state of each stage is kept; after stage 2 the
    model holds the overall best weights, which are also written to
    ``checkpoint`` when given.
    """
    rng = np.random.default_rng(optim_cfg.seed)
    report = TrainReport()
    if schedule.stage1_epochs:
        enc = [(n, p) for n, p in model.named_parameters() if n.startswith("row")]
        best1, state1 = _run_stage(model, ds, 1, schedule.stage1_epochs, schedule.batch1, enc,
                                   model.aux_forward, optim_cfg, loss_cfg, rng, report,
                                   schedule.train_rotation, on_epoch)
        # restore only the encoder from its best epoch
        model.load_state_dict({k: v for k, v in state1.items() if k.startswith("row")})
        report.best_miou, report.best_state = best1, state1
    if schedule.stage2_epochs:
        best2, state2 = _run_stage(model, ds, 2, schedule.stage2_epochs, schedule.batch2,
                                   list(model.named_parameters()), model.forward, optim_cfg,
                                   loss_cfg, rng, report, schedule.train_rotation, on_epoch)
        model.load_state_dict(state2)
        report.best_miou, report.best_state = best2, state2
    if checkpoint is not None and report.records:
        from .weights import save_weights
        save_weights(model, checkpoint)
    return report


def eval_rotation(model, ds, max_degrees, seed=0):
    """mIoU after rotating each sample by a seeded uniform angle in ``[-x, x]``."""
    return evaluate_miou(model, rotate_dataset(ds, max_degrees, seed))


@dataclass
class AblationResult:
    kinds: list
    angles: list
    seeds: list
    per_seed: dict  # (kind, seed) -> list of mIoU per angle
    train_miou: dict  # (kind, seed) -> final training mIoU

    def table(self):
        """Median over seeds, shape (len(kinds), len(angles))."""
        return np.array([[np.median([self.per_seed[(k, s)][j] for s in self.seeds])
                          for j in range(len(self.angles))] for k in self.kinds])

    def drops(self, kind, lo=0, hi=-1):
        """Per-seed mIoU drop between two angle columns."""
        return [self.per_seed[(kind, s)][lo] - self.per_seed[(kind, s)][hi] for s in self.seeds]

    def median_drop(self, kind, lo=0, hi=-1):
        return float(np.median(self.drops(kind, lo, hi)))

    def records(self):
        out = []
        for k in self.kinds:
            for s in self.seeds:
                for a, v in zip(self.angles, self.per_seed[(k, s)]):
                    out.append({"kind": k.value, "seed": s, "angle": a, "miou": v})
        return out


def ablate_decoders(train_set, val_set=None, kinds=tuple(DecoderKind), angles=(0, 90),
                    seeds=(0,), schedule=TwoStageSchedule(40, 40, 4, 4), optim_cfg=OptimConfig(),
                    loss_cfg=LossConfig(), preset="tiny", table=None, eval_seed=1234):
    """Train one model per (kind, seed) with identical data and schedule, then
    evaluate each under random rotations of every magnitude in ``angles``."""
    val_set = val_set if val_set is not None else train_set
    kinds = [DecoderKind.parse(k) for k in kinds]
    per_seed, train_miou = {}, {}
    for kind in kinds:
        for seed in seeds:
            model = build_sinet(preset, decoder=kind, seed=seed, table=table)
            cfg = OptimConfig(optim_cfg.lr, optim_cfg.weight_decay, optim_cfg.beta1,
                              optim_cfg.beta2, optim_cfg.eps, seed)
            rep = train_two_stage(model, train_set, schedule, cfg, loss_cfg)
            train_miou[(kind, seed)] = rep.best_miou
            per_seed[(kind, seed)] = [eval_rotation(model, val_set, a, seed=eval_seed) for a in angles]
            log.info("%s seed %d: %s", kind.value, seed, per_seed[(kind, seed)])
    return AblationResult(kinds, list(angles), list(seeds), per_seed, train_miou)
