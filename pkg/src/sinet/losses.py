"""Cross-entropy with an extra term on the ground-truth boundary band."""

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ConfigError, DimensionError, InputError
from .morphology import boundary_band
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.5
    structuring_size: int = 15

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.structuring_size < 1 or self.structuring_size % 2 == 0:
            raise ConfigError("structuring_size must be odd and >= 1")


def _as_masks(gt):
    gt = np.asarray(gt)
    if gt.ndim == 2:
        gt = gt[None]
    if gt.ndim != 3:
        raise InputError(f"ground truth must be (n, h, w), got {gt.shape}")
    if not np.isin(gt, (0, 1)).all():
        raise InputError("ground truth must be binary (0/1)")
    return gt.astype(np.int64)


def pixel_weights(gt, cfg):
    """Per-pixel weight so that the loss is sum(weight * pixel CE).

    Every pixel gets ``1/|P|``; band pixels add ``lam/|B|``.  An empty band
    contributes nothing.
    """
    gt = _as_masks(gt)
    band = np.stack([boundary_band(m, cfg.structuring_size) for m in gt]).astype(bool)
    w = np.full(gt.shape, 1.0 / gt.size)
    nb = band.sum()
    if cfg.lam and nb:
        w = w + band * (cfg.lam / nb)
    return w


def pixel_cross_entropy(logits, gt):
    """Per-pixel CE as a (n, h, w) Tensor."""
    logits = as_tensor(logits)
    gt = np.asarray(gt, dtype=np.int64)
    if logits.ndim != 4 or logits.shape[0] != gt.shape[0] or logits.shape[2:] != gt.shape[1:]:
        raise DimensionError(f"logits {logits.shape} do not match labels {gt.shape}", axis="spatial")
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    np.put_along_axis(onehot, gt[:, None], 1.0, axis=1)
    logp = F.log_softmax_channels(logits)
    picked = logp * onehot
    return picked, onehot


def boundary_weighted_ce(logits, gt, cfg=LossConfig()):
    """Mean CE over all pixels plus ``lam`` times mean CE over the boundary band."""
    gt = _as_masks(gt)
    logits = as_tensor(logits)
    if logits.shape[1] != 2:
        raise DimensionError(f"binary loss needs 2 logit channels, got {logits.shape[1]}", axis="channels")
    picked, _ = pixel_cross_entropy(logits, gt)
    w = pixel_weights(gt, cfg)[:, None].astype(logits.dtype)
    return -(picked * w).sum()


def cross_entropy(logits, labels):
    """Plain mean CE for any number of classes."""
    labels = np.asarray(labels, dtype=np.int64)
    picked, _ = pixel_cross_entropy(logits, labels)
    return -(picked.sum() * (1.0 / labels.size))
