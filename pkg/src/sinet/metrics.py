"""Segmentation metrics: confusion matrix, mIoU and boundary F1."""

import numpy as np

from .errors import DimensionError
from .morphology import boundary_band


def confusion_matrix(pred, gt, num_class):
    """``cm[t, p]`` counts pixels with true class ``t`` predicted as ``p``."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and label {gt.shape} differ", axis="spatial")
    idx = gt.astype(np.int64).ravel() * num_class + pred.astype(np.int64).ravel()
    return np.bincount(idx, minlength=num_class * num_class).reshape(num_class, num_class)


def iou_per_class(cm):
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = tp + fp + fn
    # a class absent from both prediction and label is a perfect match
    return np.where(denom > 0, tp / np.maximum(denom, 1), 1.0)


def miou(pred, gt, num_class=2):
    return float(iou_per_class(confusion_matrix(pred, gt, num_class)).mean())


def boundary_f1(pred, gt, size=15):
    """Foreground F1 restricted to the ground-truth boundary band.

    Accepts single (h, w) maps or (n, h, w) batches; counts are pooled.
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and label {gt.shape} differ", axis="spatial")
    if gt.ndim == 2:
        pred, gt = pred[None], gt[None]
    tp = fp = fn = 0
    for p, g in zip(pred, gt):
        band = boundary_band(g, size).astype(bool)
        p1, g1 = p[band] == 1, g[band] == 1
        tp += int(np.sum(p1 & g1))
        fp += int(np.sum(p1 & ~g1))
        fn += int(np.sum(~p1 & g1))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)
