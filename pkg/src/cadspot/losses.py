"""Training objective terms as pure functions, with analytic gradients.

The mask losses follow the usual mask-transformer recipe: per-proposal
binary cross-entropy and Dice over primitives, plus a multi-class
cross-entropy for the proposal class. ``instance_set_loss`` matches
proposals to ground truth with :func:`cadspot.assignment.hungarian` first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_nonnegative

PROB_CLAMP = 1e-7
DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class LossWeights:
    cls: float = 0.5
    bce: float = 1.0
    dice: float = 1.0

    def __post_init__(self):
        for name in ("cls", "bce", "dice"):
            check_nonnegative(getattr(self, name), f"lambda_{name}")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_logits(logits, target):
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    single = logits.ndim == 1
    logits2 = logits[None, :] if single else logits
    target = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if target.shape != (logits2.shape[0],):
        raise ValueError(f"targets shape {target.shape} does not match {logits2.shape[0]} rows")
    K = logits2.shape[1]
    if np.any((target < 0) | (target >= K)):
        raise ValueError(f"target outside [0, {K})")
    return logits2, target, single


def cross_entropy_cls(logits, target, class_weight=None) -> float:
    """``-log softmax(logits)[target]``; batches give the weighted mean.

    ``class_weight`` (length K) down-weights classes such as a no-object
    label; the batch mean is normalized by the summed target weights.
    """
    logits, target, _ = _check_logits(logits, target)
    nll = -_log_softmax(logits)[np.arange(len(target)), target]
    w = np.ones(len(target)) if class_weight is None else np.asarray(class_weight, dtype=float)[target]
    return float((w * nll).sum() / w.sum())


def cross_entropy_grad(logits, target, class_weight=None) -> np.ndarray:
    """Gradient of :func:`cross_entropy_cls` with respect to ``logits``."""
    logits2, target, single = _check_logits(logits, target)
    p = np.exp(_log_softmax(logits2))
    p[np.arange(len(target)), target] -= 1.0
    w = np.ones(len(target)) if class_weight is None else np.asarray(class_weight, dtype=float)[target]
    g = p * (w / w.sum())[:, None]
    return g[0] if single else g


def _check_masks(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def bce_mask(pred, gt, clamp: float = PROB_CLAMP) -> float:
    """Mean binary cross-entropy over primitives, probabilities clamped to ``[clamp, 1 - clamp]``."""
    pred, gt = _check_masks(pred, gt)
    if pred.size == 0:
        return 0.0
    p = np.clip(pred, clamp, 1.0 - clamp)
    return float(np.mean(-(gt * np.log(p) + (1.0 - gt) * np.log1p(-p))))


def bce_mask_grad(pred, gt, clamp: float = PROB_CLAMP) -> np.ndarray:
    pred, gt = _check_masks(pred, gt)
    p = np.clip(pred, clamp, 1.0 - clamp)
    g = (p - gt) / (p * (1.0 - p)) / max(pred.size, 1)
    return np.where((pred > clamp) & (pred < 1.0 - clamp), g, 0.0)


def dice_mask(pred, gt, smooth: float = DICE_SMOOTH) -> float:
    """``1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s)``."""
    pred, gt = _check_masks(pred, gt)
    num = 2.0 * float(np.sum(pred * gt)) + smooth
    den = float(np.sum(pred)) + float(np.sum(gt)) + smooth
    return 1.0 - num / den


def dice_mask_grad(pred, gt, smooth: float = DICE_SMOOTH) -> np.ndarray:
    pred, gt = _check_masks(pred, gt)
    num = 2.0 * np.sum(pred * gt) + smooth
    den = np.sum(pred) + np.sum(gt) + smooth
    return -(2.0 * gt * den - num) / den**2


def total_loss(parts, weights: LossWeights = LossWeights()) -> float:
    """Weighted sum of ``(cls, bce, dice)`` parts (tuple or mapping)."""
    if isinstance(parts, dict):
        cls, bce, dice = parts["cls"], parts["bce"], parts["dice"]
    else:
        cls, bce, dice = parts
    return float(weights.cls * cls + weights.bce * bce + weights.dice * dice)


def matching_cost(logits, masks, gt_classes, gt_masks, weights: LossWeights = LossWeights()) -> np.ndarray:
    """``Q x G`` cost used to assign proposals to ground-truth instances."""
    logits = np.asarray(logits, dtype=float)
    masks = np.asarray(masks, dtype=float)
    gt_masks = np.asarray(gt_masks, dtype=float)
    prob = np.exp(_log_softmax(logits))
    cost = -weights.cls * prob[:, np.asarray(gt_classes, dtype=np.int64)]
    for q in range(masks.shape[0]):
        for g in range(gt_masks.shape[0]):
            cost[q, g] += weights.bce * bce_mask(masks[q], gt_masks[g]) + weights.dice * dice_mask(masks[q], gt_masks[g])
    return cost


def instance_set_loss(logits, masks, gt_classes, gt_masks, weights: LossWeights = LossWeights(),
                      no_object_class: int | None = None, no_object_weight: float = 0.1) -> dict:
    """Hungarian-matched loss for one drawing.

    Matched proposals contribute class, BCE and Dice terms. When
    ``no_object_class`` is given, unmatched proposals are pushed toward it
    in the class term with weight ``no_object_weight``.
    """
    from .assignment import hungarian

    logits = np.asarray(logits, dtype=float)
    masks = np.asarray(masks, dtype=float)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)
    gt_masks = np.asarray(gt_masks, dtype=float)
    pairs = hungarian(matching_cost(logits, masks, gt_classes, gt_masks, weights)) if len(gt_classes) else []
    rows = [q for q, _ in pairs]
    cols = [g for _, g in pairs]
    if no_object_class is not None:
        targets = np.full(len(logits), no_object_class, dtype=np.int64)
        targets[rows] = gt_classes[cols]
        cw = np.ones(logits.shape[1])
        cw[no_object_class] = no_object_weight
        l_cls = cross_entropy_cls(logits, targets, cw) if len(logits) else 0.0
    else:
        l_cls = cross_entropy_cls(logits[rows], gt_classes[cols]) if rows else 0.0
    l_bce = float(np.mean([bce_mask(masks[q], gt_masks[g]) for q, g in pairs])) if pairs else 0.0
    l_dice = float(np.mean([dice_mask(masks[q], gt_masks[g]) for q, g in pairs])) if pairs else 0.0
    parts = {"cls": l_cls, "bce": l_bce, "dice": l_dice}
    return {**parts, "total": total_loss(parts, weights), "matches": pairs}
