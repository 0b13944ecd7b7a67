"""Semantic (F1, wF1), instance (AP50, AP75, mAP) and panoptic (PQ, SQ, RQ) scores."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ClassTable, PanopticLabeling
from .sampler import DensePointCloud

AP_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2))


def _check_aligned(a, b, what="labels"):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} ground-truth vs {len(b)} predicted {what}")


# ---------------------------------------------------------------------------
# semantic

@dataclass
class SemanticReport:
    f1: float
    wf1: float
    micro_f1: float
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"f1": self.f1, "wf1": self.wf1, "micro_f1": self.micro_f1,
                "per_class": {str(k): v for k, v in sorted(self.per_class.items())}}


def semantic_f1(gt, pred, lengths, background: int | None = None) -> SemanticReport:
    """Per-class precision/recall/F1 over primitives.

    ``f1`` is the macro mean over classes present in the ground truth,
    ``wf1`` weights each class by its total ground-truth arc length and
    ``micro_f1`` pools counts over those classes. ``background`` is excluded
    from the ground-truth classes.
    """
    gt = np.asarray(gt, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=float)
    _check_aligned(gt, pred)
    _check_aligned(gt, lengths, "lengths")
    classes = [int(c) for c in np.unique(gt) if background is None or c != background]
    per = {}
    tp_all = fp_all = fn_all = 0
    for c in classes:
        tp = int(np.sum((gt == c) & (pred == c)))
        fp = int(np.sum((gt != c) & (pred == c)))
        fn = int(np.sum((gt == c) & (pred != c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per[c] = {"precision": p, "recall": r, "f1": f, "support": tp + fn,
                  "length": float(lengths[gt == c].sum())}
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
    if not classes:
        return SemanticReport(0.0, 0.0, 0.0, per)
    f1 = float(np.mean([per[c]["f1"] for c in classes]))
    w = np.array([per[c]["length"] for c in classes])
    fs = np.array([per[c]["f1"] for c in classes])
    wf1 = float((w * fs).sum() / w.sum()) if w.sum() > 0 else f1
    denom = tp_all + 0.5 * (fp_all + fn_all)
    micro = tp_all / denom if denom else 0.0
    return SemanticReport(f1, wf1, micro, per)


# ---------------------------------------------------------------------------
# instances

@dataclass(frozen=True)
class Instance:
    label: int
    members: np.ndarray
    score: float = 1.0


def labeling_instances(labeling: PanopticLabeling, table: ClassTable, scores: dict | None = None) -> list[Instance]:
    """Thing instances of a labeling (ordered by instance id)."""
    out = []
    for iid, members in sorted(labeling.instances().items()):
        cls = int(labeling.semantic[members[0]])
        if table.is_thing(cls):
            out.append(Instance(cls, members, float(scores.get(iid, 1.0)) if scores else 1.0))
    return out


def _boxes(instances: Sequence[Instance], cloud: DensePointCloud) -> np.ndarray:
    # each sample stands for a cell of width d, which also keeps straight-line boxes non-degenerate
    pad = 0.5 * cloud.interval
    off = cloud.offsets
    out = np.zeros((len(instances), 4))
    for k, inst in enumerate(instances):
        pts = np.vstack([cloud.points[off[i]:off[i + 1], :2] for i in inst.members])
        out[k] = [*(pts.min(axis=0) - pad), *(pts.max(axis=0) + pad)]
    return out


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of ``[x0, y0, x1, y1]`` boxes; identical boxes score 1 even when degenerate."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ix = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    iy = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    same = np.all(a[:, None, :] == b[None, :, :], axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return np.where(same, 1.0, iou)


def average_precision(tp: np.ndarray, n_gt: int) -> float:
    """All-point interpolated AP from a score-ordered true-positive flag list."""
    if n_gt == 0:
        return 0.0
    tp = np.asarray(tp, dtype=float)
    if len(tp) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    r = np.concatenate([[0.0], recall])
    p = np.concatenate([[0.0], precision])
    p = np.maximum.accumulate(p[::-1])[::-1]
    return float(np.sum((r[1:] - r[:-1]) * p[1:]))


def _match(gt_boxes, pred_boxes, pred_scores, threshold):
    order = np.lexsort((np.arange(len(pred_scores)), -np.asarray(pred_scores)))
    iou = box_iou(pred_boxes, gt_boxes) if len(gt_boxes) and len(pred_boxes) else np.zeros((len(pred_boxes), 0))
    taken = np.zeros(len(gt_boxes), dtype=bool)
    tp = np.zeros(len(order))
    for rank, k in enumerate(order):
        if iou.shape[1] == 0:
            break
        cand = np.where(taken, -1.0, iou[k])
        j = int(np.argmax(cand))
        if cand[j] >= threshold:
            taken[j] = True
            tp[rank] = 1.0
    return tp


@dataclass
class InstanceReport:
    ap50: float
    ap75: float
    map: float
    per_threshold: dict = field(default_factory=dict)
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"ap50": self.ap50, "ap75": self.ap75, "map": self.map,
                "per_threshold": {f"{t:.2f}": v for t, v in sorted(self.per_threshold.items())},
                "per_class": {str(k): v for k, v in sorted(self.per_class.items())}}


def instance_ap(gt: Sequence[Instance], pred: Sequence[Instance], cloud: DensePointCloud,
                thresholds: Sequence[float] = AP_THRESHOLDS) -> InstanceReport:
    """Box AP where each mask is reduced to the bounding box of its sampled points.

    Per class and threshold, predictions are matched greedily in score order
    to the best still-unmatched ground truth with box IoU >= t. The reported
    AP at each threshold is the mean over classes with ground truth.
    """
    gt_boxes = _boxes(gt, cloud)
    pred_boxes = _boxes(pred, cloud)
    gt_lab = np.array([g.label for g in gt], dtype=np.int64)
    pred_lab = np.array([p.label for p in pred], dtype=np.int64)
    pred_score = np.array([p.score for p in pred], dtype=float)
    classes = sorted(int(c) for c in np.unique(gt_lab))
    per_class = {c: {} for c in classes}
    per_t = {}
    for t in thresholds:
        aps = []
        for c in classes:
            gi, pi = gt_lab == c, pred_lab == c
            tp = _match(gt_boxes[gi], pred_boxes[pi], pred_score[pi], t)
            ap = average_precision(tp, int(gi.sum()))
            per_class[c][f"{t:.2f}"] = ap
            aps.append(ap)
        per_t[float(t)] = float(np.mean(aps)) if aps else 0.0
    ts = sorted(per_t)
    return InstanceReport(per_t.get(0.5, 0.0), per_t.get(0.75, 0.0),
                          float(np.mean([per_t[t] for t in ts])) if ts else 0.0, per_t, per_class)


# ---------------------------------------------------------------------------
# panoptic

@dataclass
class PanopticReport:
    pq: float
    sq: float
    rq: float
    thing: dict
    stuff: dict
    pooled: dict
    per_class: dict = field(default_factory=dict)
    matches: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"pq": self.pq, "sq": self.sq, "rq": self.rq, "thing": self.thing, "stuff": self.stuff,
                "pooled": self.pooled, "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
                "matches": self.matches}


def panoptic_segments(labeling: PanopticLabeling, table: ClassTable) -> tuple[np.ndarray, int]:
    """Segment key per primitive (-1 for none).

    Thing classes form one segment per (class, instance id) with a nonzero
    instance id; each stuff class is one segment. Keys encode
    ``class * stride + instance`` and the stride is returned alongside.
    """
    sem, inst = labeling.semantic, labeling.instance
    stride = int(inst.max(initial=0)) + 1
    thing = np.array([table.is_thing(c) for c in range(table.num_semantic_labels)], dtype=bool)
    stuff = np.array([table.is_stuff(c) for c in range(table.num_semantic_labels)], dtype=bool)
    valid = (sem >= 0) & (sem < table.num_semantic_labels)
    s = np.where(valid, sem, 0)
    key = np.full(len(sem), -1, dtype=np.int64)
    is_thing = valid & thing[s] & (inst > 0)
    is_stuff = valid & stuff[s]
    key[is_thing] = sem[is_thing] * stride + inst[is_thing]
    key[is_stuff] = sem[is_stuff] * stride
    return key, stride


def _summary(rows: list[dict]) -> dict:
    if not rows:
        return {"pq": 0.0, "sq": 0.0, "rq": 0.0, "n": 0}
    return {"pq": float(np.mean([r["pq"] for r in rows])), "sq": float(np.mean([r["sq"] for r in rows])),
            "rq": float(np.mean([r["rq"] for r in rows])), "n": len(rows)}


def panoptic_quality(gt: PanopticLabeling, pred: PanopticLabeling, table: ClassTable,
                     weights: np.ndarray | None = None) -> PanopticReport:
    """PQ/SQ/RQ with segment pairs matched at primitive-set IoU strictly above 0.5.

    IoU counts primitives; pass ``weights`` (e.g. arc lengths) for the
    length-weighted variant. Totals average over classes that have any
    ground-truth or predicted segment; ``pooled`` sums counts over classes.
    """
    _check_aligned(gt.semantic, pred.semantic)
    w = np.ones(len(gt)) if weights is None else np.asarray(weights, dtype=float)
    _check_aligned(gt.semantic, w, "weights")
    gk, gs = panoptic_segments(gt, table)
    pk, ps = panoptic_segments(pred, table)

    def areas(keys):
        u, inv = np.unique(keys[keys >= 0], return_inverse=True)
        return u, np.bincount(inv, weights=w[keys >= 0])

    gu, garea = areas(gk)
    pu, parea = areas(pk)
    g_area = dict(zip(gu.tolist(), garea.tolist()))
    p_area = dict(zip(pu.tolist(), parea.tolist()))
    g_cls = {k: k // gs for k in g_area}
    p_cls = {k: k // ps for k in p_area}

    both = (gk >= 0) & (pk >= 0)
    pair_keys = np.stack([gk[both], pk[both]], axis=1)
    inter: dict[tuple[int, int], float] = {}
    if len(pair_keys):
        up, inv = np.unique(pair_keys, axis=0, return_inverse=True)
        sums = np.bincount(inv.reshape(-1), weights=w[both])
        inter = {(int(a), int(b)): float(s) for (a, b), s in zip(up, sums)}

    matched_g, matched_p = set(), set()
    iou_sum: dict[int, float] = {}
    tp: dict[int, int] = {}
    pairs = []
    for (g, p), i in sorted(inter.items()):
        if g_cls[g] != p_cls[p]:
            continue
        iou = i / (g_area[g] + p_area[p] - i)
        if iou > 0.5:
            c = g_cls[g]
            matched_g.add(g)
            matched_p.add(p)
            iou_sum[c] = iou_sum.get(c, 0.0) + iou
            tp[c] = tp.get(c, 0) + 1
            pairs.append({"class": int(c), "iou": iou})
    fn: dict[int, int] = {}
    fp: dict[int, int] = {}
    for g, c in g_cls.items():
        if g not in matched_g:
            fn[c] = fn.get(c, 0) + 1
    for p, c in p_cls.items():
        if p not in matched_p:
            fp[c] = fp.get(c, 0) + 1

    per_class = {}
    for c in sorted(set(g_cls.values()) | set(p_cls.values())):
        t, f_p, f_n, s = tp.get(c, 0), fp.get(c, 0), fn.get(c, 0), iou_sum.get(c, 0.0)
        den = t + 0.5 * f_p + 0.5 * f_n
        per_class[int(c)] = {
            "pq": s / den, "sq": s / t if t else 0.0, "rq": t / den,
            "tp": t, "fp": f_p, "fn": f_n, "iou_sum": s, "kind": "thing" if table.is_thing(c) else "stuff",
        }
    rows = list(per_class.values())
    total = _summary(rows)
    T = sum(r["tp"] for r in rows)
    den = T + 0.5 * sum(r["fp"] for r in rows) + 0.5 * sum(r["fn"] for r in rows)
    S = sum(r["iou_sum"] for r in rows)
    pooled = {"pq": S / den if den else 0.0, "sq": S / T if T else 0.0, "rq": T / den if den else 0.0}
    return PanopticReport(total["pq"], total["sq"], total["rq"],
                          _summary([r for r in rows if r["kind"] == "thing"]),
                          _summary([r for r in rows if r["kind"] == "stuff"]), pooled, per_class, pairs)


def evaluate(gt: PanopticLabeling, pred: PanopticLabeling, table: ClassTable, cloud: DensePointCloud,
             lengths: np.ndarray, pred_scores: dict | None = None, length_weighted_iou: bool = False) -> dict:
    """All three metric families as one JSON-ready report."""
    sem = semantic_f1(gt.semantic, pred.semantic, lengths, table.background_id)
    inst = instance_ap(labeling_instances(gt, table), labeling_instances(pred, table, pred_scores), cloud)
    pq = panoptic_quality(gt, pred, table, lengths if length_weighted_iou else None)
    return {"semantic": sem.to_dict(), "instance": inst.to_dict(), "panoptic": pq.to_dict()}
