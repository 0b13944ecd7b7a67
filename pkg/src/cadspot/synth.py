"""Synthetic floorplan strips and a ground-truth-driven window predictor.

Scenes are one window tall and ``n_tiles`` windows wide. Outer and
partition walls close rooms; symbols (doors, windows, furniture) are
smaller than ``W - step`` so each one fits entirely inside some sliding
window, and a chosen fraction of them straddles block-partition borders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (Arc, Circle, ClassTable, CubicBezier, Drawing, Ellipse, InstanceProposal, PanopticLabeling,
                    Polyline, Primitive, QuadBezier, Segment, WindowProposals, load_class_table)
from .predictor import Predictor, WindowView, empty_proposals
from .svg_io import parse_drawing, render_drawing_svg

HALF_PI = 0.5 * math.pi


def _rect(x0, y0, x1, y1) -> Polyline:
    return Polyline(0, ((x0, y0), (x1, y0), (x1, y1), (x0, y1)), True)


def _rect_segments(x0, y0, x1, y1) -> list[Primitive]:
    c = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return [Segment(0, c[i], c[(i + 1) % 4]) for i in range(4)]


def door_leaf(pivot, r, leaf_angle, swing) -> list[Primitive]:
    """Leaf line from the pivot plus the swing arc ending at the leaf tip.

    A positive ``swing`` sweeps counter-clockwise from the closed position
    to the leaf; negative swings mirror it.
    """
    px, py = pivot
    tip = (px + r * math.cos(leaf_angle), py + r * math.sin(leaf_angle))
    start = leaf_angle - swing if swing > 0 else leaf_angle
    return [Segment(0, (px, py), tip), Arc(0, (px, py), r, r, 0.0, start, abs(swing))]


def single_door(rng) -> list[Primitive]:
    r = rng.uniform(7.0, 12.0)
    return door_leaf((0.0, 0.0), r, HALF_PI, HALF_PI)


def double_door(rng) -> list[Primitive]:
    r = rng.uniform(6.0, 9.0)
    return door_leaf((0.0, 0.0), r, HALF_PI, HALF_PI) + door_leaf((2 * r, 0.0), r, HALF_PI, -HALF_PI)


def sliding_door(rng) -> list[Primitive]:
    w = rng.uniform(12.0, 20.0)
    return [_rect(0.0, 0.0, 0.5 * w + 1.0, 0.5), _rect(0.5 * w - 1.0, 0.6, w, 1.1)]


def window(rng) -> list[Primitive]:
    length = rng.uniform(10.0, 25.0)
    return [Segment(0, (0.0, k * 0.1), (length, k * 0.1)) for k in range(3)]


def bed(rng) -> list[Primitive]:
    w, h = rng.uniform(14.0, 20.0), rng.uniform(20.0, 28.0)
    return _rect_segments(0, 0, w, h) + [_rect(1.5, h - 6.0, w - 1.5, h - 1.5),
                                          QuadBezier(0, ((0.0, h * 0.6), (w * 0.5, h * 0.7), (w, h * 0.6)))]


def chair(rng) -> list[Primitive]:
    s = rng.uniform(4.0, 6.0)
    return [_rect(0, 0, s, s), Arc(0, (0.5 * s, s), 0.5 * s, 0.5 * s, 0.0, 0.0, math.pi)]


def table(rng) -> list[Primitive]:
    if rng.random() < 0.5:
        return [Circle(0, (0.0, 0.0), rng.uniform(4.0, 8.0))]
    w, h = rng.uniform(8.0, 16.0), rng.uniform(6.0, 10.0)
    return [_rect(0, 0, w, h)]


def sink(rng) -> list[Primitive]:
    rx, ry = rng.uniform(3.0, 5.0), rng.uniform(2.0, 3.0)
    return [Ellipse(0, (0.0, 0.0), rx, ry), Circle(0, (0.0, 0.0), 0.5), Segment(0, (0.0, ry), (0.0, ry + 1.5))]


def toilet(rng) -> list[Primitive]:
    rx, ry = rng.uniform(2.0, 3.0), rng.uniform(3.0, 4.0)
    return [Ellipse(0, (0.0, 0.0), rx, ry), _rect(-rx - 0.5, ry + 0.5, rx + 0.5, ry + 3.0)]


def bath(rng) -> list[Primitive]:
    w, h = rng.uniform(14.0, 18.0), rng.uniform(7.0, 9.0)
    k = 1.5
    inner = [
        CubicBezier(0, ((k, h / 2), (k, h - k), (k, h - k), (w / 2, h - k))),
        CubicBezier(0, ((w / 2, h - k), (w - k, h - k), (w - k, h - k), (w - k, h / 2))),
        CubicBezier(0, ((w - k, h / 2), (w - k, k), (w - k, k), (w / 2, k))),
        CubicBezier(0, ((w / 2, k), (k, k), (k, k), (k, h / 2))),
    ]
    return [_rect(0, 0, w, h)] + inner


def sofa(rng) -> list[Primitive]:
    w = rng.uniform(16.0, 24.0)
    body = Polyline(0, ((0, 0), (0, 8), (w, 8), (w, 0)), False)
    cushions = [Segment(0, (w * i / 3, 2.0), (w * i / 3, 8.0)) for i in (1, 2)]
    arms = [QuadBezier(0, ((0, 0), (1.5, -1.5), (3, 0))), QuadBezier(0, ((w - 3, 0), (w - 1.5, -1.5), (w, 0)))]
    return [body, Segment(0, (0, 2.0), (w, 2.0))] + cushions + arms


def stairs(rng) -> list[Primitive]:
    w, n = rng.uniform(8.0, 12.0), int(rng.integers(6, 12))
    h = n * 2.5
    return [_rect(0, 0, w, h)] + [Segment(0, (0, 2.5 * i), (w, 2.5 * i)) for i in range(1, n)]


def refrigerator(rng) -> list[Primitive]:
    s = rng.uniform(6.0, 8.0)
    return _rect_segments(0, 0, s, s) + [Segment(0, (0, 0), (s, s))]


SYMBOLS = {
    "single door": single_door,
    "double door": double_door,
    "sliding door": sliding_door,
    "window": window,
    "bed": bed,
    "chair": chair,
    "table": table,
    "sink": sink,
    "toilet": toilet,
    "bath": bath,
    "sofa": sofa,
    "stairs": stairs,
    "refrigerator": refrigerator,
}


def _bbox(prims) -> tuple[float, float, float, float]:
    pts = np.vstack([p.control_points() for p in prims])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def _place(prims, angle, cx, cy):
    x0, y0, x1, y1 = _bbox(prims)
    mx, my = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    c, s = math.cos(angle), math.sin(angle)
    to_origin = np.array([[1, 0, -mx], [0, 1, -my], [0, 0, 1.0]])
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    move = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    aff = move @ rot @ to_origin
    return [p.transformed(aff) for p in prims]


@dataclass(frozen=True)
class SynthScene:
    drawing: Drawing
    labeling: PanopticLabeling
    table: ClassTable
    straddling: tuple[int, ...]
    svg: str


def generate_scene(seed: int, n_tiles: int = 10, window: float = 140.0, step: float = 70.0,
                   n_symbols: int | None = None, straddle_fraction: float = 0.4, n_partitions: int = 3,
                   table: ClassTable | None = None) -> SynthScene:
    """Random strip scene with ground-truth labels.

    The returned drawing is the parse of the rendered SVG, so files written
    from it reproduce it exactly.
    """
    rng = np.random.default_rng(seed)
    table = table if table is not None else load_class_table()
    L, H = n_tiles * window, window
    max_extent = 0.8 * (window - step)
    n_symbols = n_symbols if n_symbols is not None else 3 * n_tiles
    wall = table.id_of("wall")

    prims: list[Primitive] = []
    sem: list[int] = []
    inst: list[int] = []

    def add(items, cls, iid):
        prims.extend(items)
        sem.extend([cls] * len(items))
        inst.extend([iid] * len(items))

    add(_rect_segments(0.0, 0.0, L, H), wall, 0)
    borders = [k * window for k in range(1, n_tiles)]
    partition_x = []
    for _ in range(n_partitions):
        for _try in range(100):
            x = float(rng.uniform(0.05 * L, 0.95 * L))
            if all(abs(x - b) > 5 for b in borders) and all(abs(x - p) > 30 for p in partition_x):
                partition_x.append(x)
                break
    for x in sorted(partition_x):
        add([Segment(0, (x, 0.0), (x, H))], wall, 0)

    boxes = [(x - 1.0, 0.0, x + 1.0, H) for x in partition_x]
    names = sorted(SYMBOLS)
    n_straddle = int(math.ceil(straddle_fraction * n_symbols))
    straddling = []
    iid = 0
    for k in range(n_symbols):
        want_straddle = k < n_straddle and borders
        for _try in range(400):
            name = names[int(rng.integers(len(names)))]
            shape = SYMBOLS[name](rng)
            angle = float(rng.integers(4)) * HALF_PI + float(rng.uniform(-0.3, 0.3))
            placed = _place(shape, angle, 0.0, 0.0)
            bx0, by0, bx1, by1 = _bbox(placed)
            if bx1 - bx0 >= max_extent or by1 - by0 >= H - 10:
                continue
            if want_straddle:
                b = borders[int(rng.integers(len(borders)))]
                cx = b + float(rng.uniform(-0.3, 0.3)) * (bx1 - bx0)
            else:
                cx = float(rng.uniform(5 - bx0, L - 5 - bx1))
            cy = float(rng.uniform(5 - by0, H - 5 - by1))
            box = (bx0 + cx, by0 + cy, bx1 + cx, by1 + cy)
            crosses = any(box[0] < b < box[2] for b in borders)
            if crosses != bool(want_straddle):
                continue
            if any(box[0] - 2 < o[2] and o[0] < box[2] + 2 and box[1] - 2 < o[3] and o[1] < box[3] + 2
                   for o in boxes):
                continue
            boxes.append(box)
            iid += 1
            if crosses:
                straddling.append(iid)
            add(_place(shape, angle, cx, cy), table.id_of(name), iid)
            break

    svg = render_drawing_svg(Drawing.from_primitives(prims))
    drawing = parse_drawing(svg)
    if len(drawing) != len(prims):
        raise RuntimeError("synthetic drawing did not survive an SVG round trip")
    return SynthScene(drawing, PanopticLabeling(sem, inst), table, tuple(straddling), svg)


def base_score(instance_id: int) -> float:
    """Deterministic per-instance confidence in [0.9, 0.99)."""
    return 0.9 + 0.09 * ((instance_id * 0.6180339887498949) % 1.0)


class SyntheticPredictor(Predictor):
    """Predicts from ground truth what a perfect window-local model would see.

    Semantic rows put all mass on the true class. Each ground-truth thing
    instance with primitives in the window yields one proposal over its
    visible members, scored ``base * observed_fraction ** 2`` where the
    observed fraction counts the instance's sampled points inside the window.
    """

    def __init__(self, labeling: PanopticLabeling, table: ClassTable | None = None, confidence: float = 8.0):
        self.labeling = labeling
        self.table = table if table is not None else load_class_table()
        self.n_labels = self.table.num_semantic_labels
        self.confidence = confidence
        self._members = labeling.instances()

    def predict(self, view: WindowView) -> WindowProposals:
        ids = np.asarray(view.primitive_ids, dtype=np.int64)
        if len(ids) == 0:
            return empty_proposals(view.window, self.n_labels)
        logits = np.zeros((len(ids), self.n_labels))
        logits[np.arange(len(ids)), self.labeling.semantic[ids]] = self.confidence
        m = logits.max(axis=1, keepdims=True)
        sem = logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
        observed = np.zeros(len(self.labeling), dtype=np.int64)
        observed[ids] = view.observed
        counts = view.cloud.counts
        props = []
        for iid in sorted({int(i) for i in self.labeling.instance[ids]} - {0}):
            members = self._members[iid]
            cls = int(self.labeling.semantic[members[0]])
            if not self.table.is_thing(cls):
                continue
            frac = observed[members].sum() / counts[members].sum()
            mask = np.isin(ids, members).astype(float)
            scores = np.zeros(self.n_labels)
            scores[cls] = 1.0
            props.append(InstanceProposal(mask, scores, base_score(iid) * frac**2))
        return WindowProposals(view.window, ids, sem, tuple(props))


# ---------------------------------------------------------------------------
# proposal pools for NMS checks

def proposal_strip(seed: int = 0, n_windows: int = 100, per_window: int = 100, window_span: int = 200,
                   n_labels: int = 5):
    """``n_windows * per_window`` proposals over a strip of primitives.

    Window ``w`` covers primitive ids ``[w * span/2, w * span/2 + span)`` so
    only neighbouring windows share primitives. Returns
    ``(masks, labels, scores, window_of)``.
    """
    rng = np.random.default_rng(seed)
    half = window_span // 2
    masks, labels, scores, window_of = [], [], [], []
    for w in range(n_windows):
        lo = w * half
        for _ in range(per_window):
            size = int(rng.integers(3, 25))
            start = lo + int(rng.integers(0, window_span - size))
            masks.append(np.arange(start, start + size, dtype=np.int64))
            labels.append(int(rng.integers(n_labels)))
            scores.append(float(rng.uniform(0.3, 1.0)))
            window_of.append(w)
    return masks, np.array(labels), np.array(scores), np.array(window_of)


def window_proposal_pool(seed: int, n_windows: int = 4, per_window: int = 12, window_span: int = 40,
                         n_labels: int = 3, integer_scores: bool = False):
    """Small multi-window pool with exact cross-window duplicates and nested masks."""
    rng = np.random.default_rng(seed)
    half = window_span // 2
    masks, labels, scores = [], [], []
    for w in range(n_windows):
        lo = w * half
        for _ in range(per_window):
            roll = rng.random()
            if masks and roll < 0.2:
                j = int(rng.integers(len(masks)))
                masks.append(masks[j].copy())
                labels.append(labels[j])
            elif masks and roll < 0.35:
                j = int(rng.integers(len(masks)))
                src = masks[j]
                masks.append(src[: max(1, len(src) // 2)].copy())
                labels.append(labels[j])
            else:
                size = int(rng.integers(1, 12))
                masks.append(np.unique(lo + rng.integers(0, window_span, size)))
                labels.append(int(rng.integers(n_labels)))
            scores.append(int(rng.integers(1, 20)) / 20 if integer_scores else float(rng.uniform(0.05, 1.0)))
    return masks, np.array(labels, dtype=np.int64), np.array(scores)
