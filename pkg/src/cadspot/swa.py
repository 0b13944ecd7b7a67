"""Sliding Window Aggregation.

Windows of size ``W`` slide over the drawing with step ``step``. Each
window's semantic rows vote for its primitives, weighted by the fraction
of a primitive's sampled points the window saw; instance proposals from
all windows are pooled and merged by sparse matrix-NMS followed by a
panoptic fusion pass that keeps each primitive in at most one instance.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_option, check_positive
from .assignment import NMS_KERNELS, build_sparse_iou, sparse_nms
from .model import Bounds, ClassTable, Drawing, PanopticLabeling, Rect, WindowProposals, binarize_mask, load_class_table
from .predictor import DEFAULT_TOP_K, Predictor, PredictorError, WindowView, select_topk
from .sampler import DEFAULT_INTERVAL, DensePointCloud, resolve_jobs, sample_drawing

DEFAULT_WINDOW = 140.0
DEFAULT_STEP = 70.0


@dataclass(frozen=True)
class WindowGrid:
    size: float
    step: float
    bounds: Bounds
    windows: tuple[Rect, ...]

    def __len__(self) -> int:
        return len(self.windows)


def _starts(lo: float, hi: float, size: float, step: float) -> list[float]:
    if hi - lo <= size:
        return [lo]
    out = []
    k = 0
    while True:
        s = lo + k * step
        if s + size >= hi:
            # clamped so the last window ends at hi; still past the previous start
            out.append(min(s, hi - size))
            break
        out.append(s)
        k += 1
    return out


def enumerate_windows(bounds: Bounds, size: float = DEFAULT_WINDOW, step: float = DEFAULT_STEP) -> WindowGrid:
    """Square windows whose starts advance by ``step`` from the lower bound.

    The last window on each axis is clamped to end at the upper bound.
    Windows are listed row by row (y outer, x inner).
    """
    check_positive(size, "window size")
    check_positive(step, "step")
    if step > size:
        raise ValueError(f"step {step} exceeds window size {size}")
    x0, y0, x1, y1 = (float(v) for v in bounds)
    xs = _starts(x0, x1, size, step)
    ys = _starts(y0, y1, size, step)
    rects = tuple((x, y, x + size, y + size) for y in ys for x in xs)
    return WindowGrid(float(size), float(step), (x0, y0, x1, y1), rects)


def collect_window(cloud: DensePointCloud, window: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Primitives with a sampled point inside ``window`` (edges included) and their in-window counts."""
    x0, y0, x1, y1 = window
    p = cloud.points
    inside = (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
    counts = np.bincount(cloud.owner[inside], minlength=cloud.n_primitives)
    ids = np.flatnonzero(counts)
    return ids, counts[ids]


class SemanticAccumulator:
    """Per-primitive class votes.

    Weighted votes are stored as integer observed-point counts: every vote
    for primitive ``p`` shares the denominator ``total(p)``, so the argmax
    equals that of the point-fraction weights while summation stays exact
    and independent of window order.
    """

    def __init__(self, totals: np.ndarray, n_labels: int, weighted: bool = True):
        self.totals = np.asarray(totals, dtype=np.int64)
        self.n_labels = int(n_labels)
        self.weighted = weighted
        self.counts = np.zeros((len(self.totals), self.n_labels), dtype=np.int64)

    @property
    def votes(self) -> np.ndarray:
        """Vote weights ``observed / total`` summed per class (all ones per vote when unweighted)."""
        if not self.weighted:
            return self.counts.astype(float)
        return self.counts / self.totals[:, None]

    @property
    def touched(self) -> np.ndarray:
        return self.counts.any(axis=1)

    def add(self, ids: np.ndarray, labels: np.ndarray, observed: np.ndarray) -> "SemanticAccumulator":
        inc = np.asarray(observed, dtype=np.int64) if self.weighted else np.ones(len(ids), dtype=np.int64)
        np.add.at(self.counts, (np.asarray(ids, dtype=np.int64), np.asarray(labels, dtype=np.int64)), inc)
        return self

    def merge(self, other: "SemanticAccumulator") -> "SemanticAccumulator":
        self.counts += other.counts
        return self


def vote_semantic(acc: SemanticAccumulator, proposals: WindowProposals, primitive_ids: np.ndarray,
                  observed: np.ndarray) -> SemanticAccumulator:
    """Add one window's votes: the argmax class of each row (lowest id on ties)."""
    primitive_ids = np.asarray(primitive_ids, dtype=np.int64)
    if not np.array_equal(proposals.primitive_ids, primitive_ids):
        raise ValueError(f"semantic rows of window {list(proposals.window)} do not align with its primitives")
    if len(primitive_ids) == 0:
        return acc
    if proposals.semantic_scores.shape[1] != acc.n_labels:
        raise ValueError(f"window rows have {proposals.semantic_scores.shape[1]} labels, expected {acc.n_labels}")
    return acc.add(primitive_ids, np.argmax(proposals.semantic_scores, axis=1), observed)


def finalize_semantic(acc: SemanticAccumulator, background: int) -> tuple[np.ndarray, np.ndarray]:
    """Argmax per primitive (lowest id on ties); untouched primitives get ``background``.

    Returns ``(labels, untouched_ids)``.
    """
    labels = np.argmax(acc.counts, axis=1).astype(np.int64)
    untouched = np.flatnonzero(~acc.touched)
    labels[untouched] = background
    return labels, untouched


@dataclass(frozen=True)
class FinalInstance:
    members: np.ndarray
    label: int
    score: float


@dataclass(frozen=True)
class InstancePool:
    masks: list
    labels: np.ndarray
    scores: np.ndarray


def pool_proposals(windows: Sequence[WindowProposals], mask_threshold: float = 0.5) -> InstancePool:
    """Global proposal list in canonical order: score desc, window rect, local index.

    Masks are binarized and mapped to global primitive ids; empty masks are
    dropped.
    """
    rows = []
    for w in windows:
        for k, prop in enumerate(w.instances):
            local = binarize_mask(prop, mask_threshold)
            if len(local) == 0:
                continue
            rows.append(((-prop.score, w.window, k), w.primitive_ids[local], prop.label, prop.score))
    rows.sort(key=lambda r: r[0])
    return InstancePool([r[1] for r in rows], np.array([r[2] for r in rows], dtype=np.int64),
                        np.array([r[3] for r in rows], dtype=float))


def fuse_instances(pool: InstancePool, keep: np.ndarray, decayed: np.ndarray, table: ClassTable,
                   min_unclaimed: float = 0.5) -> list[FinalInstance]:
    """Resolve overlaps among NMS survivors.

    Survivors are visited best first; a thing-class survivor becomes an
    instance over its still-unclaimed primitives if they make up at least
    ``min_unclaimed`` of its mask. Instances are returned ordered by their
    smallest member id.
    """
    claimed: set[int] = set()
    out = []
    for idx in keep:
        label = int(pool.labels[idx])
        if not table.is_thing(label):
            continue
        members = [int(p) for p in pool.masks[idx]]
        free = [p for p in members if p not in claimed]
        if not free or len(free) < min_unclaimed * len(members):
            continue
        claimed.update(free)
        out.append(FinalInstance(np.array(free, dtype=np.int64), label, float(decayed[idx])))
    out.sort(key=lambda inst: int(inst.members[0]))
    return out


def aggregate_instances(windows: Sequence[WindowProposals], table: ClassTable, mask_threshold: float = 0.5,
                        nms_threshold: float = 0.5, sigma: float = 2.0, kernel: str = "gaussian",
                        min_unclaimed: float = 0.5) -> tuple[list[FinalInstance], dict]:
    """Pool all window proposals, run sparse NMS, then fuse survivors."""
    pool = pool_proposals(windows, mask_threshold)
    ious = build_sparse_iou(pool.masks)
    nms = sparse_nms(pool.masks, pool.labels, pool.scores, ious, sigma=sigma, kernel=kernel,
                     score_threshold=nms_threshold)
    final = fuse_instances(pool, nms.keep, nms.scores, table, min_unclaimed)
    stats = {"proposals": len(pool.masks), "iou_pairs": ious.stored_pairs, "nms_survivors": int(len(nms.keep)),
             "instances": len(final)}
    return final, stats


@dataclass(frozen=True)
class SWAConfig:
    window: float = DEFAULT_WINDOW
    step: float = DEFAULT_STEP
    interval: float = DEFAULT_INTERVAL
    mask_threshold: float = 0.5
    nms_threshold: float = 0.5
    nms_sigma: float = 2.0
    nms_kernel: str = "gaussian"
    top_k: int = DEFAULT_TOP_K
    weighted_vote: bool = True
    min_unclaimed: float = 0.5

    def __post_init__(self):
        check_positive(self.window, "window")
        check_positive(self.step, "step")
        check_positive(self.interval, "interval")
        check_positive(self.nms_sigma, "nms_sigma")
        check_option(self.nms_kernel, NMS_KERNELS, "nms_kernel")
        if self.step > self.window:
            raise ValueError(f"step {self.step} exceeds window size {self.window}")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        for name in ("mask_threshold", "nms_threshold", "min_unclaimed"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SWAResult:
    labeling: PanopticLabeling
    instances: list[FinalInstance]
    report: dict = field(default_factory=dict)
    windows: list[WindowProposals] = field(default_factory=list)


def predict_windows(drawing: Drawing, cloud: DensePointCloud, predictor: Predictor, grid: WindowGrid,
                    top_k: int = DEFAULT_TOP_K, n_jobs: int | None = 1):
    """Collect and predict every window; results come back in grid order."""
    features = predictor.prepare(drawing, cloud)

    def one(rect):
        ids, observed = collect_window(cloud, rect)
        view = WindowView(drawing, cloud, rect, ids, observed, features)
        props = predictor.predict(view)
        if not isinstance(props, WindowProposals):
            raise PredictorError(f"predictor returned {type(props).__name__} for window {list(rect)}")
        if len(props.instances) > top_k:
            props = WindowProposals(props.window, props.primitive_ids, props.semantic_scores,
                                    tuple(select_topk(props.instances, top_k)))
        return ids, observed, props

    jobs = resolve_jobs(n_jobs)
    if jobs > 1 and len(grid) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(one, grid.windows))
    return [one(r) for r in grid.windows]


def run_swa(drawing: Drawing, predictor: Predictor, config: SWAConfig = SWAConfig(), table: ClassTable | None = None,
            n_jobs: int | None = 1, cloud: DensePointCloud | None = None) -> SWAResult:
    """Spot symbols in a whole drawing by sliding-window aggregation."""
    table = table if table is not None else load_class_table()
    if cloud is None:
        cloud = sample_drawing(drawing, config.interval, n_jobs)
    grid = enumerate_windows(drawing.bounds, config.window, config.step)
    results = predict_windows(drawing, cloud, predictor, grid, config.top_k, n_jobs)

    acc = SemanticAccumulator(cloud.counts, table.num_semantic_labels, config.weighted_vote)
    for ids, observed, props in results:
        vote_semantic(acc, props, ids, observed)
    semantic, untouched = finalize_semantic(acc, table.background_id)

    windows = [r[2] for r in results]
    final, stats = aggregate_instances(windows, table, config.mask_threshold, config.nms_threshold,
                                       config.nms_sigma, config.nms_kernel, config.min_unclaimed)
    instance = np.zeros(len(drawing), dtype=np.int64)
    for k, inst in enumerate(final, start=1):
        instance[inst.members] = k
        semantic[inst.members] = inst.label
    report = {"windows": len(grid), "points": len(cloud), "untouched": [int(i) for i in untouched], **stats}
    return SWAResult(PanopticLabeling(semantic, instance), final, report, windows)


class SlidingWindowSpotter(BaseEstimator):
    """Estimator wrapper: ``predict(drawing)`` returns a PanopticLabeling.

    ``fit`` forwards to the predictor when it is trainable.
    """

    def __init__(self, predictor: Predictor | None = None, window: float = DEFAULT_WINDOW, step: float = DEFAULT_STEP,
                 interval: float = DEFAULT_INTERVAL, nms_threshold: float = 0.5, nms_sigma: float = 2.0,
                 nms_kernel: str = "gaussian", top_k: int = DEFAULT_TOP_K, weighted_vote: bool = True,
                 n_jobs: int | None = 1):
        self.predictor = predictor
        self.window = window
        self.step = step
        self.interval = interval
        self.nms_threshold = nms_threshold
        self.nms_sigma = nms_sigma
        self.nms_kernel = nms_kernel
        self.top_k = top_k
        self.weighted_vote = weighted_vote
        self.n_jobs = n_jobs

    def _config(self) -> SWAConfig:
        return SWAConfig(window=self.window, step=self.step, interval=self.interval,
                         nms_threshold=self.nms_threshold, nms_sigma=self.nms_sigma, nms_kernel=self.nms_kernel,
                         top_k=self.top_k, weighted_vote=self.weighted_vote)

    def fit(self, X=None, y=None):
        self._config()
        if self.predictor is None:
            raise ValueError("a predictor is required")
        if X is not None and hasattr(self.predictor, "fit"):
            self.predictor.fit(X, y)
        return self

    def predict(self, X: Drawing) -> PanopticLabeling:
        if self.predictor is None:
            raise ValueError("a predictor is required")
        self.result_ = run_swa(X, self.predictor, self._config(), n_jobs=self.n_jobs)
        return self.result_.labeling
