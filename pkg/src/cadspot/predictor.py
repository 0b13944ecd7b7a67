"""Per-window proposal sources.

A predictor maps one window of a drawing to a :class:`WindowProposals`
(semantic log-likelihood rows plus scored instance masks). Two
implementations ship: :class:`ReplayPredictor` serves recorded outputs and
:class:`ExemplarPredictor` is a deterministic geometric baseline.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.preprocessing import StandardScaler

from ._validation import check_nonnegative, check_positive
from .features import describe_drawing
from .model import ClassTable, Drawing, InstanceProposal, PanopticLabeling, Rect, WindowProposals, load_class_table
from .sampler import DEFAULT_INTERVAL, DensePointCloud, sample_drawing

DEFAULT_TOP_K = 220

__all__ = [
    "DEFAULT_TOP_K", "ExemplarPredictor", "Predictor", "PredictorError", "ReplayPredictor",
    "WindowProposals", "WindowView", "empty_proposals", "select_topk",
]


class PredictorError(RuntimeError):
    """A predictor could not serve a window."""


@dataclass(frozen=True, eq=False)
class WindowView:
    """Everything a predictor may look at for one window.

    ``primitive_ids`` are the primitives with at least one sampled point
    inside ``window`` (ascending) and ``observed`` their in-window point
    counts. ``features`` is the drawing-wide primitive feature matrix, if
    the predictor asked for one.
    """

    drawing: Drawing
    cloud: DensePointCloud
    window: Rect
    primitive_ids: np.ndarray
    observed: np.ndarray
    features: np.ndarray | None = None

    def inside_mask(self) -> np.ndarray:
        x0, y0, x1, y1 = self.window
        xy = self.cloud.points
        return (xy[:, 0] >= x0) & (xy[:, 0] <= x1) & (xy[:, 1] >= y0) & (xy[:, 1] <= y1)


def empty_proposals(window: Rect, n_labels: int) -> WindowProposals:
    return WindowProposals(window, np.zeros(0, np.int64), np.zeros((0, n_labels)), ())


def select_topk(proposals: Sequence[InstanceProposal], k: int = DEFAULT_TOP_K) -> list[InstanceProposal]:
    """The ``k`` best proposals ordered by score (desc), then input index."""
    if k < 0:
        raise ValueError("k must be >= 0")
    scores = np.array([p.score for p in proposals], dtype=float)
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    return [proposals[i] for i in order]


class Predictor:
    """Interface: ``predict(view) -> WindowProposals``.

    Implementations must be deterministic and safe to call concurrently on
    distinct windows.
    """

    n_labels: int = 36

    def prepare(self, drawing: Drawing, cloud: DensePointCloud) -> np.ndarray | None:
        """Drawing-wide primitive features computed once before windows run."""
        return None

    def predict(self, view: WindowView) -> WindowProposals:
        raise NotImplementedError


class ReplayPredictor(Predictor):
    """Serves recorded window outputs keyed by their exact rectangle."""

    def __init__(self, windows: Iterable[WindowProposals], n_labels: int | None = None):
        self._by_rect: dict[Rect, WindowProposals] = {}
        for w in windows:
            if w.window in self._by_rect:
                raise PredictorError(f"window {list(w.window)} recorded twice")
            self._by_rect[w.window] = w
        if n_labels is None:
            widths = {w.semantic_scores.shape[1] for w in self._by_rect.values() if w.semantic_scores.shape[0]}
            n_labels = widths.pop() if len(widths) == 1 else 36
        self.n_labels = n_labels

    def __len__(self) -> int:
        return len(self._by_rect)

    def predict(self, view: WindowView) -> WindowProposals:
        rect = tuple(float(v) for v in view.window)
        rec = self._by_rect.get(rect)
        if rec is None:
            if len(view.primitive_ids) == 0:
                return empty_proposals(rect, self.n_labels)
            raise PredictorError(f"no recorded proposals for window {list(rect)}")
        if not np.array_equal(rec.primitive_ids, view.primitive_ids):
            raise PredictorError(
                f"recorded window {list(rect)} covers {len(rec.primitive_ids)} primitives, "
                f"collection found {len(view.primitive_ids)}; sampling settings differ from the recording")
        return rec


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


class ExemplarPredictor(Predictor, BaseEstimator):
    """Geometric baseline: nearest-exemplar classes, proximity-graph instances.

    Semantic rows are a log-softmax over ``-distance / temperature`` where
    the distance to a class is the standardized-descriptor distance to its
    nearest exemplar. Instances are connected components of primitives with
    the same predicted thing class whose in-window samples come within
    ``epsilon``. Confidence is the mean member similarity ``exp(-distance)``
    times the observed fraction of the members' points.

    Parameters
    ----------
    interval : float, default=0.14
        Sampling interval used for the exemplar drawings.
    epsilon : float or None, default=None
        Proximity radius; ``None`` means twice ``interval``.
    temperature : float, default=1.0
        Softness of the semantic rows.
    top_k : int, default=220
        Maximum proposals per window.
    class_table : ClassTable or None
        Class table; ``None`` loads the packaged one.
    """

    def __init__(self, interval: float = DEFAULT_INTERVAL, epsilon: float | None = None, temperature: float = 1.0,
                 top_k: int = DEFAULT_TOP_K, class_table: ClassTable | None = None):
        self.interval = interval
        self.epsilon = epsilon
        self.temperature = temperature
        self.top_k = top_k
        self.class_table = class_table

    @property
    def table_(self) -> ClassTable:
        return self.class_table if self.class_table is not None else load_class_table()

    @property
    def n_labels(self) -> int:  # type: ignore[override]
        return self.table_.num_semantic_labels

    def fit(self, drawings: Sequence[Drawing], labelings: Sequence[PanopticLabeling]):
        """Build the exemplar bank from annotated drawings."""
        check_positive(self.interval, "interval")
        check_positive(self.temperature, "temperature")
        check_nonnegative(self.top_k, "top_k")
        if isinstance(drawings, Drawing):
            drawings, labelings = [drawings], [labelings]
        table = self.table_
        feats, labels = [], []
        for drawing, lab in zip(drawings, labelings):
            if len(lab) != len(drawing):
                raise ValueError("labeling length differs from drawing")
            cloud = sample_drawing(drawing, self.interval)
            known = np.array([table.is_thing(s) or table.is_stuff(s) for s in lab.semantic], dtype=bool)
            feats.append(describe_drawing(drawing, cloud)[known])
            labels.append(lab.semantic[known])
        X = np.vstack(feats) if feats else np.zeros((0, 1))
        y = np.concatenate(labels) if labels else np.zeros(0, np.int64)
        if len(y) == 0:
            raise ValueError("exemplar bank is empty")
        self.scaler_ = StandardScaler().fit(X)
        Z = self.scaler_.transform(X)
        self.classes_ = np.unique(y)
        self.trees_ = {int(c): cKDTree(Z[y == c]) for c in self.classes_}
        return self

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise PredictorError("exemplar bank is empty: call fit() with annotated drawings first")

    def prepare(self, drawing: Drawing, cloud: DensePointCloud) -> np.ndarray:
        return describe_drawing(drawing, cloud)

    def class_distances(self, descriptors: np.ndarray) -> np.ndarray:
        """``n x K_sem`` nearest-exemplar distances (inf for classes without exemplars)."""
        self._check_fitted()
        Z = self.scaler_.transform(np.asarray(descriptors, dtype=float))
        out = np.full((len(Z), self.n_labels), np.inf)
        for c, tree in self.trees_.items():
            out[:, c] = tree.query(Z, k=1)[0]
        return out

    def predict(self, view: WindowView) -> WindowProposals:
        self._check_fitted()
        ids = np.asarray(view.primitive_ids, dtype=np.int64)
        if len(ids) == 0:
            return empty_proposals(view.window, self.n_labels)
        feats = view.features if view.features is not None else self.prepare(view.drawing, view.cloud)
        dist = self.class_distances(feats[ids])
        finite = np.isfinite(dist)
        worst = float(dist[finite].max()) if finite.any() else 0.0
        logits = -np.where(finite, dist, worst + 50.0 * self.temperature) / self.temperature
        sem = _log_softmax(logits)
        pred = np.argmax(sem, axis=1)
        nearest = dist[np.arange(len(ids)), pred]
        instances = self._instances(view, ids, pred, nearest)
        return WindowProposals(view.window, ids, sem, tuple(select_topk(instances, self.top_k)))

    def _instances(self, view: WindowView, ids, pred, nearest) -> list[InstanceProposal]:
        table = self.table_
        eps = self.epsilon if self.epsilon is not None else 2.0 * self.interval
        inside = view.inside_mask()
        pts = view.cloud.points[inside, :2]
        owner = view.cloud.owner[inside]
        local = np.searchsorted(ids, owner)
        thing = np.array([table.is_thing(c) for c in pred], dtype=bool)
        keep = thing[local]
        pts, local = pts[keep], local[keep]
        n = len(ids)
        if len(pts) == 0:
            return []
        pairs = cKDTree(pts).query_pairs(eps, output_type="ndarray")
        a, b = local[pairs[:, 0]], local[pairs[:, 1]]
        same = (a != b) & (pred[a] == pred[b])
        graph = coo_matrix((np.ones(int(same.sum())), (a[same], b[same])), shape=(n, n))
        _, comp = connected_components(graph, directed=False)
        totals = view.cloud.counts[ids]
        out = []
        seen = set()
        for i in np.flatnonzero(thing):
            c = comp[i]
            if c in seen:
                continue
            seen.add(c)
            members = np.flatnonzero((comp == c) & thing)
            mask = np.zeros(n)
            mask[members] = 1.0
            cls = np.zeros(self.n_labels)
            cls[pred[i]] = 1.0
            sim = float(np.mean(np.exp(-nearest[members])))
            frac = float(view.observed[members].sum()) / float(totals[members].sum())
            out.append(InstanceProposal(mask, cls, sim * frac))
        return out
