"""Primitive Mixed Pooling and a hand-made primitive descriptor.

Pooling reduces point-wise features to primitive-wise features. The
descriptor is NOT a learned feature: it is a small rotation/translation
invariant summary used by the exemplar baseline predictor.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_feature_matrix, check_option
from .model import Drawing, Primitive, PrimitiveKind
from .sampler import DensePointCloud, arc_length

POOL_MODES = ("max", "average", "mixed")

_KINDS = list(PrimitiveKind)
N_CURVATURE_BINS = 8
DESCRIPTOR_SIZE = len(_KINDS) + 3 + N_CURVATURE_BINS


def _check_pool_inputs(f, owner, n_primitives):
    owner = np.asarray(owner, dtype=np.int64).reshape(-1)
    f = check_feature_matrix(f, n_rows=len(owner), name="point features")
    counts = np.bincount(owner, minlength=n_primitives) if len(owner) else np.zeros(n_primitives, np.int64)
    if len(counts) > n_primitives:
        raise ValueError("owner ids exceed the primitive count")
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise ValueError(f"primitives {empty[:10].tolist()} own no points")
    return f, owner, counts


def pool_variant(f, cloud: DensePointCloud | np.ndarray, mode: str = "mixed", n_primitives: int | None = None) -> np.ndarray:
    """Reduce an ``M x C`` point feature matrix to ``N x C`` primitive features.

    Args:
        f: point-wise features, one row per sampled point.
        cloud: the point cloud the rows belong to, or a bare owner array.
        mode: ``"max"``, ``"average"`` or ``"mixed"`` (max + average).
        n_primitives: primitive count when ``cloud`` is an owner array.
    """
    check_option(mode, POOL_MODES, "mode")
    if isinstance(cloud, DensePointCloud):
        owner, n = cloud.owner, cloud.n_primitives
    else:
        owner = np.asarray(cloud)
        n = int(n_primitives if n_primitives is not None else (owner.max() + 1 if len(owner) else 0))
    f, owner, counts = _check_pool_inputs(f, owner, n)
    C = f.shape[1]
    out_max = out_avg = None
    if mode in ("max", "mixed"):
        out_max = np.full((n, C), -np.inf)
        np.maximum.at(out_max, owner, f)
    if mode in ("average", "mixed"):
        # each channel summed in (owner, value) order so row order cannot change the rounding
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        sums = np.empty((n, C))
        for c in range(C):
            col = f[np.lexsort((f[:, c], owner)), c]
            sums[:, c] = np.add.reduceat(col, starts) if n else col[:0]
        out_avg = sums / counts[:, None]
    if mode == "max":
        return out_max
    if mode == "average":
        return out_avg
    return out_max + out_avg


def mixed_pool(f, cloud: DensePointCloud | np.ndarray, n_primitives: int | None = None) -> np.ndarray:
    """Per channel: max over a primitive's points plus mean over its points."""
    return pool_variant(f, cloud, "mixed", n_primitives)


class PrimitivePooling(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`pool_variant`.

    ``transform`` takes ``(features, cloud)``; the estimator is stateless.
    """

    def __init__(self, mode: str = "mixed"):
        self.mode = mode

    def fit(self, X=None, y=None):
        check_option(self.mode, POOL_MODES, "mode")
        return self

    def transform(self, X):
        f, cloud = X
        return pool_variant(f, cloud, self.mode)


# ---------------------------------------------------------------------------
# descriptor

def _soft_histogram(values: np.ndarray, weights: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Histogram with linear splatting between bin centers (continuous in values)."""
    centers = 0.5 * (edges[:-1] + edges[1:])
    hist = np.zeros(len(centers))
    if len(values) == 0:
        return hist
    pos = np.interp(values, centers, np.arange(len(centers)))
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, len(centers) - 1)
    frac = pos - lo
    np.add.at(hist, lo, weights * (1 - frac))
    np.add.at(hist, hi, weights * frac)
    total = hist.sum()
    return hist / total if total > 0 else hist


# log10 curvature (1/units) bin edges; straight pieces land in the first bin
_CURV_EDGES = np.linspace(-3.0, 2.0, N_CURVATURE_BINS + 1)


def describe_primitive(prim: Primitive, samples: np.ndarray) -> np.ndarray:
    """Rotation- and translation-invariant descriptor of one sampled primitive.

    Layout: kind one-hot, arc length, principal-extent aspect ratio
    (minor/major), endpoint gap relative to length, soft histogram of
    log-curvature estimated from consecutive samples.
    """
    xy = np.asarray(samples, dtype=float)[:, :2]
    out = np.zeros(DESCRIPTOR_SIZE)
    out[_KINDS.index(prim.kind)] = 1.0
    length = arc_length(prim)
    k = len(_KINDS)
    out[k] = length
    if len(xy) >= 2:
        centered = xy - xy.mean(axis=0)
        ev = np.linalg.eigvalsh(centered.T @ centered / len(xy))
        major, minor = math.sqrt(max(ev[1], 0.0)), math.sqrt(max(ev[0], 0.0))
        out[k + 1] = minor / major if major > 0 else 0.0
        a, b = prim.endpoints()
        gap = 0.0 if prim.closed else math.hypot(b[0] - a[0], b[1] - a[1])
        out[k + 2] = gap / length if length > 0 else 0.0
    if len(xy) >= 3:
        seq = np.vstack([xy, xy[:1]]) if prim.closed else xy
        v = np.diff(seq, axis=0)
        ds = np.hypot(v[:, 0], v[:, 1])
        keep = ds > 0
        v, ds = v[keep], ds[keep]
        if len(v) >= 2:
            cross = v[:-1, 0] * v[1:, 1] - v[:-1, 1] * v[1:, 0]
            dot = (v[:-1] * v[1:]).sum(axis=1)
            turn = np.abs(np.arctan2(cross, dot))
            step = 0.5 * (ds[:-1] + ds[1:])
            curv = np.log10(np.maximum(turn / step, 1e-3))
            out[k + 3:] = _soft_histogram(curv, step, _CURV_EDGES)
    else:
        out[k + 3] = 1.0
    return out


def describe_drawing(drawing: Drawing, cloud: DensePointCloud) -> np.ndarray:
    """Stack :func:`describe_primitive` for every primitive (``N x D``)."""
    off = cloud.offsets
    return np.vstack([describe_primitive(p, cloud.points[off[i]:off[i + 1]]) for i, p in enumerate(drawing)])
