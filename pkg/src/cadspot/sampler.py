"""Dense equidistant point sampling along primitives."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive
from .model import Arc, Circle, Drawing, Ellipse, Polyline, Primitive, Segment, _Bezier

DEFAULT_INTERVAL = 0.14

# Gauss-Legendre rule on [0, 1] shared by every curved primitive.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

_FLATNESS = 1e-4
_MAX_DEPTH = 40
_BATCH = 256


def _speed(prim: Primitive, t: np.ndarray) -> np.ndarray:
    d = prim.derivative(t)
    return np.hypot(d[..., 0], d[..., 1])


def _split_bezier(c: np.ndarray):
    """de Casteljau halves of a batch of curves shaped ``(m, degree + 1, 2)``."""
    n = c.shape[1]
    left = np.empty_like(c)
    right = np.empty_like(c)
    left[:, 0], right[:, -1] = c[:, 0], c[:, -1]
    a = c
    for k in range(1, n):
        a = 0.5 * (a[:, :-1] + a[:, 1:])
        left[:, k] = a[:, 0]
        right[:, n - 1 - k] = a[:, -1]
    return left, right


def _bezier_pieces(ctrl: np.ndarray, flatness: float = _FLATNESS) -> tuple[np.ndarray, np.ndarray]:
    """Accepted de Casteljau pieces of a batch of curves ``(m, degree + 1, 2)``.

    A piece is accepted once its control polygon exceeds its chord by at
    most ``flatness`` relative to the polygon length. Returns the owning
    curve and start parameter of every piece, sorted by curve then start.
    """
    c = np.asarray(ctrl, dtype=float)
    row = np.arange(len(c))
    t0 = np.zeros(len(c))
    rows, starts = [], []
    for depth in range(_MAX_DEPTH + 1):
        dv = c[:, 1:] - c[:, :-1]
        poly = np.sqrt((dv * dv).sum(axis=2)).sum(axis=1)
        ends = c[:, -1] - c[:, 0]
        chord = np.sqrt((ends * ends).sum(axis=1))
        done = (poly - chord <= flatness * poly) | (depth == _MAX_DEPTH)
        rows.append(row[done])
        starts.append(t0[done])
        if done.all():
            break
        c, row, t0 = c[~done], row[~done], t0[~done]
        left, right = _split_bezier(c)
        c = np.concatenate([left, right])
        row = np.concatenate([row, row])
        t0 = np.concatenate([t0, t0 + 0.5 ** (depth + 1)])
    row, t0 = np.concatenate(rows), np.concatenate(starts)
    order = np.lexsort((t0, row))
    return row[order], t0[order]


def bezier_breakpoints(ctrl: np.ndarray, flatness: float = _FLATNESS) -> np.ndarray:
    """Parameter breakpoints of one curve from recursive de Casteljau halving."""
    _, t0 = _bezier_pieces(np.asarray(ctrl, dtype=float)[None], flatness)
    return np.append(t0, 1.0)


def _ellipse_breakpoints(rx: float, ry: float, sweep_fraction: float) -> np.ndarray:
    ecc = max(rx, ry) / min(rx, ry)
    n = int(min(4096, max(8, math.ceil(64 * sweep_fraction * math.sqrt(ecc)))))
    return np.linspace(0.0, 1.0, n + 1)


def _bezier_speed(hodo: np.ndarray):
    """Speed of curve ``rows`` at ``t`` for a batch of hodograph control points ``(m, degree, 2)``."""
    n = hodo.shape[1] - 1
    coef = [math.comb(n, k) for k in range(n + 1)]

    def speed(rows, t):
        pts = hodo[rows]
        t = t[..., None]
        s = 1.0 - t
        out = 0.0
        for k in range(n + 1):
            out = out + (coef[k] * s ** (n - k) * t**k) * pts[..., k, :]
        return np.hypot(out[..., 0], out[..., 1])

    return speed


class _LengthTable:
    """Cumulative arc length of a batch of curves over parameter breakpoints, with inversion.

    ``speed(rows, t)`` gives the speed of curve ``rows`` at parameter ``t``
    (broadcast together). Every curve is handled independently of the rest
    of the batch, so results do not depend on how curves are grouped.
    """

    def __init__(self, speed, row: np.ndarray, a: np.ndarray, b: np.ndarray, n_curves: int):
        self.speed = speed
        self.row, self.a, self.b = row, a, b
        h = b - a
        nodes = a[:, None] + h[:, None] * _GL_X[None, :]
        piece = (speed(row[:, None], nodes) * _GL_W[None, :]).sum(axis=1) * h
        self.first = np.searchsorted(row, np.arange(n_curves + 1))
        self.cum = [np.concatenate([[0.0], np.cumsum(piece[self.first[r]:self.first[r + 1]])])
                    for r in range(n_curves)]
        self.ca = np.concatenate([c[:-1] for c in self.cum])
        self.cb = np.concatenate([c[1:] for c in self.cum])
        self.lengths = np.array([float(c[-1]) for c in self.cum])

    @classmethod
    def single(cls, prim: Primitive, breaks: np.ndarray) -> "_LengthTable":
        n = len(breaks) - 1
        return cls(lambda rows, t: _speed(prim, t), np.zeros(n, dtype=np.int64), breaks[:-1], breaks[1:], 1)

    @property
    def length(self) -> float:
        return float(self.lengths[0])

    def _s(self, rows: np.ndarray, t: np.ndarray, k: np.ndarray) -> np.ndarray:
        a = self.a[k]
        h = t - a
        nodes = a[:, None] + h[:, None] * _GL_X[None, :]
        return self.ca[k] + (self.speed(rows[:, None], nodes) * _GL_W[None, :]).sum(axis=1) * h

    def invert(self, s: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """Parameters ``t`` with arc length ``s`` from the start of curve ``rows``."""
        s = np.asarray(s, dtype=float)
        rows = np.zeros(len(s), dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
        k = np.empty(len(s), dtype=np.int64)
        for r in np.unique(rows):
            sel = rows == r
            lo, hi = self.first[r], self.first[r + 1]
            k[sel] = lo + np.clip(np.searchsorted(self.cum[r], s[sel], side="right") - 1, 0, hi - lo - 1)
        a, b = self.a[k], self.b[k]
        ca, cb = self.ca[k], self.cb[k]
        span = np.where(cb > ca, cb - ca, 1.0)
        t = a + (b - a) * np.clip((s - ca) / span, 0.0, 1.0)
        tol = 1e-13 * np.maximum(self.lengths[rows], 1.0)
        for _ in range(4):
            f = self._s(rows, t, k) - s
            live = np.abs(f) > tol
            if not live.any():
                break
            # converged stations keep their value, so each curve's result is batch independent
            v = self.speed(rows, t)
            step = np.where(v > 0, f / np.where(v > 0, v, 1.0), 0.0)
            t = np.where(live, np.clip(t - step, a, b), t)
        return t


def _bezier_table(prims) -> _LengthTable:
    ctrl = np.stack([p.control_points() for p in prims])
    row, t0 = _bezier_pieces(ctrl)
    last = np.append(row[1:] != row[:-1], True)
    t1 = np.append(t0[1:], 1.0)
    t1[last] = 1.0
    return _LengthTable(_bezier_speed(np.diff(ctrl, axis=1) * (ctrl.shape[1] - 1)), row, t0, t1, len(prims))


def _table(prim: Primitive) -> _LengthTable | None:
    if isinstance(prim, _Bezier):
        return _bezier_table([prim])
    if isinstance(prim, Ellipse):
        return _LengthTable.single(prim, _ellipse_breakpoints(prim.rx, prim.ry, 1.0))
    if isinstance(prim, Arc) and not prim.is_circular:
        return _LengthTable.single(prim, _ellipse_breakpoints(prim.rx, prim.ry, prim.sweep / (2 * math.pi)))
    return None


def arc_length(prim: Primitive) -> float:
    """Length of a primitive in drawing units.

    Exact for segments, polylines, circles and circular arcs; piecewise
    Gauss-Legendre quadrature for ellipses, elliptical arcs and Beziers.
    """
    if isinstance(prim, Segment):
        return prim.length
    if isinstance(prim, Polyline):
        return float(np.hypot(*np.diff(prim.path(), axis=0).T).sum())
    if isinstance(prim, Circle):
        return 2 * math.pi * prim.r
    if isinstance(prim, Arc) and prim.is_circular:
        return prim.rx * prim.sweep
    return _table(prim).length


def _positions(length: float, d: float, closed: bool) -> np.ndarray:
    """Arc-length stations: every ``d`` from 0, endpoints kept for open curves."""
    if closed:
        n = max(int(math.ceil(length / d - 1e-9)), 1)
        if n < 3:
            return length * np.arange(3) / 3.0
        return d * np.arange(n)
    n = int(math.floor(length / d + 1e-9))
    s = d * np.arange(n + 1)
    if length - s[-1] > 1e-9 * d:
        s = np.append(s, length)
    else:
        s[-1] = length
    if len(s) < 2:
        s = np.array([0.0, length])
    return s


def _degenerate(prim: Primitive, length: float) -> bool:
    scale = float(np.abs(prim.control_points()).max(initial=0.0))
    return length <= 1e-12 * max(1.0, scale)


def sample_primitive(prim: Primitive, d: float = DEFAULT_INTERVAL) -> np.ndarray:
    """Points at arc-length positions ``0, d, 2d, ...`` along ``prim``.

    Open primitives always include both endpoints (the final gap may be
    shorter than ``d``) and get at least 2 points. Closed primitives start
    at their parameter origin, never repeat it, and get at least 3 points.
    A zero-length primitive yields its single location.

    Returns:
        ``(n, 2)`` array of xy coordinates.
    """
    check_positive(d, "d")
    closed = bool(prim.closed)
    if isinstance(prim, Segment):
        length = prim.length
        if _degenerate(prim, length):
            return np.array([prim.start], dtype=float)
        return prim.point(_positions(length, d, False) / length)
    if isinstance(prim, Polyline):
        path = prim.path()
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(path, axis=0).T))])
        length = float(cum[-1])
        if _degenerate(prim, length):
            return path[:1].copy()
        s = _positions(length, d, closed)
        return np.stack([np.interp(s, cum, path[:, 0]), np.interp(s, cum, path[:, 1])], axis=-1)
    if isinstance(prim, Circle) or (isinstance(prim, Arc) and prim.is_circular):
        length = arc_length(prim)
        return prim.point(_positions(length, d, closed) / length)
    if isinstance(prim, _Bezier):
        return _sample_beziers([prim], d)[0]
    return _from_table([prim], _table(prim), d)[0]


def _from_table(prims, table: _LengthTable, d: float) -> list[np.ndarray]:
    stations, rows, live = [], [], []
    for r, prim in enumerate(prims):
        if not _degenerate(prim, table.lengths[r]):
            s = _positions(float(table.lengths[r]), d, bool(prim.closed))
            stations.append(s)
            rows.append(np.full(len(s), r, dtype=np.int64))
            live.append(r)
    t_all = table.invert(np.concatenate(stations), np.concatenate(rows)) if stations else np.zeros(0)
    out = [None] * len(prims)
    pos = 0
    for r, s in zip(live, stations):
        t = t_all[pos:pos + len(s)]
        pos += len(s)
        if not prims[r].closed:
            t[0], t[-1] = 0.0, 1.0
        out[r] = prims[r].point(t)
    for r, prim in enumerate(prims):
        if out[r] is None:
            out[r] = prim.point(np.array([0.0]))
    return out


def _sample_beziers(prims, d: float) -> list[np.ndarray]:
    """Bezier curves of one degree sampled together."""
    return _from_table(prims, _bezier_table(prims), d)


@dataclass(frozen=True, eq=False)
class DensePointCloud:
    """Sampled points (z = 0) with their owning primitive ids.

    Points are stored grouped by primitive in id order, so primitive ``i``
    owns ``points[offsets[i]:offsets[i + 1]]``.
    """

    points: np.ndarray
    owner: np.ndarray
    counts: np.ndarray
    interval: float = DEFAULT_INTERVAL

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    @property
    def n_primitives(self) -> int:
        return len(self.counts)

    def __len__(self) -> int:
        return len(self.points)

    def points_of(self, pid: int) -> np.ndarray:
        off = self.offsets
        return self.points[off[pid]:off[pid + 1]]

    def xy(self) -> np.ndarray:
        return self.points[:, :2]


def resolve_jobs(n_jobs: int | None) -> int:
    """Worker count: explicit value, else $CADSPOT_THREADS, else cpu count."""
    if n_jobs is None:
        env = os.environ.get("CADSPOT_THREADS")
        n_jobs = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(n_jobs))


def sample_drawing(drawing: Drawing, d: float = DEFAULT_INTERVAL, n_jobs: int | None = 1) -> DensePointCloud:
    """Sample every primitive and concatenate in primitive-id order."""
    check_positive(d, "d")
    if len(drawing) == 0:
        raise ValueError("no primitives")
    jobs = resolve_jobs(n_jobs)
    prims = drawing.primitives
    # Beziers of one degree go through the length tables in batches
    tasks: list[list[int]] = []
    by_degree: dict[int, list[int]] = {}
    for i, p in enumerate(prims):
        if isinstance(p, _Bezier):
            by_degree.setdefault(p.degree, []).append(i)
        else:
            tasks.append([i])
    for idx in by_degree.values():
        tasks += [idx[k:k + _BATCH] for k in range(0, len(idx), _BATCH)]

    def run(task):
        if isinstance(prims[task[0]], _Bezier):
            return _sample_beziers([prims[i] for i in task], d)
        return [sample_primitive(prims[task[0]], d)]

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    chunks: list = [None] * len(prims)
    for task, res in zip(tasks, results):
        for i, pts in zip(task, res):
            chunks[i] = pts
    counts = np.array([len(c) for c in chunks], dtype=np.int64)
    xy = np.vstack(chunks)
    points = np.column_stack([xy, np.zeros(len(xy))])
    owner = np.repeat(np.arange(len(chunks), dtype=np.int64), counts)
    return DensePointCloud(points, owner, counts, float(d))


class DenseSampler(TransformerMixin, BaseEstimator):
    """Transformer turning a Drawing into a DensePointCloud.

    Parameters
    ----------
    interval : float, default=0.14
        Arc-length spacing ``d`` between consecutive samples.
    scale : float, default=1.0
        Uniform pre-scale applied to the drawing before sampling.
    n_jobs : int or None, default=1
        Worker threads; None reads ``CADSPOT_THREADS``.
    """

    def __init__(self, interval: float = DEFAULT_INTERVAL, scale: float = 1.0, n_jobs: int | None = 1):
        self.interval = interval
        self.scale = scale
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        check_positive(self.interval, "interval")
        check_positive(self.scale, "scale")
        self.interval_ = float(self.interval)
        return self

    def transform(self, X: Drawing) -> DensePointCloud:
        interval = check_positive(self.interval, "interval")
        if self.scale != 1.0:
            X = X.transformed(np.diag([self.scale, self.scale, 1.0]))
        return sample_drawing(X, interval, self.n_jobs)
