"""Window centerlines: union-find groups of near-parallel, touching segments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..model import Polyline, Primitive, Segment
from ..unionfind import DisjointSet


@dataclass(frozen=True)
class WindowRecord:
    line: tuple[tuple[float, float], tuple[float, float]]
    members: tuple[int, ...]
    instance: int = 0
    source: int = -1  # primitive id whose geometry is the centerline

    def to_dict(self) -> dict:
        return {"line": [list(self.line[0]), list(self.line[1])], "members": list(self.members),
                "instance": self.instance, "source": self.source}


def window_segments(prims: Sequence[Primitive]) -> list[tuple[int, np.ndarray, np.ndarray]]:
    out = []
    for p in sorted(prims, key=lambda q: q.id):
        if isinstance(p, Segment):
            out.append((p.id, np.array(p.start, float), np.array(p.end, float)))
        elif isinstance(p, Polyline):
            path = p.path()
            out += [(p.id, path[k], path[k + 1]) for k in range(len(path) - 1)]
    return [s for s in out if not np.array_equal(s[1], s[2])]


def _undirected_angle(u, v) -> float:
    c = abs(float(np.dot(u, v)))
    s = abs(float(u[0] * v[1] - u[1] * v[0]))
    return math.degrees(math.atan2(s, c))


def representative_line(segs) -> tuple[np.ndarray, np.ndarray]:
    """Length-weighted average line of a group (direction, midpoint and length)."""
    lengths = np.array([np.hypot(*(b - a)) for _, a, b in segs])
    ref_k = int(np.argmax(lengths))
    ref = (segs[ref_k][2] - segs[ref_k][1]) / lengths[ref_k]
    dirs, mids = [], []
    for (_, a, b), ln in zip(segs, lengths):
        u = (b - a) / ln
        dirs.append(u if np.dot(u, ref) >= 0 else -u)
        mids.append(0.5 * (a + b))
    w = lengths / lengths.sum()
    d = (w[:, None] * np.array(dirs)).sum(axis=0)
    d /= np.hypot(*d)
    mid = (w[:, None] * np.array(mids)).sum(axis=0)
    half = 0.5 * float((w * lengths).sum())
    return mid - half * d, mid + half * d


def _line_distance(a, b, r0, r1) -> float:
    return min(np.hypot(*(a - r0)) + np.hypot(*(b - r1)), np.hypot(*(a - r1)) + np.hypot(*(b - r0)))


def group_segments(segs, group_tol: float = 0.2, angle_tol: float = 5.0) -> list[list[int]]:
    """Indices into ``segs`` grouped by union-find, processed in sorted order."""
    ds = DisjointSet(len(segs))
    for i in range(len(segs)):
        _, a, b = segs[i]
        u = (b - a) / np.hypot(*(b - a))
        for j in range(i + 1, len(segs)):
            _, c, d = segs[j]
            v = (d - c) / np.hypot(*(d - c))
            if _undirected_angle(u, v) >= angle_tol:
                continue
            gap = min(np.hypot(*(p - q)) for p in (a, b) for q in (c, d))
            if gap <= group_tol:
                ds.union(i, j)
    return ds.groups()


def extract_windows(prims: Sequence[Primitive], group_tol: float = 0.2, angle_tol: float = 5.0,
                    instance: int = 0) -> list[WindowRecord]:
    """One record per group: the member closest to the group's representative line."""
    segs = window_segments(prims)
    out = []
    for group in group_segments(segs, group_tol, angle_tol):
        members = [segs[k] for k in group]
        r0, r1 = representative_line(members)
        best = min(range(len(members)), key=lambda k: (_line_distance(members[k][1], members[k][2], r0, r1),
                                                       members[k][0], k))
        pid, a, b = members[best]
        out.append(WindowRecord(((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))),
                                tuple(sorted({m[0] for m in members})), instance, pid))
    return out
