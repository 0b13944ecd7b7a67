"""Small planar polygon utilities: area, simplification, simplicity, ear clipping."""
from __future__ import annotations

import math

import numpy as np


def signed_area(loop) -> float:
    p = np.asarray(loop, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _point_line_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    n = math.hypot(*ab)
    if n == 0:
        return np.hypot(*(pts - a).T)
    return np.abs(ab[0] * (pts[:, 1] - a[1]) - ab[1] * (pts[:, 0] - a[0])) / n


def douglas_peucker(path: np.ndarray, tol: float) -> np.ndarray:
    """Open-path Douglas-Peucker keeping both ends."""
    path = np.asarray(path, dtype=float)
    if len(path) < 3:
        return path
    keep = np.zeros(len(path), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(path) - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        d = _point_line_dist(path[lo + 1:hi], path[lo], path[hi])
        k = int(np.argmax(d))
        if d[k] > tol:
            mid = lo + 1 + k
            keep[mid] = True
            stack.append((lo, mid))
            stack.append((mid, hi))
    return path[keep]


def simplify_closed(loop: np.ndarray, tol: float) -> np.ndarray:
    """Douglas-Peucker on a closed loop, split at the two mutually farthest-apart vertices."""
    loop = np.asarray(loop, dtype=float)
    if len(loop) < 4:
        return loop
    a = int(np.argmax(np.hypot(*(loop - loop[0]).T)))
    b = int(np.argmax(np.hypot(*(loop - loop[a]).T)))
    lo, hi = sorted((a, b))
    if lo == hi:
        return loop[:1]
    first = douglas_peucker(loop[lo:hi + 1], tol)
    second = douglas_peucker(np.vstack([loop[hi:], loop[:lo + 1]]), tol)
    return np.vstack([first[:-1], second[:-1]])


def remove_collinear(loop: np.ndarray, max_angle_deg: float = 1.0) -> np.ndarray:
    """Drop vertices where the loop turns by less than ``max_angle_deg`` (and duplicates)."""
    pts = [tuple(p) for p in np.asarray(loop, dtype=float)]
    limit = math.radians(max_angle_deg)
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        for k in range(len(pts)):
            a, b, c = np.array(pts[k - 1]), np.array(pts[k]), np.array(pts[(k + 1) % len(pts)])
            u, v = b - a, c - b
            nu, nv = math.hypot(*u), math.hypot(*v)
            if nu == 0 or nv == 0:
                del pts[k]
                changed = True
                break
            turn = abs(math.atan2(u[0] * v[1] - u[1] * v[0], float(np.dot(u, v))))
            if turn < limit:
                del pts[k]
                changed = True
                break
    return np.array(pts, dtype=float).reshape(-1, 2)


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, p3), orient(p1, p2, p4), orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, p3)) or (o2 == 0 and on_seg(p1, p2, p4))
            or (o3 == 0 and on_seg(p3, p4, p1)) or (o4 == 0 and on_seg(p3, p4, p2)))


def is_simple(loop) -> bool:
    """True when no two non-adjacent edges of the closed loop touch."""
    p = [tuple(v) for v in np.asarray(loop, dtype=float)]
    n = len(p)
    if n < 3 or len(set(p)) != n:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]):
                return False
    return True


def ear_clip(loop) -> list[tuple[int, int, int]]:
    """Triangulate a simple polygon; triangles share the loop's orientation."""
    p = np.asarray(loop, dtype=float)
    n = len(p)
    if n < 3:
        return []
    sign = 1.0 if signed_area(p) >= 0 else -1.0
    idx = list(range(n))
    tris = []

    def cross(a, b, c):
        return sign * ((p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1]) - (p[b, 1] - p[a, 1]) * (p[c, 0] - p[a, 0]))

    def inside(q, a, b, c):
        return cross(a, b, q) >= 0 and cross(b, c, q) >= 0 and cross(c, a, q) >= 0

    guard = 0
    while len(idx) > 3 and guard < 10 * n * n:
        guard += 1
        m = len(idx)
        for k in range(m):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % m]
            if cross(a, b, c) <= 0:
                continue
            if any(inside(q, a, b, c) for q in idx if q not in (a, b, c) and tuple(p[q]) not in
                   (tuple(p[a]), tuple(p[b]), tuple(p[c]))):
                continue
            tris.append((a, b, c))
            del idx[k]
            break
        else:
            raise ValueError("polygon could not be triangulated (not simple?)")
    tris.append((idx[0], idx[1], idx[2]))
    return tris
