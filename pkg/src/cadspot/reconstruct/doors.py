"""Door parameters from the arcs and lines inside each door instance."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..model import Arc, Polyline, Primitive, Segment

HINGED = ("single", "double")
LINEAR = ("sliding", "folding")
DOOR_CLASS_SUBTYPES = {"single door": "single", "double door": "double", "sliding door": "sliding",
                       "folding door": "folding"}


@dataclass(frozen=True)
class DoorRecord:
    """One door leaf (hinged) or one door opening (sliding/folding).

    ``orientation`` is the leaf direction (hinged) or the opening axis
    (sliding/folding) in degrees; ``swing`` is the opening angle in degrees
    and ``swing_sign`` is +1 for counter-clockwise opening, -1 otherwise.
    """

    instance: int
    subtype: str
    pivot: tuple[float, float]
    width: float
    swing: float
    orientation: float
    swing_sign: int = 0
    status: str = "ok"  # "ok" | "arc_only" | "unparameterized"
    reason: str = ""
    members: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"instance": self.instance, "subtype": self.subtype, "pivot": list(self.pivot), "width": self.width,
                "swing": self.swing, "orientation": self.orientation, "swing_sign": self.swing_sign,
                "status": self.status, "reason": self.reason, "members": list(self.members)}


def _lines(prims: Sequence[Primitive]) -> list[tuple[int, np.ndarray, np.ndarray]]:
    out = []
    for p in prims:
        if isinstance(p, Segment):
            out.append((p.id, np.array(p.start, float), np.array(p.end, float)))
        elif isinstance(p, Polyline):
            path = p.path()
            out += [(p.id, path[k], path[k + 1]) for k in range(len(path) - 1)]
    return [ln for ln in out if not np.array_equal(ln[1], ln[2])]


def _angle(v) -> float:
    return math.degrees(math.atan2(v[1], v[0]))


def _unparameterized(instance, subtype, reason, members):
    return DoorRecord(instance, subtype, (math.nan, math.nan), math.nan, math.nan, math.nan, 0,
                      "unparameterized", reason, members)


def hinged_leaves(instance: int, subtype: str, prims: Sequence[Primitive], pivot_tol: float) -> list[DoorRecord]:
    """One record per arc; the pivot is the arc centre matched to a line endpoint."""
    members = tuple(sorted(p.id for p in prims))
    arcs = sorted((p for p in prims if isinstance(p, Arc)), key=lambda p: p.id)
    if not arcs:
        return [_unparameterized(instance, subtype, "no arc in instance", members)]
    lines = _lines(prims)
    out = []
    for arc in arcs:
        c = np.array(arc.center, float)
        r = arc.radius
        best = None
        for pid, a, b in lines:
            for near, far in ((a, b), (b, a)):
                if np.hypot(*(near - c)) <= pivot_tol:
                    key = (abs(float(np.hypot(*(far - c))) - r), pid)
                    if best is None or key < best[0]:
                        best = (key, far)
        e0, e1 = (np.array(e, float) for e in arc.endpoints())
        if best is None:
            start_dir = e0 - c
            out.append(DoorRecord(instance, subtype, (float(c[0]), float(c[1])), float(r),
                                  math.degrees(arc.sweep), _angle(start_dir), 1, "arc_only",
                                  "no line endpoint at the arc centre", members))
            continue
        tip = best[1]
        leaf = tip - c
        far_end = e0 if np.hypot(*(e0 - tip)) >= np.hypot(*(e1 - tip)) else e1
        closed = far_end - c
        cross = leaf[0] * closed[1] - leaf[1] * closed[0]
        swing = math.degrees(math.atan2(abs(cross), float(np.dot(leaf, closed))))
        # opening runs from the closed position to the leaf
        sign = 1 if cross < 0 else -1
        out.append(DoorRecord(instance, subtype, (float(c[0]), float(c[1])), float(r), swing, _angle(leaf), sign,
                              "ok", "", members))
    return out


def linear_door(instance: int, subtype: str, prims: Sequence[Primitive]) -> DoorRecord:
    """Opening midline: along the longest member line, spanning all member geometry."""
    members = tuple(sorted(p.id for p in prims))
    lines = _lines(prims)
    if not lines:
        return _unparameterized(instance, subtype, "no line in instance", members)
    lengths = [float(np.hypot(*(b - a))) for _, a, b in lines]
    k = max(range(len(lines)), key=lambda i: (lengths[i], -i))
    _, a, b = lines[k]
    u = (b - a) / lengths[k]
    if u[0] < 0 or (u[0] == 0 and u[1] < 0):
        u = -u
    n = np.array([-u[1], u[0]])
    pts = np.vstack([p.control_points() for p in prims])
    s, t = pts @ u, pts @ n
    mid_t = 0.5 * (t.min() + t.max())
    p0 = s.min() * u + mid_t * n
    p1 = s.max() * u + mid_t * n
    centre = 0.5 * (p0 + p1)
    return DoorRecord(instance, subtype, (float(centre[0]), float(centre[1])), float(s.max() - s.min()), 0.0,
                      _angle(u), 0, "ok", "", members)


def extract_doors(instances: Sequence[tuple[int, str, Sequence[Primitive]]], pivot_tol: float = 0.05) -> list[DoorRecord]:
    """Door records for ``(instance_id, subtype, member primitives)`` triples."""
    out = []
    for iid, subtype, prims in sorted(instances, key=lambda t: t[0]):
        if subtype in HINGED:
            out += hinged_leaves(iid, subtype, prims, pivot_tol)
        elif subtype in LINEAR:
            out.append(linear_door(iid, subtype, prims))
        else:
            raise ValueError(f"unknown door subtype {subtype!r}")
    return out
