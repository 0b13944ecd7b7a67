"""Scene file and extruded wall mesh (ASCII OBJ)."""
from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .doors import DoorRecord
from .polygons import ear_clip, signed_area
from .walls import WallPolygon
from .windows import WindowRecord


@dataclass
class Scene:
    walls: list[WallPolygon] = field(default_factory=list)
    doors: list[DoorRecord] = field(default_factory=list)
    windows: list[WindowRecord] = field(default_factory=list)
    wall_height: float = 3.0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = {"walls": [w.to_dict() for w in self.walls], "doors": [d.to_dict() for d in self.doors],
                "windows": [w.to_dict() for w in self.windows], "wall_height": self.wall_height}
        if self.config:
            data["config"] = self.config
        return data


def _json_float(v):
    return None if isinstance(v, float) and v != v else v


def export_scene(scene: Scene) -> str:
    """scene.json text; NaN door fields (unparameterized) become null."""
    data = scene.to_dict()
    for d in data["doors"]:
        d["pivot"] = [_json_float(v) for v in d["pivot"]]
        for k in ("width", "swing", "orientation"):
            d[k] = _json_float(d[k])
    return json.dumps(data, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _nan(v):
    return float("nan") if v is None else float(v)


def load_scene(text: str) -> Scene:
    data = json.loads(text)
    walls = [WallPolygon(tuple((float(x), float(y)) for x, y in w["loop"]), w.get("role", "wall_component"),
                         int(w.get("component", 0))) for w in data.get("walls", [])]
    doors = [DoorRecord(int(d.get("instance", 0)), d["subtype"], (_nan(d["pivot"][0]), _nan(d["pivot"][1])),
                        _nan(d["width"]), _nan(d["swing"]), _nan(d.get("orientation")), int(d.get("swing_sign", 0)),
                        d.get("status", "ok"), d.get("reason", ""), tuple(d.get("members", ())))
             for d in data.get("doors", [])]
    windows = [WindowRecord((tuple(w["line"][0]), tuple(w["line"][1])), tuple(w.get("members", ())),
                            int(w.get("instance", 0)), int(w.get("source", -1))) for w in data.get("windows", [])]
    return Scene(walls, doors, windows, float(data.get("wall_height", 3.0)), dict(data.get("config", {})))


def extrude_polygon(loop, height: float, base: int = 0):
    """Prism vertices and outward-facing triangles for one simple polygon."""
    p = np.asarray(loop, dtype=float)
    if signed_area(p) < 0:
        p = p[::-1]
    n = len(p)
    verts = [(x, y, 0.0) for x, y in p] + [(x, y, float(height)) for x, y in p]
    cap = ear_clip(p)
    faces = [(base + a, base + c, base + b) for a, b, c in cap]
    faces += [(base + n + a, base + n + b, base + n + c) for a, b, c in cap]
    for i in range(n):
        j = (i + 1) % n
        faces.append((base + i, base + j, base + n + j))
        faces.append((base + i, base + n + j, base + n + i))
    return verts, faces


def wall_mesh(walls: Sequence[WallPolygon], height: float):
    """Vertices and triangles of all extruded wall polygons; degenerate loops are skipped."""
    if not height > 0:
        raise ValueError("wall_height must be positive")
    verts, faces = [], []
    for w in walls:
        loop = np.asarray(w.loop, dtype=float)
        if len(loop) < 3 or abs(signed_area(loop)) <= 1e-12:
            warnings.warn(f"skipping degenerate wall polygon (component {w.component})", stacklevel=2)
            continue
        try:
            v, f = extrude_polygon(loop, height, len(verts))
        except ValueError as exc:
            warnings.warn(f"skipping wall polygon (component {w.component}): {exc}", stacklevel=2)
            continue
        verts += v
        faces += f
    return verts, faces


def _fmt(v: float) -> str:
    out = format(float(v), ".12g")
    return "0" if out == "-0" else out


def export_wall_mesh(walls: Sequence[WallPolygon], height: float) -> str:
    """ASCII OBJ with positions and triangles only."""
    verts, faces = wall_mesh(walls, height)
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in verts]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_obj(text: str):
    verts, faces = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append(tuple(float(v) for v in parts[1:4]))
        elif parts[0] == "f":
            faces.append(tuple(int(v.split("/")[0]) - 1 for v in parts[1:4]))
    return verts, faces


def is_watertight(faces) -> bool:
    """Every directed edge is matched by exactly one opposite edge (closed, consistently oriented)."""
    directed = Counter()
    for a, b, c in faces:
        for e in ((a, b), (b, c), (c, a)):
            directed[e] += 1
    if any(v != 1 for v in directed.values()):
        return False
    return all(directed.get((b, a), 0) == 1 for a, b in directed)
