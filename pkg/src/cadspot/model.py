"""Core domain types: primitives, drawings, class tables and labelings."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

Point = tuple[float, float]


class PrimitiveKind(str, enum.Enum):
    SEGMENT = "segment"
    ARC = "arc"
    CIRCLE = "circle"
    ELLIPSE = "ellipse"
    CUBIC_BEZIER = "cubic"
    QUAD_BEZIER = "quad"
    POLYLINE = "polyline"


def _pt(p: Iterable[float]) -> Point:
    x, y = p
    return (float(x), float(y))


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _apply(affine: np.ndarray, p: Point) -> Point:
    x = affine[0, 0] * p[0] + affine[0, 1] * p[1] + affine[0, 2]
    y = affine[1, 0] * p[0] + affine[1, 1] * p[1] + affine[1, 2]
    return (float(x), float(y))


def _transform_conic(affine: np.ndarray, rx: float, ry: float, rotation: float):
    """Push an ellipse frame through the linear part of ``affine``.

    Returns ``(rx, ry, rotation, sign, phase)`` such that a point with
    parametric angle ``theta`` on the source ellipse lands at parametric
    angle ``sign * theta + phase`` on the returned ellipse.
    """
    lin = affine[:2, :2] @ _rot(rotation) @ np.diag([rx, ry])
    u, s, vt = np.linalg.svd(lin)
    if np.linalg.det(u) < 0:
        u[:, 1] *= -1.0
        vt[1, :] *= -1.0
    sign = 1.0 if np.linalg.det(vt) > 0 else -1.0
    phase = math.atan2(vt[1, 0], vt[0, 0])
    new_rot = math.atan2(u[1, 0], u[0, 0])
    return float(s[0]), float(s[1]), new_rot, sign, phase


@dataclass(frozen=True)
class Primitive:
    """Base class for one vector graphic element.

    Curves are parameterized over ``t in [0, 1]``; ``point`` and
    ``derivative`` accept scalars or arrays of ``t``.
    """

    id: int

    kind = None  # type: PrimitiveKind
    closed = False

    def point(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def endpoints(self) -> tuple[Point, Point]:
        p = self.point(np.array([0.0, 1.0]))
        return (tuple(p[0]), tuple(p[1]))

    def control_points(self) -> np.ndarray:
        """Points whose bounding box contains the primitive."""
        raise NotImplementedError

    def transformed(self, affine: np.ndarray) -> "Primitive":
        raise NotImplementedError

    def with_id(self, new_id: int) -> "Primitive":
        return type(self)(new_id, *[getattr(self, f) for f in self._geometry_fields()])

    @classmethod
    def _geometry_fields(cls) -> list[str]:
        return [f for f in cls.__dataclass_fields__ if f != "id"]

    def to_dict(self) -> dict:
        out = {"id": self.id, "kind": self.kind.value}
        for name in self._geometry_fields():
            value = getattr(self, name)
            out[name] = [list(v) for v in value] if _is_point_list(value) else (
                list(value) if isinstance(value, tuple) else value
            )
        return out


def _is_point_list(value) -> bool:
    return isinstance(value, tuple) and len(value) > 0 and isinstance(value[0], tuple)


@dataclass(frozen=True)
class Segment(Primitive):
    start: Point = (0.0, 0.0)
    end: Point = (0.0, 0.0)

    kind = PrimitiveKind.SEGMENT

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        a, b = np.array(self.start), np.array(self.end)
        return a + t * (b - a)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.broadcast_to(np.array(self.end) - np.array(self.start), t.shape[:-1] + (2,))

    def control_points(self):
        return np.array([self.start, self.end])

    def transformed(self, affine):
        return Segment(self.id, _apply(affine, self.start), _apply(affine, self.end))

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])


@dataclass(frozen=True)
class Arc(Primitive):
    """Elliptical arc in center form.

    ``start`` and ``sweep`` are parametric angles in radians; ``sweep`` is
    positive, so the arc always runs counter-clockwise in the ellipse frame.
    Circular arcs have ``rx == ry``.
    """

    center: Point = (0.0, 0.0)
    rx: float = 1.0
    ry: float = 1.0
    rotation: float = 0.0
    start: float = 0.0
    sweep: float = math.pi

    kind = PrimitiveKind.ARC

    def __post_init__(self):
        if not (self.rx > 0 and self.ry > 0):
            raise ValueError(f"arc {self.id}: radii must be positive")
        if not (0.0 < self.sweep <= TWO_PI + 1e-12):
            raise ValueError(f"arc {self.id}: sweep must lie in (0, 2*pi]")

    @property
    def radius(self) -> float:
        return 0.5 * (self.rx + self.ry)

    @property
    def is_circular(self) -> bool:
        return math.isclose(self.rx, self.ry, rel_tol=1e-12)

    def _theta(self, t):
        return self.start + np.asarray(t, dtype=float) * self.sweep

    def point(self, t):
        th = self._theta(t)
        local = np.stack([self.rx * np.cos(th), self.ry * np.sin(th)], axis=-1)
        return local @ _rot(self.rotation).T + np.array(self.center)

    def derivative(self, t):
        th = self._theta(t)
        local = np.stack([-self.rx * np.sin(th), self.ry * np.cos(th)], axis=-1) * self.sweep
        return local @ _rot(self.rotation).T

    def control_points(self):
        # Extremes of the full ellipse clipped to the swept range, plus endpoints.
        c = np.array(self.center)
        cr, sr = math.cos(self.rotation), math.sin(self.rotation)
        cands = [
            math.atan2(-self.ry * sr, self.rx * cr),
            math.atan2(self.ry * cr, self.rx * sr),
        ]
        thetas = [self.start, self.start + self.sweep]
        for base in cands:
            for k in range(-2, 4):
                th = base + k * math.pi
                if self.start <= th <= self.start + self.sweep:
                    thetas.append(th)
        th = np.array(thetas)
        local = np.stack([self.rx * np.cos(th), self.ry * np.sin(th)], axis=-1)
        return local @ _rot(self.rotation).T + c

    def transformed(self, affine):
        rx, ry, rot, sign, phase = _transform_conic(affine, self.rx, self.ry, self.rotation)
        start = sign * self.start + phase
        sweep = sign * self.sweep
        if sweep < 0:
            start, sweep = start + sweep, -sweep
        return Arc(self.id, _apply(affine, self.center), rx, ry, rot, start, sweep)


@dataclass(frozen=True)
class Circle(Primitive):
    """Full circle; ``phase`` is the angle of the parameter origin."""

    center: Point = (0.0, 0.0)
    r: float = 1.0
    phase: float = 0.0

    kind = PrimitiveKind.CIRCLE
    closed = True

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"circle {self.id}: radius must be positive")

    def point(self, t):
        th = TWO_PI * np.asarray(t, dtype=float) + self.phase
        return np.stack([self.r * np.cos(th), self.r * np.sin(th)], axis=-1) + np.array(self.center)

    def derivative(self, t):
        th = TWO_PI * np.asarray(t, dtype=float) + self.phase
        return np.stack([-np.sin(th), np.cos(th)], axis=-1) * (TWO_PI * self.r)

    def control_points(self):
        cx, cy = self.center
        return np.array([[cx - self.r, cy - self.r], [cx + self.r, cy + self.r]])

    def transformed(self, affine):
        rx, ry, rot, sign, shift = _transform_conic(affine, self.r, self.r, 0.0)
        center = _apply(affine, self.center)
        phase = sign * self.phase + shift
        if math.isclose(rx, ry, rel_tol=1e-12):
            # Fold the ellipse frame rotation into the phase of a circle.
            return Circle(self.id, center, rx, math.remainder(phase + rot, TWO_PI))
        return Ellipse(self.id, center, rx, ry, rot, phase)


@dataclass(frozen=True)
class Ellipse(Primitive):
    center: Point = (0.0, 0.0)
    rx: float = 1.0
    ry: float = 1.0
    rotation: float = 0.0
    phase: float = 0.0

    kind = PrimitiveKind.ELLIPSE
    closed = True

    def __post_init__(self):
        if not (self.rx > 0 and self.ry > 0):
            raise ValueError(f"ellipse {self.id}: semi-axes must be positive")

    def point(self, t):
        th = TWO_PI * np.asarray(t, dtype=float) + self.phase
        local = np.stack([self.rx * np.cos(th), self.ry * np.sin(th)], axis=-1)
        return local @ _rot(self.rotation).T + np.array(self.center)

    def derivative(self, t):
        th = TWO_PI * np.asarray(t, dtype=float) + self.phase
        local = np.stack([-self.rx * np.sin(th), self.ry * np.cos(th)], axis=-1) * TWO_PI
        return local @ _rot(self.rotation).T

    def control_points(self):
        cr, sr = math.cos(self.rotation), math.sin(self.rotation)
        hx = math.hypot(self.rx * cr, self.ry * sr)
        hy = math.hypot(self.rx * sr, self.ry * cr)
        cx, cy = self.center
        return np.array([[cx - hx, cy - hy], [cx + hx, cy + hy]])

    def transformed(self, affine):
        rx, ry, rot, sign, shift = _transform_conic(affine, self.rx, self.ry, self.rotation)
        return Ellipse(self.id, _apply(affine, self.center), rx, ry, rot, sign * self.phase + shift)


@dataclass(frozen=True)
class _Bezier(Primitive):
    ctrl: tuple[Point, ...] = ()

    def __post_init__(self):
        if len(self.ctrl) != self.degree + 1:
            raise ValueError(f"{self.kind.value} {self.id}: expected {self.degree + 1} control points")

    degree = 0

    def _ctrl(self) -> np.ndarray:
        return np.asarray(self.ctrl, dtype=float)

    @staticmethod
    def _bernstein(pts: np.ndarray, t: np.ndarray) -> np.ndarray:
        n = len(pts) - 1
        t = t[..., None]
        s = 1.0 - t
        out = 0.0
        for k in range(n + 1):
            out = out + (math.comb(n, k) * s ** (n - k) * t**k) * pts[k]
        return out

    def point(self, t):
        return self._bernstein(self._ctrl(), np.asarray(t, dtype=float))

    def derivative(self, t):
        return self._bernstein(np.diff(self._ctrl(), axis=0) * self.degree, np.asarray(t, dtype=float))

    def control_points(self):
        return self._ctrl()

    def transformed(self, affine):
        return type(self)(self.id, tuple(_apply(affine, p) for p in self.ctrl))


@dataclass(frozen=True)
class CubicBezier(_Bezier):
    kind = PrimitiveKind.CUBIC_BEZIER
    degree = 3


@dataclass(frozen=True)
class QuadBezier(_Bezier):
    kind = PrimitiveKind.QUAD_BEZIER
    degree = 2


@dataclass(frozen=True)
class Polyline(Primitive):
    vertices: tuple[Point, ...] = ()
    is_closed: bool = False

    kind = PrimitiveKind.POLYLINE

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError(f"polyline {self.id}: needs at least 2 vertices")

    @property
    def closed(self) -> bool:  # type: ignore[override]
        return self.is_closed

    def path(self) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=float)
        return np.vstack([v, v[:1]]) if self.is_closed else v

    def _cum(self):
        v = self.path()
        return v, np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(v, axis=0).T))])

    def point(self, t):
        v, cum = self._cum()
        t = np.asarray(t, dtype=float)
        total = cum[-1]
        if total == 0:
            return np.broadcast_to(v[0], t.shape + (2,)).copy()
        s = t * total
        x = np.interp(s, cum, v[:, 0])
        y = np.interp(s, cum, v[:, 1])
        return np.stack([x, y], axis=-1)

    def derivative(self, t):
        v, cum = self._cum()
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(cum, t * cum[-1], side="right") - 1, 0, len(v) - 2)
        seg = np.diff(v, axis=0)
        lens = np.diff(cum)
        scale = np.where(lens > 0, cum[-1] / np.where(lens > 0, lens, 1.0), 0.0)
        return seg[idx] * scale[idx][..., None]

    def control_points(self):
        return np.asarray(self.vertices, dtype=float)

    def transformed(self, affine):
        return Polyline(self.id, tuple(_apply(affine, p) for p in self.vertices), self.is_closed)

    def endpoints(self):
        v = self.path()
        return (tuple(v[0]), tuple(v[-1]))


PRIMITIVE_TYPES = {
    cls.kind: cls for cls in (Segment, Arc, Circle, Ellipse, CubicBezier, QuadBezier, Polyline)
}


def primitive_from_dict(data: dict) -> Primitive:
    """Inverse of ``Primitive.to_dict``."""
    cls = PRIMITIVE_TYPES[PrimitiveKind(data["kind"])]
    kwargs = {}
    for name in cls._geometry_fields():
        value = data[name]
        if isinstance(value, list):
            value = tuple(_pt(v) for v in value) if value and isinstance(value[0], list) else _pt(value)
        kwargs[name] = value
    return cls(int(data["id"]), **kwargs)


Bounds = tuple[float, float, float, float]


def compute_bounds(primitives: Sequence[Primitive]) -> Bounds:
    pts = np.vstack([p.control_points() for p in primitives])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass(frozen=True)
class Drawing:
    """An ordered collection of primitives with dense ids ``0..N-1``."""

    primitives: tuple[Primitive, ...]
    bounds: Bounds = (0.0, 0.0, 0.0, 0.0)
    source_scale: float | None = None

    def __post_init__(self):
        for i, p in enumerate(self.primitives):
            if p.id != i:
                raise ValueError(f"primitive ids must be dense: position {i} holds id {p.id}")

    @classmethod
    def from_primitives(cls, primitives: Iterable[Primitive], source_scale=None) -> "Drawing":
        prims = tuple(p.with_id(i) for i, p in enumerate(primitives))
        bounds = compute_bounds(prims) if prims else (0.0, 0.0, 0.0, 0.0)
        return cls(prims, bounds, source_scale)

    def __len__(self) -> int:
        return len(self.primitives)

    def __getitem__(self, i: int) -> Primitive:
        return self.primitives[i]

    def __iter__(self):
        return iter(self.primitives)

    def transformed(self, affine: np.ndarray) -> "Drawing":
        return Drawing.from_primitives([p.transformed(affine) for p in self.primitives], self.source_scale)


# ---------------------------------------------------------------------------
# class table

@dataclass(frozen=True)
class SemanticClass:
    id: int
    name: str
    kind: str  # "thing" | "stuff"

    @property
    def is_thing(self) -> bool:
        return self.kind == "thing"


@dataclass(frozen=True)
class ClassTable:
    classes: tuple[SemanticClass, ...]
    num_semantic_labels: int
    background_id: int
    background_name: str = "background"

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate class ids in class table")
        for c in self.classes:
            if c.kind not in ("thing", "stuff"):
                raise ValueError(f"class {c.id}: kind must be 'thing' or 'stuff', got {c.kind!r}")
            if not 0 <= c.id < self.num_semantic_labels:
                raise ValueError(f"class {c.id} outside [0, {self.num_semantic_labels})")
        if not 0 <= self.background_id < self.num_semantic_labels or self.background_id in ids:
            raise ValueError("background id must be a free label below num_semantic_labels")

    def __len__(self) -> int:
        return len(self.classes)

    def __getitem__(self, class_id: int) -> SemanticClass:
        return self._by_id[class_id]

    @property
    def _by_id(self) -> dict[int, SemanticClass]:
        return {c.id: c for c in self.classes}

    def is_thing(self, class_id: int) -> bool:
        c = self._by_id.get(int(class_id))
        return c is not None and c.is_thing

    def is_stuff(self, class_id: int) -> bool:
        c = self._by_id.get(int(class_id))
        return c is not None and not c.is_thing

    @property
    def thing_ids(self) -> list[int]:
        return [c.id for c in self.classes if c.is_thing]

    @property
    def stuff_ids(self) -> list[int]:
        return [c.id for c in self.classes if not c.is_thing]

    def id_of(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.id
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "num_semantic_labels": self.num_semantic_labels,
            "background": {"id": self.background_id, "name": self.background_name},
            "classes": [{"id": c.id, "name": c.name, "kind": c.kind} for c in self.classes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassTable":
        classes = tuple(SemanticClass(int(c["id"]), str(c["name"]), str(c["kind"])) for c in data["classes"])
        bg = data.get("background", {})
        k = int(data.get("num_semantic_labels", len(classes) + 1))
        return cls(classes, k, int(bg.get("id", k - 1)), str(bg.get("name", "background")))


def load_class_table(path: str | Path | None = None) -> ClassTable:
    """Load a class table from JSON; ``None`` loads the packaged 35-class table."""
    if path is None:
        text = resources.files("cadspot").joinpath("data/classes.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return ClassTable.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# labelings and proposals

def _frozen_int(values) -> np.ndarray:
    arr = np.array(values, dtype=np.int64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PanopticLabeling:
    """Per-primitive semantic class and instance id (0 means no instance)."""

    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "semantic", _frozen_int(self.semantic))
        object.__setattr__(self, "instance", _frozen_int(self.instance))
        if self.semantic.shape != self.instance.shape:
            raise ValueError("semantic and instance vectors differ in length")

    def __len__(self) -> int:
        return len(self.semantic)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanopticLabeling):
            return NotImplemented
        return np.array_equal(self.semantic, other.semantic) and np.array_equal(self.instance, other.instance)

    def instances(self) -> dict[int, np.ndarray]:
        """Map each nonzero instance id to its sorted member primitive ids."""
        out = {}
        ids = self.instance
        order = np.argsort(ids, kind="stable")
        sorted_ids = ids[order]
        bounds = np.flatnonzero(np.diff(sorted_ids)) + 1
        for chunk in np.split(order, bounds):
            if len(chunk) and ids[chunk[0]] != 0:
                out[int(ids[chunk[0]])] = np.sort(chunk)
        return out

    def rows(self) -> list[list[int]]:
        return [[i, int(s), int(k)] for i, (s, k) in enumerate(zip(self.semantic, self.instance))]


@dataclass(frozen=True, eq=False)
class InstanceProposal:
    """A scored likelihood mask over primitives with per-class scores."""

    mask: np.ndarray
    class_scores: np.ndarray
    score: float

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=float).reshape(-1)
        if not np.all(np.isfinite(mask)):
            raise ValueError("instance mask contains non-finite values")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "class_scores", np.asarray(self.class_scores, dtype=float).reshape(-1))
        object.__setattr__(self, "score", float(self.score))

    @property
    def label(self) -> int:
        return int(np.argmax(self.class_scores))


def binarize_mask(proposal: InstanceProposal | np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Indices ``i`` with ``mask[i] >= threshold``, ascending."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    mask = proposal.mask if isinstance(proposal, InstanceProposal) else np.asarray(proposal, dtype=float)
    return np.flatnonzero(mask >= threshold)


@dataclass(frozen=True)
class Violation:
    kind: str  # "length" | "semantic_range" | "instance_range" | "mixed_instance"
    ids: tuple[int, ...]
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_labeling(labeling: PanopticLabeling, table: ClassTable, n_primitives: int | None = None) -> ValidationReport:
    """Report structural problems of a labeling without repairing them.

    Checks the length against ``n_primitives`` (when given), semantic ids in
    ``[0, K_sem)``, nonnegative instance ids and class purity of every
    instance.
    """
    found = []
    if n_primitives is not None and len(labeling) != n_primitives:
        found.append(Violation("length", (), f"labeling has {len(labeling)} rows, drawing has {n_primitives}"))
    sem, inst = labeling.semantic, labeling.instance
    bad = np.flatnonzero((sem < 0) | (sem >= table.num_semantic_labels))
    if len(bad):
        found.append(Violation("semantic_range", tuple(int(i) for i in bad),
                               f"semantic ids outside [0, {table.num_semantic_labels})"))
    bad = np.flatnonzero(inst < 0)
    if len(bad):
        found.append(Violation("instance_range", tuple(int(i) for i in bad), "negative instance ids"))
    for inst_id, members in labeling.instances().items():
        classes = np.unique(sem[members])
        if len(classes) > 1:
            found.append(Violation("mixed_instance", (inst_id,),
                                   f"instance {inst_id} spans classes {classes.tolist()}"))
    return ValidationReport(tuple(found))


Rect = tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class WindowProposals:
    """Predictor output for one window.

    ``semantic_scores`` rows and instance mask entries align with
    ``primitive_ids`` (ascending global ids of the primitives the window
    covers or intersects).
    """

    window: Rect
    primitive_ids: np.ndarray
    semantic_scores: np.ndarray
    instances: tuple[InstanceProposal, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(float(v) for v in self.window))
        ids = np.asarray(self.primitive_ids, dtype=np.int64).reshape(-1)
        if len(ids) > 1 and np.any(np.diff(ids) <= 0):
            raise ValueError("window primitive ids must be strictly ascending")
        sem = np.asarray(self.semantic_scores, dtype=float)
        if sem.size == 0 and len(ids) == 0:
            sem = sem.reshape(0, sem.shape[-1] if sem.ndim == 2 else 0)
        if sem.ndim != 2 or sem.shape[0] != len(ids):
            raise ValueError(f"semantic rows ({sem.shape}) do not align with {len(ids)} window primitives")
        for k, inst in enumerate(self.instances):
            if inst.mask.shape != (len(ids),):
                raise ValueError(f"instance {k}: mask length {inst.mask.shape[0]} != {len(ids)} window primitives")
        object.__setattr__(self, "primitive_ids", ids)
        object.__setattr__(self, "semantic_scores", sem)
        object.__setattr__(self, "instances", tuple(self.instances))

    def __eq__(self, other) -> bool:
        if not isinstance(other, WindowProposals):
            return NotImplemented
        if self.window != other.window or len(self.instances) != len(other.instances):
            return False
        if not (np.array_equal(self.primitive_ids, other.primitive_ids)
                and np.array_equal(self.semantic_scores, other.semantic_scores)):
            return False
        return all(
            np.array_equal(a.mask, b.mask) and np.array_equal(a.class_scores, b.class_scores) and a.score == b.score
            for a, b in zip(self.instances, other.instances)
        )
