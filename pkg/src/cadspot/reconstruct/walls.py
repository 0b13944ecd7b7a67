"""Wall polygons from wall-class primitives through a raster round trip.

Endpoints closer than ``merge_tol`` are snapped together, the wall strokes
are drawn into a binary grid, background regions are labeled and the
largest enclosed region becomes the floor. Region borders are traced,
mapped back to drawing units and simplified.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ..model import Polyline, Primitive, Segment
from ..sampler import sample_primitive
from ..unionfind import DisjointSet
from .contours import find_contours
from .polygons import is_simple, remove_collinear, signed_area, simplify_closed

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class WallPolygon:
    loop: tuple[tuple[float, float], ...]
    role: str  # "floor_boundary" | "wall_component"
    component: int

    def to_dict(self) -> dict:
        return {"loop": [list(p) for p in self.loop], "role": self.role, "component": self.component}


@dataclass(frozen=True)
class WallConfig:
    """``merge_tol`` of None means two raster cells; ``area_min`` is a fraction of the image area."""

    raster_res: int = 8192
    merge_tol: float | None = None
    area_min: float = 0.0005
    pad: int = 4
    simplify_cells: float = 1.0
    collinear_deg: float = 1.0

    def __post_init__(self):
        if self.raster_res < 16:
            raise ValueError("raster_res must be >= 16")
        if self.merge_tol is not None and self.merge_tol < 0:
            raise ValueError("merge_tol must be >= 0")
        if not 0 <= self.area_min < 1:
            raise ValueError("area_min must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RasterFrame:
    """Mapping between drawing units and pixel centres: ``col = (x - x0) * scale + pad``."""

    x0: float
    y0: float
    scale: float
    pad: int
    shape: tuple[int, int]

    @property
    def cell(self) -> float:
        return 1.0 / self.scale

    def to_pixels(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return np.stack([(xy[..., 0] - self.x0) * self.scale + self.pad,
                         (xy[..., 1] - self.y0) * self.scale + self.pad], axis=-1)

    def to_drawing(self, cols_rows: np.ndarray) -> np.ndarray:
        cr = np.asarray(cols_rows, dtype=float)
        return np.stack([(cr[..., 0] - self.pad) / self.scale + self.x0,
                         (cr[..., 1] - self.pad) / self.scale + self.y0], axis=-1)


def make_frame(chains: Sequence[np.ndarray], raster_res: int, pad: int) -> RasterFrame:
    pts = np.vstack(chains)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    if extent <= 0:
        extent = 1.0
    scale = (raster_res - 2 * pad - 1) / extent
    w = int(math.ceil((hi[0] - lo[0]) * scale)) + 2 * pad + 1
    h = int(math.ceil((hi[1] - lo[1]) * scale)) + 2 * pad + 1
    return RasterFrame(float(lo[0]), float(lo[1]), scale, pad, (h, w))


def wall_chains(primitives: Sequence[Primitive], spacing: float) -> list[np.ndarray]:
    """Vertex chains per primitive; curves are flattened at ``spacing``."""
    out = []
    for p in primitives:
        if isinstance(p, Segment):
            out.append(np.array([p.start, p.end], dtype=float))
        elif isinstance(p, Polyline):
            out.append(p.path())
        else:
            pts = sample_primitive(p, spacing)
            if p.closed:
                pts = np.vstack([pts, pts[:1]])
            out.append(pts)
    return out


def merge_endpoints(chains: Sequence[np.ndarray], tol: float) -> list[np.ndarray]:
    """Snap free chain ends lying within ``tol`` of each other to their cluster centroid."""
    chains = [np.array(c, dtype=float) for c in chains]
    ends, where = [], []
    for k, c in enumerate(chains):
        if len(c) >= 2 and not np.array_equal(c[0], c[-1]):
            ends += [c[0], c[-1]]
            where += [(k, 0), (k, len(c) - 1)]
    if not ends or tol <= 0:
        return chains
    ends = np.array(ends)
    ds = DisjointSet(len(ends))
    for a, b in sorted(cKDTree(ends).query_pairs(tol)):
        ds.union(a, b)
    for group in ds.groups():
        if len(group) < 2:
            continue
        centre = ends[group].mean(axis=0)
        for g in group:
            k, idx = where[g]
            chains[k][idx] = centre
    return chains


def unique_segments(chains: Sequence[np.ndarray]) -> np.ndarray:
    """Chain edges as an ``(n, 2, 2)`` array without zero-length or duplicate segments."""
    segs = []
    seen = set()
    for c in chains:
        for a, b in zip(c[:-1], c[1:]):
            ta, tb = (float(a[0]), float(a[1])), (float(b[0]), float(b[1]))
            if ta == tb:
                continue
            key = (ta, tb) if ta <= tb else (tb, ta)
            if key in seen:
                continue
            seen.add(key)
            segs.append(key)
    return np.array(segs, dtype=float).reshape(-1, 2, 2)


def rasterize_segments(segments: np.ndarray, frame: RasterFrame) -> np.ndarray:
    """Draw segments as 8-connected one-pixel lines (DDA with rounding)."""
    img = np.zeros(frame.shape, dtype=bool)
    if len(segments) == 0:
        return img
    px = frame.to_pixels(segments)
    d = px[:, 1] - px[:, 0]
    steps = np.ceil(np.abs(d).max(axis=1)).astype(np.int64) + 1
    seg_of = np.repeat(np.arange(len(px)), steps)
    first = np.concatenate([[0], np.cumsum(steps)[:-1]])
    k = np.arange(len(seg_of)) - first[seg_of]
    t = k / np.maximum(steps[seg_of] - 1, 1)
    pts = px[seg_of, 0] + t[:, None] * d[seg_of]
    cols = np.clip(np.rint(pts[:, 0]).astype(np.int64), 0, frame.shape[1] - 1)
    rows = np.clip(np.rint(pts[:, 1]).astype(np.int64), 0, frame.shape[0] - 1)
    img[rows, cols] = True
    return img


@dataclass
class WallResult:
    polygons: list[WallPolygon]
    frame: RasterFrame | None
    n_components: int
    warnings: list[str]


def _trace_component(labels: np.ndarray, comp: int, slc) -> np.ndarray:
    r0, c0 = slc[0].start, slc[1].start
    crop = labels[slc] == comp
    outer = [c for c in find_contours(crop) if not c.is_hole and c.parent == -1]
    pts = max(outer, key=lambda c: len(c.points)).points
    return pts + np.array([c0, r0])


def extract_walls(primitives: Sequence[Primitive], config: WallConfig = WallConfig()) -> WallResult:
    """Closed wall polygons from wall primitives.

    The largest background region not touching the image border is the
    floor; other enclosed regions covering at least ``area_min`` of the
    image become wall components. Regions touching the border are
    exterior and dropped.
    """
    notes: list[str] = []
    if len(primitives) == 0:
        notes.append("no wall primitives")
        warnings.warn("no wall primitives", stacklevel=2)
        return WallResult([], None, 0, notes)
    pad = config.pad
    rough = make_frame([p.control_points() for p in primitives], config.raster_res, pad)
    chains = wall_chains(primitives, rough.cell)
    tol = config.merge_tol if config.merge_tol is not None else 2.0 * rough.cell
    chains = merge_endpoints(chains, tol)
    frame = make_frame(chains, config.raster_res, pad)
    mask = rasterize_segments(unique_segments(chains), frame)
    labels, n = ndimage.label(~mask, structure=_FOUR)
    del mask
    if n == 0:
        return WallResult([], frame, 0, ["walls cover the whole raster"])
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    enclosed = np.setdiff1d(np.arange(1, n + 1), border)
    if len(enclosed) == 0:
        notes.append("walls enclose no region")
        return WallResult([], frame, 0, notes)
    order = enclosed[np.lexsort((enclosed, -areas[enclosed]))]
    floor = int(order[0])
    min_px = config.area_min * labels.size
    kept = [floor] + sorted(int(c) for c in order[1:] if areas[c] >= min_px)
    dropped = len(order) - len(kept)
    if dropped:
        notes.append(f"{dropped} enclosed region(s) below area_min dropped")
    slices = ndimage.find_objects(labels)
    polys = []
    for comp in kept:
        sl = slices[comp - 1]
        grow = (slice(max(sl[0].start - 1, 0), sl[0].stop + 1), slice(max(sl[1].start - 1, 0), sl[1].stop + 1))
        border_px = _trace_component(labels, comp, grow)
        loop = _simplify(border_px.astype(float), config)
        if loop is None:
            notes.append(f"region {comp} degenerated during simplification")
            continue
        xy = frame.to_drawing(loop)
        if signed_area(xy) < 0:
            xy = xy[::-1]
        role = "floor_boundary" if comp == floor else "wall_component"
        polys.append(WallPolygon(tuple((float(x), float(y)) for x, y in xy), role, int(comp)))
    return WallResult(polys, frame, len(kept), notes)


def _simplify(border_px: np.ndarray, config: WallConfig) -> np.ndarray | None:
    tol = config.simplify_cells
    while tol >= 0.25:
        loop = remove_collinear(simplify_closed(border_px, tol), config.collinear_deg)
        if len(loop) >= 3 and is_simple(loop):
            return loop
        tol *= 0.5
    loop = remove_collinear(border_px, config.collinear_deg)
    return loop if len(loop) >= 3 else None
