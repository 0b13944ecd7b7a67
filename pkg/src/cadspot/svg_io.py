"""SVG subset parsing, labeled rendering, and the JSON annotation/prediction formats.

The parser understands ``path`` (M/L/H/V/C/S/Q/T/A/Z, absolute and
relative), ``line``, ``rect``, ``circle``, ``ellipse``, ``polyline`` and
``polygon`` inside ``svg``/``g`` containers. Transforms are flattened into
the geometry. Text, images and pure fill regions are skipped with a warning.
"""
from __future__ import annotations

import json
import math
import re
import warnings
import xml.parsers.expat
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import jsonschema
import numpy as np

from .model import (
    Arc,
    Circle,
    ClassTable,
    CubicBezier,
    Drawing,
    Ellipse,
    InstanceProposal,
    PanopticLabeling,
    Polyline,
    Primitive,
    QuadBezier,
    Segment,
    WindowProposals,
    load_class_table,
)

SVG_NS = "http://www.w3.org/2000/svg"

_CONTAINERS = {"svg", "g", "a", "switch"}
_IGNORED_SUBTREES = {
    "defs", "symbol", "clipPath", "mask", "marker", "pattern", "style", "title", "desc",
    "metadata", "linearGradient", "radialGradient", "filter", "script",
}
_SKIPPED_WITH_WARNING = {"text", "tspan", "textPath", "image"}
_SHAPES = {"path", "line", "rect", "circle", "ellipse", "polyline", "polygon"}


class SvgParseError(ValueError):
    """Raised for unsupported elements or malformed data; carries the location."""

    def __init__(self, message: str, element: str | None = None, offset: int | None = None):
        where = ""
        if element is not None:
            where = f" in <{element}>"
        if offset is not None:
            where += f" at byte offset {offset}"
        super().__init__(message + where)
        self.element = element
        self.offset = offset


# ---------------------------------------------------------------------------
# transforms

_TRANSFORM_RE = re.compile(r"\s*(matrix|translate|scale|rotate|skewX|skewY)\s*\(([^)]*)\)\s*,?")
_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


def _affine(a, b, c, d, e, f) -> np.ndarray:
    return np.array([[a, c, e], [b, d, f], [0.0, 0.0, 1.0]])


def parse_transform(text: str) -> np.ndarray:
    """Parse an SVG ``transform`` attribute into a 3x3 affine matrix."""
    out = np.eye(3)
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TRANSFORM_RE.match(text, pos)
        if not m:
            raise ValueError(f"malformed transform near {text[pos:pos + 20]!r}")
        name, args = m.group(1), [float(v) for v in _NUMBER_RE.findall(m.group(2))]
        if name == "matrix" and len(args) == 6:
            t = _affine(*args)
        elif name == "translate" and len(args) in (1, 2):
            t = _affine(1, 0, 0, 1, args[0], args[1] if len(args) == 2 else 0.0)
        elif name == "scale" and len(args) in (1, 2):
            t = _affine(args[0], 0, 0, args[-1], 0, 0)
        elif name == "rotate" and len(args) in (1, 3):
            a = math.radians(args[0])
            ca, sa = math.cos(a), math.sin(a)
            t = _affine(ca, sa, -sa, ca, 0, 0)
            if len(args) == 3:
                cx, cy = args[1], args[2]
                t = _affine(1, 0, 0, 1, cx, cy) @ t @ _affine(1, 0, 0, 1, -cx, -cy)
        elif name == "skewX" and len(args) == 1:
            t = _affine(1, 0, math.tan(math.radians(args[0])), 1, 0, 0)
        elif name == "skewY" and len(args) == 1:
            t = _affine(1, math.tan(math.radians(args[0])), 0, 1, 0, 0)
        else:
            raise ValueError(f"bad arguments for {name}: {m.group(2)!r}")
        out = out @ t
        pos = m.end()
    return out


# ---------------------------------------------------------------------------
# path data

class _PathScanner:
    def __init__(self, data: str):
        self.data = data
        self.pos = 0

    def skip(self):
        d = self.data
        while self.pos < len(d) and (d[self.pos].isspace() or d[self.pos] == ","):
            self.pos += 1

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.data)

    def peek_command(self) -> str | None:
        self.skip()
        if self.pos < len(self.data) and self.data[self.pos].isalpha() and self.data[self.pos] not in "eE":
            return self.data[self.pos]
        return None

    def has_number(self) -> bool:
        self.skip()
        return self.pos < len(self.data) and (self.data[self.pos] in "+-." or self.data[self.pos].isdigit())

    def number(self) -> float:
        self.skip()
        m = _NUMBER_RE.match(self.data, self.pos)
        if not m:
            raise ValueError(f"expected a number at path position {self.pos}")
        self.pos = m.end()
        return float(m.group())

    def flag(self) -> bool:
        self.skip()
        if self.pos < len(self.data) and self.data[self.pos] in "01":
            self.pos += 1
            return self.data[self.pos - 1] == "1"
        raise ValueError(f"expected an arc flag at path position {self.pos}")


def arc_endpoint_to_center(p1, p2, rx, ry, phi_deg, large_arc, sweep_flag, pid=0) -> Primitive | None:
    """Convert an SVG endpoint-parameterized arc to a center-form primitive.

    Follows the SVG 1.1 implementation notes, including out-of-range radii
    correction. Zero radii give a Segment; coincident endpoints give None.
    """
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2 and y1 == y2:
        return None
    rx, ry = abs(rx), abs(ry)
    if rx == 0 or ry == 0:
        return Segment(pid, (x1, y1), (x2, y2))
    phi = math.radians(phi_deg % 360.0)
    cp, sp = math.cos(phi), math.sin(phi)
    dx, dy = (x1 - x2) / 2.0, (y1 - y2) / 2.0
    x1p = cp * dx + sp * dy
    y1p = -sp * dx + cp * dy
    lam = (x1p / rx) ** 2 + (y1p / ry) ** 2
    if lam > 1:
        s = math.sqrt(lam)
        rx, ry = rx * s, ry * s
    num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p
    den = rx * rx * y1p * y1p + ry * ry * x1p * x1p
    coef = math.sqrt(max(0.0, num / den))
    if large_arc == sweep_flag:
        coef = -coef
    cxp = coef * rx * y1p / ry
    cyp = -coef * ry * x1p / rx
    cx = cp * cxp - sp * cyp + (x1 + x2) / 2.0
    cy = sp * cxp + cp * cyp + (y1 + y2) / 2.0
    ux, uy = (x1p - cxp) / rx, (y1p - cyp) / ry
    vx, vy = (-x1p - cxp) / rx, (-y1p - cyp) / ry
    theta1 = math.atan2(uy, ux)
    dtheta = math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)
    if not sweep_flag and dtheta > 0:
        dtheta -= 2 * math.pi
    elif sweep_flag and dtheta < 0:
        dtheta += 2 * math.pi
    start, sweep = theta1, dtheta
    if sweep < 0:
        start, sweep = theta1 + dtheta, -dtheta
    return Arc(pid, (cx, cy), rx, ry, phi, start, sweep)


def parse_path_data(d: str) -> list[Primitive]:
    """Decompose path data into one primitive per drawing sub-command.

    Ids are placeholders (0); the caller renumbers. Raises ValueError with
    the character position on malformed input.
    """
    sc = _PathScanner(d)
    out: list[Primitive] = []
    cur = (0.0, 0.0)
    start = (0.0, 0.0)
    prev_ctrl = None  # reflected control point source for S/T
    cmd = None
    while not sc.at_end():
        c = sc.peek_command()
        if c is not None:
            sc.pos += 1
            cmd = c
        elif cmd is None:
            raise ValueError(f"path must start with a command (position {sc.pos})")
        elif cmd in "Zz":
            raise ValueError(f"unexpected number after Z at position {sc.pos}")
        upper = cmd.upper()
        rel = cmd.islower()
        if upper not in "MLHVCSQTAZ":
            raise ValueError(f"unsupported path command {cmd!r} at position {sc.pos - 1}")

        def pt():
            x, y = sc.number(), sc.number()
            return (cur[0] + x, cur[1] + y) if rel else (x, y)

        if upper == "Z":
            if cur != start:
                out.append(Segment(0, cur, start))
            cur = start
            prev_ctrl = None
            continue
        if upper == "M":
            cur = pt()
            start = cur
            # further pairs are implicit lineto
            cmd = "l" if rel else "L"
            prev_ctrl = None
            continue
        if upper == "L":
            p = pt()
            out.append(Segment(0, cur, p))
            cur, prev_ctrl = p, None
        elif upper == "H":
            x = sc.number()
            p = (cur[0] + x if rel else x, cur[1])
            out.append(Segment(0, cur, p))
            cur, prev_ctrl = p, None
        elif upper == "V":
            y = sc.number()
            p = (cur[0], cur[1] + y if rel else y)
            out.append(Segment(0, cur, p))
            cur, prev_ctrl = p, None
        elif upper == "C":
            c1, c2, p = pt(), pt(), pt()
            out.append(CubicBezier(0, (cur, c1, c2, p)))
            cur, prev_ctrl = p, ("C", c2)
        elif upper == "S":
            c2, p = pt(), pt()
            c1 = _reflect(cur, prev_ctrl, "C")
            out.append(CubicBezier(0, (cur, c1, c2, p)))
            cur, prev_ctrl = p, ("C", c2)
        elif upper == "Q":
            c1, p = pt(), pt()
            out.append(QuadBezier(0, (cur, c1, p)))
            cur, prev_ctrl = p, ("Q", c1)
        elif upper == "T":
            p = pt()
            c1 = _reflect(cur, prev_ctrl, "Q")
            out.append(QuadBezier(0, (cur, c1, p)))
            cur, prev_ctrl = p, ("Q", c1)
        elif upper == "A":
            rx, ry, rot = sc.number(), sc.number(), sc.number()
            large, sweep = sc.flag(), sc.flag()
            p = pt()
            prim = arc_endpoint_to_center(cur, p, rx, ry, rot, large, sweep)
            if prim is not None:
                out.append(prim)
            cur, prev_ctrl = p, None
        if not sc.has_number() and sc.peek_command() is None and not sc.at_end():
            raise ValueError(f"unexpected character {sc.data[sc.pos]!r} at position {sc.pos}")
    return out


def _reflect(cur, prev_ctrl, family):
    if prev_ctrl is None or prev_ctrl[0] != family:
        return cur
    cx, cy = prev_ctrl[1]
    return (2 * cur[0] - cx, 2 * cur[1] - cy)


# ---------------------------------------------------------------------------
# document parsing

def _length(value: str | None, name: str, default: float | None = None) -> float:
    if value is None:
        if default is None:
            raise ValueError(f"missing attribute {name!r}")
        return default
    v = value.strip()
    if v.endswith("px"):
        v = v[:-2]
    try:
        out = float(v)
    except ValueError:
        raise ValueError(f"malformed number {value!r} in attribute {name!r}") from None
    if not math.isfinite(out):
        raise ValueError(f"non-finite number {value!r} in attribute {name!r}")
    return out


def _points(value: str) -> list[tuple[float, float]]:
    nums = _NUMBER_RE.findall(value)
    leftover = _NUMBER_RE.sub(" ", value).replace(",", " ").strip()
    if leftover or len(nums) % 2:
        raise ValueError(f"malformed points list {value[:40]!r}")
    vals = [float(v) for v in nums]
    return list(zip(vals[0::2], vals[1::2]))


def _style(attrs: Mapping[str, str]) -> dict[str, str]:
    out = {}
    for item in attrs.get("style", "").split(";"):
        if ":" in item:
            k, v = item.split(":", 1)
            out[k.strip()] = v.strip()
    for key in ("stroke", "fill"):
        if key in attrs:
            out.setdefault(key, attrs[key].strip())
    return out


def shape_primitives(tag: str, attrs: Mapping[str, str]) -> list[Primitive]:
    """Primitives for one shape element in its local coordinates."""
    if tag == "path":
        return parse_path_data(attrs.get("d", ""))
    if tag == "line":
        a = (_length(attrs.get("x1"), "x1", 0.0), _length(attrs.get("y1"), "y1", 0.0))
        b = (_length(attrs.get("x2"), "x2", 0.0), _length(attrs.get("y2"), "y2", 0.0))
        return [Segment(0, a, b)]
    if tag == "rect":
        x, y = _length(attrs.get("x"), "x", 0.0), _length(attrs.get("y"), "y", 0.0)
        w, h = _length(attrs.get("width"), "width"), _length(attrs.get("height"), "height")
        if w <= 0 or h <= 0:
            return []
        if "rx" in attrs or "ry" in attrs:
            warnings.warn("rounded rect corners are ignored", stacklevel=2)
        c = [(x, y), (x + w, y), (x + w, y + h), (x, y + h)]
        return [Segment(0, c[i], c[(i + 1) % 4]) for i in range(4)]
    if tag == "circle":
        r = _length(attrs.get("r"), "r")
        if r <= 0:
            return []
        return [Circle(0, (_length(attrs.get("cx"), "cx", 0.0), _length(attrs.get("cy"), "cy", 0.0)), r)]
    if tag == "ellipse":
        rx, ry = _length(attrs.get("rx"), "rx"), _length(attrs.get("ry"), "ry")
        if rx <= 0 or ry <= 0:
            return []
        return [Ellipse(0, (_length(attrs.get("cx"), "cx", 0.0), _length(attrs.get("cy"), "cy", 0.0)), rx, ry)]
    if tag in ("polyline", "polygon"):
        pts = _points(attrs.get("points", ""))
        if len(pts) < 2:
            return []
        return [Polyline(0, tuple(pts), tag == "polygon")]
    raise ValueError(f"not a shape element: {tag}")


class _SvgHandler:
    def __init__(self, parser):
        self.parser = parser
        self.stack: list[tuple[np.ndarray, bool]] = [(np.eye(3), False)]
        self.primitives: list[Primitive] = []
        self.skipped: dict[str, int] = {}

    def start(self, name, attrs):
        offset = self.parser.CurrentByteIndex
        ns, _, local = name.rpartition(" ")
        ctm, skipping = self.stack[-1]
        if skipping or (ns and ns != SVG_NS) or local in _IGNORED_SUBTREES:
            self.stack.append((ctm, True))
            return
        if local in _SKIPPED_WITH_WARNING:
            self.skipped[local] = self.skipped.get(local, 0) + 1
            self.stack.append((ctm, True))
            return
        if local not in _CONTAINERS and local not in _SHAPES:
            raise SvgParseError(f"unsupported element <{local}>", local, offset)
        try:
            if "transform" in attrs:
                ctm = ctm @ parse_transform(attrs["transform"])
            if local in _SHAPES:
                style = _style(attrs)
                if style.get("stroke") == "none" and style.get("fill", "black") != "none":
                    self.skipped["fill region"] = self.skipped.get("fill region", 0) + 1
                else:
                    for prim in shape_primitives(local, attrs):
                        self.primitives.append(prim.transformed(ctm))
        except SvgParseError:
            raise
        except ValueError as exc:
            raise SvgParseError(str(exc), local, offset) from None
        self.stack.append((ctm, False))

    def end(self, name):
        self.stack.pop()


def parse_drawing(svg_text: str | bytes, source_scale: float | None = None) -> Drawing:
    """Parse SVG text into a Drawing with ids assigned in document order."""
    parser = xml.parsers.expat.ParserCreate(namespace_separator=" ")
    handler = _SvgHandler(parser)
    parser.StartElementHandler = handler.start
    parser.EndElementHandler = handler.end
    data = svg_text.encode("utf-8") if isinstance(svg_text, str) else svg_text
    try:
        parser.Parse(data, True)
    except xml.parsers.expat.ExpatError as exc:
        raise SvgParseError(f"malformed XML: {xml.parsers.expat.ErrorString(exc.code)}",
                            offset=parser.CurrentByteIndex) from None
    for what, count in sorted(handler.skipped.items()):
        warnings.warn(f"skipped {count} <{what}> element(s); they are not primitives", stacklevel=2)
    return Drawing.from_primitives(handler.primitives, source_scale)


# ---------------------------------------------------------------------------
# rendering

def _fmt(v: float) -> str:
    out = format(float(v), ".12g")
    return "0" if out == "-0" else out


def primitive_svg(prim: Primitive) -> tuple[str, dict[str, str]]:
    """(tag, attributes) drawing exactly this primitive as one SVG element."""
    if isinstance(prim, Segment):
        (x0, y0), (x1, y1) = prim.start, prim.end
        return "path", {"d": f"M{_fmt(x0)} {_fmt(y0)} L{_fmt(x1)} {_fmt(y1)}"}
    if isinstance(prim, Circle):
        return "circle", {"cx": _fmt(prim.center[0]), "cy": _fmt(prim.center[1]), "r": _fmt(prim.r)}
    if isinstance(prim, Ellipse) or (isinstance(prim, Arc) and prim.sweep >= 2 * math.pi - 1e-12):
        attrs = {"cx": _fmt(prim.center[0]), "cy": _fmt(prim.center[1]), "rx": _fmt(prim.rx), "ry": _fmt(prim.ry)}
        if prim.rotation:
            attrs["transform"] = (f"rotate({_fmt(math.degrees(prim.rotation))} "
                                  f"{_fmt(prim.center[0])} {_fmt(prim.center[1])})")
        return "ellipse", attrs
    if isinstance(prim, Arc):
        (x0, y0), (x1, y1) = prim.endpoints()
        large = 1 if prim.sweep > math.pi else 0
        d = (f"M{_fmt(x0)} {_fmt(y0)} A{_fmt(prim.rx)} {_fmt(prim.ry)} "
             f"{_fmt(math.degrees(prim.rotation))} {large} 1 {_fmt(x1)} {_fmt(y1)}")
        return "path", {"d": d}
    if isinstance(prim, (CubicBezier, QuadBezier)):
        c = prim.ctrl
        letter = "C" if isinstance(prim, CubicBezier) else "Q"
        rest = " ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in c[1:])
        return "path", {"d": f"M{_fmt(c[0][0])} {_fmt(c[0][1])} {letter}{rest}"}
    if isinstance(prim, Polyline):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in prim.vertices)
        return ("polygon" if prim.is_closed else "polyline"), {"points": pts}
    raise TypeError(f"cannot render {type(prim).__name__}")


def default_palette(table: ClassTable) -> dict[int, str]:
    """Deterministic, well-spread stroke colors for every label in the table."""
    import colorsys

    palette = {}
    ids = [c.id for c in table.classes] + [table.background_id]
    for k, cid in enumerate(sorted(ids)):
        if cid == table.background_id:
            palette[cid] = "#c0c0c0"
            continue
        h = (k * 0.618033988749895) % 1.0
        r, g, b = colorsys.hsv_to_rgb(h, 0.75, 0.85)
        palette[cid] = "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))
    return palette


def render_labeled_svg(drawing: Drawing, labeling: PanopticLabeling, palette: Mapping[int, str],
                       stroke_width: float | None = None) -> str:
    """SVG text with one element per primitive stroked in its class color.

    Output is deterministic for fixed input.
    """
    if len(labeling) != len(drawing):
        raise ValueError(f"labeling has {len(labeling)} rows but drawing has {len(drawing)} primitives")
    missing = sorted({int(s) for s in labeling.semantic} - {int(k) for k in palette})
    if missing:
        raise KeyError(f"palette has no color for classes {missing}")
    x0, y0, x1, y1 = drawing.bounds
    w, h = max(x1 - x0, 1e-9), max(y1 - y0, 1e-9)
    sw = stroke_width if stroke_width is not None else max(w, h) / 1000.0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{SVG_NS}" viewBox="{_fmt(x0)} {_fmt(y0)} {_fmt(w)} {_fmt(h)}">',
        f'<g fill="none" stroke-width="{_fmt(sw)}">',
    ]
    for prim, sem, inst in zip(drawing.primitives, labeling.semantic, labeling.instance):
        tag, attrs = primitive_svg(prim)
        attrs = dict(attrs)
        attrs["stroke"] = palette[int(sem)]
        attrs["data-id"] = str(prim.id)
        attrs["data-semantic"] = str(int(sem))
        attrs["data-instance"] = str(int(inst))
        body = " ".join(f'{k}="{v}"' for k, v in attrs.items())
        lines.append(f"<{tag} {body}/>")
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


def render_drawing_svg(drawing: Drawing, stroke: str = "#000000", stroke_width: float | None = None) -> str:
    """Unlabeled SVG of a drawing; parsing it back yields the same primitive count and order."""
    x0, y0, x1, y1 = drawing.bounds
    w, h = max(x1 - x0, 1e-9), max(y1 - y0, 1e-9)
    sw = stroke_width if stroke_width is not None else max(w, h) / 1000.0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{SVG_NS}" viewBox="{_fmt(x0)} {_fmt(y0)} {_fmt(w)} {_fmt(h)}">',
        f'<g fill="none" stroke="{stroke}" stroke-width="{_fmt(sw)}">',
    ]
    for prim in drawing.primitives:
        tag, attrs = primitive_svg(prim)
        body = " ".join(f'{k}="{v}"' for k, v in attrs.items())
        lines.append(f"<{tag} {body}/>")
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# JSON files

class AnnotationError(ValueError):
    """Schema or coverage problem in an annotation/labeling file."""

    def __init__(self, message: str, missing: Sequence[int] = (), duplicated: Sequence[int] = ()):
        super().__init__(message)
        self.missing = list(missing)
        self.duplicated = list(duplicated)


_CLASS_ITEM = {
    "type": "object",
    "required": ["id", "name", "kind"],
    "properties": {
        "id": {"type": "integer", "minimum": 0},
        "name": {"type": "string"},
        "kind": {"enum": ["thing", "stuff"]},
    },
}

ANNOTATION_SCHEMA = {
    "type": "object",
    "required": ["labels"],
    "properties": {
        "classes": {"type": "array", "items": _CLASS_ITEM},
        "num_semantic_labels": {"type": "integer", "minimum": 1},
        "background": {"type": "object", "properties": {"id": {"type": "integer"}, "name": {"type": "string"}}},
        "labels": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
        },
        "instances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "class", "score"],
                "properties": {"id": {"type": "integer"}, "class": {"type": "integer"}, "score": {"type": "number"}},
            },
        },
        "drawing": {"type": "string"},
        "config": {"type": "object"},
        "report": {"type": "object"},
    },
}

_NUMBER_ROW = {"type": "array", "items": {"type": "number"}}

PREDICTION_SCHEMA = {
    "type": "object",
    "required": ["windows"],
    "properties": {
        "windows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["rect", "semantic", "instances"],
                "properties": {
                    "rect": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                    "primitives": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "semantic": {"type": "array", "items": _NUMBER_ROW},
                    "instances": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["mask", "class_scores", "score"],
                            "properties": {"mask": _NUMBER_ROW, "class_scores": _NUMBER_ROW,
                                           "score": {"type": "number"}},
                        },
                    },
                },
            },
        },
        "config": {"type": "object"},
    },
}


def _strictify(schema):
    if isinstance(schema, dict):
        out = {k: _strictify(v) for k, v in schema.items()}
        if out.get("type") == "object" and "properties" in out:
            out["additionalProperties"] = False
        return out
    if isinstance(schema, list):
        return [_strictify(v) for v in schema]
    return schema


def _prune_unknown(data, schema):
    if isinstance(data, dict) and schema.get("type") == "object" and "properties" in schema:
        props = schema["properties"]
        return {k: _prune_unknown(v, props[k]) for k, v in data.items() if k in props}
    if isinstance(data, list) and isinstance(schema.get("items"), dict):
        return [_prune_unknown(v, schema["items"]) for v in data]
    return data


def _validated(text: str | bytes | dict, schema: dict, strict: bool) -> dict:
    data = json.loads(text) if isinstance(text, (str, bytes)) else text
    if strict:
        try:
            jsonschema.validate(data, _strictify(schema))
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise AnnotationError(f"schema violation at /{path}: {exc.message}") from None
        return data
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise AnnotationError(f"schema violation at /{path}: {exc.message}") from None
    return _prune_unknown(data, schema)


@dataclass
class AnnotationFile:
    labeling: PanopticLabeling
    table: ClassTable
    instances: list[dict] = field(default_factory=list)
    drawing: str | None = None
    config: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def instance_scores(self) -> dict[int, float]:
        return {int(r["id"]): float(r["score"]) for r in self.instances}


def load_annotations(text: str | bytes | dict, n_primitives: int | None = None, strict: bool = True,
                     table: ClassTable | None = None) -> AnnotationFile:
    """Parse annotations.json (or a labeling.json written by ``spot``).

    Every primitive ``0..N-1`` must be labeled exactly once; ``N`` defaults
    to one past the largest id in the file.
    """
    data = _validated(text, ANNOTATION_SCHEMA, strict)
    if "classes" in data:
        table = ClassTable.from_dict(data)
    elif table is None:
        table = load_class_table()
    rows = data["labels"]
    ids = [r[0] for r in rows]
    n = n_primitives if n_primitives is not None else (max(ids) + 1 if ids else 0)
    counts = np.bincount(np.asarray([i for i in ids if 0 <= i < n], dtype=np.int64), minlength=n)
    missing = np.flatnonzero(counts == 0).tolist()
    dup = np.flatnonzero(counts > 1).tolist()
    extra = sorted(i for i in ids if not 0 <= i < n)
    if missing or dup or extra:
        parts = []
        if missing:
            parts.append(f"unlabeled primitives {missing}")
        if dup:
            parts.append(f"primitives labeled more than once {dup}")
        if extra:
            parts.append(f"labels for unknown primitives {extra}")
        raise AnnotationError("; ".join(parts), missing=missing, duplicated=dup)
    sem = np.zeros(n, dtype=np.int64)
    inst = np.zeros(n, dtype=np.int64)
    for pid, s, k in rows:
        sem[pid] = s
        inst[pid] = k
    return AnnotationFile(
        PanopticLabeling(sem, inst), table,
        instances=list(data.get("instances", [])),
        drawing=data.get("drawing"),
        config=dict(data.get("config", {})),
        report=dict(data.get("report", {})),
    )


def dump_json(data) -> str:
    """Canonical JSON text used for every artifact (sorted keys, stable floats)."""
    return json.dumps(data, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_annotations(labeling: PanopticLabeling, table: ClassTable, *, instances: Iterable[dict] = (),
                     drawing: str | None = None, config: dict | None = None, report: dict | None = None) -> str:
    data = table.to_dict()
    data["labels"] = labeling.rows()
    if instances:
        data["instances"] = list(instances)
    if drawing is not None:
        data["drawing"] = drawing
    if config:
        data["config"] = config
    if report:
        data["report"] = report
    return dump_json(data)


@dataclass
class PredictionFile:
    windows: list[WindowProposals]
    config: dict = field(default_factory=dict)


def save_predictions(windows: Sequence[WindowProposals], config: dict | None = None) -> str:
    out = []
    for w in windows:
        out.append({
            "rect": [float(v) for v in w.window],
            "primitives": [int(i) for i in w.primitive_ids],
            "semantic": [[float(v) for v in row] for row in w.semantic_scores],
            "instances": [
                {"mask": [float(v) for v in p.mask], "class_scores": [float(v) for v in p.class_scores],
                 "score": float(p.score)}
                for p in w.instances
            ],
        })
    data = {"windows": out}
    if config:
        data["config"] = config
    return dump_json(data)


def load_predictions(text: str | bytes | dict, strict: bool = True, drawing: Drawing | None = None,
                     primitives_of=None) -> PredictionFile:
    """Parse predictions.json.

    Windows without an explicit ``primitives`` list get one from
    ``primitives_of(rect)``, the caller's window collection rule.
    """
    data = _validated(text, PREDICTION_SCHEMA, strict)
    windows = []
    for k, w in enumerate(data["windows"]):
        if "primitives" in w:
            ids = np.asarray(w["primitives"], dtype=np.int64)
        elif primitives_of is not None:
            ids = np.asarray(primitives_of(tuple(w["rect"])), dtype=np.int64)
        else:
            raise AnnotationError(f"window {k} lists no primitives and no collection rule was given")
        if drawing is not None and len(ids) and (ids.max() >= len(drawing) or ids.min() < 0):
            bad = sorted(int(i) for i in ids if not 0 <= i < len(drawing))
            raise AnnotationError(f"window {k} references unknown primitives {bad}")
        sem = np.asarray(w["semantic"], dtype=float)
        if len(ids) == 0:
            sem = sem.reshape(0, sem.shape[1] if sem.ndim == 2 else 0)
        try:
            insts = tuple(InstanceProposal(np.asarray(p["mask"], dtype=float),
                                           np.asarray(p["class_scores"], dtype=float), p["score"])
                          for p in w["instances"])
            windows.append(WindowProposals(tuple(w["rect"]), ids, sem, insts))
        except ValueError as exc:
            raise AnnotationError(f"window {k}: {exc}") from None
    return PredictionFile(windows, dict(data.get("config", {})))
