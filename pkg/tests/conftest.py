from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from cadspot.model import Arc, Circle, CubicBezier, Ellipse, Polyline, QuadBezier, Segment, load_class_table

# criterion number -> (status, title, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        line = f"{status} criterion {n:2d}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))


@pytest.fixture(scope="session")
def table():
    return load_class_table()


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return Path(str(resources.files("cadspot").joinpath("data/golden")))


def random_primitive(rng: np.random.Generator, kind: str, pid: int = 0, scale: float = 10.0):
    """One random primitive of ``kind`` with sizes around ``scale``."""
    def pt():
        return (float(rng.uniform(-scale, scale)), float(rng.uniform(-scale, scale)))

    if kind == "segment":
        return Segment(pid, pt(), pt())
    if kind == "arc":
        rx = float(rng.uniform(0.5, scale))
        ry = rx if rng.random() < 0.5 else float(rng.uniform(0.5, scale))
        return Arc(pid, pt(), rx, ry, float(rng.uniform(0, math.pi)), float(rng.uniform(0, 2 * math.pi)),
                   float(rng.uniform(0.2, 2 * math.pi)))
    if kind == "circle":
        return Circle(pid, pt(), float(rng.uniform(0.5, scale)), float(rng.uniform(0, 2 * math.pi)))
    if kind == "ellipse":
        return Ellipse(pid, pt(), float(rng.uniform(0.5, scale)), float(rng.uniform(0.5, scale)),
                       float(rng.uniform(0, math.pi)), float(rng.uniform(0, 2 * math.pi)))
    if kind == "cubic":
        return CubicBezier(pid, tuple(pt() for _ in range(4)))
    if kind == "quad":
        return QuadBezier(pid, tuple(pt() for _ in range(3)))
    if kind == "polyline":
        n = int(rng.integers(2, 7))
        return Polyline(pid, tuple(pt() for _ in range(n)), bool(rng.random() < 0.3))
    raise ValueError(kind)


KINDS = ("segment", "arc", "circle", "ellipse", "cubic", "quad", "polyline")


def flatten(prim, resolution: float = 1e-4) -> np.ndarray:
    """Polyline through ``prim`` whose chords are all at most ``resolution`` long."""
    if isinstance(prim, Polyline):
        path = prim.path()
        seg = np.hypot(*np.diff(path, axis=0).T)
        pieces = [path[:1]]
        for a, b, ln in zip(path[:-1], path[1:], seg):
            k = max(int(np.ceil(ln / resolution)), 1)
            pieces.append(a + (b - a) * (np.arange(1, k + 1) / k)[:, None])
        return np.vstack(pieces)
    t = np.linspace(0.0, 1.0, 4097)
    speed = float(np.hypot(*prim.derivative(t).T).max())
    n = int(np.ceil(1.05 * speed / resolution)) + 1
    return prim.point(np.linspace(0.0, 1.0, n + 1))


def polyline_length(pts: np.ndarray) -> float:
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def sample_stations(prim, pts: np.ndarray, d: float, resolution: float = 1e-4) -> np.ndarray:
    """Arc-length position of each sample, read off a fine flattening of ``prim``.

    Sample ``k`` is looked up near station ``k * d`` only, so cusps and
    self-intersections cannot pull it onto another branch; a sample far from
    its expected station lands on the search window edge and shows up as a
    spacing error. Where two branches coincide (a polyline folding back on
    itself) position cannot tell them apart; among points within one
    resolution step of the nearest, the one closest to ``k * d`` is taken.
    """
    fine = flatten(prim, resolution)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(fine, axis=0).T))])
    w = int(np.ceil(0.05 * d / resolution)) + 4
    out = np.empty(len(pts))
    for k, p in enumerate(pts):
        target = min(k * d, cum[-1])
        j = int(np.searchsorted(cum, target))
        lo, hi = max(j - w, 0), min(j + w + 1, len(fine))
        dist = np.hypot(*(fine[lo:hi] - p).T)
        tied = np.flatnonzero(dist <= dist.min() + resolution)
        near = lo + int(tied[np.argmin(np.abs(cum[lo + tied] - target))])
        out[k] = cum[near]
    return out
