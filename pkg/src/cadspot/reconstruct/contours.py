"""Suzuki-Abe border following on binary images (8-connected foreground).

The raster scan only stops at pixels where a run of foreground starts or
ends, because those are the only places a border can begin; the 0/non-0
pattern never changes during tracing, so these columns are found per row
with numpy up front.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Clockwise in image coordinates (row axis points down), starting east.
_DI = (0, 1, 1, 1, 0, -1, -1, -1)
_DJ = (1, 1, 0, -1, -1, -1, 0, 1)
_DIR = {(di, dj): k for k, (di, dj) in enumerate(zip(_DI, _DJ))}


@dataclass(frozen=True, eq=False)
class Contour:
    """One traced border.

    ``points`` are ``(x, y) = (column, row)`` pixel coordinates in tracing
    order. ``parent`` indexes the enclosing border in the result list, or
    is -1 for borders enclosed only by the image frame.
    """

    points: np.ndarray
    is_hole: bool
    parent: int


def _follow(f, i, j, i2, j2, nbd):
    """Trace one border starting at (i, j), marking it in ``f``."""
    d = _DIR[(i2 - i, j2 - j)]
    # clockwise from (i2, j2) for the first nonzero neighbour
    for k in range(8):
        dd = (d + k) % 8
        if f[i + _DI[dd], j + _DJ[dd]] != 0:
            i1, j1 = i + _DI[dd], j + _DJ[dd]
            break
    else:
        f[i, j] = -nbd
        return [(j, i)]
    pts = []
    i2, j2, i3, j3 = i1, j1, i, j
    while True:
        # counter-clockwise from the element after (i2, j2)
        d = _DIR[(i2 - i3, j2 - j3)]
        east_zero = False
        for k in range(1, 9):
            dd = (d - k) % 8
            ni, nj = i3 + _DI[dd], j3 + _DJ[dd]
            if f[ni, nj] != 0:
                i4, j4 = ni, nj
                break
            if dd == 0:
                east_zero = True
        if east_zero:
            f[i3, j3] = -nbd
        elif f[i3, j3] == 1:
            f[i3, j3] = nbd
        pts.append((j3, i3))
        if i4 == i and j4 == j and i3 == i1 and j3 == j1:
            return pts
        i2, j2, i3, j3 = i3, j3, i4, j4


def find_contours(image) -> list[Contour]:
    """All borders of the nonzero pixels with their nesting.

    Output order and point sequences follow the raster scan of the
    original algorithm, starting each border at its first scanned pixel.
    """
    img = np.asarray(image) != 0
    h, w = img.shape
    f = np.zeros((h + 2, w + 2), dtype=np.int32)
    f[1:-1, 1:-1] = img
    # border number -> (is_hole, parent border number); 1 is the frame
    info: dict[int, tuple[bool, int]] = {1: (True, 0)}
    found: list[tuple[int, list]] = []
    nbd = 1
    nz = f != 0
    for i in range(1, h + 1):
        row_nz = nz[i]
        cand = np.flatnonzero(row_nz[1:-1] & (~row_nz[:-2] | ~row_nz[2:])) + 1
        if len(cand) == 0:
            continue
        row = f[i]
        lnbd = 1
        prev = 0
        for j in cand.tolist():
            if j > prev + 1:
                seg = row[prev + 1:j]
                marked = np.flatnonzero((seg != 0) & (seg != 1))
                if len(marked):
                    lnbd = abs(int(seg[marked[-1]]))
            v = row[j]
            start = None
            if v == 1 and row[j - 1] == 0:
                start, hole = (i, j - 1), False
            elif v >= 1 and row[j + 1] == 0:
                start, hole = (i, j + 1), True
                if v > 1:
                    lnbd = int(v)
            if start is not None:
                nbd += 1
                prev_hole, prev_parent = info[lnbd]
                parent = prev_parent if hole == prev_hole else lnbd
                info[nbd] = (hole, parent)
                found.append((nbd, _follow(f, i, j, start[0], start[1], nbd)))
            if row[j] != 1:
                lnbd = abs(int(row[j]))
            prev = j
    out = []
    for n, pts in found:
        hole, parent = info[n]
        out.append(Contour(np.array(pts, dtype=np.int64) - 1, hole, parent - 2 if parent >= 2 else -1))
    return out
