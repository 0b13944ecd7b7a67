import math
import warnings

import cv2
import numpy as np
import pytest

from cadspot.model import Arc, Drawing, PanopticLabeling, Polyline, Segment
from cadspot.reconstruct import (ReconstructConfig, Scene, WallConfig, WallPolygon, export_scene, export_wall_mesh,
                                 extract_doors, extract_walls, extract_windows, is_watertight, load_scene, parse_obj,
                                 reconstruct_scene, wall_mesh)
from cadspot.reconstruct.contours import find_contours
from cadspot.reconstruct.polygons import douglas_peucker, ear_clip, is_simple, remove_collinear, signed_area
from cadspot.synth import door_leaf, generate_scene


def numbered(prims):
    return list(Drawing.from_primitives(prims))


def square(gap=0.0, size=10.0):
    return numbered([Segment(0, (0, 0), (size, 0)), Segment(0, (size, 0), (size, size)),
                     Segment(0, (size, size), (0, size)), Segment(0, (0, size), (0, gap))])


# ---------------------------------------------------------------------------
# contour tracing against OpenCV

def cv2_contours(img):
    cs, hier = cv2.findContours(img.astype(np.uint8), cv2.RETR_TREE, cv2.CHAIN_APPROX_NONE)
    out = {}
    for k, c in enumerate(cs):
        depth, p = 0, hier[0][k][3]
        while p != -1:
            depth, p = depth + 1, hier[0][p][3]
        parent = hier[0][k][3]
        out[tuple(map(tuple, c.reshape(-1, 2).tolist()))] = (
            depth % 2 == 1, None if parent == -1 else tuple(map(tuple, cs[parent].reshape(-1, 2).tolist())))
    return out


def our_contours(img):
    cs = find_contours(img)
    keys = [tuple(map(tuple, c.points.astype(int).tolist())) for c in cs]
    return {k: (c.is_hole, None if c.parent == -1 else keys[c.parent]) for k, c in zip(keys, cs)}


def test_contours_match_opencv():
    rng = np.random.default_rng(0)
    for _ in range(200):
        img = rng.random((int(rng.integers(3, 30)), int(rng.integers(3, 30)))) < rng.uniform(0.2, 0.8)
        img[0], img[-1], img[:, 0], img[:, -1] = 0, 0, 0, 0
        assert our_contours(img) == cv2_contours(img)


def test_contours_nested_rings():
    img = np.zeros((12, 12), bool)
    img[1:11, 1:11] = True
    img[3:9, 3:9] = False
    img[5:7, 5:7] = True
    cs = find_contours(img)
    assert [c.is_hole for c in cs] == [False, True, False]
    assert [c.parent for c in cs] == [-1, 0, 1]


# ---------------------------------------------------------------------------
# polygons

def test_polygon_helpers():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    assert signed_area(sq) == 1.0 and signed_area(sq[::-1]) == -1.0
    assert is_simple(sq)
    assert not is_simple(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float))
    dense = np.array([[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1], [0, 1]], float)
    assert remove_collinear(dense).tolist() == [[0, 0], [1, 0], [1, 1], [0, 1]]
    assert douglas_peucker(np.array([[0, 0], [1, 0.01], [2, 0]], float), 0.1).tolist() == [[0, 0], [2, 0]]
    tris = ear_clip(np.array([[0, 0], [2, 0], [2, 2], [1, 1], [0, 2]], float))
    assert len(tris) == 3


# ---------------------------------------------------------------------------
# walls

@pytest.mark.parametrize("gap", [0.0, 0.02])
def test_square_wall_gives_four_corners(gap):
    res = extract_walls(square(gap), WallConfig(merge_tol=0.05))
    assert len(res.polygons) == 1
    poly = res.polygons[0]
    assert poly.role == "floor_boundary"
    loop = np.array(poly.loop)
    assert len(loop) == 4 and is_simple(loop) and signed_area(loop) > 0
    assert np.allclose(np.sort(loop[:, 0]), [0, 0, 10, 10], atol=0.02)
    assert np.allclose(np.sort(loop[:, 1]), [0, 0, 10, 10], atol=0.02)


def test_gap_without_merging_leaves_room_open():
    res = extract_walls(square(0.5), WallConfig(raster_res=1024))
    assert res.polygons == [] and res.warnings


def test_no_walls_warns():
    with pytest.warns(UserWarning):
        res = extract_walls([])
    assert res.polygons == []


def test_two_rooms_and_area_filter():
    prims = square() + numbered([Segment(0, (5, 0), (5, 10))])
    res = extract_walls(prims, WallConfig(raster_res=1024))
    assert [p.role for p in res.polygons] == ["floor_boundary", "wall_component"]
    tiny = square() + numbered([Polyline(0, ((1, 1), (1.05, 1), (1.05, 1.05), (1, 1.05)), True)])
    res = extract_walls(tiny, WallConfig(raster_res=1024, area_min=0.001))
    assert len(res.polygons) == 1 and res.warnings


def test_retrace_keeps_component_count():
    prims = square() + numbered([Segment(0, (5, 0), (5, 10)), Segment(0, (0, 5), (5, 5))])
    cfg = WallConfig(raster_res=1024)
    first = extract_walls(prims, cfg)
    assert first.n_components == len(first.polygons) == 3
    loops = numbered([Polyline(0, p.loop, True) for p in first.polygons])
    again = extract_walls(loops, cfg)
    assert again.n_components == first.n_components


# ---------------------------------------------------------------------------
# doors

def door_instance(pivot, r, leaf_angle, swing):
    return numbered(door_leaf(pivot, r, leaf_angle, swing))


@pytest.mark.parametrize("leaf,swing", [(0.0, math.pi / 2), (0.7, 1.2), (2.0, -math.pi / 2), (-1.0, 0.4)])
def test_hinged_door_recovery(leaf, swing):
    rec, = extract_doors([(1, "single", door_instance((3.0, -4.0), 9.0, leaf, swing))])
    assert rec.status == "ok"
    assert math.hypot(rec.pivot[0] - 3.0, rec.pivot[1] + 4.0) <= 1e-3
    assert abs(rec.width - 9.0) <= 1e-3
    assert abs(rec.swing - math.degrees(abs(swing))) <= 0.5
    assert rec.swing_sign == (1 if swing > 0 else -1)
    assert abs(rec.orientation - math.degrees(leaf)) <= 0.5


def test_reference_door():
    # arc centre c, radius r, 90 degree sweep, leaf from c to c + (r, 0)
    prims = numbered([Segment(0, (1, 1), (6, 1)), Arc(0, (1, 1), 5, 5, 0.0, 0.0, math.pi / 2)])
    rec, = extract_doors([(7, "single", prims)])
    assert rec.pivot == (1.0, 1.0) and rec.width == 5.0 and abs(rec.swing - 90.0) < 1e-9


def test_double_door_two_pivots():
    prims = numbered(door_leaf((0, 0), 8, math.pi / 2, math.pi / 2) + door_leaf((16, 0), 8, math.pi / 2, -math.pi / 2))
    recs = extract_doors([(2, "double", prims)])
    assert sorted(r.pivot for r in recs) == [(0.0, 0.0), (16.0, 0.0)]
    assert recs[0].width == recs[1].width == 8.0


def test_door_failures_and_linear():
    recs = extract_doors([(1, "single", numbered([Segment(0, (0, 0), (1, 0))]))])
    assert recs[0].status == "unparameterized"
    recs = extract_doors([(1, "single", numbered([Arc(0, (0, 0), 2, 2, 0, 0, 1.0)]))])
    assert recs[0].status == "arc_only"
    slide = numbered([Polyline(0, ((0, 0), (9, 0), (9, 0.5), (0, 0.5)), True),
                      Polyline(0, ((7, 0.6), (16, 0.6), (16, 1.1), (7, 1.1)), True)])
    rec, = extract_doors([(3, "sliding", slide)])
    assert rec.width == 16.0 and rec.orientation == 0.0
    assert rec.pivot == pytest.approx((8.0, 0.55))
    with pytest.raises(ValueError):
        extract_doors([(1, "revolving", slide)])


# ---------------------------------------------------------------------------
# windows

def test_window_grouping():
    pair = numbered([Segment(0, (0, 0), (10, 0)), Segment(0, (0, 0.1), (10, 0.1))])
    recs = extract_windows(pair)
    assert len(recs) == 1 and recs[0].members == (0, 1)
    cross = numbered([Segment(0, (0, 0), (10, 0)), Segment(0, (0, 0), (0, 10))])
    assert len(extract_windows(cross)) == 2
    assert len(extract_windows(numbered([Segment(0, (0, 0), (1, 0))]))) == 1


def test_window_centerline_is_middle_member():
    triple = numbered([Segment(0, (0, k * 0.1), (10, k * 0.1)) for k in range(3)])
    rec, = extract_windows(triple)
    assert rec.line == ((0.0, 0.1), (10.0, 0.1)) and rec.source == 1


def test_window_grouping_ignores_input_order():
    rng = np.random.default_rng(4)
    segs = numbered([Segment(0, (0, k * 0.1), (8, k * 0.1)) for k in range(3)]
                    + [Segment(0, (20, 0), (20, 5)), Segment(0, (20.1, 0), (20.1, 5))])
    base = extract_windows(segs)
    for _ in range(5):
        perm = [segs[int(i)] for i in rng.permutation(len(segs))]
        assert extract_windows(perm) == base


# ---------------------------------------------------------------------------
# export

def test_prism_counts_and_watertight():
    wall = WallPolygon(((0, 0), (1, 0), (1, 1), (0, 1)), "floor_boundary", 1)
    verts, faces = wall_mesh([wall], 3.0)
    assert len(verts) == 8 and len(faces) == 12
    assert is_watertight(faces)
    assert not is_watertight(faces[:-1])
    v, f = parse_obj(export_wall_mesh([wall], 3.0))
    assert len(v) == 8 and f == [tuple(x) for x in faces]


def test_outward_winding():
    wall = WallPolygon(((0, 0), (0, 1), (1, 1), (1, 0)), "floor_boundary", 1)
    verts, faces = wall_mesh([wall], 2.0)
    V = np.array(verts)
    centre = V.mean(axis=0)
    for a, b, c in faces:
        n = np.cross(V[b] - V[a], V[c] - V[a])
        assert np.dot(n, (V[a] + V[b] + V[c]) / 3 - centre) > 0


def test_degenerate_wall_skipped():
    with pytest.warns(UserWarning):
        verts, faces = wall_mesh([WallPolygon(((0, 0), (1, 0), (2, 0)), "wall_component", 2)], 3.0)
    assert verts == [] and faces == []
    assert export_wall_mesh([], 3.0) == ""


def test_scene_roundtrip():
    doors = extract_doors([(1, "single", door_instance((0, 0), 5, 0.0, 1.0)),
                           (2, "single", numbered([Segment(0, (0, 0), (1, 0))]))])
    scene = Scene([WallPolygon(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0)), "floor_boundary", 1)], doors,
                  extract_windows(numbered([Segment(0, (0, 0), (3, 0))])), 2.5)
    text = export_scene(scene)
    assert "NaN" not in text and "null" in text
    assert export_scene(load_scene(text)) == text
    assert export_scene(Scene()) == export_scene(load_scene(export_scene(Scene())))


def test_synthetic_scenes_watertight():
    cfg = ReconstructConfig(walls=WallConfig(raster_res=2048))
    for seed in range(4):
        s = generate_scene(seed, n_tiles=3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scene, _ = reconstruct_scene(s.drawing, s.labeling, s.table, cfg)
        assert scene.walls
        assert all(is_simple(np.array(w.loop)) for w in scene.walls)
        _, faces = wall_mesh(scene.walls, cfg.wall_height)
        assert is_watertight(faces)


def test_reconstruct_requires_aligned_labels():
    s = generate_scene(0, n_tiles=2)
    with pytest.raises(ValueError):
        reconstruct_scene(s.drawing, PanopticLabeling([0], [0]), s.table)
