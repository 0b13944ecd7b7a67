"""Parametric scene extraction from a labeled drawing."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..model import ClassTable, Drawing, PanopticLabeling
from .doors import DOOR_CLASS_SUBTYPES, DoorRecord, extract_doors
from .export import Scene, export_scene, export_wall_mesh, is_watertight, load_scene, parse_obj, wall_mesh
from .walls import WallConfig, WallPolygon, extract_walls
from .windows import WindowRecord, extract_windows

WALL_CLASSES = ("wall",)
WINDOW_CLASSES = ("window", "bay window", "blind window")

__all__ = [
    "DoorRecord", "ReconstructConfig", "Scene", "WallConfig", "WallPolygon", "WindowRecord", "export_scene",
    "export_wall_mesh", "extract_doors", "extract_walls", "extract_windows", "is_watertight", "load_scene",
    "parse_obj", "reconstruct_scene", "wall_mesh",
]


@dataclass(frozen=True)
class ReconstructConfig:
    walls: WallConfig = field(default_factory=WallConfig)
    pivot_tol: float = 0.05
    group_tol: float = 0.2
    angle_tol: float = 5.0
    wall_height: float = 3.0

    def __post_init__(self):
        if not self.wall_height > 0:
            raise ValueError("wall_height must be positive")
        for name in ("pivot_tol", "group_tol", "angle_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _ids_of(table: ClassTable, names) -> set[int]:
    out = set()
    for n in names:
        try:
            out.add(table.id_of(n))
        except KeyError:
            pass
    return out


def reconstruct_scene(drawing: Drawing, labeling: PanopticLabeling, table: ClassTable,
                      config: ReconstructConfig = ReconstructConfig()) -> tuple[Scene, list[str]]:
    """Walls from wall-class primitives, doors and windows from their instances."""
    if len(labeling) != len(drawing):
        raise ValueError("labeling length differs from drawing")
    wall_ids = _ids_of(table, WALL_CLASSES)
    walls = [p for p, s in zip(drawing, labeling.semantic) if int(s) in wall_ids]
    wres = extract_walls(walls, config.walls)
    door_classes = {table.id_of(n): sub for n, sub in DOOR_CLASS_SUBTYPES.items() if n in
                    {c.name for c in table.classes}}
    window_classes = _ids_of(table, WINDOW_CLASSES)
    door_inst, windows = [], []
    for iid, members in sorted(labeling.instances().items()):
        cls = int(labeling.semantic[members[0]])
        prims = [drawing[int(i)] for i in members]
        if cls in door_classes:
            door_inst.append((iid, door_classes[cls], prims))
        elif cls in window_classes:
            windows += extract_windows(prims, config.group_tol, config.angle_tol, instance=iid)
    doors = extract_doors(door_inst, config.pivot_tol)
    return Scene(wres.polygons, doors, windows, config.wall_height, {}), wres.warnings
