"""``cadspot`` command line: sample, spot, evaluate, reconstruct, render, synth.

Exit status is 0 on success, 1 on a domain error (a JSON object on stderr
names the error and the offending path) and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import PREDICTORS, ConfigError, PipelineConfig, load_config
from .model import ClassTable, Drawing, load_class_table
from .predictor import ExemplarPredictor, PredictorError, ReplayPredictor
from .reconstruct import export_scene, export_wall_mesh, reconstruct_scene
from .sampler import arc_length, resolve_jobs, sample_drawing
from .svg_io import (AnnotationError, default_palette, dump_json, load_annotations, load_predictions,
                     parse_drawing, parse_transform, render_labeled_svg, save_annotations, save_predictions)
from .swa import collect_window, run_swa


class CliError(Exception):
    def __init__(self, kind: str, message: str, path: str | None = None):
        super().__init__(message)
        self.kind = kind
        self.path = path


def _read(path: str, binary: bool = False):
    p = Path(path)
    try:
        return p.read_bytes() if binary else p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError("file_not_found", f"no such file: {path}", path) from None
    except IsADirectoryError:
        raise CliError("not_a_file", f"is a directory: {path}", path) from None
    except UnicodeDecodeError:
        raise CliError("bad_encoding", f"not UTF-8 text: {path}", path) from None


def _write(path: str | Path, text: str) -> None:
    p = Path(path)
    try:
        p.write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise CliError("write_failed", f"cannot write {p}: {exc.strerror}", str(p)) from None


def _guard(kind: str, path: str, fn, *args, **kwargs):
    """Run a loader, turning its domain errors into CliError naming ``path``."""
    try:
        return fn(*args, **kwargs)
    except CliError:
        raise
    except (ValueError, KeyError, PredictorError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        raise CliError(kind, str(msg), path) from None


def _config(args) -> PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in ("interval", "scale", "window", "step", "top_k", "nms_threshold",
                                                     "nms_sigma", "nms_kernel", "mask_threshold", "predictor",
                                                     "class_table", "raster_res", "merge_tol", "pivot_tol",
                                                     "group_tol", "angle_tol", "wall_height")}
    if args.config is not None:
        _read(args.config)
    return _guard("invalid_config", args.config, load_config, args.config, **overrides)


def _table(cfg: PipelineConfig) -> ClassTable:
    if cfg.class_table is None:
        return load_class_table()
    _read(cfg.class_table)
    return _guard("invalid_class_table", cfg.class_table, load_class_table, cfg.class_table)


def _drawing(path: str, cfg: PipelineConfig) -> Drawing:
    data = _read(path, binary=True)
    drawing = _guard("invalid_svg", path, parse_drawing, data)
    if len(drawing) == 0:
        raise CliError("empty_drawing", "drawing contains no primitives", path)
    if cfg.scale != 1.0:
        drawing = drawing.transformed(parse_transform(f"scale({cfg.scale!r})"))
    return drawing


def _labels(path: str, drawing: Drawing, table: ClassTable):
    return _guard("invalid_annotations", path, load_annotations, _read(path), len(drawing), True, table)


def _threads(args) -> int:
    return resolve_jobs(args.threads)


# ---------------------------------------------------------------------------
# subcommands

def cmd_sample(args) -> None:
    cfg = _config(args)
    drawing = _drawing(args.input, cfg)
    cloud = sample_drawing(drawing, cfg.interval, _threads(args))
    data = {
        "config": cfg.to_dict(),
        "drawing": args.input,
        "interval": cfg.interval,
        "counts": [int(c) for c in cloud.counts],
        "points": [[float(x), float(y)] for x, y in cloud.xy()],
    }
    _write(args.out, dump_json(data))


def _predictor(args, cfg: PipelineConfig, drawing: Drawing, table: ClassTable, cloud):
    if cfg.predictor == "replay":
        if args.pred is None:
            raise CliError("missing_predictions", "the replay predictor needs --pred predictions.json")

        def primitives_of(rect):
            return collect_window(cloud, rect)[0]

        pf = _guard("invalid_predictions", args.pred, load_predictions, _read(args.pred), True, drawing,
                    primitives_of)
        return _guard("invalid_predictions", args.pred, ReplayPredictor, pf.windows)
    svg_path = args.exemplar_svg
    lab_path = args.exemplar_labels
    if (svg_path is None) != (lab_path is None):
        raise CliError("missing_exemplars", "--exemplar-svg and --exemplar-labels go together")
    if svg_path is None:
        raise CliError("missing_exemplars", "the baseline predictor needs --exemplar-svg and --exemplar-labels")
    ex_drawing = _drawing(svg_path, cfg)
    ex = _labels(lab_path, ex_drawing, table)
    model = ExemplarPredictor(interval=cfg.interval, top_k=cfg.top_k, class_table=table)
    return _guard("invalid_exemplars", lab_path, model.fit, [ex_drawing], [ex.labeling])


def cmd_spot(args) -> None:
    cfg = _config(args)
    table = _table(cfg)
    drawing = _drawing(args.input, cfg)
    jobs = _threads(args)
    cloud = sample_drawing(drawing, cfg.interval, jobs)
    predictor = _predictor(args, cfg, drawing, table, cloud)
    source = args.pred if cfg.predictor == "replay" else args.exemplar_labels
    result = _guard("prediction_failed", source, run_swa, drawing, predictor, cfg.swa(), table, jobs, cloud)
    instances = [{"id": k, "class": int(inst.label), "score": float(inst.score)}
                 for k, inst in enumerate(result.instances, start=1)]
    _write(args.out, save_annotations(result.labeling, table, instances=instances, drawing=args.input,
                                      config=cfg.to_dict(), report=result.report))
    if args.windows_out:
        _write(args.windows_out, save_predictions(result.windows, cfg.to_dict()))


def _drawing_for(args, pred_file, labels_path: str) -> str:
    if args.drawing is not None:
        return args.drawing
    if pred_file.drawing is None:
        raise CliError("missing_drawing", "labeling names no drawing; pass --drawing", labels_path)
    path = Path(pred_file.drawing)
    if not path.exists():
        sibling = Path(labels_path).parent / path
        if sibling.exists():
            return str(sibling)
    return pred_file.drawing


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    table = _table(cfg)
    pred_text = _read(args.pred)
    pred_head = _guard("invalid_annotations", args.pred, load_annotations, pred_text, None, True, table)
    drawing_path = _drawing_for(args, pred_head, args.pred)
    drawing = _drawing(drawing_path, cfg)
    gt = _labels(args.gt, drawing, table)
    pred = _labels(args.pred, drawing, table)
    from .metrics import evaluate

    cloud = sample_drawing(drawing, cfg.interval, _threads(args))
    lengths = np.array([arc_length(p) for p in drawing], dtype=float)
    report = evaluate(gt.labeling, pred.labeling, gt.table, cloud, lengths, pred.instance_scores())
    report["config"] = cfg.to_dict()
    report["inputs"] = {"gt": args.gt, "pred": args.pred, "drawing": drawing_path}
    _write(args.report, dump_json(report))
    pan = report["panoptic"]
    print(f"PQ {pan['pq']:.4f}  SQ {pan['sq']:.4f}  RQ {pan['rq']:.4f}  "
          f"F1 {report['semantic']['f1']:.4f}  mAP {report['instance']['map']:.4f}")


def cmd_reconstruct(args) -> None:
    cfg = _config(args)
    table = _table(cfg)
    drawing = _drawing(args.input, cfg)
    ann = _labels(args.labels, drawing, table)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scene, notes = reconstruct_scene(drawing, ann.labeling, ann.table, cfg.reconstruction())
    scene.config = cfg.to_dict()
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    _write(args.out, export_scene(scene))
    if args.mesh:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            obj = export_wall_mesh(scene.walls, scene.wall_height)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        header = "# cadspot " + json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
        _write(args.mesh, header + obj)


def cmd_render(args) -> None:
    cfg = _config(args)
    table = _table(cfg)
    drawing = _drawing(args.input, cfg)
    ann = _labels(args.labels, drawing, table)
    svg = render_labeled_svg(drawing, ann.labeling, default_palette(ann.table))
    comment = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).replace("--", "- -")
    head, rest = svg.split("\n", 1)
    _write(args.out, f"{head}\n<!-- cadspot {comment} -->\n{rest}")


def cmd_synth(args) -> None:
    from .synth import SyntheticPredictor, generate_scene

    cfg = _config(args)
    table = _table(cfg)
    if args.tiles < 1:
        raise CliError("invalid_argument", "--tiles must be >= 1")
    try:
        scene = generate_scene(args.seed, n_tiles=args.tiles, window=cfg.window, step=cfg.step,
                               straddle_fraction=args.straddle, table=table)
    except (ValueError, KeyError) as exc:
        raise CliError("invalid_argument", str(exc)) from None
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("write_failed", f"cannot create {out}: {exc.strerror}", str(out)) from None
    result = run_swa(scene.drawing, SyntheticPredictor(scene.labeling, table), cfg.swa(), table, _threads(args))
    synth_info = {"seed": args.seed, "tiles": args.tiles, "straddle": args.straddle}
    _write(out / "drawing.svg", scene.svg)
    _write(out / "annotations.json", save_annotations(scene.labeling, table, drawing="drawing.svg",
                                                      config={**cfg.to_dict(), "synth": synth_info}))
    _write(out / "predictions.json", save_predictions(result.windows, {**cfg.to_dict(), "synth": synth_info}))


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of pipeline settings; flags override it")
    p.add_argument("--interval", type=float, help="sampling interval d (default 0.14)")
    p.add_argument("--scale", type=float, help="uniform pre-scale applied to drawings")
    p.add_argument("--class-table", dest="class_table", help="class table JSON")
    p.add_argument("--threads", type=int, help="worker threads (default: $CADSPOT_THREADS or all cores)")


def _swa_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=float, help="window size W (default 140)")
    p.add_argument("--step", type=float, help="window step (default 70)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cadspot", description="Panoptic symbol spotting for vector drawings.")
    parser.add_argument("--version", action="version", version=f"cadspot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("sample", help="dense point sampling of every primitive")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("spot", help="sliding-window panoptic spotting")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="labeling.json")
    p.add_argument("--predictor", choices=PREDICTORS)
    p.add_argument("--pred", help="recorded predictions.json (replay predictor)")
    p.add_argument("--exemplar-svg", dest="exemplar_svg", help="annotated drawing (baseline predictor)")
    p.add_argument("--exemplar-labels", dest="exemplar_labels", help="its annotations.json")
    p.add_argument("--windows-out", dest="windows_out", help="also write per-window outputs as predictions.json")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--nms-threshold", dest="nms_threshold", type=float)
    p.add_argument("--nms-sigma", dest="nms_sigma", type=float)
    p.add_argument("--nms-kernel", dest="nms_kernel", choices=("gaussian", "linear"))
    p.add_argument("--mask-threshold", dest="mask_threshold", type=float)
    _swa_flags(p)
    _common(p)
    p.set_defaults(func=cmd_spot)

    p = sub.add_parser("evaluate", help="semantic F1, instance AP and panoptic quality")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--drawing", help="drawing SVG (default: the path recorded in --pred)")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reconstruct", help="walls, doors and windows as a parametric scene")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="scene.json")
    p.add_argument("--mesh", help="extruded wall mesh (OBJ)")
    p.add_argument("--raster-res", dest="raster_res", type=int)
    p.add_argument("--merge-tol", dest="merge_tol", type=float)
    p.add_argument("--pivot-tol", dest="pivot_tol", type=float)
    p.add_argument("--group-tol", dest="group_tol", type=float)
    p.add_argument("--angle-tol", dest="angle_tol", type=float)
    p.add_argument("--wall-height", dest="wall_height", type=float)
    _common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("render", help="SVG with primitives colored by class")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="synthetic strip drawing with ground truth and recorded predictions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tiles", type=int, default=10)
    p.add_argument("--straddle", type=float, default=0.4, help="fraction of symbols crossing tile borders")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _swa_flags(p)
    _common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def _fail(kind: str, message: str, path: str | None) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "path": path}, sort_keys=True) + "\n")
    return 1


def run(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.path)
    except ConfigError as exc:
        return _fail("invalid_config", str(exc), getattr(args, "config", None))
    except (ValueError, PredictorError, AnnotationError) as exc:
        return _fail(type(exc).__name__, str(exc), getattr(args, "input", None))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
