"""Command line interface.

Subcommands mirror the pipeline stages so a run can be resumed from any saved
artifact. Exit codes: 0 success, 1 stage failure, 2 usage errors and missing
inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from pathlib import Path

from . import pipeline as pl
from .config import (
    apply_overrides,
    config_from_dict,
    config_to_dict,
    merge_dict,
    PipelineConfig,
)
from .errors import BevkitError, ConfigError, NoFrames
from .plots import plot_kinematics, plot_trajectories
from .segment import make_segmenter


class StageFailure(Exception):
    def __init__(self, stage_name: str, error: BaseException):
        super().__init__(f"stage {stage_name}: {error}")
        self.stage_name = stage_name
        self.error = error


@contextmanager
def _stage(name: str):
    try:
        yield
    except NoFrames as exc:
        # missing inputs are a frames-stage problem no matter who hit them
        raise StageFailure("frames", exc) from exc
    except BevkitError as exc:
        raise StageFailure(name, exc) from exc


# --- configuration ---------------------------------------------------------

def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    doc: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    doc = apply_overrides(doc, getattr(args, "overrides", []) or [])
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "segmenter", None):
        doc = merge_dict(doc, {"segmenter": {"kind": args.segmenter}})
    if getattr(args, "input", None):
        doc["input"] = args.input
    if getattr(args, "out", None):
        doc["output"] = args.out
    if getattr(args, "gt", None):
        doc = merge_dict(doc, {"eval": {"gt": args.gt}})
    return config_from_dict(doc)


def _require_out(cfg: PipelineConfig) -> pl.Artifacts:
    if not cfg.output_dir:
        raise ConfigError("no output directory (pass --out or set output)")
    art = pl.Artifacts(cfg.output_dir)
    art.ensure_root()
    pl.write_effective_config(cfg, art)
    return art


def _add_common(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    p.add_argument("--config", help="JSON pipeline config")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY.PATH=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--segmenter",
                   help="segmenter kind: components or external:<command>")
    if with_input:
        p.add_argument("--input", help="frame directory (frame_*.csv)")
    p.add_argument("--out", help="output directory for artifacts")


# --- shared ensure-or-compute steps ----------------------------------------

def _load_frames(cfg: PipelineConfig):
    with _stage("frames"):
        return pl.stage_frames(cfg)


def _ensure_background(cfg: PipelineConfig, art: pl.Artifacts, frames):
    if pl.has_background(art):
        return pl.load_background(art)
    with _stage("background"):
        images = pl.stage_rasterize(cfg, frames)
        segmenter = None
        if cfg.segmenter.kind != "components":
            segmenter = make_segmenter(cfg.segmenter.kind,
                                       min_area_px=cfg.segmenter.min_area_px,
                                       timeout_s=cfg.segmenter.timeout_s)
        try:
            return pl.stage_background(cfg, images, art, segmenter)
        finally:
            if segmenter is not None:
                segmenter.close()


def _ensure_detections(cfg, art, frames):
    if art.detections_path.exists():
        return pl.load_detections(art.detections_path)
    bg, _ = _ensure_background(cfg, art, frames)
    with _stage("detect"):
        return pl.stage_detect(cfg, frames, bg, art)


def _ensure_tracks(cfg, art, frames):
    if art.tracks_path.exists():
        return pl.load_tracks(art.tracks_path)
    dets = _ensure_detections(cfg, art, frames)
    with _stage("track"):
        return pl.stage_track(cfg, dets, len(frames), art)


def _ensure_ground(cfg, art, frames):
    if (art.ground_dir / "ground.json").exists():
        return pl.load_ground_map(art.ground_dir)
    _, completed = _ensure_background(cfg, art, frames)
    with _stage("ground"):
        return pl.stage_ground(cfg, frames, completed, art)


def _ensure_boxes(cfg, art, frames):
    if art.boxes_path.exists():
        return pl.load_boxes(art.boxes_path)
    tracks = _ensure_tracks(cfg, art, frames)
    dets = _ensure_detections(cfg, art, frames)
    gmap = _ensure_ground(cfg, art, frames)
    with _stage("boxes"):
        return pl.stage_boxes(cfg, frames, tracks, dets, gmap, art)


# --- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    from .synthscene import (
        SceneSampler,
        demo_pipeline_overrides,
        demo_scene,
        script_from_dict,
        script_to_dict,
    )

    if args.demo:
        script = demo_scene(args.seed if args.seed is not None else 42)
    elif args.scene:
        with _stage("synth"):
            doc = json.loads(Path(args.scene).read_text())
            if args.seed is not None:
                doc["seed"] = args.seed
            script = script_from_dict(doc)
    else:
        print("error: synth needs --demo or --scene", file=sys.stderr)
        return 2

    out = Path(args.out)
    with _stage("synth"):
        frames_dir = SceneSampler(script).generate(out)
    (out / "scene.json").write_text(
        json.dumps(script_to_dict(script), indent=2, sort_keys=True) + "\n"
    )
    run_doc = {
        "input": str(frames_dir),
        "output": str(out / "pipeline"),
        "seed": script.seed,
        "eval": {"gt": str(out / "gt.jsonl")},
    }
    if args.demo:
        run_doc = merge_dict(run_doc, demo_pipeline_overrides())
    (out / "run_config.json").write_text(
        json.dumps(run_doc, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {script.frame_count} frames to {frames_dir}")
    print(f"wrote {out / 'gt.jsonl'}")
    print(f"wrote {out / 'run_config.json'}")
    return 0


def cmd_rasterize(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    meta, frames = _load_frames(cfg)
    with _stage("rasterize"):
        images = pl.stage_rasterize(cfg, frames, art)
    print(f"rasterized {len(images)} frames to {art.bev_dir}")
    return 0


def cmd_background(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    _, frames = _load_frames(cfg)
    with _stage("background"):
        images = pl.stage_rasterize(cfg, frames)
        segmenter = None
        if cfg.segmenter.kind != "components":
            segmenter = make_segmenter(cfg.segmenter.kind,
                                       min_area_px=cfg.segmenter.min_area_px,
                                       timeout_s=cfg.segmenter.timeout_s)
        try:
            bg, _ = pl.stage_background(cfg, images, art, segmenter)
        finally:
            if segmenter is not None:
                segmenter.close()
    print(f"background from {bg.frames_used} frames written to "
          f"{art.background_dir}")
    return 0


def cmd_detect(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    _, frames = _load_frames(cfg)
    bg, _ = _ensure_background(cfg, art, frames)
    with _stage("detect"):
        dets = pl.stage_detect(cfg, frames, bg, art)
    n = sum(len(v) for v in dets.values())
    print(f"{n} detections in {len(frames)} frames -> {art.detections_path}")
    return 0


def cmd_track(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    _, frames = _load_frames(cfg)
    dets = _ensure_detections(cfg, art, frames)
    with _stage("track"):
        records = pl.stage_track(cfg, dets, len(frames), art)
    log = json.loads(art.track_filter_log_path.read_text())
    print(f"{len(records)} tracks kept, {len(log['removed'])} removed -> "
          f"{art.tracks_path}")
    return 0


def cmd_ground(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    _, frames = _load_frames(cfg)
    _, completed = _ensure_background(cfg, art, frames)
    with _stage("ground"):
        gmap = pl.stage_ground(cfg, frames, completed, art)
    import numpy as np

    known = int(np.count_nonzero(gmap.validity))
    print(f"ground map: {known} known cells -> {art.ground_dir}")
    return 0


def cmd_boxes(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    _, frames = _load_frames(cfg)
    tracks = _ensure_tracks(cfg, art, frames)
    dets = _ensure_detections(cfg, art, frames)
    gmap = _ensure_ground(cfg, art, frames)
    with _stage("boxes"):
        rows = pl.stage_boxes(cfg, frames, tracks, dets, gmap, art)
    print(f"{len(rows)} boxes -> {art.boxes_path}")
    return 0


def cmd_params(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    meta, frames = _load_frames(cfg)
    tracks = _ensure_tracks(cfg, art, frames)
    with _stage("params"):
        stats = pl.stage_params(cfg, tracks, meta.frame_rate_hz, art)
    print(f"counts: {stats['counts']} -> {art.params_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    _, frames = _load_frames(cfg)
    tracks = _ensure_tracks(cfg, art, frames)
    box_rows = _ensure_boxes(cfg, art, frames)
    with _stage("eval"):
        report = pl.stage_eval(cfg, box_rows, tracks, art)
    overall = report.buckets["Overall"]["overall"]
    iou = overall["iou"]["volume"]
    iou_s = "n/a" if iou is None else f"{iou:.3f}"
    print(f"matched {overall['matched']}, missed {overall['missed']}, "
          f"false positives {overall['false_positives']}, "
          f"volume IoU {iou_s} -> {art.eval_dir}")
    return 0


def _write_plots(art: pl.Artifacts, cfg: PipelineConfig) -> int:
    tracks = pl.load_tracks(art.tracks_path)
    art.plots_dir.mkdir(parents=True, exist_ok=True)
    plot_trajectories(tracks, cfg.bev, art.plots_dir / "trajectories.svg")
    count = 1
    series: dict[int, list[tuple[int, float, float]]] = {}
    if art.params_path.exists():
        with open(art.params_path) as fh:
            for row in csv.DictReader(fh):
                series.setdefault(int(row["track_id"]), []).append(
                    (int(row["frame_id"]), float(row["speed_ms"]),
                     float(row["accel_ms2"]))
                )
    label_by_id = {tr.track_id: tr.label for tr in tracks}
    for tid in sorted(series):
        rows = sorted(series[tid])
        plot_kinematics(
            tid, label_by_id.get(tid, "?"),
            [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
            art.plots_dir / f"track_{tid:03d}.svg",
        )
        count += 1
    return count


def cmd_plot(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    meta, frames = _load_frames(cfg)
    tracks = _ensure_tracks(cfg, art, frames)
    if not art.params_path.exists():
        with _stage("params"):
            pl.stage_params(cfg, tracks, meta.frame_rate_hz, art)
    with _stage("plot"):
        count = _write_plots(art, cfg)
    print(f"{count} plots -> {art.plots_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    art = _require_out(cfg)
    with _stage("run"):
        summary = pl.run_pipeline(cfg, art.root)
    with _stage("plot"):
        _write_plots(art, cfg)
    print(f"frames: {summary['frames']}")
    print(f"tracks: {summary['tracks']} counts: {summary['counts']}")
    if "eval" in summary:
        ev = summary["eval"]
        iou = ev["volume_iou"]
        iou_s = "n/a" if iou is None else f"{iou:.3f}"
        print(f"eval: matched {ev['matched']} missed {ev['missed']} "
              f"fp {ev['false_positives']} volume IoU {iou_s}")
    print(f"artifacts in {art.root}")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bevkit",
        description="BEV occupancy pipeline: detect, track, and measure "
                    "objects in roadside LiDAR sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--demo", action="store_true",
                   help="built-in intersection scene")
    p.add_argument("--scene", help="scene script JSON")
    p.add_argument("--seed", type=int, help="override the scene seed")
    p.add_argument("--out", required=True, help="scene output directory")
    p.set_defaults(func=cmd_synth)

    for name, func, hlp in (
        ("rasterize", cmd_rasterize, "write BEV occupancy grids"),
        ("background", cmd_background, "estimate and complete the background"),
        ("detect", cmd_detect, "foreground detections per frame"),
        ("track", cmd_track, "associate detections into tracks"),
        ("ground", cmd_ground, "build the ground height map"),
        ("boxes", cmd_boxes, "fit oriented 3D boxes per track state"),
        ("params", cmd_params, "speeds, accelerations, class stats"),
        ("plot", cmd_plot, "SVG trajectory and kinematics plots"),
        ("run", cmd_run, "full pipeline"),
    ):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="compare boxes against ground truth")
    _add_common(p)
    p.add_argument("--gt", help="ground-truth JSONL path")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.error, NoFrames) else 1
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except BevkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
