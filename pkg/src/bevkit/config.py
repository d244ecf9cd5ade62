"""Pipeline configuration: one strict JSON document covering every stage.

Unknown keys are rejected at every level so a typo'd knob fails loudly
instead of silently running defaults. The effective config (defaults filled
in) serializes back out and reloads to an identical run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .background import PccParams
from .bev import BevConfig
from .box3d import HeightParams
from .errors import ConfigError
from .groundmap import GroundParams
from .track import TrackerParams, TrackFilterConfig


@dataclass(frozen=True)
class SegmenterConfig:
    kind: str = "components"          # "components" or "external:<command>"
    min_area_px: int = 4
    timeout_s: float = 30.0
    nms_iou: float = 0.5

    def __post_init__(self):
        if self.kind != "components" and not self.kind.startswith("external:"):
            raise ConfigError(
                f"segmenter.kind must be 'components' or 'external:<command>',"
                f" got {self.kind!r}"
            )
        if not 0.0 < self.nms_iou <= 1.0:
            raise ConfigError("segmenter.nms_iou must be in (0, 1]")


@dataclass(frozen=True)
class EvalConfig:
    gt: str | None = None
    match_iou: float = 0.1
    range_split_m: float = 15.0


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: str | None = None
    output_dir: str | None = None
    seed: int = 42
    bev: BevConfig = field(default_factory=BevConfig)
    tau_bg: float = 0.2
    pcc: PccParams = field(default_factory=PccParams)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    track_filter: TrackFilterConfig = field(default_factory=TrackFilterConfig)
    ground: GroundParams = field(default_factory=GroundParams)
    height: HeightParams = field(default_factory=HeightParams)
    area_threshold: float = 1.5
    sigma_frames: float = 2.0
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTION_KEYS = {
    "bev": {"resolution", "x_range", "y_range"},
    "background": {"tau_bg"},
    "pcc": {"n", "rho", "alpha", "stride", "seed"},
    "segmenter": {"kind", "min_area_px", "timeout_s", "nms_iou"},
    "tracker": {"tau_high", "tau_low", "iou_match", "max_age", "min_hits",
                "predict_motion"},
    "track_filter": {"min_frames", "winding_max", "min_displacement",
                     "thin_aspect", "thin_area_px", "thin_frac"},
    "ground": {"percentile", "min_samples", "idw_power", "idw_neighbors",
               "max_radius_m"},
    "height": {"percentile", "offset", "min_points"},
    "classify": {"area_threshold"},
    "smoothing": {"sigma_frames"},
    "eval": {"gt", "match_iou", "range_split_m"},
}
_TOP_KEYS = {"input", "output", "seed"} | set(_SECTION_KEYS)


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(sec) - _SECTION_KEYS[name]
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in section {name!r}")
    return dict(sec)


def _build(defaults, section: dict, name: str):
    try:
        return replace(defaults, **section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value in section {name!r}: {e}") from None


def config_from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config keys {sorted(unknown)}")

    seed = doc.get("seed", 42)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    bev_sec = _section(doc, "bev")
    for key in ("x_range", "y_range"):
        if key in bev_sec:
            val = bev_sec[key]
            if not (isinstance(val, (list, tuple)) and len(val) == 2):
                raise ConfigError(f"bev.{key} must be [min, max]")
            bev_sec[key] = (float(val[0]), float(val[1]))

    pcc_sec = _section(doc, "pcc")
    # the stage seed follows the run seed unless pinned explicitly
    pcc_sec.setdefault("seed", seed)

    bg_sec = _section(doc, "background")
    cls_sec = _section(doc, "classify")
    smooth_sec = _section(doc, "smoothing")
    eval_sec = _section(doc, "eval")

    return PipelineConfig(
        input_dir=doc.get("input"),
        output_dir=doc.get("output"),
        seed=seed,
        bev=_build(BevConfig(), bev_sec, "bev"),
        tau_bg=float(bg_sec.get("tau_bg", 0.2)),
        pcc=_build(PccParams(), pcc_sec, "pcc"),
        segmenter=_build(SegmenterConfig(), _section(doc, "segmenter"), "segmenter"),
        tracker=_build(TrackerParams(), _section(doc, "tracker"), "tracker"),
        track_filter=_build(TrackFilterConfig(), _section(doc, "track_filter"),
                            "track_filter"),
        ground=_build(GroundParams(), _section(doc, "ground"), "ground"),
        height=_build(HeightParams(), _section(doc, "height"), "height"),
        area_threshold=float(cls_sec.get("area_threshold", 1.5)),
        sigma_frames=float(smooth_sec.get("sigma_frames", 2.0)),
        eval=_build(EvalConfig(), eval_sec, "eval"),
    )


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "input": cfg.input_dir,
        "output": cfg.output_dir,
        "seed": cfg.seed,
        "bev": {
            "resolution": cfg.bev.resolution,
            "x_range": list(cfg.bev.x_range),
            "y_range": list(cfg.bev.y_range),
        },
        "background": {"tau_bg": cfg.tau_bg},
        "pcc": {"n": cfg.pcc.n, "rho": cfg.pcc.rho, "alpha": cfg.pcc.alpha,
                "stride": cfg.pcc.stride, "seed": cfg.pcc.seed},
        "segmenter": {"kind": cfg.segmenter.kind,
                      "min_area_px": cfg.segmenter.min_area_px,
                      "timeout_s": cfg.segmenter.timeout_s,
                      "nms_iou": cfg.segmenter.nms_iou},
        "tracker": {"tau_high": cfg.tracker.tau_high,
                    "tau_low": cfg.tracker.tau_low,
                    "iou_match": cfg.tracker.iou_match,
                    "max_age": cfg.tracker.max_age,
                    "min_hits": cfg.tracker.min_hits,
                    "predict_motion": cfg.tracker.predict_motion},
        "track_filter": {"min_frames": cfg.track_filter.min_frames,
                         "winding_max": cfg.track_filter.winding_max,
                         "min_displacement": cfg.track_filter.min_displacement,
                         "thin_aspect": cfg.track_filter.thin_aspect,
                         "thin_area_px": cfg.track_filter.thin_area_px,
                         "thin_frac": cfg.track_filter.thin_frac},
        "ground": {"percentile": cfg.ground.percentile,
                   "min_samples": cfg.ground.min_samples,
                   "idw_power": cfg.ground.idw_power,
                   "idw_neighbors": cfg.ground.idw_neighbors,
                   "max_radius_m": cfg.ground.max_radius_m},
        "height": {"percentile": cfg.height.percentile,
                   "offset": cfg.height.offset,
                   "min_points": cfg.height.min_points},
        "classify": {"area_threshold": cfg.area_threshold},
        "smoothing": {"sigma_frames": cfg.sigma_frames},
        "eval": {"gt": cfg.eval.gt, "match_iou": cfg.eval.match_iou,
                 "range_split_m": cfg.eval.range_split_m},
    }


def load_config(path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return config_from_dict(doc)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def merge_dict(base: dict, overlay: dict) -> dict:
    """Recursive dict merge; overlay wins, sub-dicts merge key by key."""
    out = dict(base)
    for key, val in overlay.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_dict(out[key], val)
        else:
            out[key] = val
    return out


def apply_overrides(doc: dict, assignments: list[str]) -> dict:
    """Apply `key.path=value` strings; values parse as JSON, else raw text."""
    out = json.loads(json.dumps(doc))    # deep copy, JSON types only
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} is not key.path=value")
        path, raw = assignment.split("=", 1)
        keys = path.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override {assignment!r} has an empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {assignment!r} crosses a non-object")
        node[keys[-1]] = value
    return out
