"""JSON file formats for scenes and predictions.

Both files carry a ``schema`` tag and an integer ``version`` that are checked
on load. Mask references are stored relative to the JSON file's directory
and resolved to full paths on load. Quaternions are stored scalar-first
``(a, b, c, d)`` and canonicalized on write.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from ..errors import SchemaError
from ..ensemble import Detection
from ..geom import BBox, CameraIntrinsics, Pose, UnitQuaternion, canonicalize_quaternion
from ..metrics import GroundTruth

SCHEMA_VERSION = 1
SCENES_SCHEMA = "silrefine.scenes"
PREDICTIONS_SCHEMA = "silrefine.predictions"

PathLike = Union[str, os.PathLike]


@dataclass
class Scene:
    image_id: str
    K: CameraIntrinsics
    instances: list[GroundTruth] = field(default_factory=list)
    # per-instance GT mask files, aligned with ``instances``
    mask_paths: list[Optional[str]] = field(default_factory=list)


@dataclass
class PredictionFile:
    # image id -> detections, in file order
    images: dict[str, list[Detection]] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    version: int = SCHEMA_VERSION


def _check_header(raw: dict, schema: str, path: PathLike) -> None:
    if not isinstance(raw, dict) or raw.get("schema") != schema:
        raise SchemaError(f"{path}: expected a {schema!r} file")
    if raw.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported {schema} version {raw.get('version')!r}, "
                          f"expected {SCHEMA_VERSION}")


def _resolve(ref: Optional[str], base: Path) -> Optional[str]:
    if ref is None:
        return None
    return os.path.normpath(os.path.join(base, ref))


def _relative(path: Optional[str], base: Path) -> Optional[str]:
    if path is None:
        return None
    return Path(os.path.relpath(path, base)).as_posix()


def _quat(values, where: str) -> UnitQuaternion:
    try:
        return canonicalize_quaternion([float(v) for v in values])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad quaternion {values!r}: {exc}") from None


def _vec3(values, where: str) -> tuple[float, float, float]:
    if not isinstance(values, (list, tuple)) or len(values) != 3:
        raise SchemaError(f"{where}: translation must be a list of 3 numbers")
    return tuple(float(v) for v in values)


def _write_json(data: dict, path: PathLike) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _read_json(path: PathLike) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def detection_to_dict(d: Detection, base: Path) -> dict:
    return {
        "bbox": [float(v) for v in d.bbox.as_list()],
        "mask": _relative(d.mask_path, base),
        "score": float(d.score),
        "class_id": int(d.class_id),
        "rotation": [float(v) for v in canonicalize_quaternion(d.pose.rotation).as_tuple()],
        "translation": [float(v) for v in d.pose.translation],
        "iou_score": None if d.iou_score is None else float(d.iou_score),
    }


def detection_from_dict(raw: dict, base: Path, where: str = "detection") -> Detection:
    try:
        pose = Pose(_quat(raw["rotation"], where), _vec3(raw["translation"], where))
        return Detection(
            bbox=BBox(*(float(v) for v in raw["bbox"])),
            score=float(raw["score"]),
            class_id=int(raw["class_id"]),
            pose=pose,
            mask_path=_resolve(raw.get("mask"), base),
            iou_score=None if raw.get("iou_score") is None else float(raw["iou_score"]),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {type(exc).__name__}: {exc}") from None


def save_predictions(pf: PredictionFile, path: PathLike) -> None:
    base = Path(path).parent
    data = {
        "schema": PREDICTIONS_SCHEMA,
        "version": SCHEMA_VERSION,
        "images": [
            {"image_id": img, "detections": [detection_to_dict(d, base) for d in dets]}
            for img, dets in pf.images.items()
        ],
    }
    if pf.errors:
        data["errors"] = pf.errors
    _write_json(data, path)


def load_predictions(path: PathLike) -> PredictionFile:
    raw = _read_json(path)
    _check_header(raw, PREDICTIONS_SCHEMA, path)
    base = Path(path).parent
    images: dict[str, list[Detection]] = {}
    for n, entry in enumerate(raw.get("images", [])):
        img = str(entry["image_id"])
        if img in images:
            raise SchemaError(f"{path}: duplicate image id {img!r}")
        images[img] = [
            detection_from_dict(d, base, f"{path}: image {img!r} detection {k}")
            for k, d in enumerate(entry.get("detections", []))
        ]
    return PredictionFile(images, list(raw.get("errors", [])))


def save_scenes(scenes: list[Scene], path: PathLike) -> None:
    base = Path(path).parent
    out = []
    for s in scenes:
        masks = s.mask_paths or [None] * len(s.instances)
        out.append({
            "image_id": s.image_id,
            "intrinsics": s.K.to_dict(),
            "instances": [
                {
                    "mesh": g.mesh_name,
                    "class_id": g.class_id,
                    "rotation": [float(v) for v in canonicalize_quaternion(g.pose.rotation).as_tuple()],
                    "translation": [float(v) for v in g.pose.translation],
                    "mask": _relative(m, base),
                }
                for g, m in zip(s.instances, masks)
            ],
        })
    _write_json({"schema": SCENES_SCHEMA, "version": SCHEMA_VERSION, "scenes": out}, path)


def load_scenes(path: PathLike, corpus=None) -> list[Scene]:
    """Read a scenes file; with ``corpus`` given, every mesh name must resolve in it."""
    raw = _read_json(path)
    _check_header(raw, SCENES_SCHEMA, path)
    base = Path(path).parent
    scenes, seen = [], set()
    for entry in raw.get("scenes", []):
        img = str(entry["image_id"])
        if img in seen:
            raise SchemaError(f"{path}: duplicate image id {img!r}")
        seen.add(img)
        where = f"{path}: scene {img!r}"
        try:
            K = CameraIntrinsics.from_dict(entry["intrinsics"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: bad intrinsics: {exc}") from None
        gts, masks = [], []
        for k, inst in enumerate(entry.get("instances", [])):
            w = f"{where} instance {k}"
            name = inst.get("mesh")
            if corpus is not None and name is not None:
                try:
                    corpus.by_name(name)
                except KeyError:
                    raise SchemaError(f"{w}: mesh {name!r} not in corpus {corpus.root}") from None
            try:
                pose = Pose(_quat(inst["rotation"], w), _vec3(inst["translation"], w))
                gts.append(GroundTruth(int(inst["class_id"]), pose, name))
            except KeyError as exc:
                raise SchemaError(f"{w}: missing field {exc}") from None
            masks.append(_resolve(inst.get("mask"), base))
        scenes.append(Scene(img, K, gts, masks))
    return scenes
