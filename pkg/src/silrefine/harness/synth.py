"""Synthetic scenes with known poses, standing in for annotated images.

Each scene holds posed corpus meshes whose hard-rendered masks act as the
detector's mask output; the "predicted" translation is the ground truth plus
depth-proportional noise. Everything is drawn from one seeded generator, so
a seed fixes the output exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..ensemble import Detection
from ..errors import BehindCameraError, InvalidConfigError, SceneGenerationError
from ..geom import BBox, CameraIntrinsics, Pose, UnitQuaternion, canonicalize_quaternion
from ..metrics import GroundTruth
from ..mesh import TriangleMesh, transform_to_screen
from ..raster import BinaryMask, rasterize_hard, write_pgm
from .io import PredictionFile, Scene, save_predictions, save_scenes

NOISE_KINDS = ("gaussian", "uniform")


@dataclass(frozen=True)
class NoiseModel:
    """Additive translation noise per axis, in fractions of the true depth.

    ``gaussian``: offset ~ N(0, (frac * z)^2). ``uniform``: offset ~
    U(-frac * z, frac * z). ``rot_deg`` optionally rotates the predicted
    quaternion about a random axis by up to that many degrees.
    """

    trans_frac: tuple[float, float, float] = (0.05, 0.05, 0.05)
    kind: str = "gaussian"
    rot_deg: float = 0.0

    def __post_init__(self):
        frac = self.trans_frac
        if np.isscalar(frac):
            frac = (frac,) * 3
        frac = tuple(float(v) for v in frac)
        if len(frac) != 3 or any(v < 0 for v in frac):
            raise InvalidConfigError("trans_frac must be 3 non-negative fractions")
        object.__setattr__(self, "trans_frac", frac)
        if self.kind not in NOISE_KINDS:
            raise InvalidConfigError(f"noise kind must be one of {NOISE_KINDS}")
        if self.rot_deg < 0:
            raise InvalidConfigError("rot_deg must be non-negative")

    def offset(self, rng: np.random.Generator, z: float) -> np.ndarray:
        scale = np.asarray(self.trans_frac) * z
        if self.kind == "gaussian":
            return rng.normal(0.0, 1.0, 3) * scale
        return rng.uniform(-1.0, 1.0, 3) * scale


ZERO_NOISE = NoiseModel((0.0, 0.0, 0.0))


@dataclass(frozen=True)
class SynthConfig:
    n_scenes: int = 10
    instances_per_scene: int = 1
    z_min: float = 8.0
    z_max: float = 30.0
    max_retries: int = 200
    # pixels kept free between a placed object and the frame border
    margin_px: float = 1.0
    score_range: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        if self.n_scenes < 0 or self.instances_per_scene < 1:
            raise InvalidConfigError("need n_scenes >= 0 and instances_per_scene >= 1")
        if not 0 < self.z_min <= self.z_max:
            raise InvalidConfigError("need 0 < z_min <= z_max")
        if self.max_retries < 1:
            raise InvalidConfigError("max_retries must be >= 1")


@dataclass
class SynthInstance:
    mesh: TriangleMesh
    gt: GroundTruth
    mask: BinaryMask
    prediction: Detection


@dataclass
class SynthScene:
    image_id: str
    K: CameraIntrinsics
    instances: list[SynthInstance] = field(default_factory=list)


def _in_frame(sm, K: CameraIntrinsics, margin: float) -> bool:
    xy = sm.xy
    return bool(xy[:, 0].min() >= margin and xy[:, 1].min() >= margin
                and xy[:, 0].max() <= K.width - margin and xy[:, 1].max() <= K.height - margin)


def sample_pose(rng: np.random.Generator, mesh: TriangleMesh, K: CameraIntrinsics,
                cfg: SynthConfig) -> tuple[Pose, BinaryMask]:
    """Uniform yaw and depth; (x, y) uniform over positions that keep the mesh in frame."""
    for _ in range(cfg.max_retries):
        q = UnitQuaternion.from_yaw(rng.uniform(0.0, 2.0 * np.pi))
        z = rng.uniform(cfg.z_min, cfg.z_max)
        # centre the object on the principal ray, then see how far it can slide
        try:
            sm = transform_to_screen(mesh, Pose(q, (0.0, 0.0, z)), K)
        except BehindCameraError:
            continue
        lo, hi = sm.xy.min(axis=0), sm.xy.max(axis=0)
        m = cfg.margin_px
        du = (m - lo[0], K.width - m - hi[0])
        dv = (m - lo[1], K.height - m - hi[1])
        if du[0] > du[1] or dv[0] > dv[1]:
            continue
        # a pixel shift at depth z is a metric shift of z / f; slack keeps perspective changes safe
        x = rng.uniform(*du) * z / K.fx * 0.9
        y = rng.uniform(*dv) * z / K.fy * 0.9
        pose = Pose(q, (x, y, z))
        try:
            sm = transform_to_screen(mesh, pose, K)
        except BehindCameraError:
            continue
        if not _in_frame(sm, K, m):
            continue
        mask = rasterize_hard(sm, K)
        if mask.count() == 0:
            continue
        return pose, mask
    raise SceneGenerationError(
        f"mesh {mesh.name!r} did not fit in a {K.width}x{K.height} frame "
        f"after {cfg.max_retries} tries at depths [{cfg.z_min}, {cfg.z_max}]"
    )


def _perturb_rotation(rng: np.random.Generator, q: UnitQuaternion, max_deg: float) -> UnitQuaternion:
    if max_deg == 0:
        return q
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.uniform(0.0, max_deg))
    return canonicalize_quaternion(UnitQuaternion.from_axis_angle(axis, angle) * q)


def synth_generate(meshes: Sequence[TriangleMesh], K: CameraIntrinsics, n_scenes: Optional[int] = None,
                   noise: NoiseModel = NoiseModel(), seed: int = 0,
                   cfg: SynthConfig = SynthConfig()) -> list[SynthScene]:
    """Generate ``n_scenes`` scenes (``cfg.n_scenes`` when omitted)."""
    meshes = list(meshes)
    if not meshes:
        raise SceneGenerationError("the corpus is empty")
    n = cfg.n_scenes if n_scenes is None else int(n_scenes)
    rng = np.random.default_rng(seed)
    scenes = []
    for k in range(n):
        scene = SynthScene(f"img_{k:04d}", K)
        for _ in range(cfg.instances_per_scene):
            mesh = meshes[int(rng.integers(len(meshes)))]
            pose, mask = sample_pose(rng, mesh, K, cfg)
            t_pred = pose.t + noise.offset(rng, pose.translation[2])
            q_pred = _perturb_rotation(rng, pose.rotation, noise.rot_deg)
            score = float(rng.uniform(*cfg.score_range))
            x1, y1, x2, y2 = mask.bbox()
            det = Detection(BBox(x1, y1, x2, y2), score, mesh.class_id,
                            Pose(q_pred, tuple(float(v) for v in t_pred)), mask=mask)
            gt = GroundTruth(mesh.class_id, pose, mesh.name)
            scene.instances.append(SynthInstance(mesh, gt, mask, det))
        scenes.append(scene)
    return scenes


def write_synth(scenes: Sequence[SynthScene], out_dir, masks_subdir: str = "masks") -> tuple[Path, Path]:
    """Write ``scenes.json``, ``predictions.json`` and one PGM mask per instance.

    The GT mask doubles as the prediction's mask input, so both files point
    at the same PGM.
    """
    out = Path(out_dir)
    (out / masks_subdir).mkdir(parents=True, exist_ok=True)
    file_scenes, pf = [], PredictionFile()
    for s in scenes:
        paths = []
        dets = []
        for j, inst in enumerate(s.instances):
            p = out / masks_subdir / f"{s.image_id}_{j}.pgm"
            write_pgm(inst.mask, p)
            paths.append(str(p))
            d = inst.prediction
            dets.append(Detection(d.bbox, d.score, d.class_id, d.pose, mask_path=str(p)))
        file_scenes.append(Scene(s.image_id, s.K, [i.gt for i in s.instances], paths))
        pf.images[s.image_id] = dets
    scenes_path, preds_path = out / "scenes.json", out / "predictions.json"
    save_scenes(file_scenes, scenes_path)
    save_predictions(pf, preds_path)
    return scenes_path, preds_path


def synth_config_dict(cfg: SynthConfig, noise: NoiseModel) -> dict:
    return {"synth": asdict(cfg), "noise": asdict(noise)}
