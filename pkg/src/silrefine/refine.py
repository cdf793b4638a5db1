"""Translation refinement against a 2D mask through the soft rasterizer.

The rotation stays fixed at its initial value; only the translation vector is
optimized. Also holds the geometric state initialization and the
uncertainty-weighted multi-task loss combiner.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BehindCameraError, DivergedError, InvalidConfigError, NoValidInitError
from .geom import BBox, CameraIntrinsics, Pose, UnitQuaternion, restore_xy
from .mesh import TriangleMesh, camera_points, transform_to_screen
from .raster import (
    AGGREGATES,
    DEFAULT_SIGMA,
    BinaryMask,
    SoftSilhouette,
    _check_same,
    hard_iou,
    rasterize_hard,
    rasterize_soft,
    soft_backward,
)

LOSS_KINDS = ("l2", "neg_iou")
OPTIMIZERS = ("gd", "adam")
MAX_HALVINGS = 5


@dataclass(frozen=True)
class RefineConfig:
    learning_rate: float = 0.05
    epochs: int = 20
    early_stop_iou: float = 0.95
    sigma: float = DEFAULT_SIGMA
    loss_kind: str = "neg_iou"
    optimizer: str = "adam"
    aggregate: str = "max"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfigError("learning_rate must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidConfigError("epochs must be an integer >= 1")
        if not 0 < self.early_stop_iou <= 1:
            raise InvalidConfigError("early_stop_iou must lie in (0, 1]")
        if not self.sigma > 0:
            raise InvalidConfigError("sigma must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidConfigError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.aggregate not in AGGREGATES:
            raise InvalidConfigError(f"aggregate must be one of {AGGREGATES}")

    @classmethod
    def from_dict(cls, d: dict) -> "RefineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: Union[str, os.PathLike]) -> "RefineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    translation: tuple[float, float, float]
    loss: float
    iou: float


@dataclass
class RefineResult:
    translation: np.ndarray
    best_iou: float
    trace: list[TraceRecord]
    rotation: UnitQuaternion
    initial_source: str = "regressed"

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "Tx", "Ty", "Tz", "loss", "iou"])
        for r in self.trace:
            w.writerow([r.iteration, *(repr(v) for v in r.translation), repr(r.loss), repr(r.iou)])
        return buf.getvalue()

    def write_trace(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_text(self.trace_csv())


def mask_l2_loss(m: BinaryMask, s: SoftSilhouette):
    """Sum of squared per-pixel differences and its gradient ``2 (s - m)``."""
    _check_same(m.shape, s.shape)
    diff = s.values - m.bits
    return float(np.sum(diff * diff)), 2.0 * diff


def neg_iou_loss(m: BinaryMask, s: SoftSilhouette):
    """``-soft_iou(s, m)`` with its quotient-rule gradient w.r.t. ``s``."""
    _check_same(m.shape, s.shape)
    mv = m.bits.astype(np.float64)
    inter = float(np.sum(s.values * mv))
    union = float(np.sum(s.values + mv - s.values * mv))
    if union == 0:
        return 0.0, np.zeros(s.shape)
    # d inter / ds = m ; d union / ds = 1 - m
    grad = -(mv * union - inter * (1.0 - mv)) / (union * union)
    return -inter / union, grad


_LOSSES = {"l2": mask_l2_loss, "neg_iou": neg_iou_loss}


def translation_jacobian(mesh: TriangleMesh, pose: Pose, K: CameraIntrinsics) -> np.ndarray:
    """``d(u, v)/dT`` per vertex, shape ``(n_vertices, 2, 3)``."""
    cam = camera_points(mesh, pose)
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    bad = np.flatnonzero(z <= 0)
    if bad.size:
        i = int(bad[0])
        raise BehindCameraError(f"vertex {i} has camera depth {z[i]} <= 0", vertex_index=i)
    J = np.zeros((len(cam), 2, 3))
    J[:, 0, 0] = K.fx / z
    J[:, 0, 2] = -K.fx * x / (z * z)
    J[:, 1, 1] = K.fy / z
    J[:, 1, 2] = -K.fy * y / (z * z)
    return J


def loss_and_grad(mesh: TriangleMesh, K: CameraIntrinsics, rotation: UnitQuaternion, t,
                  M: BinaryMask, sigma: float = DEFAULT_SIGMA, loss_kind: str = "neg_iou",
                  aggregate: str = "max"):
    """Soft-render at translation ``t``; return ``(loss, dL/dT, soft silhouette)``."""
    pose = Pose(rotation, tuple(float(v) for v in t))
    sm = transform_to_screen(mesh, pose, K)
    sil = rasterize_soft(sm, K, sigma, aggregate)
    loss, g_occ = _LOSSES[loss_kind](M, sil)
    g_xy = soft_backward(sm, K, sigma, g_occ, silhouette=sil)
    J = translation_jacobian(mesh, pose, K)
    return loss, np.einsum("vi,vij->j", g_xy, J), sil


def render_iou(mesh: TriangleMesh, K: CameraIntrinsics, rotation: UnitQuaternion, t,
               M: BinaryMask) -> float:
    """Hard-mask IoU between the posed mesh and ``M``."""
    sm = transform_to_screen(mesh, Pose(rotation, tuple(t)), K)
    return hard_iou(rasterize_hard(sm, K), M)


def geometric_state_init(det, mesh: TriangleMesh, K: CameraIntrinsics, R0: UnitQuaternion, T0):
    """Choose between ``T0`` and its bbox-restored alternative by mask IoU.

    The alternative keeps the depth ``z0`` and moves ``(x, y)`` so the mesh
    centre projects onto the predicted bbox centre. Returns
    ``(translation, "regressed" | "geometric")``; ties keep ``T0``.
    """
    T0 = np.asarray(T0, dtype=float)
    bbox = det.bbox if isinstance(det.bbox, BBox) else BBox(*det.bbox)
    x_hat, y_hat = restore_xy(K, bbox.centre, float(T0[2]))
    T_hat = np.array([x_hat, y_hat, T0[2]])

    def score(t):
        try:
            return render_iou(mesh, K, R0, t, det.mask)
        except BehindCameraError:
            return None

    s0, s_hat = score(T0), score(T_hat)
    if s0 is None and s_hat is None:
        raise NoValidInitError("neither the regressed nor the restored translation renders")
    if s0 is None or (s_hat is not None and s_hat > s0):
        return T_hat, "geometric"
    return T0, "regressed"


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(3)
        self.v = np.zeros(3)
        self.k = 0

    def direction(self, g):
        self.k += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        m_hat = self.m / (1 - self.b1 ** self.k)
        v_hat = self.v / (1 - self.b2 ** self.k)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _GD:
    def __init__(self, lr):
        self.lr = lr

    def direction(self, g):
        return self.lr * g


def refine_translation(mesh: TriangleMesh, K: CameraIntrinsics, R0: UnitQuaternion, T_init,
                       M: BinaryMask, cfg: RefineConfig = RefineConfig(),
                       initial_source: str = "regressed") -> RefineResult:
    """Optimize the translation with the rotation held at ``R0``.

    Iteration 0 scores ``T_init``; each later record follows one step. The loop
    stops once the hard-mask IoU exceeds ``cfg.early_stop_iou`` and returns
    the visited translation with the highest hard IoU.
    """
    t = np.array(T_init, dtype=float)
    opt = _Adam(cfg.learning_rate) if cfg.optimizer == "adam" else _GD(cfg.learning_rate)
    trace: list[TraceRecord] = []
    loss, grad, _ = loss_and_grad(mesh, K, R0, t, M, cfg.sigma, cfg.loss_kind, cfg.aggregate)
    for it in range(cfg.epochs + 1):
        iou = render_iou(mesh, K, R0, t, M)
        trace.append(TraceRecord(it, tuple(float(v) for v in t), float(loss), float(iou)))
        if iou > cfg.early_stop_iou or it == cfg.epochs:
            break
        step = opt.direction(grad)
        for _ in range(MAX_HALVINGS + 1):
            cand = t - step
            try:
                loss, grad, _ = loss_and_grad(mesh, K, R0, cand, M, cfg.sigma,
                                               cfg.loss_kind, cfg.aggregate)
            except BehindCameraError:
                step = step / 2.0
                continue
            t = cand
            break
        else:
            raise DivergedError(f"step {it} keeps pushing the mesh behind the camera", trace)

    best = max(trace, key=lambda r: r.iou)
    return RefineResult(np.array(best.translation), best.iou, trace, R0, initial_source)


@dataclass
class UncertaintyWeights:
    """Per-task log-variances ``s_k = log sigma_k^2``; the task weight is ``exp(-s_k)``."""

    log_vars: dict = field(default_factory=lambda: {"shape": 0.0, "rot": 0.0, "trans": 0.0})

    def weights(self) -> dict:
        return {k: math.exp(-s) for k, s in self.log_vars.items()}


def uncertainty_weighted_loss(losses, w):
    """``sum_k L_k exp(-s_k) + s_k`` and its gradient w.r.t. each ``s_k``.

    ``losses`` and ``w`` are either mappings keyed by task name or aligned
    sequences; the gradient comes back in the same form.
    """
    if isinstance(w, UncertaintyWeights):
        w = w.log_vars
    if isinstance(losses, dict):
        keys = list(losses)
        L = np.array([float(losses[k]) for k in keys])
        s = np.array([float(w[k]) for k in keys])
    else:
        keys = None
        L = np.asarray(losses, dtype=float)
        s = np.asarray(w, dtype=float)
    scaled = L * np.exp(-s)
    total = float(np.sum(scaled + s))
    grad = 1.0 - scaled
    if keys is not None:
        return total, dict(zip(keys, grad.tolist()))
    return total, grad
