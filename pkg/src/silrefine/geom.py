"""Quaternions, pinhole projection and closed-form projective helpers.

Conventions: quaternions are scalar-first ``(a, b, c, d)``; the camera frame
has x to the right, y down and z forward; pixel ``(col, row)`` has its centre
at ``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BehindCameraError,
    InvalidBBoxError,
    InvalidDepthError,
    InvalidQuaternionError,
    InvalidReferenceError,
)

# Inputs whose norm is already this close to 1 are not re-divided, which keeps
# canonicalization bit-exactly idempotent.
_UNIT_SLACK = 1e-12


@dataclass(frozen=True)
class UnitQuaternion:
    """Rotation as a unit 4-vector ``a + bi + cj + dk``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        n2 = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
        if not math.isfinite(n2) or abs(n2 - 1.0) > 1e-9:
            raise InvalidQuaternionError(
                f"quaternion {self.as_tuple()} is not unit-norm (|q|^2={n2})"
            )

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> "UnitQuaternion":
        """Quaternion rotating by ``angle`` radians about ``axis`` (canonicalized)."""
        ax = np.asarray(axis, dtype=float)
        n = np.linalg.norm(ax)
        if n == 0:
            raise InvalidQuaternionError("rotation axis has zero length")
        ax = ax / n
        s = math.sin(angle / 2.0)
        return canonicalize_quaternion(
            (math.cos(angle / 2.0), s * ax[0], s * ax[1], s * ax[2])
        )

    @classmethod
    def from_yaw(cls, yaw: float) -> "UnitQuaternion":
        """Rotation about the object's vertical (camera y) axis."""
        return cls.from_axis_angle((0.0, 1.0, 0.0), yaw)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.a, -self.b, -self.c, -self.d)

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        a1, b1, c1, d1 = self.as_tuple()
        a2, b2, c2, d2 = other.as_tuple()
        return canonicalize_quaternion(
            (
                a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
                a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
                a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
                a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
            )
        )

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            int(d["width"]),
            int(d["height"]),
        )


# Full frame 3384 x 2710 with rows 0..1480 cropped away.
DATASET_WIDTH = 3384
DATASET_HEIGHT = 1230


def default_image_size(downscale: int = 1) -> tuple[int, int]:
    """Image size of the cropped dataset frame shrunk by an integer factor."""
    if downscale < 1:
        raise ValueError("downscale must be a positive integer")
    return DATASET_WIDTH // downscale, DATASET_HEIGHT // downscale


@dataclass(frozen=True)
class Pose:
    rotation: UnitQuaternion
    translation: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3:
            raise ValueError("translation must have three components")
        object.__setattr__(self, "translation", t)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation, dtype=float)

    def with_translation(self, t: Iterable[float]) -> "Pose":
        return Pose(self.rotation, tuple(float(v) for v in t))


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBBoxError(
                f"degenerate bbox ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def centre(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_points(cls, xy: np.ndarray) -> "BBox":
        xy = np.asarray(xy, dtype=float)
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def canonicalize_quaternion(q) -> UnitQuaternion:
    """Normalize ``q`` and pick the representative on the upper hemisphere.

    The first nonzero component of the result is positive, so ``q`` and
    ``-q`` map to the same bits.
    """
    if isinstance(q, UnitQuaternion):
        q = q.as_tuple()
    v = [float(x) for x in q]
    if len(v) != 4:
        raise InvalidQuaternionError(f"quaternion needs 4 components, got {len(v)}")
    n = math.sqrt(sum(x * x for x in v))
    if not math.isfinite(n) or n == 0.0:
        raise InvalidQuaternionError(f"cannot normalize quaternion {tuple(v)}")
    if abs(n - 1.0) > _UNIT_SLACK:
        v = [x / n for x in v]
    for x in v:
        if x != 0.0:
            if x < 0.0:
                v = [-y for y in v]
            break
    # + 0.0 turns -0.0 into 0.0
    return UnitQuaternion(*(x + 0.0 for x in v))


def quat_to_matrix(q: UnitQuaternion) -> np.ndarray:
    a, b, c, d = q.as_tuple()
    return np.array(
        [
            [1 - 2 * (c * c + d * d), 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), 1 - 2 * (b * b + d * d), 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), 1 - 2 * (b * b + c * c)],
        ]
    )


def rotation_distance(q1: UnitQuaternion, q2: UnitQuaternion) -> float:
    """``arccos(|q1 . q2|)`` in degrees.

    This is half the geodesic angle between the two rotations; it is kept in
    this form because the rotation thresholds are defined against it.
    """
    a, b = q1.as_tuple(), q2.as_tuple()
    if sum(x * y for x, y in zip(a, b)) < 0:
        b = tuple(-y for y in b)
    # same angle as the arccos form, but without its roundoff near 0
    diff = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    total = math.sqrt(sum((x + y) ** 2 for x, y in zip(a, b)))
    return math.degrees(2.0 * math.atan2(diff, total))


def project_point(K: CameraIntrinsics, pose: Pose, p) -> np.ndarray:
    cam = quat_to_matrix(pose.rotation) @ np.asarray(p, dtype=float) + pose.t
    if cam[2] <= 0:
        raise BehindCameraError(f"point has camera depth {cam[2]} <= 0")
    return np.array([K.fx * cam[0] / cam[2] + K.cx, K.fy * cam[1] / cam[2] + K.cy])


def restore_xy(K: CameraIntrinsics, bbox_centre, z0: float) -> tuple[float, float]:
    """Back-project a bbox centre to metric (x, y) at depth ``z0``."""
    if not z0 > 0:
        raise InvalidDepthError(f"depth must be positive, got {z0}")
    bx, by = bbox_centre
    return (z0 * (bx - K.cx) / K.fx, z0 * (by - K.cy) / K.fy)


def estimate_translation_projective(
    K: CameraIntrinsics, pred_bbox: BBox, canonical_diag: float, z_r: float
) -> np.ndarray:
    """Translation from the ratio of canonical to observed bbox diagonals."""
    l_s = pred_bbox.diagonal
    if not l_s > 0:
        raise InvalidBBoxError("predicted bbox has zero diagonal")
    if not z_r > 0:
        raise InvalidDepthError(f"canonical distance must be positive, got {z_r}")
    z_s = canonical_diag / l_s * z_r
    u, v = pred_bbox.centre
    return np.array([(u - K.cx) * z_s / K.fx, (v - K.cy) * z_s / K.fy, z_s])


def translation_distance(t, t_ref, mode: str = "absolute") -> float:
    """Euclidean translation error; ``relative`` divides by ``|t_ref|``."""
    t = np.asarray(t, dtype=float)
    t_ref = np.asarray(t_ref, dtype=float)
    err = float(np.linalg.norm(t - t_ref))
    if mode in ("absolute", "abs"):
        return err
    if mode in ("relative", "rel"):
        ref = float(np.linalg.norm(t_ref))
        if ref == 0.0:
            raise InvalidReferenceError("relative distance needs a nonzero reference")
        return err / ref
    raise ValueError(f"unknown translation distance mode {mode!r}")
