"""Silhouette rasterization: hard masks for scoring, soft occupancy for gradients.

The per-pixel kernels come from the compiled ``_ext`` module when it is built
and from the NumPy ``_py`` module otherwise. Set ``SILREFINE_BACKEND=python``
to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import DimensionMismatchError
from ..geom import CameraIntrinsics
from ..mesh import ScreenMesh
from . import _py

DEFAULT_SIGMA = 1.5
# "union": 1 - prod_j (1 - sigmoid(sd_j / sigma)); "max": sigmoid(max_j sd_j / sigma)
AGGREGATES = ("union", "max")


def _load_backend():
    choice = os.environ.get("SILREFINE_BACKEND", "auto").lower()
    if choice in ("python", "py", "numpy"):
        return _py, "python"
    try:
        from . import _ext
    except ImportError:
        if choice in ("ext", "cython", "compiled"):
            raise
        return _py, "python"
    return _ext, "cython"


_kernels, BACKEND = _load_backend()


def available_backends() -> dict:
    """Kernel modules that can be imported in this environment."""
    out = {"python": _py}
    try:
        from . import _ext

        out["cython"] = _ext
    except ImportError:
        pass
    return out


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major boolean grid, ``bits[row, col]``."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits).astype(bool)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {b.shape}")
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def bbox(self):
        """Tight pixel bbox ``(x1, y1, x2, y2)`` with exclusive max edges, or None."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        if rows.size == 0:
            return None
        cols = np.flatnonzero(self.bits.any(axis=0))
        return (float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)

    __hash__ = None

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True, eq=False)
class SoftSilhouette:
    """Occupancy in [0, 1] per pixel.

    ``aggregate`` names how faces were combined. The remaining fields cache
    forward-pass state for ``soft_backward``: ``log_free = -log(1 - occupancy)``
    for ``"union"``, the scaled max signed distance and its face index for
    ``"max"``.
    """

    values: np.ndarray
    sigma: float
    log_free: Optional[np.ndarray] = None
    aggregate: str = "union"
    max_sd: Optional[np.ndarray] = None
    max_face: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


# Per-vertex dL/d(u, v), shape (n_vertices, 2).
VertexGradient = np.ndarray


def rasterize_hard(sm: ScreenMesh, K: CameraIntrinsics) -> BinaryMask:
    return BinaryMask(_kernels.hard_mask(sm.xy, sm.faces, K.width, K.height))


def rasterize_soft(sm: ScreenMesh, K: CameraIntrinsics, sigma: float = DEFAULT_SIGMA,
                   aggregate: str = "union") -> SoftSilhouette:
    """Soft occupancy from per-face sigmoids of the signed distance ``sd_j / sigma``.

    ``"union"`` combines faces as independent events. ``"max"`` keeps only the
    largest signed distance, which outside the silhouette is the exact signed
    distance to the union of faces; stacked faces of a closed mesh then do
    not widen the soft edge.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if aggregate == "union":
        s = _kernels.soft_accumulate(sm.xy, sm.faces, K.width, K.height, float(sigma))
        return SoftSilhouette(-np.expm1(-s), float(sigma), s)
    if aggregate == "max":
        x, arg = _kernels.soft_max_sd(sm.xy, sm.faces, K.width, K.height, float(sigma))
        return SoftSilhouette(_py._sigmoid(x), float(sigma), None, "max", x, arg)
    raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")


def soft_backward(sm: ScreenMesh, K: CameraIntrinsics, sigma: float, dL_docc,
                  silhouette: Optional[SoftSilhouette] = None,
                  aggregate: Optional[str] = None) -> VertexGradient:
    """Chain ``dL/d occupancy`` back to the screen-space vertex positions.

    Pass the ``silhouette`` returned by ``rasterize_soft`` for the same mesh to
    skip recomputing the forward pass; its aggregation is then used unless
    ``aggregate`` says otherwise.
    """
    g = np.asarray(dL_docc, dtype=np.float64)
    if g.shape != (K.height, K.width):
        raise DimensionMismatchError(
            f"gradient grid {g.shape} does not match image {(K.height, K.width)}"
        )
    if aggregate is None:
        aggregate = silhouette.aggregate if silhouette is not None else "union"
    reuse = (silhouette is not None and silhouette.sigma == sigma
             and silhouette.aggregate == aggregate)
    if reuse and silhouette.shape != g.shape:
        raise DimensionMismatchError(f"silhouette {silhouette.shape} vs gradient {g.shape}")
    if aggregate == "max":
        if reuse and silhouette.max_face is not None:
            x, arg = silhouette.max_sd, silhouette.max_face
        else:
            x, arg = _kernels.soft_max_sd(sm.xy, sm.faces, K.width, K.height, float(sigma))
        occ = _py._sigmoid(x)
        # d sigmoid(X) / dX
        grad_x = g * occ * (1.0 - occ)
        if not np.any(grad_x):
            return np.zeros((len(sm.xy), 2))
        return _kernels.soft_max_backward(sm.xy, sm.faces, K.width, K.height, float(sigma),
                                          grad_x, arg)
    if aggregate != "union":
        raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    if reuse and silhouette.log_free is not None:
        s = silhouette.log_free
    else:
        s = _kernels.soft_accumulate(sm.xy, sm.faces, K.width, K.height, float(sigma))
    # d occupancy / dS = exp(-S)
    grad_s = g * np.exp(-s)
    if not np.any(grad_s):
        return np.zeros((len(sm.xy), 2))
    return _kernels.soft_backward(sm.xy, sm.faces, K.width, K.height, float(sigma), grad_s)


def _check_same(a_shape, b_shape):
    if tuple(a_shape) != tuple(b_shape):
        raise DimensionMismatchError(f"shape mismatch: {tuple(a_shape)} vs {tuple(b_shape)}")


def hard_iou(a: BinaryMask, b: BinaryMask) -> float:
    _check_same(a.shape, b.shape)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return np.count_nonzero(a.bits & b.bits) / union


def soft_iou(s: SoftSilhouette, m: BinaryMask) -> float:
    _check_same(s.shape, m.shape)
    mv = m.bits.astype(np.float64)
    inter = float(np.sum(s.values * mv))
    union = float(np.sum(s.values + mv - s.values * mv))
    if union == 0:
        return 0.0
    return inter / union


def write_pgm(mask: Union[BinaryMask, SoftSilhouette], path: Union[str, os.PathLike]) -> None:
    """Binary PGM (P5, maxval 255). Soft silhouettes are quantized for viewing only."""
    if isinstance(mask, BinaryMask):
        data = np.where(mask.bits, 255, 0).astype(np.uint8)
    else:
        data = np.clip(np.rint(mask.values * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _pnm_header(buf: bytes, magic: bytes):
    if not buf.startswith(magic):
        raise ValueError(f"expected {magic.decode()} file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while buf[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(buf[start:pos]))
    return fields, pos + 1


def read_pgm(path: Union[str, os.PathLike]) -> BinaryMask:
    """Read a P5 mask; any nonzero pixel is foreground."""
    buf = Path(path).read_bytes()
    (w, h, maxval), off = _pnm_header(buf, b"P5")
    if maxval > 255:
        raise ValueError("16-bit PGM masks are not supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=off).reshape(h, w)
    return BinaryMask(data > 0)


def write_ppm(rgb: np.ndarray, path: Union[str, os.PathLike]) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path: Union[str, os.PathLike]) -> np.ndarray:
    buf = Path(path).read_bytes()
    (w, h, _), off = _pnm_header(buf, b"P6")
    return np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=off).reshape(h, w, 3)


__all__ = [
    "AGGREGATES",
    "BACKEND",
    "DEFAULT_SIGMA",
    "BinaryMask",
    "SoftSilhouette",
    "VertexGradient",
    "available_backends",
    "hard_iou",
    "rasterize_hard",
    "rasterize_soft",
    "read_pgm",
    "read_ppm",
    "soft_backward",
    "soft_iou",
    "write_pgm",
    "write_ppm",
]
