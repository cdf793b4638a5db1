"""Triangle meshes: OBJ ingestion, corpus manifests, camera-space transforms."""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, TextIO, Union

import numpy as np

from .errors import BehindCameraError, InvalidCanonicalDistanceError, ObjParseError
from .geom import CameraIntrinsics, Pose, UnitQuaternion, quat_to_matrix


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertices in metres (object frame) and 0-based triangle indices."""

    vertices: np.ndarray
    faces: np.ndarray
    name: str = ""
    class_id: int = 0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (M, 3), got {f.shape}")
        if len(v) < 3 or len(f) < 1:
            raise ValueError("a mesh needs at least 3 vertices and 1 face")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ValueError("faces must reference three distinct vertices")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def extent(self) -> np.ndarray:
        """Axis-aligned size (x, y, z) in metres."""
        return self.vertices.max(axis=0) - self.vertices.min(axis=0)

    def rotated(self, q: UnitQuaternion) -> "TriangleMesh":
        return TriangleMesh(
            self.vertices @ quat_to_matrix(q).T, self.faces, self.name, self.class_id
        )

    def scaled(self, s: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * s, self.faces, self.name, self.class_id)

    def equals(self, other: "TriangleMesh") -> bool:
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(
            self.faces, other.faces
        )


@dataclass(frozen=True, eq=False)
class ScreenMesh:
    """Pixel coordinates ``(u, v)`` plus camera-frame depth per vertex."""

    screen_verts: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "screen_verts", _frozen(np.asarray(self.screen_verts, float)))
        object.__setattr__(self, "faces", _frozen(np.asarray(self.faces, np.int64)))

    @property
    def xy(self) -> np.ndarray:
        return self.screen_verts[:, :2]

    @property
    def depth(self) -> np.ndarray:
        return self.screen_verts[:, 2]

    def shifted(self, dx: float, dy: float) -> "ScreenMesh":
        sv = np.array(self.screen_verts)
        sv[:, 0] += dx
        sv[:, 1] += dy
        return ScreenMesh(sv, self.faces)


def _parse_index(tok: str, n_verts: int, lineno: int) -> int:
    head = tok.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ObjParseError(f"bad face index {tok!r}", lineno) from None
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += n_verts
    else:
        raise ObjParseError("face index 0 is invalid (indices are 1-based)", lineno)
    if not 0 <= idx < n_verts:
        raise ObjParseError(f"face index {tok!r} out of range ({n_verts} vertices)", lineno)
    return idx


def load_obj(source: Union[BinaryIO, TextIO, bytes, str, os.PathLike], name: str = "",
             class_id: int = 0) -> TriangleMesh:
    """Read the ``v``/``f`` subset of a Wavefront OBJ file.

    ``source`` may be a path, raw bytes, or an open (binary or text) stream.
    Polygons with more than three corners are fan-triangulated.
    """
    if isinstance(source, (str, os.PathLike)) and not isinstance(source, bytes):
        path = Path(source)
        with open(path, "rb") as fh:
            return load_obj(fh, name or path.stem, class_id)
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjParseError("vertex needs three coordinates", lineno)
            try:
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise ObjParseError(f"bad vertex {line!r}", lineno) from None
        elif tag == "f":
            idx = [_parse_index(tok, len(verts), lineno) for tok in parts[1:]]
            if len(idx) < 3:
                raise ObjParseError("face needs at least three vertices", lineno)
            for k in range(1, len(idx) - 1):
                tri = (idx[0], idx[k], idx[k + 1])
                if len(set(tri)) != 3:
                    raise ObjParseError("face repeats a vertex", lineno)
                faces.append(tri)
    if len(verts) < 3 or not faces:
        raise ObjParseError("mesh needs at least 3 vertices and one face")
    return TriangleMesh(np.array(verts), np.array(faces), name, class_id)


def dump_obj(mesh: TriangleMesh) -> str:
    """Serialize to OBJ text that ``load_obj`` reads back bit-exactly."""
    out = io.StringIO()
    if mesh.name:
        out.write(f"# {mesh.name}\n")
    for x, y, z in mesh.vertices.tolist():
        out.write(f"v {x!r} {y!r} {z!r}\n")
    for a, b, c in mesh.faces.tolist():
        out.write(f"f {a + 1} {b + 1} {c + 1}\n")
    return out.getvalue()


def save_obj(mesh: TriangleMesh, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(dump_obj(mesh))


def camera_points(mesh: TriangleMesh, pose: Pose) -> np.ndarray:
    """Vertices expressed in the camera frame, ``R v + T``."""
    return mesh.vertices @ quat_to_matrix(pose.rotation).T + pose.t


def transform_to_screen(mesh: TriangleMesh, pose: Pose, K: CameraIntrinsics) -> ScreenMesh:
    cam = camera_points(mesh, pose)
    z = cam[:, 2]
    bad = np.flatnonzero(z <= 0)
    if bad.size:
        i = int(bad[0])
        raise BehindCameraError(f"vertex {i} has camera depth {z[i]} <= 0", vertex_index=i)
    sv = np.empty_like(cam)
    sv[:, 0] = K.fx * cam[:, 0] / z + K.cx
    sv[:, 1] = K.fy * cam[:, 1] / z + K.cy
    sv[:, 2] = z
    return ScreenMesh(sv, mesh.faces)


def canonical_bbox_diag(mesh: TriangleMesh, K: CameraIntrinsics, z_r: float) -> float:
    """Diagonal (px) of the projected vertex bbox at pose ``(I, (0, 0, z_r))``."""
    length = float(mesh.extent()[2])
    if not (z_r > length and z_r + mesh.vertices[:, 2].min() > 0):
        raise InvalidCanonicalDistanceError(
            f"canonical distance {z_r} must exceed the longitudinal extent {length}"
        )
    sm = transform_to_screen(mesh, Pose(UnitQuaternion.identity(), (0.0, 0.0, z_r)), K)
    lo = sm.xy.min(axis=0)
    hi = sm.xy.max(axis=0)
    return float(math.hypot(*(hi - lo)))


@dataclass(frozen=True)
class CorpusEntry:
    file: str
    class_id: int
    category: str


class MeshCorpus:
    """A directory of ``.obj`` files indexed by ``manifest.json``.

    The manifest maps each file name to its ``class_id`` and sub-category::

        {"sedan_a.obj": {"class_id": 0, "category": "sedan1"}, ...}
    """

    MANIFEST = "manifest.json"

    def __init__(self, root: Union[str, os.PathLike]):
        self.root = Path(root)
        manifest_path = self.root / self.MANIFEST
        if not manifest_path.is_file():
            raise FileNotFoundError(f"no mesh manifest at {manifest_path}")
        raw = json.loads(manifest_path.read_text())
        self.entries: dict[int, CorpusEntry] = {}
        for fname, info in sorted(raw.items()):
            cid = int(info["class_id"])
            if cid in self.entries:
                raise ValueError(f"duplicate class_id {cid} in {manifest_path}")
            self.entries[cid] = CorpusEntry(fname, cid, str(info.get("category", "")))
        self._cache: dict[int, TriangleMesh] = {}

    @classmethod
    def from_env(cls, var: str = "SILREFINE_CORPUS") -> "MeshCorpus":
        root = os.environ.get(var)
        if not root:
            raise FileNotFoundError(f"environment variable {var} is not set")
        return cls(root)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, class_id: int) -> bool:
        return int(class_id) in self.entries

    def class_ids(self) -> list[int]:
        return sorted(self.entries)

    def by_name(self, name: str) -> TriangleMesh:
        for e in self.entries.values():
            if Path(e.file).stem == name or e.file == name:
                return self.get(e.class_id)
        raise KeyError(f"no mesh named {name!r} in corpus {self.root}")

    def get(self, class_id: int) -> TriangleMesh:
        class_id = int(class_id)
        if class_id not in self._cache:
            try:
                e = self.entries[class_id]
            except KeyError:
                raise KeyError(f"class_id {class_id} not in corpus {self.root}") from None
            self._cache[class_id] = load_obj(self.root / e.file, Path(e.file).stem, class_id)
        return self._cache[class_id]

    def meshes(self) -> Iterable[TriangleMesh]:
        for cid in self.class_ids():
            yield self.get(cid)


def write_corpus(root: Union[str, os.PathLike], meshes: Iterable[tuple[TriangleMesh, str]]) -> MeshCorpus:
    """Write ``(mesh, category)`` pairs as OBJ files plus a manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for mesh, category in meshes:
        fname = f"{mesh.name}.obj"
        save_obj(mesh, root / fname)
        manifest[fname] = {"class_id": mesh.class_id, "category": category}
    (root / MeshCorpus.MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return MeshCorpus(root)
