"""Procedural meshes: low-poly vehicles for the synthetic benchmark, plus test shapes.

Object frame matches the camera: x lateral, y down, z longitudinal.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..mesh import MeshCorpus, TriangleMesh, write_corpus


@dataclass(frozen=True)
class VehicleProfile:
    name: str
    category: str
    length: float
    width: float
    # (fraction of length, height in metres, roof half-width fraction) per station
    stations: Sequence[tuple[float, float, float]]
    clearance: float = 0.15


SEDAN_STATIONS = (
    (0.00, 0.55, 1.0),
    (0.22, 0.85, 1.0),
    (0.38, 0.95, 0.95),
    (0.48, 1.42, 0.80),
    (0.72, 1.42, 0.80),
    (0.84, 1.00, 0.95),
    (1.00, 0.90, 1.0),
)
HATCH_STATIONS = (
    (0.00, 0.60, 1.0),
    (0.20, 0.90, 1.0),
    (0.34, 1.00, 0.95),
    (0.45, 1.45, 0.82),
    (0.88, 1.40, 0.82),
    (1.00, 0.95, 0.95),
)
SUV_STATIONS = (
    (0.00, 0.70, 1.0),
    (0.18, 1.05, 1.0),
    (0.30, 1.15, 0.95),
    (0.40, 1.72, 0.85),
    (0.92, 1.70, 0.85),
    (1.00, 1.05, 0.95),
)

DEFAULT_PROFILES = (
    VehicleProfile("sedan_a", "sedan1", 4.60, 1.80, SEDAN_STATIONS),
    VehicleProfile("sedan_b", "sedan1", 4.85, 1.85, SEDAN_STATIONS),
    VehicleProfile("hatch_a", "sedan2", 4.10, 1.75, HATCH_STATIONS),
    VehicleProfile("hatch_b", "sedan2", 4.35, 1.78, HATCH_STATIONS),
    VehicleProfile("suv_a", "SUV", 4.70, 1.90, SUV_STATIONS),
    VehicleProfile("suv_b", "SUV", 4.95, 1.95, SUV_STATIONS),
)


def vehicle_mesh(profile: VehicleProfile, class_id: int = 0) -> TriangleMesh:
    """Closed, watertight extrusion of a side profile with a narrowed roof."""
    half_w = profile.width / 2.0
    rows = []
    for frac, height, roof in profile.stations:
        z = frac * profile.length
        top = -height
        bottom = -profile.clearance
        rows.append([(-half_w, bottom, z), (half_w, bottom, z),
                     (half_w * roof, top, z), (-half_w * roof, top, z)])
    v = np.array(rows, dtype=float).reshape(-1, 3)
    v -= (v.max(axis=0) + v.min(axis=0)) / 2.0

    def vid(station, corner):
        return 4 * station + corner

    faces = []
    n = len(profile.stations)
    for s in range(n - 1):
        for c in range(4):
            a, b = vid(s, c), vid(s, (c + 1) % 4)
            a2, b2 = vid(s + 1, c), vid(s + 1, (c + 1) % 4)
            faces.append((a, b, b2))
            faces.append((a, b2, a2))
    for s in (0, n - 1):
        faces.append((vid(s, 0), vid(s, 1), vid(s, 2)))
        faces.append((vid(s, 0), vid(s, 2), vid(s, 3)))
    return TriangleMesh(v, np.array(faces), profile.name, class_id)


def default_vehicles() -> list[tuple[TriangleMesh, str]]:
    return [(vehicle_mesh(p, i), p.category) for i, p in enumerate(DEFAULT_PROFILES)]


def write_default_corpus(root) -> MeshCorpus:
    return write_corpus(Path(root), default_vehicles())


def box_mesh(sx: float, sy: float, sz: float, name: str = "box", class_id: int = 0) -> TriangleMesh:
    """Axis-aligned box centred on the origin."""
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    v = np.array([[x, y, z] for z in (-hz, hz) for y in (-hy, hy) for x in (-hx, hx)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(v, np.array(faces), name, class_id)


def planar_square(side: float, name: str = "square", class_id: int = 0) -> TriangleMesh:
    """Fronto-parallel square in the z = 0 plane, centred on the origin."""
    h = side / 2.0
    v = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]), name, class_id)
