"""A3DP evaluation: per-instance criteria, threshold ladders, matching and AP.

A prediction is a true positive against a ground truth when shape
similarity, rotation distance and translation distance all pass one
criterion of the ladder. AP is computed per criterion with 11- or 101-point
interpolated precision and averaged over the ten criteria.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ImageIdMismatchError,
    MissingShapeEntryError,
    SilrefineError,
)
from .geom import CameraIntrinsics, Pose, UnitQuaternion, rotation_distance, translation_distance
from .mesh import TriangleMesh, transform_to_screen
from .raster import hard_iou, rasterize_hard

ABS = "abs"
REL = "rel"
KINDS = (ABS, REL)
N_VIEWS = 10
# official pairing: Rel is scored with 11-point AP, Abs with 101-point
DEFAULT_INTERP = {ABS: 101, REL: 11}


def _kind(kind: str) -> str:
    k = str(kind).lower()
    if k in ("abs", "absolute"):
        return ABS
    if k in ("rel", "relative"):
        return REL
    raise ValueError(f"kind must be 'abs' or 'rel', got {kind!r}")


@dataclass(frozen=True)
class Criterion:
    shape_min: float
    rot_max: float
    trans_max: float

    def __post_init__(self):
        if not (self.shape_min > 0 and self.rot_max > 0 and self.trans_max > 0):
            raise ValueError("criterion thresholds must be positive")
        if self.shape_min > 1:
            raise ValueError("shape_min must not exceed 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.shape_min, self.rot_max, self.trans_max)


@dataclass(frozen=True)
class ThresholdLadder:
    kind: str
    criteria: tuple[Criterion, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", _kind(self.kind))
        object.__setattr__(self, "criteria", tuple(self.criteria))
        if len(self.criteria) != 10:
            raise ValueError(f"a ladder has exactly 10 criteria, got {len(self.criteria)}")
        for a, b in zip(self.criteria, self.criteria[1:]):
            if b.shape_min < a.shape_min or b.rot_max > a.rot_max or b.trans_max > a.trans_max:
                raise ValueError("ladder criteria must tighten monotonically")

    def __len__(self) -> int:
        return len(self.criteria)

    def __getitem__(self, k: int) -> Criterion:
        return self.criteria[k]

    def __iter__(self):
        return iter(self.criteria)


def threshold_ladder(kind: str) -> ThresholdLadder:
    """The ten criteria c0 (loosest) to c9 (strictest) for ``kind``."""
    kind = _kind(kind)
    # built from integers so the endpoints are exact decimals
    shape = [(50 + 5 * k) / 100 for k in range(10)]
    rot = [float(50 - 5 * k) for k in range(10)]
    if kind == ABS:
        trans = [(28 - 3 * k) / 10 for k in range(10)]
    else:
        trans = [(10 - k) / 100 for k in range(10)]
    return ThresholdLadder(kind, tuple(Criterion(*c) for c in zip(shape, rot, trans)))


@dataclass(frozen=True)
class GroundTruth:
    class_id: int
    pose: Pose
    mesh_name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "class_id", int(self.class_id))


def shape_similarity(a: TriangleMesh, b: TriangleMesh, K: CameraIntrinsics, z_fix: float,
                     n_views: int = N_VIEWS) -> float:
    """Mean hard-mask IoU of ``a`` and ``b`` over ``n_views`` yaw angles ``k * 360 / n_views``.

    Both meshes sit at ``(0, 0, z_fix)``, so the image centre should be near
    the principal point.
    """
    ious = []
    for k in range(n_views):
        pose = Pose(UnitQuaternion.from_yaw(2.0 * np.pi * k / n_views), (0.0, 0.0, float(z_fix)))
        ma = rasterize_hard(transform_to_screen(a, pose, K), K)
        mb = rasterize_hard(transform_to_screen(b, pose, K), K)
        if ma.count() == 0 or mb.count() == 0:
            raise SilrefineError(f"view {k}: mesh renders no pixels at z_fix={z_fix}")
        ious.append(hard_iou(ma, mb))
    return float(np.mean(ious))


class ShapeTable:
    """Class-pair shape similarity lookup, ``table[(pred_class, gt_class)]``."""

    def __init__(self, entries: Optional[Mapping] = None):
        self._d = {(int(i), int(j)): float(v) for (i, j), v in dict(entries or {}).items()}

    def __getitem__(self, key) -> float:
        i, j = (int(v) for v in key)
        try:
            return self._d[(i, j)]
        except KeyError:
            raise MissingShapeEntryError(f"no shape similarity for class pair ({i}, {j})") from None

    def __contains__(self, key) -> bool:
        return tuple(int(v) for v in key) in self._d

    def __len__(self) -> int:
        return len(self._d)

    def items(self):
        return self._d.items()

    @classmethod
    def from_meshes(cls, meshes: Mapping[int, TriangleMesh], K: CameraIntrinsics,
                    z_fix: float) -> "ShapeTable":
        """All class pairs; each unordered pair is rendered once."""
        ids = sorted(meshes)
        d = {}
        for n, i in enumerate(ids):
            d[(i, i)] = 1.0
            for j in ids[n + 1:]:
                d[(i, j)] = d[(j, i)] = shape_similarity(meshes[i], meshes[j], K, z_fix)
        return cls(d)

    @classmethod
    def identity(cls, class_ids: Sequence[int], off: float = 0.0) -> "ShapeTable":
        """1 on the diagonal, ``off`` elsewhere; handy for tests."""
        return cls({(i, j): (1.0 if i == j else off) for i in class_ids for j in class_ids})

    def to_dict(self) -> dict:
        return {f"{i},{j}": v for (i, j), v in sorted(self._d.items())}

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "ShapeTable":
        return cls({tuple(int(p) for p in k.split(",")): v for k, v in d.items()})


def _trans_dist(pred, gt, kind: str) -> float:
    return translation_distance(pred.pose.t, gt.pose.t, "absolute" if kind == ABS else "relative")


def is_true_positive(pred, gt: GroundTruth, c: Criterion, kind: str, shape_table) -> bool:
    kind = _kind(kind)
    if shape_table[(pred.class_id, gt.class_id)] < c.shape_min:
        return False
    if rotation_distance(pred.pose.rotation, gt.pose.rotation) >= c.rot_max:
        return False
    return _trans_dist(pred, gt, kind) < c.trans_max


@dataclass
class MatchResult:
    """Matching outcome for one image under one criterion.

    ``order`` lists prediction indices by descending score; ``labels[i]`` is
    the TP flag of ``preds[order[i]]`` and ``assigned[i]`` its gt index.
    """

    order: list[int]
    labels: list[bool]
    assigned: list[Optional[int]]
    gt_matched: list[bool]

    @property
    def n_tp(self) -> int:
        return sum(self.labels)

    @property
    def n_fp(self) -> int:
        return len(self.labels) - self.n_tp

    @property
    def n_fn(self) -> int:
        return self.gt_matched.count(False)


def score_order(preds: Sequence) -> list[int]:
    """Indices by descending score; ties keep input order."""
    return sorted(range(len(preds)), key=lambda i: -preds[i].score)


def match_detections(preds: Sequence, gts: Sequence[GroundTruth], c: Criterion, kind: str,
                     shape_table) -> MatchResult:
    """Greedy matching: each prediction, best score first, claims the nearest eligible gt."""
    kind = _kind(kind)
    order = score_order(preds)
    taken = [False] * len(gts)
    labels, assigned = [], []
    for i in order:
        p = preds[i]
        best, best_d = None, np.inf
        for j, g in enumerate(gts):
            if taken[j] or not is_true_positive(p, g, c, kind, shape_table):
                continue
            d = _trans_dist(p, g, kind)
            if d < best_d:
                best, best_d = j, d
        if best is not None:
            taken[best] = True
        labels.append(best is not None)
        assigned.append(best)
    return MatchResult(order, labels, assigned, taken)


def _levels(interp: int) -> list[float]:
    if interp not in (11, 101):
        raise ValueError(f"interp must be 11 or 101, got {interp}")
    n = interp - 1
    # k / n rather than a linspace so a level equals tp / n_gt exactly when the rationals agree
    return [k / n for k in range(interp)]


def interpolated_precision(labels: Sequence[bool], n_gt: int, interp: int) -> np.ndarray:
    """``rho_interp(r)`` at every recall level; 0 above the achieved recall."""
    levels = _levels(interp)
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if n_gt == 0 or not len(labels):
        return np.zeros(len(levels))
    tp = np.cumsum(np.asarray(labels, dtype=np.int64))
    precision = tp / np.arange(1, len(tp) + 1)
    recall = tp / n_gt
    # suffix maximum: best precision at recall >= recall[i]
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    out = np.zeros(len(levels))
    for k, r in enumerate(levels):
        i = int(np.searchsorted(recall, r, side="left"))
        if i < len(recall):
            out[k] = envelope[i]
    assert np.all(np.diff(out) <= 0), "interpolated precision must be nonincreasing"
    return out


def average_precision(labels: Sequence[bool], n_gt: int, interp: int = 101) -> float:
    """Interpolated AP of a score-ordered TP/FP list against ``n_gt`` ground truths."""
    rho = interpolated_precision(labels, n_gt, interp)
    return float(np.mean(rho))


@dataclass
class EvalReport:
    kind: str
    interp: int
    ap: list[float]
    criteria: list[Criterion]
    n_gt: int
    n_pred: int
    # matches[image_id][k] -> list of (pred index, gt index or None) in score order
    matches: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.ap))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "interp": self.interp,
            "mean": self.mean,
            "ap": list(self.ap),
            "criteria": [list(c.as_tuple()) for c in self.criteria],
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "matches": {
                str(img): [[[p, g] for p, g in per_c] for per_c in per_img]
                for img, per_img in self.matches.items()
            },
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def table(self) -> str:
        name = f"A3DP-{'Abs' if self.kind == ABS else 'Rel'}"
        head = f"{'metric':<10} {'mean':>7} {'c-0':>7} {'c-5':>7}"
        row = f"{name:<10} {self.mean:7.4f} {self.ap[0]:7.4f} {self.ap[5]:7.4f}"
        return f"{head}\n{row}"


def evaluate(preds: Mapping, gts: Mapping, kind: str, interp: Optional[int] = None,
             shape_table=None, ladder: Optional[ThresholdLadder] = None) -> EvalReport:
    """Score per-image predictions against per-image ground truth.

    ``preds`` and ``gts`` map image id to lists of detections and ground
    truths; their id sets must agree. Labels from every image are pooled and
    ranked by score before AP is computed for each criterion.
    """
    kind = _kind(kind)
    interp = DEFAULT_INTERP[kind] if interp is None else int(interp)
    ladder = ladder or threshold_ladder(kind)
    if set(preds) != set(gts):
        missing = sorted(map(str, set(gts) - set(preds)))
        extra = sorted(map(str, set(preds) - set(gts)))
        raise ImageIdMismatchError(f"image ids differ: missing {missing}, unexpected {extra}")
    if shape_table is None:
        classes = {d.class_id for v in preds.values() for d in v}
        classes |= {g.class_id for v in gts.values() for g in v}
        shape_table = ShapeTable.identity(sorted(classes))
    images = sorted(gts, key=str)
    n_gt = sum(len(gts[i]) for i in images)
    n_pred = sum(len(preds[i]) for i in images)

    aps = []
    matches = {img: [] for img in images}
    for c in ladder:
        pooled = []
        for rank, img in enumerate(images):
            ps = list(preds[img])
            res = match_detections(ps, list(gts[img]), c, kind, shape_table)
            matches[img].append(list(zip(res.order, res.assigned)))
            for pos, (i, lab) in enumerate(zip(res.order, res.labels)):
                pooled.append((-ps[i].score, rank, pos, lab))
        pooled.sort(key=lambda e: e[:3])
        aps.append(average_precision([e[3] for e in pooled], n_gt, interp))
    return EvalReport(kind, interp, aps, list(ladder.criteria), n_gt, n_pred, matches)


__all__ = [
    "ABS",
    "REL",
    "DEFAULT_INTERP",
    "Criterion",
    "EvalReport",
    "GroundTruth",
    "MatchResult",
    "ShapeTable",
    "ThresholdLadder",
    "average_precision",
    "evaluate",
    "interpolated_precision",
    "is_true_positive",
    "match_detections",
    "score_order",
    "shape_similarity",
    "threshold_ladder",
]
