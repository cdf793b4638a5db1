"""Multi-model ensembling: NMS, cross-model voting and IoU-weighted merging."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyClusterError
from .geom import BBox, Pose, canonicalize_quaternion

DEFAULT_VOTE_IOU = 0.5


@dataclass(frozen=True, eq=False)
class Detection:
    """One detected instance.

    ``mask`` holds the decoded mask when loaded; ``mask_path`` is the file
    reference kept for serialization. ``iou_score`` is the render/mask IoU
    achieved by the pose, when known.
    """

    bbox: BBox
    score: float
    class_id: int
    pose: Pose
    mask: Optional[object] = None
    mask_path: Optional[str] = None
    iou_score: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.iou_score is not None and not 0.0 <= self.iou_score <= 1.0:
            raise ValueError(f"iou_score must lie in [0, 1], got {self.iou_score}")
        if not isinstance(self.bbox, BBox):
            object.__setattr__(self, "bbox", BBox(*self.bbox))
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def translation(self) -> np.ndarray:
        return self.pose.t

    def with_pose(self, pose: Pose, iou_score: Optional[float] = None) -> "Detection":
        return replace(self, pose=pose, iou_score=iou_score)


def bbox_iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _score_order(dets: Sequence[Detection]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def nms(dets: Sequence[Detection], iou_thresh: float = 0.5) -> list[Detection]:
    """Greedy per-class suppression, highest score first (ties: input order)."""
    kept: list[Detection] = []
    for i in _score_order(dets):
        d = dets[i]
        if any(k.class_id == d.class_id and bbox_iou(k.bbox, d.bbox) > iou_thresh for k in kept):
            continue
        kept.append(d)
    return kept


@dataclass(frozen=True)
class ClusterMember:
    model: int
    detection: Detection


def model_voting(outputs: Sequence[Sequence[Detection]], n_votes: Optional[int] = None,
                 iou_thresh: float = DEFAULT_VOTE_IOU) -> list[list[ClusterMember]]:
    """Group detections across models and keep groups backed by ``n_votes`` models.

    Anchors are taken in descending score order; each anchor collects at most
    one unassigned detection per other model, the highest-scoring one whose
    bbox IoU with the anchor is at least ``iou_thresh``. Grouping ignores
    ``class_id`` because models may disagree on the sub-category of the same
    object.
    """
    n_models = len(outputs)
    if n_models < 1:
        raise ValueError("need at least one model's outputs")
    if n_votes is None:
        n_votes = n_models
    if not 1 <= n_votes <= n_models:
        raise ValueError(f"n_votes must lie in [1, {n_models}], got {n_votes}")

    pool = [(m, j, d) for m, dets in enumerate(outputs) for j, d in enumerate(dets)]
    pool.sort(key=lambda e: (-e[2].score, e[0], e[1]))
    assigned = [False] * len(pool)
    clusters = []
    for a, (m_a, _, anchor) in enumerate(pool):
        if assigned[a]:
            continue
        assigned[a] = True
        members = [ClusterMember(m_a, anchor)]
        used = {m_a}
        for b in range(a + 1, len(pool)):
            m_b, _, cand = pool[b]
            if assigned[b] or m_b in used:
                continue
            if bbox_iou(anchor.bbox, cand.bbox) >= iou_thresh:
                assigned[b] = True
                used.add(m_b)
                members.append(ClusterMember(m_b, cand))
        if len(used) >= n_votes:
            clusters.append(members)
    return clusters


def weighted_translation_merge(cluster) -> np.ndarray:
    """``sum_i S_i T_i / sum_i S_i``; plain mean when every weight is zero.

    ``cluster`` is a sequence of ``(translation, weight)`` pairs.
    """
    items = [(np.asarray(t, dtype=float), float(s)) for t, s in cluster]
    if not items:
        raise EmptyClusterError("cannot merge an empty cluster")
    if any(s < 0 for _, s in items):
        raise ValueError("merge weights must be non-negative")
    first = items[0][0]
    if all(np.array_equal(t, first) for t, _ in items):
        return first.copy()
    total = math.fsum(s for _, s in items)
    if total == 0:
        return np.array([math.fsum(t[k] for t, _ in items) / len(items) for k in range(3)])
    # normalizing the weights first keeps a lone nonzero weight exact
    return np.array([math.fsum(s / total * t[k] for t, s in items) for k in range(3)])


def _canonical_key(d: Detection):
    return (-(d.iou_score or 0.0), -d.score, d.class_id, d.pose.translation,
            d.pose.rotation.as_tuple(), tuple(d.bbox.as_list()))


def merge_cluster(cluster) -> Detection:
    """Fuse a voting cluster into one detection.

    Translation: IoU-weighted mean (missing IoU counts as 0). Rotation: from
    the member with the highest IoU. Score: mean member score. Bbox, mask and
    class: from the highest-scoring member.
    """
    dets = [m.detection if isinstance(m, ClusterMember) else m for m in cluster]
    if not dets:
        raise EmptyClusterError("cannot merge an empty cluster")
    dets = sorted(dets, key=_canonical_key)
    t_bar = weighted_translation_merge([(d.translation, d.iou_score or 0.0) for d in dets])
    best_fit = dets[0]
    lead = min(dets, key=lambda d: (-d.score,) + _canonical_key(d))
    rotation = canonicalize_quaternion(best_fit.pose.rotation)
    return Detection(
        bbox=lead.bbox,
        score=math.fsum(d.score for d in dets) / len(dets),
        class_id=lead.class_id,
        pose=Pose(rotation, tuple(float(v) for v in t_bar)),
        mask=lead.mask,
        mask_path=lead.mask_path,
        iou_score=None,
    )


def ensemble_detections(outputs: Sequence[Sequence[Detection]], n_votes: Optional[int] = None,
                        vote_iou: float = DEFAULT_VOTE_IOU,
                        nms_thresh: float = 0.5) -> list[Detection]:
    """Per-model NMS, cross-model voting, then merge each surviving cluster."""
    suppressed = [nms(dets, nms_thresh) for dets in outputs]
    clusters = model_voting(suppressed, n_votes, vote_iou)
    return [merge_cluster(c) for c in clusters]
