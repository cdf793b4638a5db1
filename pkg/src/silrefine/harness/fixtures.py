"""Hand-built evaluation inputs used as regression fixtures.

``cutoff_divergence_case`` contrasts the two interpolation schemes: near the
camera the depth-relative ladder is strict and the absolute one loose, so a
set of low-scoring, slightly-off predictions on nearby objects are true
positives for Abs and false positives for Rel. Raising the score cutoff drops
them, which costs Abs recall while leaving Rel untouched.
"""

from __future__ import annotations

from ..ensemble import Detection
from ..geom import BBox, Pose, UnitQuaternion
from ..metrics import GroundTruth

LOW_CUTOFF = 0.1
HIGH_CUTOFF = 0.9


def _det(score: float, t) -> Detection:
    return Detection(BBox(0, 0, 10, 10), score, 0, Pose(UnitQuaternion.identity(), tuple(t)))


def _gt(t) -> GroundTruth:
    return GroundTruth(0, Pose(UnitQuaternion.identity(), tuple(t)))


def cutoff_divergence_case() -> tuple[dict, dict]:
    """``(preds, gts)`` keyed by image id.

    Four far objects (z = 40 m) get exact high-score predictions. Six near
    objects (z = 5 m) get low-score predictions off by 0.6 m laterally: a
    relative error of 0.12, above every Rel threshold, but inside Abs c0-c7.
    Each image also carries one low-score prediction 5 m from anything.
    """
    preds, gts = {}, {}
    for k in range(4):
        img = f"far_{k}"
        gts[img] = [_gt((0.0, 0.0, 40.0))]
        preds[img] = [_det(0.95 - 0.01 * k, (0.0, 0.0, 40.0)), _det(0.15, (5.0, 0.0, 40.0))]
    for k in range(6):
        img = f"near_{k}"
        gts[img] = [_gt((0.0, 0.0, 5.0))]
        preds[img] = [_det(0.5 - 0.05 * k, (0.6, 0.0, 5.0)), _det(0.12, (5.0, 0.0, 5.0))]
    return preds, gts


def score_cutoff(preds: dict, cutoff: float) -> dict:
    """Keep detections scoring at least ``cutoff``."""
    return {img: [d for d in dets if d.score >= cutoff] for img, dets in preds.items()}
