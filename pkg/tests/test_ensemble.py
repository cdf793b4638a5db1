import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from silrefine.ensemble import (
    ClusterMember,
    Detection,
    bbox_iou,
    ensemble_detections,
    merge_cluster,
    model_voting,
    nms,
    weighted_translation_merge,
)
from silrefine.errors import EmptyClusterError
from silrefine.geom import BBox, Pose, UnitQuaternion

Q = UnitQuaternion.from_yaw(0.4)


def det(box, score, cls=0, t=(0.0, 0.0, 10.0), q=Q, iou=None):
    return Detection(BBox(*box), score, cls, Pose(q, t), iou_score=iou)


def random_dets(rng, n, n_classes=2):
    out = []
    for _ in range(n):
        x, y = rng.uniform(0, 40, 2)
        w, h = rng.uniform(5, 20, 2)
        out.append(det((x, y, x + w, y + h), float(np.round(rng.uniform(0, 1), 2)), int(rng.integers(n_classes))))
    return out


def reference_nms(dets, thresh):
    """Quadratic reference: walk a full rank table and grow the kept set."""
    n = len(dets)
    rank = sorted(range(n), key=lambda i: (-dets[i].score, i))
    over = [[dets[i].class_id == dets[j].class_id and bbox_iou(dets[i].bbox, dets[j].bbox) > thresh
             for j in range(n)] for i in range(n)]
    keep = [False] * n
    for pos, i in enumerate(rank):
        keep[i] = not any(keep[j] and over[i][j] for j in rank[:pos])
    return [dets[i] for i in rank if keep[i]]


class TestBBoxIoU:
    def test_examples(self):
        a = BBox(0, 0, 1, 1)
        assert bbox_iou(a, a) == 1.0
        assert bbox_iou(a, BBox(2, 2, 3, 3)) == 0.0
        assert bbox_iou(a, BBox(0.5, 0, 1.5, 1)) == pytest.approx(1 / 3)
        assert bbox_iou(a, BBox(1, 0, 2, 1)) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for a, b in itertools.combinations(random_dets(rng, 12), 2):
            v = bbox_iou(a.bbox, b.bbox)
            assert v == bbox_iou(b.bbox, a.bbox) and 0.0 <= v <= 1.0


class TestNMS:
    def test_examples(self):
        d = det((0, 0, 1, 1), 0.5)
        assert nms([d]) == [d]
        a, b = det((0, 0, 4, 4), 0.9), det((0, 0, 4, 4), 0.8)
        assert nms([b, a], 0.5) == [a]

    def test_per_class(self):
        a, b = det((0, 0, 4, 4), 0.9, 0), det((0, 0, 4, 4), 0.8, 1)
        assert nms([a, b]) == [a, b]

    def test_ties_keep_first(self):
        a, b = det((0, 0, 4, 4), 0.7), det((0, 0, 4, 4), 0.7)
        assert nms([a, b])[0] is a and nms([b, a])[0] is b

    @pytest.mark.parametrize("seed", range(5))
    def test_reference(self, seed):
        rng = np.random.default_rng(seed)
        dets = random_dets(rng, 50)
        for thresh in (0.0, 0.3, 0.5, 0.9):
            got = nms(dets, thresh)
            assert [id(d) for d in got] == [id(d) for d in reference_nms(dets, thresh)]
            assert [id(d) for d in nms(got, thresh)] == [id(d) for d in got]


class TestVoting:
    def _three_models(self):
        car = [det((10, 10, 30, 25), 0.9), det((11, 10, 31, 25), 0.8), det((10, 11, 30, 26), 0.85)]
        spurious = det((60, 60, 70, 70), 0.95)
        return [[car[0], spurious], [car[1]], [car[2]]], car, spurious

    def test_unanimous_cluster(self):
        outputs, car, spurious = self._three_models()
        clusters = model_voting(outputs, 3)
        assert len(clusters) == 1
        assert sorted(m.model for m in clusters[0]) == [0, 1, 2]
        assert {id(m.detection) for m in clusters[0]} == {id(d) for d in car}

    def test_single_vote_keeps_all(self):
        outputs, _, spurious = self._three_models()
        clusters = model_voting(outputs, 1)
        assert len(clusters) == 2
        assert any(c[0].detection is spurious for c in clusters)

    def test_default_votes_is_n_models(self):
        outputs, _, _ = self._three_models()
        assert len(model_voting(outputs)) == 1

    def test_one_member_per_model(self):
        # a model with two overlapping boxes contributes only one to the cluster
        outputs = [[det((0, 0, 10, 10), 0.9), det((0, 0, 10, 10), 0.8)], [det((0, 0, 10, 10), 0.7)]]
        clusters = model_voting(outputs, 1)
        assert [len(c) for c in clusters] == [2, 1]
        assert sorted(m.model for m in clusters[0]) == [0, 1]

    def test_bad_votes(self):
        with pytest.raises(ValueError):
            model_voting([[], []], 3)
        with pytest.raises(ValueError):
            model_voting([[]], 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_strict_subset(self, seed):
        rng = np.random.default_rng(seed)
        outputs = [random_dets(rng, 8) for _ in range(3)]
        loose = {tuple(id(m.detection) for m in c) for c in model_voting(outputs, 1)}
        strict = {tuple(id(m.detection) for m in c) for c in model_voting(outputs, 3)}
        assert strict <= loose
        # every detection lands in exactly one cluster when N_v = 1
        members = [id(m.detection) for c in model_voting(outputs, 1) for m in c]
        assert sorted(members) == sorted(id(d) for o in outputs for d in o)


class TestMerge:
    def test_examples(self):
        np.testing.assert_allclose(weighted_translation_merge([((0, 0, 10), 0.5), ((0, 0, 13), 0.5)]),
                                   (0, 0, 11.5))
        np.testing.assert_array_equal(weighted_translation_merge([((1, 2, 3), 1.0), ((9, 9, 9), 0.0)]),
                                      (1, 2, 3))
        np.testing.assert_allclose(weighted_translation_merge([((0, 0, 10), 0.6), ((0, 0, 13), 0.3)]),
                                   (0, 0, 11), atol=1e-12)

    def test_zero_weights_fall_back_to_mean(self):
        np.testing.assert_allclose(weighted_translation_merge([((0, 0, 10), 0.0), ((2, 0, 12), 0.0)]),
                                   (1, 0, 11))

    def test_empty(self):
        with pytest.raises(EmptyClusterError):
            weighted_translation_merge([])
        with pytest.raises(EmptyClusterError):
            merge_cluster([])

    @given(st.lists(st.tuples(st.tuples(*[st.floats(-50, 50)] * 3), st.floats(0.01, 1.0)),
                    min_size=1, max_size=6),
           st.floats(0.01, 100.0), st.randoms(use_true_random=False))
    @settings(max_examples=200)
    def test_invariants(self, cluster, lam, rnd):
        t = weighted_translation_merge(cluster)
        perm = list(cluster)
        rnd.shuffle(perm)
        np.testing.assert_allclose(weighted_translation_merge(perm), t, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(weighted_translation_merge([(x, lam * s) for x, s in cluster]), t,
                                   rtol=1e-9, atol=1e-9)
        pts = np.array([x for x, _ in cluster])
        assert np.all(t >= pts.min(axis=0) - 1e-9) and np.all(t <= pts.max(axis=0) + 1e-9)

    def test_singleton(self):
        q = UnitQuaternion(-0.8, 0.0, -0.6, 0.0)
        d = det((0, 0, 5, 5), 0.6, 2, (1.0, 2.0, 3.0), q, iou=0.7)
        out = merge_cluster([d])
        assert out.pose.rotation.as_tuple() == (0.8, 0.0, 0.6, 0.0)
        assert out.pose.translation == d.pose.translation
        assert (out.bbox, out.score, out.class_id) == (d.bbox, d.score, d.class_id)

    def test_identical_pose(self):
        a = det((0, 0, 5, 5), 0.6, t=(1.0, 2.0, 3.0), iou=0.4)
        b = det((1, 0, 6, 5), 0.8, t=(1.0, 2.0, 3.0), iou=0.9)
        out = merge_cluster([a, b])
        assert out.pose.translation == (1.0, 2.0, 3.0)
        assert out.score == pytest.approx(0.7)
        assert out.bbox == b.bbox

    def test_rotation_from_best_iou_any_order(self):
        members = [
            ClusterMember(0, det((0, 0, 5, 5), 0.9, 0, (0, 0, 10), UnitQuaternion.from_yaw(0.1), 0.5)),
            ClusterMember(1, det((0, 0, 5, 6), 0.7, 1, (0, 0, 11), UnitQuaternion.from_yaw(0.2), 0.8)),
            ClusterMember(2, det((0, 1, 5, 5), 0.8, 0, (0, 0, 12), UnitQuaternion.from_yaw(0.3), 0.6)),
        ]
        outs = [merge_cluster(list(p)) for p in itertools.permutations(members)]
        for o in outs:
            assert o.pose == outs[0].pose and o.bbox == outs[0].bbox and o.score == outs[0].score
        assert outs[0].pose.rotation == UnitQuaternion.from_yaw(0.2)
        assert outs[0].class_id == 0 and outs[0].bbox == members[0].detection.bbox
        np.testing.assert_allclose(outs[0].pose.t, (0, 0, (5 + 8.8 + 7.2) / 1.9))


class TestEnsemble:
    def test_spurious_removed(self):
        outputs, car, spurious = TestVoting()._three_models()
        out = ensemble_detections(outputs)
        assert len(out) == 1 and out[0].bbox == car[0].bbox

    def test_single_model_equals_nms(self):
        rng = np.random.default_rng(3)
        dets = random_dets(rng, 20)
        out = ensemble_detections([dets], 1)
        ref = nms(dets, 0.5)
        assert [(d.bbox, d.score, d.class_id) for d in out] == [(d.bbox, d.score, d.class_id) for d in ref]
