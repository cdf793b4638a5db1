import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from silrefine.errors import BehindCameraError, InvalidCanonicalDistanceError, ObjParseError
from silrefine.geom import BBox, CameraIntrinsics, Pose, UnitQuaternion, estimate_translation_projective
from silrefine.harness.corpus import box_mesh, default_vehicles, planar_square, write_default_corpus
from silrefine.mesh import (
    MeshCorpus,
    TriangleMesh,
    canonical_bbox_diag,
    dump_obj,
    load_obj,
    save_obj,
    transform_to_screen,
)

TRI = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"


class TestLoadObj:
    def test_triangle(self):
        m = load_obj(TRI.encode())
        assert m.n_vertices == 3 and m.n_faces == 1
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])

    def test_quad_fan(self):
        m = load_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])

    def test_slashes(self):
        m = load_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])
        m = load_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1/1 2/1/1 3/1/1\n")
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])

    def test_negative_indices(self):
        m = load_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])

    def test_ignores_other_records(self):
        src = b"# hi\nmtllib a.mtl\no car\ng body\nusemtl red\ns 1\n" + TRI.encode()
        assert load_obj(src).n_faces == 1

    def test_text_stream(self):
        assert load_obj(io.StringIO(TRI)).n_faces == 1

    @pytest.mark.parametrize("src, line", [
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 0 1 2\n", 5),
        ("v 0 0\n", 1),
        ("v 0 0 x\n", 1),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 -4 2\n", 4),
    ])
    def test_errors_carry_line(self, src, line):
        with pytest.raises(ObjParseError) as exc:
            load_obj(src.encode())
        assert exc.value.line_number == line
        assert str(exc.value).startswith(f"line {line}:")

    def test_empty(self):
        with pytest.raises(ObjParseError):
            load_obj(b"# nothing\n")

    def test_round_trip_fixed_point(self, tmp_path):
        for mesh, _ in default_vehicles():
            text = dump_obj(mesh)
            again = load_obj(text.encode(), mesh.name, mesh.class_id)
            assert again.equals(mesh)
            assert dump_obj(again) == text
        save_obj(mesh, tmp_path / "m.obj")
        assert load_obj(tmp_path / "m.obj").name == "m"

    @given(st.lists(st.tuples(*[st.floats(-1e6, 1e6, allow_nan=False)] * 3), min_size=3, max_size=12))
    @settings(max_examples=50)
    def test_round_trip_random(self, verts):
        faces = [(0, i, i + 1) for i in range(1, len(verts) - 1)]
        m = TriangleMesh(np.array(verts), np.array(faces))
        assert load_obj(dump_obj(m).encode()).equals(m)


class TestTriangleMesh:
    def test_invariants(self):
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 1]]))
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((2, 3)), np.array([[0, 1, 0]]))
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), int))

    def test_read_only(self):
        m = box_mesh(1, 1, 1)
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0


class TestTransform:
    def test_centred(self, K64, cube):
        sm = transform_to_screen(cube, Pose(UnitQuaternion.identity(), (0, 0, 5)), K64)
        np.testing.assert_allclose(sm.xy.mean(axis=0), [K64.cx, K64.cy], atol=1e-12)
        np.testing.assert_array_equal(sm.faces, cube.faces)

    def test_doubling_depth_halves_diagonal(self, K64, square):
        I = UnitQuaternion.identity()
        d1 = BBox.from_points(transform_to_screen(square, Pose(I, (0, 0, 4)), K64).xy).diagonal
        d2 = BBox.from_points(transform_to_screen(square, Pose(I, (0, 0, 8)), K64).xy).diagonal
        assert d2 == pytest.approx(d1 / 2, rel=1e-12)

    def test_sign_of_quaternion_irrelevant(self, K64, vehicles):
        q = UnitQuaternion.from_axis_angle((0.3, 1.0, -0.2), 0.8)
        a = transform_to_screen(vehicles[0], Pose(q, (0.1, 0.2, 9)), K64)
        b = transform_to_screen(vehicles[0], Pose(-q, (0.1, 0.2, 9)), K64)
        np.testing.assert_allclose(a.screen_verts, b.screen_verts, atol=1e-12)

    def test_equivariance(self, K64, vehicles):
        q = UnitQuaternion.from_axis_angle((0.1, 1.0, 0.4), 2.1)
        mesh = vehicles[2]
        a = transform_to_screen(mesh, Pose(q, (0.4, -0.2, 11)), K64)
        b = transform_to_screen(mesh.rotated(q), Pose(UnitQuaternion.identity(), (0.4, -0.2, 11)), K64)
        np.testing.assert_allclose(a.screen_verts, b.screen_verts, atol=1e-12)

    def test_behind_camera_names_vertex(self, K64, cube):
        with pytest.raises(BehindCameraError) as exc:
            transform_to_screen(cube, Pose(UnitQuaternion.identity(), (0, 0, 0.5)), K64)
        assert exc.value.vertex_index == 0
        assert "vertex 0" in str(exc.value)


class TestCanonicalDiag:
    K = CameraIntrinsics(1000.0, 1000.0, 500.0, 500.0, 1000, 1000)

    def test_unit_square(self, square):
        assert canonical_bbox_diag(square, self.K, 10.0) == pytest.approx(100 * math.sqrt(2), rel=1e-12)

    def test_scales_inversely(self, square):
        assert canonical_bbox_diag(square, self.K, 20.0) == pytest.approx(
            canonical_bbox_diag(square, self.K, 10.0) / 2, rel=1e-12)

    def test_projective_round_trip(self, square):
        l_r = canonical_bbox_diag(square, self.K, 10.0)
        for z_s in (3.0, 7.5, 42.0):
            sm = transform_to_screen(square, Pose(UnitQuaternion.identity(), (0.3, -0.2, z_s)), self.K)
            t = estimate_translation_projective(self.K, BBox.from_points(sm.xy), l_r, 10.0)
            assert t[2] == pytest.approx(z_s, rel=1e-12)
            np.testing.assert_allclose(t[:2], [0.3, -0.2], rtol=1e-9)

    def test_too_close(self, vehicles):
        length = vehicles[0].extent()[2]
        with pytest.raises(InvalidCanonicalDistanceError):
            canonical_bbox_diag(vehicles[0], self.K, length * 0.9)


class TestCorpus:
    def test_write_and_read(self, tmp_path):
        corpus = write_default_corpus(tmp_path)
        assert corpus.class_ids() == [0, 1, 2, 3, 4, 5]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["suv_a.obj"] == {"category": "SUV", "class_id": 4}
        assert corpus.get(4).name == "suv_a"
        assert corpus.by_name("suv_a") is corpus.get(4)
        assert corpus.entries[0].category == "sedan1"
        for (mesh, _), loaded in zip(default_vehicles(), corpus.meshes()):
            assert mesh.equals(loaded)

    def test_missing(self, tmp_path):
        corpus = write_default_corpus(tmp_path)
        with pytest.raises(KeyError):
            corpus.get(99)
        with pytest.raises(KeyError):
            corpus.by_name("tank")
        with pytest.raises(FileNotFoundError):
            MeshCorpus(tmp_path / "nope")

    def test_from_env(self, tmp_path, monkeypatch):
        write_default_corpus(tmp_path)
        monkeypatch.setenv("SILREFINE_CORPUS", str(tmp_path))
        assert len(MeshCorpus.from_env()) == 6
        monkeypatch.delenv("SILREFINE_CORPUS")
        with pytest.raises(FileNotFoundError):
            MeshCorpus.from_env()


def test_vehicles_watertight(vehicles):
    for m in vehicles:
        edges = {}
        for f in m.faces.tolist():
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(a, b), max(a, b))
                edges[key] = edges.get(key, 0) + 1
        assert set(edges.values()) == {2}
        np.testing.assert_allclose((m.vertices.max(0) + m.vertices.min(0)) / 2, 0, atol=1e-12)
