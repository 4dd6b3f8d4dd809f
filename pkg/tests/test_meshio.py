"""OBJ loading, normalization and rescaling."""
import io

import numpy as np
import pytest

from pose_retrieval.errors import DegenerateDimensionsError, DegenerateMeshError, ParseError
from pose_retrieval.meshio import (
    Mesh,
    dumps_obj,
    load_obj,
    loads_obj,
    mesh_extents,
    normalize_unit_cube,
    rescale_factor,
    rescale_to_dims,
    save_obj,
)

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def box_mesh(lo, hi, mesh_id="box"):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    k = np.arange(8)
    bits = np.stack([(k >> i) & 1 for i in range(3)], axis=1)
    tris = [(0, 1, 2), (1, 3, 2), (4, 6, 5), (5, 6, 7), (0, 4, 1), (1, 4, 5),
            (2, 3, 6), (3, 7, 6), (0, 2, 4), (2, 6, 4), (1, 5, 3), (3, 5, 7)]
    return Mesh(np.where(bits == 1, hi, lo), tris, mesh_id)


class TestLoad:
    def test_cube(self):
        m = load_obj(io.BytesIO(CUBE_OBJ.encode()))
        assert m.vertices.shape == (8, 3)
        assert m.triangles.shape == (12, 3)

    def test_quad_fan(self):
        m = loads_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_out_of_range(self):
        with pytest.raises(ParseError, match="line 4"):
            loads_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")

    def test_negative_indices_and_slashes(self):
        m = loads_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3/1/1 -2/2/1 -1/3/1\n")
        assert m.triangles.tolist() == [[0, 1, 2]]

    def test_ignores_other_records(self):
        m = loads_obj("o thing\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl x\ns off\nf 1 2 3\n")
        assert len(m.triangles) == 1

    @pytest.mark.parametrize("text,line", [
        ("v 0 0\n", 1),
        ("v 0 0 0\nv a 0 0\n", 2),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", 4),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 x 2\n", 4),
    ])
    def test_malformed_lines(self, text, line):
        with pytest.raises(ParseError, match=f"line {line}"):
            loads_obj(text)

    def test_zero_faces(self):
        with pytest.raises(ParseError):
            loads_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\n")

    def test_bytes_and_path(self, tmp_path):
        p = tmp_path / "c.obj"
        p.write_text(CUBE_OBJ)
        assert np.array_equal(load_obj(str(p)).vertices, load_obj(CUBE_OBJ.encode()).vertices)

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        m = Mesh(rng.standard_normal((30, 3)) * 1e3, rng.integers(0, 30, (40, 3)), "r")
        back = loads_obj(dumps_obj(m))
        assert np.array_equal(back.vertices, m.vertices)
        assert np.array_equal(back.triangles, m.triangles)
        save_obj(m, tmp_path / "r.obj")
        assert np.array_equal(load_obj(str(tmp_path / "r.obj")).vertices, m.vertices)


class TestMesh:
    def test_invariants(self):
        with pytest.raises(DegenerateMeshError):
            Mesh(np.zeros((2, 3)), [[0, 1, 1]])
        with pytest.raises(DegenerateMeshError):
            Mesh(np.zeros((3, 3)), [[0, 1, 3]])
        with pytest.raises(DegenerateMeshError):
            Mesh([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])

    def test_immutable(self):
        m = box_mesh([0, 0, 0], [1, 1, 1])
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0


class TestNormalize:
    def test_box(self):
        m = normalize_unit_cube(box_mesh([0, 0, 0], [2, 1, 1]))
        assert np.allclose(mesh_extents(m), [1, 0.5, 0.5])
        assert np.allclose(m.vertices.min(axis=0) + m.vertices.max(axis=0), 0)

    def test_idempotent(self):
        m = normalize_unit_cube(box_mesh([-3, 1, 2], [5, 2, 4]))
        assert np.allclose(normalize_unit_cube(m).vertices, m.vertices, atol=1e-12, rtol=0)

    def test_unit_cube_unchanged(self):
        m = box_mesh([-0.5] * 3, [0.5] * 3)
        assert np.allclose(normalize_unit_cube(m).vertices, m.vertices, atol=1e-12, rtol=0)

    def test_single_point(self):
        with pytest.raises(DegenerateMeshError):
            normalize_unit_cube(Mesh(np.ones((3, 3)), [[0, 1, 2]]))

    def test_extents_of_flat_triangle(self):
        m = Mesh([[0, 0, 0], [2, 0, 0], [0, 3, 0]], [[0, 1, 2]])
        assert np.array_equal(mesh_extents(m), [2, 3, 0])


class TestRescale:
    def test_uniform_half(self):
        m = box_mesh([-0.5] * 3, [0.5] * 3)
        assert np.allclose(mesh_extents(rescale_to_dims(m, (0.5, 0.5, 0.5))), [0.5, 0.5, 0.5])

    def test_min_ratio(self):
        m = box_mesh([-0.5, -0.25, -0.125], [0.5, 0.25, 0.125])
        assert rescale_factor(m, (0.5, 0.5, 0.5)) == 0.5
        assert np.allclose(mesh_extents(rescale_to_dims(m, (0.5, 0.5, 0.5))), [0.5, 0.25, 0.125])

    def test_fits_inside_target(self):
        rng = np.random.default_rng(1)
        m = normalize_unit_cube(box_mesh([0, 0, 0], [1.0, 0.3, 0.7]))
        for _ in range(50):
            target = rng.uniform(0.1, 1.0, 3)
            ext = mesh_extents(rescale_to_dims(m, target))
            assert np.all(ext <= target + 1e-12)
            i = int(np.argmin(target / mesh_extents(m)))
            assert ext[i] == pytest.approx(target[i], rel=1e-12)

    def test_zero_target(self):
        with pytest.raises(DegenerateDimensionsError):
            rescale_to_dims(box_mesh([0, 0, 0], [1, 1, 1]), (0.5, 0, 0.5))

    def test_flat_mesh_ignores_zero_axis(self):
        m = Mesh([[0, 0, 0], [1, 0, 0], [0, 0.5, 0]], [[0, 1, 2]])
        assert rescale_factor(m, (0.5, 0.5, 0.5)) == 0.5
