import numpy as np
import pytest

from cagewarp.fields import (
    FieldError,
    GridField,
    Sphere,
    SphereField,
    TwoSpheresField,
    CheckerFloorSphereField,
    convert_voxel_list,
    load_grid_field,
    query_field,
    save_grid_field,
)

from conftest import smooth_grid_field


def tiny_grid(dens=None, cols=None):
    if dens is None:
        dens = np.full((2, 2, 2), 2.0)
    if cols is None:
        cols = np.full((2, 2, 2, 3), 0.5)
    return GridField((0, 0, 0), (1, 1, 1), dens, cols)


class TestAnalytic:
    def test_sphere_interior(self, sphere_field):
        s = query_field(sphere_field, (0.0, 0.0, 0.0))
        assert s.density == 5.0
        assert np.array_equal(s.color, [1.0, 1.0, 1.0])

    def test_sphere_exterior_empty(self, sphere_field):
        s = query_field(sphere_field, (1.0, 1.0, 1.0))
        assert s.density == 0.0

    def test_closed_form_agreement(self, two_spheres_field):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1.0, 1.0, (10_000, 3))
        _, dens = two_spheres_field.query(pts)
        expect = np.zeros(len(pts))
        for s in two_spheres_field.spheres():
            inside = np.linalg.norm(pts - np.array(s.center), axis=-1) <= s.radius
            expect[inside] = s.density
        assert np.array_equal(dens, expect)

    def test_checker_floor(self):
        f = CheckerFloorSphereField(Sphere((0, 0, 0.5), 0.2), floor_z=(-0.1, 0.0), tile=0.5)
        s = query_field(f, (0.1, 0.1, -0.05))
        assert s.density == 20.0
        # neighbouring tile flips color
        s2 = query_field(f, (0.6, 0.1, -0.05))
        assert not np.array_equal(s.color, s2.color)


class TestGridQuery:
    def test_outside_bbox_is_empty(self):
        g = tiny_grid()
        s = query_field(g, (2.0, 0.5, 0.5))
        assert s.density == 0.0
        assert np.array_equal(s.color, [0.0, 0.0, 0.0])

    def test_constant_cell_center(self):
        s = query_field(tiny_grid(), (0.5, 0.5, 0.5))
        assert s.density == pytest.approx(2.0, abs=1e-12)

    def test_split_cell_center_hand_expansion(self):
        # corner densities 0 for k=0 plane, 1 for k=1 plane
        dens = np.zeros((2, 2, 2))
        dens[:, :, 1] = 1.0
        g = tiny_grid(dens=dens)
        p = np.array([0.5, 0.5, 0.5])
        # independent hand-expanded trilinear oracle
        expect = 0.0
        for i in (0, 1):
            for j in (0, 1):
                for k in (0, 1):
                    w = (p[0] if i else 1 - p[0]) * (p[1] if j else 1 - p[1]) * (p[2] if k else 1 - p[2])
                    expect += w * dens[i, j, k]
        assert expect == 0.5
        assert query_field(g, p).density == pytest.approx(expect, abs=1e-12)

    def test_node_lookup_exact(self):
        rng = np.random.default_rng(0)
        g = GridField((0, 0, 0), (1, 2, 3), rng.random((3, 4, 5)), rng.random((3, 4, 5, 3)))
        for idx in ((0, 0, 0), (2, 3, 4), (1, 2, 2)):
            node = g.bbox_min + np.array(idx) / (np.array(g.dims) - 1) * (g.bbox_max - g.bbox_min)
            s = query_field(g, node)
            assert s.density == pytest.approx(g.densities[idx], abs=1e-12)

    def test_lipschitz_within_cell(self):
        g = smooth_grid_field(n=16)
        rng = np.random.default_rng(3)
        spacing = (g.bbox_max - g.bbox_min) / (np.array(g.dims) - 1)
        # finite-difference gradient bound per axis
        L = np.linalg.norm([np.abs(np.diff(g.densities, axis=a)).max() / spacing[a]
                            for a in range(3)])
        base = rng.uniform(g.bbox_min + spacing, g.bbox_max - spacing, (200, 3))
        step = rng.uniform(-1, 1, (200, 3)) * spacing * 0.05
        _, d0 = g.query(base)
        _, d1 = g.query(base + step)
        assert np.all(np.abs(d1 - d0) <= L * np.linalg.norm(step, axis=-1) + 1e-12)


class TestGridIO:
    def test_minimal_roundtrip(self, tmp_path):
        g = tiny_grid()
        path = tmp_path / "g.grid"
        save_grid_field(g, path)
        loaded = load_grid_field(path)
        assert loaded.dims == (2, 2, 2)
        assert np.array_equal(loaded.densities, g.densities)
        assert np.array_equal(loaded.colors, g.colors)

    def test_roundtrip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        g = GridField((-1, 0, 2), (0, 3, 5), rng.random((3, 2, 4)), rng.random((3, 2, 4, 3)))
        p1, p2 = tmp_path / "a.grid", tmp_path / "b.grid"
        save_grid_field(g, p1)
        save_grid_field(load_grid_field(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_payload_mismatch(self, tmp_path):
        path = tmp_path / "bad.grid"
        save_grid_field(tiny_grid(), path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])  # drop one float
        with pytest.raises(FieldError, match="payload"):
            load_grid_field(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.grid"
        path.write_bytes(b"{not json\n" + b"\x00" * 64)
        with pytest.raises(FieldError, match="header"):
            load_grid_field(path)

    def test_nonfinite_rejected(self):
        dens = np.full((2, 2, 2), np.nan)
        with pytest.raises(FieldError, match="densities"):
            tiny_grid(dens=dens)

    def test_converter(self, tmp_path):
        txt = tmp_path / "v.txt"
        lines = ["2 2 2 0 0 0 1 1 1"]
        for k in range(2):
            for j in range(2):
                for i in range(2):
                    lines.append(f"{float(i + j + k)} 0.1 0.2 0.3")
        txt.write_text("\n".join(lines) + "\n")
        out = tmp_path / "v.grid"
        convert_voxel_list(txt, out)
        g = load_grid_field(out)
        assert g.densities[1, 1, 1] == 3.0
        assert g.densities[1, 0, 0] == 1.0

    def test_converter_count_mismatch(self, tmp_path):
        txt = tmp_path / "v.txt"
        txt.write_text("2 2 2 0 0 0 1 1 1\n1 0 0 0\n")
        with pytest.raises(FieldError, match="voxel"):
            convert_voxel_list(txt, tmp_path / "v.grid")
