import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspforge.geom import (
    BehindCameraError,
    CameraModel,
    GeometryError,
    GripperSpec,
    RigidTransform,
    backproject,
    closest_point_on_mesh,
    compose,
    intrinsics_from_dfov,
    invert,
    principal_axes,
    project,
    project_camera_point,
    project_to_plane_and_sample,
    ray_mesh_first_hit,
    rotation_about_axis,
    rotation_about_z,
)

from fixtures_3d import (
    make_box_mesh,
    make_icosphere,
    make_square_sheet,
    sphere_facet_tolerance,
)
from oracles import brute_force_first_hit, grid_min_distance


def random_transform(rng) -> RigidTransform:
    axis = rng.normal(size=3)
    angle = rng.uniform(-np.pi, np.pi)
    return RigidTransform(rotation_about_axis(axis, angle), rng.uniform(-1, 1, size=3))


angles = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)
coords = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False)


@st.composite
def transforms(draw):
    ax = np.array([draw(coords), draw(coords), draw(coords)])
    if np.linalg.norm(ax) < 1e-3:
        ax = np.array([1.0, 0.0, 0.0])
    rot = rotation_about_axis(ax, draw(angles))
    t = np.array([draw(coords), draw(coords), draw(coords)])
    return RigidTransform(rot, t)


class TestRigidTransform:
    def test_compose_identity(self):
        t = random_transform(np.random.default_rng(0))
        out = compose(RigidTransform.identity(), t)
        np.testing.assert_allclose(out.as_matrix(), t.as_matrix(), atol=1e-12)

    def test_compose_inverse_is_identity(self):
        t = random_transform(np.random.default_rng(1))
        out = compose(t, invert(t))
        np.testing.assert_allclose(out.as_matrix(), np.eye(4), atol=1e-9)

    def test_compose_matches_matrix_product(self):
        a = RigidTransform(rotation_about_z(np.pi / 2), np.zeros(3))
        b = RigidTransform(rotation_about_z(np.pi / 2), np.zeros(3))
        out = compose(a, b)
        oracle = a.as_matrix() @ b.as_matrix()
        np.testing.assert_allclose(out.as_matrix(), oracle, atol=1e-12)
        np.testing.assert_allclose(out.rotation, rotation_about_z(np.pi), atol=1e-12)

    @given(transforms(), transforms(), transforms())
    @settings(max_examples=50, deadline=None)
    def test_compose_associative(self, a, b, c):
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        np.testing.assert_allclose(left.as_matrix(), right.as_matrix(), atol=1e-9)

    @given(transforms())
    @settings(max_examples=50, deadline=None)
    def test_invert_compose_is_identity_map(self, t):
        np.testing.assert_allclose(compose(invert(t), t).as_matrix(), np.eye(4), atol=1e-9)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(GeometryError):
            RigidTransform(np.eye(3) * 1.01, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(GeometryError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


class TestCamera:
    def test_dfov_90_gives_400px(self):
        intr = intrinsics_from_dfov(90.0, 640, 480)
        assert intr.fx == pytest.approx(400.0, abs=1e-9)
        assert intr.fy == pytest.approx(400.0, abs=1e-9)
        assert (intr.cx, intr.cy) == (320.0, 240.0)

    def test_dfov_60_matches_formula(self):
        # tan(30 deg) = 1/sqrt(3), so f = 400 * sqrt(3)
        intr = intrinsics_from_dfov(60.0, 640, 480)
        assert intr.fx == pytest.approx(400.0 * math.sqrt(3.0), abs=1e-9)

    @pytest.mark.parametrize("bad", [0.0, 180.0, -10.0, 200.0])
    def test_degenerate_dfov_rejected(self, bad):
        with pytest.raises(GeometryError):
            intrinsics_from_dfov(bad, 640, 480)

    def test_optical_axis_projects_to_principal_point(self):
        cam = CameraModel(intrinsics_from_dfov(90.0), RigidTransform.identity())
        uv = project(cam, np.array([0.0, 0.0, 0.7]))
        np.testing.assert_allclose(uv, [320.0, 240.0], atol=1e-12)

    def test_pinhole_formula(self):
        intr = intrinsics_from_dfov(90.0)  # fx=400, cx=320
        uv = project_camera_point(intr, np.array([0.1, 0.0, 1.0]))
        assert uv[0] == pytest.approx(360.0, abs=1e-12)

    def test_point_behind_camera_rejected(self):
        intr = intrinsics_from_dfov(90.0)
        with pytest.raises(BehindCameraError):
            project_camera_point(intr, np.array([0.0, 0.0, -0.5]))

    def test_backproject_round_trip(self):
        rng = np.random.default_rng(7)
        intr = intrinsics_from_dfov(75.0)
        for _ in range(50):
            cam = CameraModel(intr, random_transform(rng))
            p_cam = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2),
                              rng.uniform(0.2, 2.0)])
            p_world = cam.extrinsics.invert().apply(p_cam)
            uv = project(cam, p_world)
            recovered = backproject(cam, uv, depth=p_cam[2])
            np.testing.assert_allclose(recovered, p_world, atol=1e-7)


class TestRayMesh:
    def test_axis_aligned_plane_hit(self):
        sheet = make_square_sheet(side=1.0, z=0.0, center=(0.5, 0.5))
        hit = ray_mesh_first_hit(sheet, np.array([0.25, 0.25, 1.0]), np.array([0.0, 0.0, -1.0]))
        assert hit is not None
        point, dist = hit
        np.testing.assert_allclose(point, [0.25, 0.25, 0.0], atol=1e-12)
        assert dist == pytest.approx(1.0, abs=1e-12)

    def test_miss_returns_none(self):
        sheet = make_square_sheet(side=1.0, z=0.0, center=(0.5, 0.5))
        assert ray_mesh_first_hit(sheet, np.array([2.0, 2.0, 1.0]),
                                  np.array([0.0, 0.0, -1.0])) is None

    def test_icosphere_hit_distance(self):
        radius, subdiv = 0.1, 2
        sphere = make_icosphere(radius=radius, subdivisions=subdiv)
        hit = ray_mesh_first_hit(sphere, np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]))
        assert hit is not None
        tol = sphere_facet_tolerance(radius, subdiv)
        assert hit[1] == pytest.approx(1.0 - radius, abs=tol + 1e-12)

    def test_unnormalized_direction_rejected(self):
        sheet = make_square_sheet()
        with pytest.raises(GeometryError):
            ray_mesh_first_hit(sheet, np.zeros(3), np.array([0.0, 0.0, -2.0]))

    def test_first_hit_matches_exhaustive_scan(self):
        rng = np.random.default_rng(11)
        meshes = [make_box_mesh((0.1, 0.15, 0.08)), make_icosphere(0.1, 1)]
        for mesh in meshes:
            for _ in range(40):
                origin = rng.uniform(-0.3, 0.3, size=3)
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                hit = ray_mesh_first_hit(mesh, origin, direction)
                oracle = brute_force_first_hit(mesh, origin, direction)
                if oracle is None:
                    assert hit is None
                else:
                    assert hit is not None
                    assert hit[1] == pytest.approx(oracle, abs=1e-9)


class TestClosestPoint:
    def test_surface_point_is_fixed(self):
        sheet = make_square_sheet()
        q = np.array([0.3, 0.4, 0.0])
        np.testing.assert_allclose(closest_point_on_mesh(sheet, q), q, atol=1e-12)

    def test_orthogonal_projection(self):
        sheet = make_square_sheet()
        out = closest_point_on_mesh(sheet, np.array([0.5, 0.5, 2.0]))
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0], atol=1e-12)

    def test_matches_grid_oracle_on_dense_mesh(self):
        mesh = make_icosphere(radius=0.1, subdivisions=2)  # 320 triangles
        rng = np.random.default_rng(3)
        for _ in range(10):
            q = rng.uniform(-0.25, 0.25, size=3)
            point = closest_point_on_mesh(mesh, q)
            d_impl = np.linalg.norm(point - q)
            d_grid, pitch = grid_min_distance(mesh, q, n=40)
            assert d_impl <= d_grid + 1e-12
            assert d_impl >= d_grid - pitch

    def test_returned_point_lies_on_a_triangle(self):
        mesh = make_box_mesh((0.2, 0.1, 0.05))
        rng = np.random.default_rng(5)
        for _ in range(20):
            q = rng.uniform(-0.3, 0.3, size=3)
            point = closest_point_on_mesh(mesh, q)
            on_any = False
            for face in mesh.faces:
                a, b, c = mesh.vertices[face]
                basis = np.column_stack([b - a, c - a])
                uv, res, *_ = np.linalg.lstsq(basis, point - a, rcond=None)
                plane_dist = np.linalg.norm(basis @ uv - (point - a))
                if (plane_dist < 1e-9 and uv[0] >= -1e-9 and uv[1] >= -1e-9
                        and uv.sum() <= 1 + 1e-9):
                    on_any = True
                    break
            assert on_any

    def test_empty_mesh_rejected(self):
        mesh = make_square_sheet()
        empty = type(mesh)(mesh.vertices, np.empty((0, 3), dtype=np.int64))
        with pytest.raises(GeometryError):
            closest_point_on_mesh(empty, np.zeros(3))


class TestPrincipalAxes:
    def test_x_segment_resolves_to_plus_x(self):
        # dominant spread along x, a hair of thickness to keep full rank
        rng = np.random.default_rng(0)
        pts = np.column_stack([np.linspace(-1, 1, 50), 1e-3 * rng.normal(size=50)])
        axes = principal_axes(pts)
        np.testing.assert_allclose(axes[0], [1.0, 0.0], atol=1e-3)

    def test_ellipse_first_axis_near_x(self):
        theta = np.linspace(0.0, 2 * np.pi, 400, endpoint=False)
        pts = np.column_stack([2.0 * np.cos(theta), np.sin(theta)])
        axes = principal_axes(pts)
        angle = math.degrees(math.atan2(abs(axes[0, 1]), abs(axes[0, 0])))
        assert angle < 2.0

    def test_collinear_rejected(self):
        with pytest.raises(GeometryError):
            principal_axes(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))

    @given(angles)
    @settings(max_examples=40, deadline=None)
    def test_rotation_equivariance(self, angle):
        rng = np.random.default_rng(17)
        pts = rng.normal(size=(120, 3)) * np.array([3.0, 1.5, 0.6])
        rot = rotation_about_axis(np.array([0.3, -0.5, 0.8]), angle)
        base = principal_axes(pts)
        rotated = principal_axes(pts @ rot.T)
        # equal up to the fixed per-axis sign convention
        dots = np.abs(np.einsum("ij,ij->i", rotated, base @ rot.T))
        np.testing.assert_allclose(dots, 1.0, atol=1e-6)


class TestPlanarSampling:
    def test_unit_square_prism_statistics(self):
        prism = make_box_mesh((1.0, 1.0, 0.3), center=(0.5, 0.5, 0.15))
        pts = project_to_plane_and_sample(prism, 1000, seed=0)
        assert pts.shape == (1000, 2)
        assert (pts >= -1e-12).all() and (pts <= 1.0 + 1e-12).all()
        np.testing.assert_allclose(pts.mean(axis=0), [0.5, 0.5], atol=0.05)

    def test_zero_samples(self):
        prism = make_box_mesh((1.0, 1.0, 0.3))
        assert project_to_plane_and_sample(prism, 0).shape == (0, 2)

    def test_vertical_sheet_degenerate(self):
        v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        f = np.array([[0, 1, 2], [0, 2, 3]])
        sheet = make_square_sheet()
        mesh = type(sheet)(v, f)
        with pytest.raises(GeometryError):
            project_to_plane_and_sample(mesh, 10)

    def test_deterministic_in_seed(self):
        prism = make_box_mesh((1.0, 1.0, 0.3))
        a = project_to_plane_and_sample(prism, 200, seed=42)
        b = project_to_plane_and_sample(prism, 200, seed=42)
        np.testing.assert_array_equal(a, b)


class TestGripperSpec:
    def test_defaults_valid(self):
        g = GripperSpec()
        assert abs(g.approach_axis @ g.closing_axis) < 1e-12
        np.testing.assert_allclose(g.third_axis(), [0.0, 1.0, 0.0], atol=1e-12)

    def test_non_perpendicular_axes_rejected(self):
        with pytest.raises(GeometryError):
            GripperSpec(approach_axis=np.array([0.0, 0.0, 1.0]),
                        closing_axis=np.array([0.0, 0.1, 1.0]))

    def test_non_positive_length_rejected(self):
        with pytest.raises(GeometryError):
            GripperSpec(max_aperture=0.0)
