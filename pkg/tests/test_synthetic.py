"""Scene generation and rendering tests.

The rendered inverse depth is checked against an independent oracle that
minimizes reprojection distance over the 3D segment parameter, never using
the renderer's screen-space interpolation.
"""

import logging

import numpy as np
import pytest
from scipy import ndimage as ndi
from scipy.optimize import minimize_scalar

from snnf_vo import (
    CameraIntrinsics,
    ConfigError,
    Pose,
    build_scene,
    generate_trajectory,
    render_view,
    rotation_angle,
)
from snnf_vo.synthetic import SceneModel


def _cam(w=320, h=240, f=260.0):
    return CameraIntrinsics(fx=f, fy=f, cx=(w - 1) / 2, cy=(h - 1) / 2)


class TestBuildScene:
    def test_cube_grid_structure(self):
        s = build_scene("cube_grid", seed=0)
        assert s.n_segments == 3 * 2 * 3 * 12
        assert s.class_count == 2
        # Each cube contributes 12 edges of one class, alternating per cube.
        per_cube = s.classes.reshape(-1, 12)
        assert (per_cube == per_cube[:, :1]).all()
        assert np.array_equal(per_cube[:, 0] % 2, np.arange(18) % 2)
        # Cube edges are axis-aligned with length == size.
        lengths = np.linalg.norm(s.segments[:, 1] - s.segments[:, 0], axis=1)
        assert np.allclose(lengths, 1.0)

    def test_grating_structure(self):
        s = build_scene("ambiguity_grating", seed=0)
        assert s.n_segments == 9 + 3
        assert s.class_count == 2
        assert s.classes[:9].tolist() == [0, 1, 0, 1, 0, 1, 0, 1, 0]
        # Vertical lines all at the same depth, evenly spaced in x.
        xs = s.segments[:9, 0, 0]
        assert np.allclose(np.diff(xs), 1.2)
        assert np.allclose(s.segments[:9, :, 2], 10.0)

    def test_corridor_structure(self):
        s = build_scene("corridor")
        # 4 rails + 8 hoops (z = 5..40) of 4 segments each.
        assert s.n_segments == 4 + 8 * 4
        assert s.class_count == 3
        assert (s.classes[:4] == 0).all()
        hoop_cls = s.classes[4:].reshape(8, 4)
        assert (hoop_cls == hoop_cls[:, :1]).all()
        assert np.array_equal(hoop_cls[:, 0], 1 + np.arange(8) % 2)

    def test_deterministic_per_seed(self):
        a = build_scene("cube_grid", seed=5)
        b = build_scene("cube_grid", seed=5)
        c = build_scene("cube_grid", seed=6)
        assert np.array_equal(a.segments, b.segments)
        assert not np.array_equal(a.segments, c.segments)

    def test_param_override(self):
        s = build_scene("cube_grid", nx=1, ny=1, nz=1)
        assert s.n_segments == 12

    def test_unknown_kind_and_params(self):
        with pytest.raises(ConfigError):
            build_scene("maze")
        with pytest.raises(ConfigError):
            build_scene("cube_grid", bogus=3)

    def test_bad_params(self):
        with pytest.raises(ConfigError):
            build_scene("cube_grid", nx=0)
        with pytest.raises(ConfigError):
            build_scene("cube_grid", classes=0)
        with pytest.raises(ConfigError):
            build_scene("ambiguity_grating", n_lines=1)
        with pytest.raises(ConfigError):
            build_scene("corridor", classes=1)

    def test_scene_model_validation(self):
        with pytest.raises(ConfigError):
            SceneModel(segments=np.zeros((3, 2)), classes=np.zeros(3, dtype=int),
                       class_count=1)
        with pytest.raises(ConfigError):
            SceneModel(segments=np.zeros((2, 2, 3)), classes=np.array([0, 5]),
                       class_count=2)
        bad = np.zeros((1, 2, 3))
        bad[0, 0, 0] = np.inf
        with pytest.raises(ConfigError):
            SceneModel(segments=bad, classes=np.array([0]), class_count=1)


class TestRenderView:
    def test_depth_oracle(self):
        # Every stored inverse depth must equal 1/z of the point on some
        # same-class segment minimizing reprojection distance to the pixel.
        K = _cam()
        scene = build_scene("cube_grid", seed=0)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        planes = scene_planes = out.edges.planes != 0
        rng = np.random.default_rng(0)
        vs, us = np.nonzero(~np.isnan(out.inv_depth))
        pick = rng.choice(len(vs), size=150, replace=False)
        for i in pick:
            u, v = int(us[i]), int(vs[i])
            stored = out.inv_depth[v, u]
            pix = np.array([u, v], dtype=np.float64)
            best = None
            for seg, c in zip(scene.segments, scene.classes):
                if not scene_planes[c, v, u]:
                    continue
                a, b = seg

                def dist2(s):
                    P = a + s * (b - a)
                    q = np.array([K.fx * P[0] / P[2] + K.cx,
                                  K.fy * P[1] / P[2] + K.cy])
                    return float(np.sum((q - pix) ** 2))

                r = minimize_scalar(dist2, bounds=(0.0, 1.0), method="bounded",
                                    options={"xatol": 1e-14})
                if np.sqrt(r.fun) <= 0.72:
                    s = float(r.x)
                    P = a + s * (b - a)
                    cand = 1.0 / P[2]
                    if abs(cand - stored) < 1e-9:
                        best = cand
            assert best is not None, f"pixel ({u}, {v}) depth {stored} unexplained"

    def test_render_decomposes_over_segments(self):
        # Rendering all segments together must equal the pixelwise nearest
        # (max inverse depth) over single-segment renders, and the class
        # planes must be their union.
        K = _cam(w=160, h=120, f=130.0)
        scene = build_scene("cube_grid", seed=1, nx=2, ny=1, nz=2)
        combined = render_view(scene, Pose.identity(), K, 160, 120)
        acc = np.full((120, 160), np.nan)
        planes = np.zeros_like(combined.edges.planes, dtype=bool)
        for i in range(scene.n_segments):
            single = SceneModel(segments=scene.segments[i:i + 1],
                                classes=scene.classes[i:i + 1],
                                class_count=scene.class_count)
            out = render_view(single, Pose.identity(), K, 160, 120)
            acc = np.fmax(acc, out.inv_depth)
            planes |= out.edges.planes != 0
        assert np.array_equal(combined.edges.planes != 0, planes)
        assert np.array_equal(combined.inv_depth, acc, equal_nan=True)

    def test_nearest_surface_wins_on_overlap(self):
        K = _cam()
        segs = np.array([
            [[-0.5, 0.0, 5.0], [0.5, 0.0, 5.0]],     # near, spans +-26 px
            [[-2.0, 0.0, 10.0], [2.0, 0.0, 10.0]],   # far, spans +-52 px
        ])
        scene = SceneModel(segments=segs, classes=np.array([0, 0]), class_count=1)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        v = int(round(K.cy))
        u_mid = int(round(K.cx))
        u_far = int(round(K.cx)) + 40
        assert out.inv_depth[v, u_mid] == pytest.approx(1 / 5.0, abs=1e-12)
        assert out.inv_depth[v, u_far] == pytest.approx(1 / 10.0, abs=1e-12)

    def test_class_planes_and_gray_bands(self):
        K = _cam()
        segs = np.array([
            [[-1.0, -0.5, 5.0], [1.0, -0.5, 5.0]],   # class 0
            [[-1.0, 0.5, 5.0], [1.0, 0.5, 5.0]],     # class 1
        ])
        scene = SceneModel(segments=segs, classes=np.array([0, 1]), class_count=2)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        p0 = out.edges.planes[0] != 0
        p1 = out.edges.planes[1] != 0
        assert p0.any() and p1.any()
        assert not (p0 & p1).any()
        # Bands: class c renders at 0.6 + 0.4 * (c + 1) / C.
        assert np.allclose(out.gray[p0], 0.8)
        assert np.allclose(out.gray[p1], 1.0)
        off = ~(p0 | p1)
        assert out.gray[off].min() >= 0.2 - 1e-12
        assert out.gray[off].max() <= 0.5 + 1e-12

    def test_higher_class_band_overwrites(self):
        K = _cam()
        seg = [[-1.0, 0.0, 5.0], [1.0, 0.0, 5.0]]
        scene = SceneModel(segments=np.array([seg, seg]),
                           classes=np.array([0, 1]), class_count=2)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        both = (out.edges.planes[0] != 0) & (out.edges.planes[1] != 0)
        assert both.any()
        assert np.allclose(out.gray[both], 1.0)

    def test_single_segment_connected(self):
        # The DDA must draw each segment as one 8-connected chain.
        K = _cam()
        scene = SceneModel(
            segments=np.array([[[-1.0, -0.8, 6.0], [1.3, 0.9, 9.0]]]),
            classes=np.array([0]), class_count=1)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        mask = out.edges.planes[0] != 0
        _, n = ndi.label(mask, structure=np.ones((3, 3), dtype=int))
        assert n == 1

    def test_off_edge_depth_nan(self):
        K = _cam()
        scene = build_scene("cube_grid", seed=0)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        edge = (out.edges.planes != 0).any(axis=0)
        assert np.isnan(out.inv_depth[~edge]).all()
        assert np.isfinite(out.inv_depth[edge]).all()
        assert (out.inv_depth[edge] > 0).all()

    def test_near_plane_clip(self):
        K = _cam()
        scene = SceneModel(
            segments=np.array([[[-1.0, 0.0, -2.0], [1.0, 0.0, 2.0]]]),
            classes=np.array([0]), class_count=1)
        out = render_view(scene, Pose.identity(), K, 320, 240)
        edge = out.edges.planes[0] != 0
        assert edge.any()
        assert np.nanmax(out.inv_depth) <= 1 / 0.05 + 1e-9

    def test_fully_behind_camera_empty_and_warns(self, caplog):
        K = _cam()
        scene = SceneModel(
            segments=np.array([[[-1.0, 0.0, -5.0], [1.0, 0.0, -5.0]]]),
            classes=np.array([0]), class_count=1)
        with caplog.at_level(logging.WARNING, logger="snnf_vo.synthetic"):
            out = render_view(scene, Pose.identity(), K, 320, 240)
        assert not (out.edges.planes != 0).any()
        assert np.isnan(out.inv_depth).all()
        assert any("empty render" in r.message for r in caplog.records)

    def test_camera_pose_is_camera_to_world(self):
        K = _cam()
        scene = SceneModel(
            segments=np.array([[[0.0, -0.5, 5.0], [0.0, 0.5, 5.0]]]),
            classes=np.array([0]), class_count=1)
        # Move the camera 1 m along +x: the segment shifts left in image.
        out0 = render_view(scene, Pose.identity(), K, 320, 240)
        out1 = render_view(scene, Pose(translation=np.array([1.0, 0.0, 0.0])),
                           K, 320, 240)
        u0 = np.nonzero(out0.edges.planes[0])[1].mean()
        u1 = np.nonzero(out1.edges.planes[0])[1].mean()
        assert u1 == pytest.approx(u0 - K.fx * 1.0 / 5.0, abs=1.0)

    def test_render_deterministic(self):
        K = _cam()
        scene = build_scene("cube_grid", seed=2)
        a = render_view(scene, Pose.identity(), K, 320, 240)
        b = render_view(scene, Pose.identity(), K, 320, 240)
        assert np.array_equal(a.edges.planes, b.edges.planes)
        assert np.array_equal(a.inv_depth, b.inv_depth, equal_nan=True)
        assert np.array_equal(a.gray, b.gray)

    def test_too_small_image(self):
        with pytest.raises(ConfigError):
            render_view(build_scene("cube_grid"), Pose.identity(), _cam(), 1, 240)


class TestTrajectory:
    def test_dolly(self):
        poses = generate_trajectory("dolly", 5, step=0.25)
        assert len(poses) == 5
        for k, p in enumerate(poses):
            assert np.array_equal(p.rotation, np.eye(3))
            assert np.allclose(p.translation, [0, 0, 0.25 * k])

    def test_lateral(self):
        poses = generate_trajectory("lateral", 4, step=0.5)
        for k, p in enumerate(poses):
            assert np.allclose(p.translation, [0.5 * k, 0, 0])

    def test_arc_geometry(self):
        n, step, angle = 9, 0.2, np.radians(30)
        poses = generate_trajectory("arc", n, step=step, angle=angle)
        assert np.array_equal(poses[0].rotation, np.eye(3))
        assert np.array_equal(poses[0].translation, np.zeros(3))
        assert rotation_angle(poses[-1]) == pytest.approx(angle, abs=1e-12)
        # Constant curvature: all poses on a circle of radius step*(n-1)/angle.
        radius = step * (n - 1) / angle
        center = np.array([radius, 0.0, 0.0])
        for p in poses:
            assert np.linalg.norm(p.translation - center) == pytest.approx(radius, abs=1e-9)
        # Per-frame arc length equals step.
        for a, b in zip(poses, poses[1:]):
            chord = np.linalg.norm(b.translation - a.translation)
            assert chord == pytest.approx(2 * radius * np.sin(angle / (n - 1) / 2), abs=1e-12)

    def test_arc_zero_angle_is_dolly(self):
        poses = generate_trajectory("arc", 4, step=0.3, angle=0.0)
        for k, p in enumerate(poses):
            assert np.array_equal(p.rotation, np.eye(3))
            assert np.allclose(p.translation, [0, 0, 0.3 * k])

    def test_single_pose(self):
        for kind in ("dolly", "lateral", "arc"):
            poses = generate_trajectory(kind, 1)
            assert len(poses) == 1
            assert np.array_equal(poses[0].rotation, np.eye(3))

    def test_errors(self):
        with pytest.raises(ConfigError):
            generate_trajectory("dolly", 0)
        with pytest.raises(ConfigError):
            generate_trajectory("spiral", 3)
