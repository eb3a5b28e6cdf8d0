"""File format tests: SEMG, pose lines, IDEP, PGM, dataset directories."""

import logging

import numpy as np
import pytest

from snnf_vo import CameraIntrinsics, FormatError, Pose
from snnf_vo.edgemap import SemanticEdgeMap
from snnf_vo.io_formats import (
    list_frame_ids,
    load_dataset,
    read_depth_plane,
    read_frame,
    read_intrinsics,
    read_pgm,
    read_poses,
    read_semantic_edges,
    write_depth_plane,
    write_frame,
    write_intrinsics,
    write_pgm,
    write_poses,
    write_semantic_edges,
)
from snnf_vo.tracker import Trajectory

from conftest import random_pose


class TestSemanticEdges:
    def _emap(self, rng, names=None):
        planes = rng.random((3, 12, 17))
        return SemanticEdgeMap(planes=planes, class_names=names)

    def test_round_trip_quantized(self, rng, tmp_path):
        emap = self._emap(rng, names=("wall", "décor", "rail"))
        p = tmp_path / "a.semg"
        write_semantic_edges(emap, p)
        back = read_semantic_edges(p)
        assert back.class_names == ("wall", "décor", "rail")
        assert back.planes.shape == emap.planes.shape
        assert np.array_equal(back.planes, np.round(emap.planes * 255) / 255.0)

    def test_second_write_is_stable(self, rng, tmp_path):
        emap = self._emap(rng)
        a, b = tmp_path / "a.semg", tmp_path / "b.semg"
        write_semantic_edges(emap, a)
        write_semantic_edges(read_semantic_edges(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_unnamed_classes(self, rng, tmp_path):
        p = tmp_path / "a.semg"
        write_semantic_edges(self._emap(rng), p)
        assert read_semantic_edges(p).class_names is None

    def test_bad_magic(self, rng, tmp_path):
        p = tmp_path / "a.semg"
        write_semantic_edges(self._emap(rng), p)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"XEMG"
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as ei:
            read_semantic_edges(p)
        assert ei.value.offset == 0

    def test_unsupported_version(self, rng, tmp_path):
        p = tmp_path / "a.semg"
        write_semantic_edges(self._emap(rng), p)
        raw = bytearray(p.read_bytes())
        raw[4:6] = (9).to_bytes(2, "little")
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_semantic_edges(p)

    def test_truncated_plane(self, rng, tmp_path):
        p = tmp_path / "a.semg"
        write_semantic_edges(self._emap(rng), p)
        p.write_bytes(p.read_bytes()[:-7])
        with pytest.raises(FormatError, match="truncated"):
            read_semantic_edges(p)

    def test_trailing_bytes(self, rng, tmp_path):
        p = tmp_path / "a.semg"
        write_semantic_edges(self._emap(rng), p)
        p.write_bytes(p.read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            read_semantic_edges(p)


class TestPoseFile:
    def test_round_trip(self, rng, tmp_path):
        poses = tuple(random_pose(rng) for _ in range(7))
        traj = Trajectory(frame_ids=tuple(range(7)), poses=poses)
        p = tmp_path / "poses.txt"
        write_poses(traj, p)
        back = read_poses(p)
        assert back.frame_ids == tuple(range(7))
        for a, b in zip(poses, back.poses):
            assert np.allclose(a.rotation, b.rotation, atol=1e-9)
            assert np.allclose(a.translation, b.translation, atol=1e-9)

    def test_blank_lines_skipped(self, tmp_path):
        line = " ".join(["1", "0", "0", "4", "0", "1", "0", "5", "0", "0", "1", "6"])
        p = tmp_path / "poses.txt"
        p.write_text(f"\n{line}\n\n{line}\n")
        back = read_poses(p)
        assert len(back) == 2
        assert np.allclose(back.poses[0].translation, [4, 5, 6])

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "poses.txt"
        p.write_text("1 0 0 0 1 0 0 0 1 0 0\n")
        with pytest.raises(FormatError) as ei:
            read_poses(p)
        assert ei.value.line == 1

    def test_bad_number(self, tmp_path):
        p = tmp_path / "poses.txt"
        p.write_text("1 0 0 zero 0 1 0 0 0 0 1 0\n")
        with pytest.raises(FormatError, match="bad number"):
            read_poses(p)

    def test_mild_drift_reorthonormalized(self, rng, tmp_path, caplog):
        R = random_pose(rng).rotation + rng.normal(scale=3e-6, size=(3, 3))
        m = np.hstack([R, [[0.0], [0.0], [0.0]]])
        p = tmp_path / "poses.txt"
        p.write_text(" ".join(f"{x:.17g}" for x in m.reshape(-1)) + "\n")
        with caplog.at_level(logging.WARNING, logger="snnf_vo.io"):
            back = read_poses(p)
        assert any("re-orthonormalizing" in r.message for r in caplog.records)
        Rb = back.poses[0].rotation
        assert np.abs(Rb.T @ Rb - np.eye(3)).max() < 1e-12

    def test_gross_drift_rejected(self, tmp_path):
        m = np.hstack([np.eye(3) + 0.01, np.zeros((3, 1))])
        p = tmp_path / "poses.txt"
        p.write_text(" ".join(f"{x:.17g}" for x in m.reshape(-1)) + "\n")
        with pytest.raises(FormatError, match="orthonormal") as ei:
            read_poses(p)
        assert ei.value.line == 1

    def test_reflection_rejected(self, tmp_path):
        m = np.hstack([np.diag([1.0, 1.0, -1.0]), np.zeros((3, 1))])
        p = tmp_path / "poses.txt"
        p.write_text(" ".join(f"{x:.17g}" for x in m.reshape(-1)) + "\n")
        with pytest.raises(FormatError, match="determinant"):
            read_poses(p)


class TestDepthPlane:
    def test_round_trip_float32_exact(self, rng, tmp_path):
        plane = rng.random((9, 13)).astype(np.float32).astype(np.float64)
        p = tmp_path / "a.idep"
        write_depth_plane(plane, p)
        back = read_depth_plane(p)
        assert back.dtype == np.float64
        assert np.array_equal(back, plane)

    def test_rejects_bad_rank(self, tmp_path):
        with pytest.raises(FormatError):
            write_depth_plane(np.zeros(5), tmp_path / "a.idep")

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "a.idep"
        write_depth_plane(np.zeros((2, 2)), p)
        p.write_bytes(b"QQQQ" + p.read_bytes()[4:])
        with pytest.raises(FormatError) as ei:
            read_depth_plane(p)
        assert ei.value.offset == 0

    def test_truncated(self, tmp_path):
        p = tmp_path / "a.idep"
        write_depth_plane(np.zeros((4, 4)), p)
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError, match="truncated"):
            read_depth_plane(p)

    def test_trailing(self, tmp_path):
        p = tmp_path / "a.idep"
        write_depth_plane(np.zeros((4, 4)), p)
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(FormatError, match="trailing"):
            read_depth_plane(p)


class TestPgm:
    def test_round_trip_quantized(self, rng, tmp_path):
        img = rng.random((6, 11))
        p = tmp_path / "a.pgm"
        write_pgm(img, p)
        assert np.array_equal(read_pgm(p), np.round(img * 255) / 255.0)

    def test_header_comments(self, tmp_path):
        payload = bytes(range(8))
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n4 2\n255\n" + payload)
        img = read_pgm(tmp_path / "c.pgm")
        assert img.shape == (2, 4)
        assert img[1, 3] == pytest.approx(7 / 255.0)

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
        with pytest.raises(FormatError, match="P5"):
            read_pgm(tmp_path / "a.pgm")

    def test_16_bit_rejected(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P5\n1 1\n65535\n\0\0")
        with pytest.raises(FormatError, match="maxval"):
            read_pgm(tmp_path / "a.pgm")

    def test_truncated_payload(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P5\n4 2\n255\n\0\0\0")
        with pytest.raises(FormatError, match="truncated"):
            read_pgm(tmp_path / "a.pgm")

    def test_rejects_bad_rank(self, tmp_path):
        with pytest.raises(FormatError):
            write_pgm(np.zeros((2, 2, 3)), tmp_path / "a.pgm")


class TestIntrinsics:
    def test_round_trip(self, tmp_path):
        K = CameraIntrinsics(fx=520.9, fy=521.1, cx=319.5, cy=239.5)
        p = tmp_path / "intrinsics.txt"
        write_intrinsics(K, 640, 480, p)
        K2, w, h = read_intrinsics(p)
        assert (w, h) == (640, 480)
        assert (K2.fx, K2.fy, K2.cx, K2.cy) == (520.9, 521.1, 319.5, 239.5)

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "intrinsics.txt"
        p.write_text("520 520 319.5 239.5 640\n")
        with pytest.raises(FormatError, match="6 intrinsics"):
            read_intrinsics(p)

    def test_bad_value(self, tmp_path):
        p = tmp_path / "intrinsics.txt"
        p.write_text("520 520 319.5 239.5 sixforty 480\n")
        with pytest.raises(FormatError, match="bad intrinsics"):
            read_intrinsics(p)


class TestDataset:
    def _frame_arrays(self, rng, h=8, w=10):
        emap = SemanticEdgeMap(planes=rng.random((2, h, w)))
        inv_depth = rng.random((h, w)) + 0.05
        gray = rng.random((h, w))
        return emap, inv_depth, gray

    def test_frame_round_trip_and_nan_mapping(self, rng, tmp_path):
        emap, inv_depth, gray = self._frame_arrays(rng)
        inv_depth = inv_depth.astype(np.float32).astype(np.float64)
        inv_depth[0, 0] = 0.0
        inv_depth[0, 1] = -0.25
        inv_depth[0, 2] = np.inf
        inv_depth[0, 3] = np.nan
        write_frame(tmp_path, 3, emap, inv_depth, gray)
        frame = read_frame(tmp_path, 3)
        assert frame.frame_id == 3
        assert np.all(np.isnan(frame.inv_depth[0, :4]))
        assert np.array_equal(frame.inv_depth[1:], inv_depth[1:])
        assert np.array_equal(frame.gray, np.round(gray * 255) / 255.0)
        assert frame.gt_pose is None

    def test_list_frame_ids_sorted(self, rng, tmp_path):
        emap, inv_depth, gray = self._frame_arrays(rng)
        for fid in (7, 0, 12):
            write_frame(tmp_path, fid, emap, inv_depth, gray)
        (tmp_path / "notes.semg").write_bytes(b"not a frame")
        assert list_frame_ids(tmp_path) == [0, 7, 12]

    def test_load_dataset_with_gt(self, rng, tmp_path):
        emap, inv_depth, gray = self._frame_arrays(rng)
        K = CameraIntrinsics(fx=100.0, fy=100.0, cx=4.5, cy=3.5)
        write_intrinsics(K, 10, 8, tmp_path / "intrinsics.txt")
        for fid in range(3):
            write_frame(tmp_path, fid, emap, inv_depth, gray)
        gt = Trajectory(frame_ids=(0, 1, 2),
                        poses=tuple(random_pose(rng) for _ in range(3)))
        write_poses(gt, tmp_path / "gt.txt")
        K2, w, h, frames, gt2 = load_dataset(tmp_path)
        assert (w, h) == (10, 8)
        assert K2.fx == 100.0
        assert [f.frame_id for f in frames] == [0, 1, 2]
        assert all(f.gt_pose is not None for f in frames)
        assert np.allclose(frames[2].gt_pose.translation,
                           gt.poses[2].translation, atol=1e-9)
        assert len(gt2) == 3

    def test_load_dataset_without_gt(self, rng, tmp_path):
        emap, inv_depth, gray = self._frame_arrays(rng)
        write_intrinsics(CameraIntrinsics(fx=100.0, fy=100.0, cx=4.5, cy=3.5),
                         10, 8, tmp_path / "intrinsics.txt")
        write_frame(tmp_path, 0, emap, inv_depth, gray)
        _, _, _, frames, gt = load_dataset(tmp_path)
        assert gt is None
        assert frames[0].gt_pose is None

    def test_load_dataset_empty(self, tmp_path):
        write_intrinsics(CameraIntrinsics(fx=100.0, fy=100.0, cx=4.5, cy=3.5),
                         10, 8, tmp_path / "intrinsics.txt")
        with pytest.raises(FormatError, match="no frames"):
            load_dataset(tmp_path)
