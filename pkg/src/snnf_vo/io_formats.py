"""Bit-exact file formats and dataset directory assembly.

Three formats, all little-endian and row-major:

- semantic edge container: magic ``SEMG``, version u16 (=1), width u32,
  height u32, class_count u16, class-name table (u16 length + UTF-8 per
  class), then one width*height byte plane per class holding
  round(probability * 255).
- pose file: text, one pose per line as the 12 row-major values of the
  upper 3x4 of [R|t] (KITTI odometry convention).
- inverse-depth plane: magic ``IDEP``, width u32, height u32, float32
  cells; non-positive or non-finite cells are invalid.

Grayscale images travel as 8-bit binary PGM (P5). A dataset directory
holds ``intrinsics.txt``, optional ``gt.txt``, and per-frame
``NNNNNN.semg`` / ``NNNNNN.idep`` / ``NNNNNN.pgm``.
"""

from __future__ import annotations

import logging
import re
import struct
from pathlib import Path

import numpy as np

from .edgemap import SemanticEdgeMap
from .errors import FormatError
from .geometry import CameraIntrinsics, Pose
from .tracker import FrameInput, Trajectory

__all__ = [
    "read_semantic_edges", "write_semantic_edges", "read_poses",
    "write_poses", "read_depth_plane", "write_depth_plane", "read_pgm",
    "write_pgm", "read_intrinsics", "write_intrinsics", "write_frame",
    "read_frame", "list_frame_ids", "load_dataset",
]

log = logging.getLogger("snnf_vo.io")

SEMG_MAGIC = b"SEMG"
SEMG_VERSION = 1
IDEP_MAGIC = b"IDEP"
POSE_ORTHONORMAL_TOL = 1e-4


def _take(buf: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(buf):
        raise FormatError(f"truncated file: expected {count} bytes for {what}",
                          offset=offset)
    return buf[offset:offset + count]


def write_semantic_edges(emap: SemanticEdgeMap, path) -> None:
    """Serialize probability planes at 8-bit quantization."""
    parts = [struct.pack("<4sHIIH", SEMG_MAGIC, SEMG_VERSION, emap.width,
                         emap.height, emap.class_count)]
    names = emap.class_names or tuple("" for _ in range(emap.class_count))
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    q = np.round(np.clip(emap.planes, 0.0, 1.0) * 255.0).astype(np.uint8)
    parts.append(q.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_semantic_edges(path) -> SemanticEdgeMap:
    buf = Path(path).read_bytes()
    if _take(buf, 0, 4, "magic") != SEMG_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {SEMG_MAGIC!r}",
                          offset=0)
    version, width, height, c = struct.unpack("<HIIH",
                                              _take(buf, 4, 12, "header"))
    if version != SEMG_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    off = 16
    names = []
    for i in range(c):
        (ln,) = struct.unpack("<H", _take(buf, off, 2, f"name length {i}"))
        off += 2
        names.append(_take(buf, off, ln, f"class name {i}").decode("utf-8"))
        off += ln
    plane_bytes = width * height
    planes = np.empty((c, height, width))
    for i in range(c):
        raw = _take(buf, off, plane_bytes, f"plane {i}")
        planes[i] = np.frombuffer(raw, dtype=np.uint8).reshape(
            height, width) / 255.0
        off += plane_bytes
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes", offset=off)
    named = tuple(names) if any(names) else None
    return SemanticEdgeMap(planes=planes, class_names=named)


def write_poses(traj: Trajectory, path) -> None:
    """One KITTI-style [R|t] line per pose, 12 significant digits."""
    lines = []
    for pose in traj.poses:
        m = pose.matrix34()
        lines.append(" ".join(f"{x:.12g}" for x in m.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses(path) -> Trajectory:
    """Parse a pose file; frame ids are line indices.

    Rotations orthonormal only to within 1e-4 are re-orthonormalized with
    a warning; worse ones are format errors.
    """
    poses = []
    with open(path) as fh:
        for lineno, text in enumerate(fh, start=1):
            text = text.strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) != 12:
                raise FormatError(f"expected 12 fields, got {len(fields)}",
                                  line=lineno)
            try:
                vals = np.array([float(x) for x in fields])
            except ValueError as exc:
                raise FormatError(f"bad number: {exc}", line=lineno) from None
            m = vals.reshape(3, 4)
            R, t = m[:, :3], m[:, 3]
            err = float(np.abs(R.T @ R - np.eye(3)).max())
            if err > POSE_ORTHONORMAL_TOL:
                raise FormatError(
                    f"rotation not orthonormal (|R^T R - I| = {err:.3e})",
                    line=lineno)
            if np.linalg.det(R) < 0:
                raise FormatError("rotation has negative determinant",
                                  line=lineno)
            if err > 1e-9:
                log.warning("%s line %d: re-orthonormalizing rotation "
                            "(error %.3e)", path, lineno, err)
                U, _, Vt = np.linalg.svd(R)
                R = U @ Vt
            poses.append(Pose(R, t))
    return Trajectory(frame_ids=tuple(range(len(poses))), poses=tuple(poses))


def write_depth_plane(plane: np.ndarray, path) -> None:
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise FormatError(f"expected a 2-D plane, got shape {plane.shape}")
    h, w = plane.shape
    payload = plane.astype("<f4").tobytes()
    Path(path).write_bytes(struct.pack("<4sII", IDEP_MAGIC, w, h) + payload)


def read_depth_plane(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if _take(buf, 0, 4, "magic") != IDEP_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {IDEP_MAGIC!r}",
                          offset=0)
    w, h = struct.unpack("<II", _take(buf, 4, 8, "dimensions"))
    payload = _take(buf, 12, 4 * w * h, "depth payload")
    if len(buf) != 12 + 4 * w * h:
        raise FormatError(f"{len(buf) - 12 - 4 * w * h} trailing bytes",
                          offset=12 + 4 * w * h)
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)


def write_pgm(img: np.ndarray, path) -> None:
    """8-bit binary PGM from a [0, 1] grayscale image."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise FormatError(f"expected a 2-D image, got shape {img.shape}")
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + q.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if not buf.startswith(b"P5"):
        raise FormatError("not a binary PGM (P5) file", offset=0)
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.match(rb"(?:\s+|#[^\n]*\n)*(\d+)", buf[pos:])
        if not m:
            raise FormatError("malformed PGM header", offset=pos)
        tokens.append(int(m.group(1)))
        pos += m.end()
    w, h, maxval = tokens
    if maxval != 255:
        raise FormatError(f"only 8-bit PGM supported, maxval {maxval}",
                          offset=pos)
    pos += 1  # single whitespace after maxval
    payload = _take(buf, pos, w * h, "pixel payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w) / 255.0


def write_intrinsics(K: CameraIntrinsics, width: int, height: int, path) -> None:
    Path(path).write_text(
        f"{K.fx:.12g} {K.fy:.12g} {K.cx:.12g} {K.cy:.12g} {width} {height}\n")


def read_intrinsics(path):
    """Returns (CameraIntrinsics, width, height)."""
    fields = Path(path).read_text().split()
    if len(fields) != 6:
        raise FormatError(f"expected 6 intrinsics fields, got {len(fields)}",
                          line=1)
    try:
        fx, fy, cx, cy = (float(x) for x in fields[:4])
        w, h = int(fields[4]), int(fields[5])
    except ValueError as exc:
        raise FormatError(f"bad intrinsics value: {exc}", line=1) from None
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy), w, h


def _frame_paths(root, frame_id: int):
    root = Path(root)
    stem = f"{frame_id:06d}"
    return (root / f"{stem}.semg", root / f"{stem}.idep", root / f"{stem}.pgm")


def write_frame(root, frame_id: int, emap: SemanticEdgeMap,
                inv_depth: np.ndarray, gray: np.ndarray) -> None:
    semg, idep, pgm = _frame_paths(root, frame_id)
    write_semantic_edges(emap, semg)
    write_depth_plane(inv_depth, idep)
    write_pgm(gray, pgm)


def read_frame(root, frame_id: int, gt_pose: Pose | None = None) -> FrameInput:
    semg, idep, pgm = _frame_paths(root, frame_id)
    emap = read_semantic_edges(semg)
    inv_depth = read_depth_plane(idep)
    gray = read_pgm(pgm)
    # invalid cells are NaN in memory
    inv_depth = np.where(np.isfinite(inv_depth) & (inv_depth > 0),
                         inv_depth, np.nan)
    return FrameInput(frame_id=frame_id, gray=gray, edges=emap,
                      inv_depth=inv_depth, gt_pose=gt_pose)


def list_frame_ids(root) -> list:
    ids = []
    for p in Path(root).glob("*.semg"):
        if p.stem.isdigit():
            ids.append(int(p.stem))
    return sorted(ids)


def load_dataset(root):
    """Returns (K, width, height, frames, gt) for a dataset directory.

    `gt` is None when the directory carries no ``gt.txt``. Frame ground
    truth poses are attached when available.
    """
    root = Path(root)
    K, width, height = read_intrinsics(root / "intrinsics.txt")
    gt = None
    gt_path = root / "gt.txt"
    if gt_path.exists():
        gt = read_poses(gt_path)
    ids = list_frame_ids(root)
    if not ids:
        raise FormatError(f"no frames (*.semg) found under {root}")
    gt_by_id = dict(zip(gt.frame_ids, gt.poses)) if gt is not None else {}
    frames = [read_frame(root, fid, gt_by_id.get(fid)) for fid in ids]
    return K, width, height, frames, gt
