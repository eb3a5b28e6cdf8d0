"""Pinhole camera model and SE(3) rigid motion.

Conventions used throughout the package:

* Pixels are (u, v) with u along image columns and v along rows; the pixel
  grid cell (i, j) has its center at u = i, v = j.
* A 3D point is parameterized by its pixel and inverse depth d = 1/z in the
  frame that observed it.
* ``Pose`` maps points from a source frame into a target frame,
  P_target = R @ P_source + t.
* se(3) tangent vectors are ordered [translational(3), rotational(3)] and
  are applied left-multiplicatively: pose' = se3_exp(xi) @ pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DomainError

DEFAULT_Z_MIN = 1e-6
ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite intrinsics: {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, stride: int) -> "CameraIntrinsics":
        """Intrinsics for an image downsampled by an integer stride.

        Pixel-center consistent: cell centers of the coarse grid sit at
        (u + 0.5) / stride - 0.5 in fine coordinates, and vice versa.
        """
        if stride == 1:
            return self
        s = float(stride)
        return CameraIntrinsics(
            fx=self.fx / s,
            fy=self.fy / s,
            cx=(self.cx + 0.5) / s - 0.5,
            cy=(self.cy + 0.5) / s - 0.5,
        )


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform with a 3x3 rotation matrix and 3-vector translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _as_readonly(self.rotation)
        t = _as_readonly(self.translation)
        if R.shape != (3, 3) or t.shape != (3,):
            raise DomainError(f"bad pose shapes {R.shape}, {t.shape}")
        if not (np.isfinite(R).all() and np.isfinite(t).all()):
            raise DomainError("non-finite pose")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise DomainError(f"rotation not orthonormal (|R^T R - I| = {err:.3e})")
        if np.linalg.det(R) < 0:
            raise DomainError("rotation has negative determinant")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self @ other).apply(p) == self.apply(other.apply(p))."""
        R = self.rotation @ other.rotation
        # long composition chains double their orthonormality error each time
        # the same factor re-enters a product; snap back to SO(3) well before
        # the 1e-9 construction tolerance
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
            U, _, Vt = np.linalg.svd(R)
            R = U @ Vt
        return Pose(R, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix34(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    @staticmethod
    def from_matrix34(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 4):
            raise DomainError(f"expected 3x4 matrix, got {m.shape}")
        return Pose(m[:, :3], m[:, 3])


def _hat(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def se3_exp(xi: np.ndarray) -> Pose:
    """Closed-form exponential map of a [translational, rotational] 6-vector."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (6,):
        raise DomainError(f"expected 6-vector, got shape {xi.shape}")
    rho, phi = xi[:3], xi[3:]
    theta = np.linalg.norm(phi)
    Phi = _hat(phi)
    Phi2 = Phi @ Phi
    if theta < 1e-4:
        # Taylor in theta^2; error O(theta^4) is below double precision here.
        t2 = theta * theta
        a = 1.0 - t2 / 6.0            # sin(t)/t
        b = 0.5 - t2 / 24.0           # (1-cos(t))/t^2
        c = 1.0 / 6.0 - t2 / 120.0    # (t-sin(t))/t^3
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
        c = (theta - math.sin(theta)) / (theta ** 3)
    R = np.eye(3) + a * Phi + b * Phi2
    V = np.eye(3) + b * Phi + c * Phi2
    # Re-project onto SO(3): pure float drift, keeps Pose's strict invariant.
    u, _, vt = np.linalg.svd(R)
    R = u @ np.diag([1.0, 1.0, np.sign(np.linalg.det(u @ vt))]) @ vt
    return Pose(R, V @ rho)


def _so3_log(R: np.ndarray) -> np.ndarray:
    trace = float(np.trace(R))
    cos_theta = max(-1.0, min(1.0, (trace - 1.0) / 2.0))
    theta = math.acos(cos_theta)
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-6:
        # R ~ I + hat(phi); vee is phi to first order.
        return vee * (1.0 + theta * theta / 6.0)
    if theta > math.pi - 1e-4:
        # Guarded branch near pi: sin(theta) ~ 0 makes the vee formula
        # unusable, so recover the axis from the dominant diagonal of
        # R ~ 2 n n^T - I and use vee only to pick the sign.
        diag = np.clip((np.diag(R) + 1.0) / 2.0, 0.0, None)
        k = int(np.argmax(diag))
        n = np.empty(3)
        n[k] = math.sqrt(diag[k])
        for j in range(3):
            if j != k:
                n[j] = (R[k, j] + R[j, k]) / (4.0 * n[k])
        n /= np.linalg.norm(n)
        if np.dot(n, vee) < 0:
            n = -n
        return theta * n
    return vee * (theta / math.sin(theta))


def se3_log(pose: Pose) -> np.ndarray:
    """Inverse of :func:`se3_exp`; valid for rotation angles below pi."""
    phi = _so3_log(pose.rotation)
    theta = np.linalg.norm(phi)
    Phi = _hat(phi)
    Phi2 = Phi @ Phi
    if theta < 1e-4:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        c = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / (theta * theta)
    V_inv = np.eye(3) - 0.5 * Phi + c * Phi2
    rho = V_inv @ pose.translation
    return np.concatenate([rho, phi])


def rotation_angle(pose: Pose) -> float:
    """Rotation angle of the pose in radians."""
    return float(np.linalg.norm(_so3_log(pose.rotation)))


def back_project(p, d, K: CameraIntrinsics) -> np.ndarray:
    """Lift pixel(s) with inverse depth to 3D camera coordinates.

    ``p`` is (2,) or (N, 2); ``d`` is a scalar or (N,). The z component of
    the result equals 1/d.
    """
    p = np.asarray(p, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise DomainError("inverse depth must be positive and finite")
    z = 1.0 / d
    x = (p[..., 0] - K.cx) / K.fx * z
    y = (p[..., 1] - K.cy) / K.fy * z
    return np.stack([x, y, np.broadcast_to(z, x.shape)], axis=-1) if p.ndim > 1 \
        else np.array([x, y, z])


def project(P, K: CameraIntrinsics, z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """Project 3D camera-frame point(s) to pixel coordinates."""
    P = np.asarray(P, dtype=np.float64)
    z = P[..., 2]
    if np.any(z <= z_min):
        raise BehindCameraError(f"point behind camera (z <= {z_min})")
    u = K.fx * P[..., 0] / z + K.cx
    v = K.fy * P[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def warp(p, d, pose: Pose, K: CameraIntrinsics, z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """Reproject reference pixel(s) into the target frame of ``pose``."""
    return project(pose.apply(back_project(p, d, K)), K, z_min=z_min)


def project_batch(P: np.ndarray, K: CameraIntrinsics, z_min: float = DEFAULT_Z_MIN):
    """Batch projection that masks instead of raising on bad depth.

    Returns (pixels (N, 2), in_front (N,)); pixels of masked-out rows are 0.
    """
    P = np.asarray(P, dtype=np.float64)
    z = P[:, 2]
    ok = z > z_min
    zsafe = np.where(ok, z, 1.0)
    uv = np.empty((P.shape[0], 2))
    uv[:, 0] = K.fx * P[:, 0] / zsafe + K.cx
    uv[:, 1] = K.fy * P[:, 1] / zsafe + K.cy
    uv[~ok] = 0.0
    return uv, ok


def projection_jacobian(P: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """d(pixel)/d(3D point) for (N, 3) points, shape (N, 2, 3)."""
    P = np.asarray(P, dtype=np.float64)
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    J = np.zeros((P.shape[0], 2, 3))
    J[:, 0, 0] = K.fx * inv_z
    J[:, 0, 2] = -K.fx * x * inv_z2
    J[:, 1, 1] = K.fy * inv_z
    J[:, 1, 2] = -K.fy * y * inv_z2
    return J


def warp_jacobian_batch(P_warped: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """d(warped pixel)/d(xi) at xi = 0 for a left-multiplied increment.

    ``P_warped`` holds the already-transformed points R @ P + t, shape (N, 3);
    the result is (N, 2, 6) with columns ordered [translation, rotation].
    """
    P_warped = np.asarray(P_warped, dtype=np.float64)
    Jp = projection_jacobian(P_warped, K)          # (N, 2, 3)
    n = P_warped.shape[0]
    J = np.empty((n, 2, 6))
    J[:, :, :3] = Jp
    # d(exp(xi) P)/d(rot part) at 0 is -hat(P).
    hats = np.zeros((n, 3, 3))
    x, y, z = P_warped[:, 0], P_warped[:, 1], P_warped[:, 2]
    hats[:, 0, 1] = -z
    hats[:, 0, 2] = y
    hats[:, 1, 0] = z
    hats[:, 1, 2] = -x
    hats[:, 2, 0] = -y
    hats[:, 2, 1] = x
    J[:, :, 3:] = -np.einsum("nij,njk->nik", Jp, hats)
    return J


def warp_jacobian(p, d, pose: Pose, K: CameraIntrinsics,
                  z_min: float = DEFAULT_Z_MIN) -> np.ndarray:
    """2x6 Jacobian of the warped pixel w.r.t. a left-multiplied se(3) increment."""
    P = pose.apply(back_project(p, d, K))
    if P.ndim == 1:
        if P[2] <= z_min:
            raise BehindCameraError(f"point behind camera (z <= {z_min})")
        return warp_jacobian_batch(P[None, :], K)[0]
    z = P[..., 2]
    if np.any(z <= z_min):
        raise BehindCameraError(f"point behind camera (z <= {z_min})")
    return warp_jacobian_batch(P, K)
