"""Lie-group geometry: SE(3) and Sim(3) transforms, exp/log maps, pinhole camera.

Twist coordinate ordering is fixed as (v, w) for SE(3) and (v, w, sigma) for
Sim(3): translational part first, then rotational, then log-scale.  Poses map
world coordinates into the camera frame (T_iw convention); camera centers in
the world frame are therefore -R^T t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SMALL_ANGLE = 1e-8


def so3_hat(w) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues rotation from an axis-angle 3-vector."""
    wx, wy, wz = float(w[0]), float(w[1]), float(w[2])
    theta2 = wx * wx + wy * wy + wz * wz
    theta = math.sqrt(theta2)
    if theta < _SMALL_ANGLE:
        A, B = 1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0
    else:
        A = math.sin(theta) / theta
        B = (1.0 - math.cos(theta)) / theta2
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - B * (wy * wy + wz * wz)
    R[1, 1] = 1.0 - B * (wx * wx + wz * wz)
    R[2, 2] = 1.0 - B * (wx * wx + wy * wy)
    R[0, 1] = -A * wz + B * wx * wy
    R[1, 0] = A * wz + B * wx * wy
    R[0, 2] = A * wy + B * wx * wz
    R[2, 0] = -A * wy + B * wx * wz
    R[1, 2] = -A * wx + B * wy * wz
    R[2, 1] = A * wx + B * wy * wz
    return R


def so3_log(R) -> np.ndarray:
    """Axis-angle 3-vector of a rotation matrix.

    Angles up to and including pi are handled; at exactly pi the axis sign is
    fixed by making its largest-magnitude component positive.
    """
    vx = 0.5 * (R[2, 1] - R[1, 2])
    vy = 0.5 * (R[0, 2] - R[2, 0])
    vz = 0.5 * (R[1, 0] - R[0, 1])
    s = math.sqrt(vx * vx + vy * vy + vz * vz)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = math.atan2(s, c)
    if theta < _SMALL_ANGLE:
        k = 1.0 + theta * theta / 6.0
        return np.array([vx * k, vy * k, vz * k])
    if theta > math.pi - 1e-4:
        # sin(theta) ~ 0: recover the axis from the symmetric part instead.
        B = np.eye(3) + (R + R.T - 2.0 * np.eye(3)) / (2.0 * (1.0 - c))
        k = int(np.argmax(np.diag(B)))
        n = B[k] / math.sqrt(max(B[k, k], 1e-12))
        n = n / np.linalg.norm(n)
        if s > 1e-9:
            if vx * n[0] + vy * n[1] + vz * n[2] < 0.0:
                n = -n
        elif n[int(np.argmax(np.abs(n)))] < 0.0:
            n = -n
        return theta * n
    k = theta / s
    return np.array([vx * k, vy * k, vz * k])


def _apply_abc(a: float, b: float, c: float, w, v) -> np.ndarray:
    """(a*I + b*hat(w) + c*hat(w)^2) @ v via cross products."""
    wv = np.array([w[1] * v[2] - w[2] * v[1],
                   w[2] * v[0] - w[0] * v[2],
                   w[0] * v[1] - w[1] * v[0]])
    wwv = np.array([w[1] * wv[2] - w[2] * wv[1],
                    w[2] * wv[0] - w[0] * wv[2],
                    w[0] * wv[1] - w[1] * wv[0]])
    return a * np.asarray(v, dtype=float) + b * wv + c * wwv


def se3_exp(x) -> "SE3Pose":
    """Closed-form SE(3) exponential of a twist (v, w)."""
    x = np.asarray(x, dtype=float)
    v, w = x[:3], x[3:6]
    theta2 = float(w @ w)
    theta = math.sqrt(theta2)
    if theta < _SMALL_ANGLE:
        B, C = 0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0
    else:
        B = (1.0 - math.cos(theta)) / theta2
        C = (theta - math.sin(theta)) / (theta2 * theta)
    return SE3Pose(so3_exp(w), _apply_abc(1.0, B, C, w, v))


def se3_log(T: "SE3Pose") -> np.ndarray:
    """Twist (v, w) with se3_exp(se3_log(T)) == T."""
    w = so3_log(T.R)
    theta2 = float(w @ w)
    theta = math.sqrt(theta2)
    if theta < 1e-4:
        coeff = 1.0 / 12.0 + theta2 / 720.0
    else:
        half = 0.5 * theta
        coeff = (1.0 - half * math.cos(half) / math.sin(half)) / theta2
    v = _apply_abc(1.0, -0.5, coeff, w, T.t)
    return np.concatenate([v, w])


def boxplus(x, T: "SE3Pose") -> "SE3Pose":
    """Left-multiplicative pose update exp(x) * T."""
    return se3_exp(x) @ T


def _exp_moment(sigma: float, n: int) -> float:
    """Integral of u^n * exp(sigma*u) over [0, 1]."""
    if abs(sigma) < 0.5:
        total, term, k = 1.0 / (n + 1), 1.0, 0
        while True:
            k += 1
            term *= sigma / k
            inc = term / (n + k + 1)
            total += inc
            if abs(inc) < 1e-18:
                return total
    # stable forward recurrence for |sigma| >= 0.5
    es = math.exp(sigma)
    I = (es - 1.0) / sigma
    for m in range(1, n + 1):
        I = (es - m * I) / sigma
    return I


def _sim3_W_coeffs(sigma: float, theta: float):
    """Coefficients (C, A, B) of the Sim(3) translation mixing matrix.

    W = C*I + A*hat(w) + B*hat(w)^2 equals the integral over u in [0,1] of
    exp(sigma*u) * exp_SO3(u*w); the Sim(3) exponential of (v, w, sigma) has
    translation W @ v.
    """
    if theta < 1e-2:
        t2 = theta * theta
        C = _exp_moment(sigma, 0)
        A = (_exp_moment(sigma, 1) - t2 * _exp_moment(sigma, 3) / 6.0
             + t2 * t2 * _exp_moment(sigma, 5) / 120.0)
        B = (_exp_moment(sigma, 2) / 2.0 - t2 * _exp_moment(sigma, 4) / 24.0
             + t2 * t2 * _exp_moment(sigma, 6) / 720.0)
    else:
        es = math.exp(sigma)
        st, ct = math.sin(theta), math.cos(theta)
        denom = sigma * sigma + theta * theta
        C = 1.0 if sigma == 0.0 else math.expm1(sigma) / sigma
        A = (es * (sigma * st - theta * ct) + theta) / (theta * denom)
        D = (es * (sigma * ct + theta * st) - sigma) / denom
        B = (C - D) / (theta * theta)
    return C, A, B


def sim3_exp(x) -> "Sim3Transform":
    """Sim(3) exponential of a 7-twist (v, w, sigma)."""
    x = np.asarray(x, dtype=float)
    v, w, sigma = x[:3], x[3:6], float(x[6])
    theta = math.sqrt(float(w @ w))
    C, A, B = _sim3_W_coeffs(sigma, theta)
    return Sim3Transform(math.exp(sigma), so3_exp(w), _apply_abc(C, A, B, w, v))


def sim3_log(S: "Sim3Transform") -> np.ndarray:
    """7-twist (v, w, sigma) with sim3_exp(sim3_log(S)) == S."""
    sigma = math.log(S.s)
    w = so3_log(S.R)
    theta2 = float(w @ w)
    C, A, B = _sim3_W_coeffs(sigma, math.sqrt(theta2))
    # W^-1 = a*I + b*hat(w) + c*hat(w)^2, using hat(w)^3 = -theta^2 hat(w)
    P = C - theta2 * B
    det = P * P + theta2 * A * A
    a = 1.0 / C
    b = -A / det
    c = (A * A - B * P) / (C * det)
    v = _apply_abc(a, b, c, w, S.t)
    return np.concatenate([v, w, [sigma]])


@dataclass(frozen=True)
class SE3Pose:
    """Rigid-body transform: x_cam = R @ x_world + t."""

    R: np.ndarray
    t: np.ndarray

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(M) -> "SE3Pose":
        M = np.asarray(M, dtype=float)
        return SE3Pose(M[:3, :3].copy(), M[:3, 3].copy())

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M

    def inverse(self) -> "SE3Pose":
        return SE3Pose(self.R.T.copy(), -self.R.T @ self.t)

    def __matmul__(self, other: "SE3Pose") -> "SE3Pose":
        return SE3Pose(self.R @ other.R, self.R @ other.t + self.t)

    def apply(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.R.T + self.t

    def camera_center(self) -> np.ndarray:
        """Camera position in the world frame (-R^T t)."""
        return -self.R.T @ self.t

    def assert_valid(self, tol: float = 1e-9) -> None:
        assert np.abs(self.R.T @ self.R - np.eye(3)).max() < tol
        assert abs(np.linalg.det(self.R) - 1.0) < tol
        assert np.all(np.isfinite(self.t))


@dataclass(frozen=True)
class Sim3Transform:
    """Similarity transform: x' = s * R @ x + t with s > 0."""

    s: float
    R: np.ndarray
    t: np.ndarray

    @staticmethod
    def identity() -> "Sim3Transform":
        return Sim3Transform(1.0, np.eye(3), np.zeros(3))

    @staticmethod
    def from_se3(T: SE3Pose, s: float = 1.0) -> "Sim3Transform":
        return Sim3Transform(s, T.R.copy(), T.t.copy())

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.s * self.R
        M[:3, 3] = self.t
        return M

    def inverse(self) -> "Sim3Transform":
        s_inv = 1.0 / self.s
        return Sim3Transform(s_inv, self.R.T.copy(), -s_inv * (self.R.T @ self.t))

    def __matmul__(self, other: "Sim3Transform") -> "Sim3Transform":
        return Sim3Transform(self.s * other.s, self.R @ other.R,
                             self.s * (self.R @ other.t) + self.t)

    def apply(self, X) -> np.ndarray:
        return self.s * (np.asarray(X, dtype=float) @ self.R.T) + self.t

    def assert_valid(self, tol: float = 1e-9) -> None:
        assert self.s > 0.0
        assert np.abs(self.R.T @ self.R - np.eye(3)).max() < tol
        assert abs(np.linalg.det(self.R) - 1.0) < tol


def sim3_adjoint(S: Sim3Transform) -> np.ndarray:
    """Adjoint matrix: S exp(x) S^-1 = exp(Adj_S @ x), in (v, w, sigma) order."""
    A = np.zeros((7, 7))
    A[:3, :3] = S.s * S.R
    A[:3, 3:6] = so3_hat(S.t) @ S.R
    A[:3, 6] = -S.t
    A[3:6, 3:6] = S.R
    A[6, 6] = 1.0
    return A


def sim3_ad(x) -> np.ndarray:
    """Lie-algebra adjoint ad_x (the bracket [x, .]) in (v, w, sigma) order."""
    x = np.asarray(x, dtype=float)
    v, w, sigma = x[:3], x[3:6], float(x[6])
    A = np.zeros((7, 7))
    A[:3, :3] = sigma * np.eye(3) + so3_hat(w)
    A[:3, 3:6] = so3_hat(v)
    A[:3, 6] = -v
    A[3:6, 3:6] = so3_hat(w)
    return A


def sim3_left_jacobian(x, max_terms: int = 60) -> np.ndarray:
    """Left Jacobian J_l(x) = sum_n ad_x^n / (n+1)! of Sim(3).

    Satisfies log(exp(d) exp(x)) = x + J_l(x)^-1 d to first order.
    """
    A = sim3_ad(x)
    J = np.eye(7)
    term = np.eye(7)
    for n in range(1, max_terms):
        term = (term @ A) / (n + 1.0)
        J += term
        if np.abs(term).max() < 1e-17:
            break
    return J


def sim3_left_jacobian_inv(x) -> np.ndarray:
    return np.linalg.inv(sim3_left_jacobian(x))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera on pre-undistorted images."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point outside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Intrinsics of the same camera at a resampled resolution."""
        return CameraIntrinsics(self.fx * factor, self.fy * factor,
                                self.cx * factor, self.cy * factor,
                                max(int(round(self.width * factor)), 1),
                                max(int(round(self.height * factor)), 1))


def rotation_to_quat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        k = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        i, j = (k + 1) % 3, (k + 2) % 3
        s = math.sqrt(R[k, k] - R[i, i] - R[j, j] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[j, i] - R[i, j]) / s
        q[1 + k] = 0.25 * s
        q[1 + i] = (R[i, k] + R[k, i]) / s
        q[1 + j] = (R[j, k] + R[k, j]) / s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_rotation(q) -> np.ndarray:
    """Rotation matrix of a quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


MIN_PROJECTION_DEPTH = 1e-6


def project(cam: CameraIntrinsics, X) -> np.ndarray:
    """Pinhole projection of a camera-frame point; rejects points behind the camera."""
    X = np.asarray(X, dtype=float)
    if X[2] <= MIN_PROJECTION_DEPTH:
        raise ValueError("point behind the camera")
    return np.array([cam.fx * X[0] / X[2] + cam.cx,
                     cam.fy * X[1] / X[2] + cam.cy])


def backproject(cam: CameraIntrinsics, p, idepth: float) -> np.ndarray:
    """Camera-frame point of pixel p at inverse depth idepth (> 0)."""
    if idepth <= 0.0:
        raise ValueError("inverse depth must be positive")
    return np.array([(p[0] - cam.cx) / cam.fx,
                     (p[1] - cam.cy) / cam.fy,
                     1.0]) / idepth
