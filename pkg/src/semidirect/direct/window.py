"""State of the direct module: points, keyframes, the sliding window and its
marginalization prior."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geom import SE3Pose, se3_log
from ..image import ImagePyramid

# 8-pixel residual neighborhood around the host pixel
RESIDUAL_PATTERN = np.array([
    (0, 0), (-2, 0), (2, 0), (0, -2), (0, 2), (-1, -1), (1, -1), (-1, 1),
], dtype=float)

STATUS_CANDIDATE = "candidate"
STATUS_ACTIVE = "active"
STATUS_MARGINALIZED = "marginalized"


@dataclass
class DirectPoint:
    """Inverse-depth point hosted in one keyframe, observed via the 8-pixel pattern."""

    id: int
    host_kf: int
    u: float
    v: float
    idepth: float
    idepth_variance: float
    host_vals: np.ndarray     # (8,) host intensities at the pattern pixels
    host_gw: np.ndarray       # (8,) gradient weights in (0, 1]
    status: str = STATUS_CANDIDATE
    curvature: float = 0.0    # last depth-curvature from the optimizer

    def __post_init__(self):
        if self.idepth <= 0.0:
            raise ValueError("inverse depth must be positive")
        if self.idepth_variance <= 0.0:
            raise ValueError("inverse-depth variance must be positive")
        if self.host_vals.shape[0] != RESIDUAL_PATTERN.shape[0]:
            raise ValueError("pattern size mismatch")


@dataclass
class DirectKeyframe:
    """Keyframe of the window: pyramid, pose, affine brightness, hosted points."""

    id: int
    frame_index: int
    timestamp: float
    pyramid: ImagePyramid
    T_cw: SE3Pose             # world-to-camera
    a: float = 0.0
    b: float = 0.0
    exposure: float = 1.0
    points: list = field(default_factory=list)
    # linearization (first-estimate) states, set when the keyframe first
    # connects to the marginalization prior
    fej_T: SE3Pose = None
    fej_a: float = 0.0
    fej_b: float = 0.0

    def __post_init__(self):
        if self.exposure <= 0.0:
            raise ValueError("exposure must be positive")

    @property
    def in_prior(self) -> bool:
        return self.fej_T is not None

    def set_fej(self):
        if self.fej_T is None:
            self.fej_T = self.T_cw
            self.fej_a = self.a
            self.fej_b = self.b

    def lin_T(self) -> SE3Pose:
        return self.fej_T if self.fej_T is not None else self.T_cw

    def state_delta(self) -> np.ndarray:
        """Local coordinates of the current state around the FEJ point."""
        d = np.zeros(8)
        if self.fej_T is not None:
            d[:6] = se3_log(self.T_cw @ self.fej_T.inverse())
            d[6] = self.a - self.fej_a
            d[7] = self.b - self.fej_b
        return d


@dataclass
class ResidualTerm:
    """Evaluated photometric term of one point into one target frame."""

    point_id: int
    target_kf: int
    residuals: np.ndarray        # (8,)
    gradient_weights: np.ndarray  # (8,)
    huber_weights: np.ndarray     # (8,)
    valid: np.ndarray             # (8,) bool

    @property
    def energy(self) -> float:
        return float((self.gradient_weights * self.huber_weights
                      * self.residuals ** 2)[self.valid].sum())


class MarginalizationPrior:
    """Quadratic prior over frame states left behind by marginalization.

    Stored as (H, b) in local coordinates around each member keyframe's
    first-estimate state; member order is insertion order.
    """

    def __init__(self):
        self.kf_ids = []
        self.H = np.zeros((0, 0))
        self.b = np.zeros(0)

    def ensure_member(self, kf: DirectKeyframe):
        if kf.id in self.kf_ids:
            return
        kf.set_fej()
        n = len(self.kf_ids)
        H = np.zeros((8 * (n + 1), 8 * (n + 1)))
        H[:8 * n, :8 * n] = self.H
        self.H = H
        self.b = np.concatenate([self.b, np.zeros(8)])
        self.kf_ids.append(kf.id)

    def index_of(self, kf_id: int) -> int:
        return self.kf_ids.index(kf_id)

    def remove_member(self, kf_id: int, damping: float = 1e-9):
        """Schur-marginalize a member's 8 states out of the prior."""
        from ..linalg import schur_marginalize

        k = self.index_of(kf_id)
        drop = np.arange(8 * k, 8 * k + 8)
        keep = np.setdiff1d(np.arange(self.H.shape[0]), drop)
        if keep.size == 0:
            self.H = np.zeros((0, 0))
            self.b = np.zeros(0)
        else:
            self.H, self.b = schur_marginalize(self.H, self.b, keep, drop,
                                               damping=damping)
        self.kf_ids.pop(k)

    def is_psd(self, tol: float = 1e-8) -> bool:
        if self.H.size == 0:
            return True
        eigs = np.linalg.eigvalsh(0.5 * (self.H + self.H.T))
        return bool(eigs.min() > -tol * max(1.0, abs(eigs.max())))


@dataclass
class Window:
    """Sliding optimization window of the direct module."""

    cam: object = None            # CameraIntrinsics shared by all keyframes
    max_kf: int = 7
    exposures_known: bool = False
    keyframes: list = field(default_factory=list)
    prior: MarginalizationPrior = field(default_factory=MarginalizationPrior)
    scale_anchor: int = -1        # point id whose inverse depth is gauge-frozen
    marginalized_points: list = field(default_factory=list)  # (X_w, host_kf, var)
    next_point_id: int = 0

    def keyframe_by_id(self, kf_id: int) -> DirectKeyframe:
        for kf in self.keyframes:
            if kf.id == kf_id:
                return kf
        raise KeyError(f"keyframe {kf_id} not in window")

    def active_points(self):
        out = []
        for kf in self.keyframes:
            for p in kf.points:
                if p.status == STATUS_ACTIVE:
                    out.append(p)
        return out

    def new_point_id(self) -> int:
        pid = self.next_point_id
        self.next_point_id += 1
        return pid

    def latest(self) -> DirectKeyframe:
        return self.keyframes[-1]

    def assert_invariants(self):
        assert len(self.keyframes) <= self.max_kf + 1
        assert self.prior.is_psd()
        ids = [kf.id for kf in self.keyframes]
        assert ids == sorted(ids)
