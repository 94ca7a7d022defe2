"""Synthetic plane-scene rendering and sequence generation.

Scenes are textured bounded planes with band-limited procedural intensity
(sums of random cosine waves), so depths are closed-form and images have
usable gradients at every pyramid level.  Sequences are written in the
dataset layout the CLI consumes, with ground-truth trajectory and
inverse-depth maps.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geom import CameraIntrinsics, SE3Pose, rotation_to_quat
from .image import IntensityImage, save_png


@dataclass(frozen=True)
class TexturedPlane:
    origin: np.ndarray       # point on the plane
    e1: np.ndarray           # in-plane unit axes
    e2: np.ndarray
    half_extent: np.ndarray  # bounds: |alpha| <= he[0], |beta| <= he[1]
    bias: float
    amplitudes: np.ndarray   # (K,)
    freqs: np.ndarray        # (K, 2) cycles per meter along (e1, e2)
    phases: np.ndarray       # (K,)

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.e1, self.e2)


@dataclass(frozen=True)
class SyntheticScene:
    planes: tuple
    background: float = 0.0

    def packed(self):
        ps = self.planes
        k = max(p.amplitudes.shape[0] for p in ps)
        amp = np.zeros((len(ps), k))
        freq = np.zeros((len(ps), k, 2))
        phase = np.zeros((len(ps), k))
        for i, p in enumerate(ps):
            n = p.amplitudes.shape[0]
            amp[i, :n] = p.amplitudes
            freq[i, :n] = p.freqs
            phase[i, :n] = p.phases
        return (np.stack([p.origin for p in ps]),
                np.stack([p.e1 for p in ps]),
                np.stack([p.e2 for p in ps]),
                np.stack([p.normal for p in ps]),
                np.stack([p.half_extent for p in ps]),
                np.array([p.bias for p in ps]),
                amp, freq, phase)


def make_texture(rng, n_waves=48, wavelength_range=(0.12, 1.0),
                 contrast=26.0, bias=120.0):
    """Band-limited random cosine field parameters (amplitudes, freqs, phases).

    `contrast` is the field's standard deviation in gray levels (each wave
    contributes A^2/2 to the variance).
    """
    lo, hi = wavelength_range
    lam = np.exp(rng.uniform(math.log(lo), math.log(hi), size=n_waves))
    ang = rng.uniform(0.0, 2.0 * math.pi, size=n_waves)
    freqs = np.stack([np.cos(ang), np.sin(ang)], axis=1) / lam[:, None]
    raw = rng.uniform(0.5, 1.0, size=n_waves) * lam ** 0.3
    amps = raw * (contrast / math.sqrt(0.5 * float(raw @ raw)))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=n_waves)
    return bias, amps, freqs, phases


def _plane(origin, e1, e2, half_extent, tex):
    bias, amps, freqs, phases = tex
    return TexturedPlane(np.asarray(origin, float), np.asarray(e1, float),
                         np.asarray(e2, float), np.asarray(half_extent, float),
                         bias, amps, freqs, phases)


def octagon_room(rng, radius=2.6, wall_half_height=2.8, **tex_kw) -> SyntheticScene:
    """Eight textured walls around the origin, faces at distance `radius`."""
    planes = []
    half_width = radius * math.tan(math.pi / 8.0) + 0.35
    for k in range(8):
        ang = 2.0 * math.pi * k / 8.0
        n = np.array([math.cos(ang), math.sin(ang), 0.0])
        e1 = np.array([-math.sin(ang), math.cos(ang), 0.0])
        e2 = np.array([0.0, 0.0, 1.0])
        planes.append(_plane(radius * n, e1, e2,
                             (half_width, wall_half_height),
                             make_texture(rng, **tex_kw)))
    return SyntheticScene(tuple(planes))


def single_wall(rng, distance=2.3, half_width=3.2, half_height=2.0,
                **tex_kw) -> SyntheticScene:
    """One textured wall at y = distance, viewed from around the origin."""
    wall = _plane([0.0, distance, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0],
                  (half_width, half_height), make_texture(rng, **tex_kw))
    return SyntheticScene((wall,))


def three_zone_wall(rng, distance=2.3, zone_half_width=3.0, outer_width=4.0,
                    half_height=2.2, **tex_kw) -> SyntheticScene:
    """A wall whose middle zone is a corner-free grating: trackable gradients
    for the direct module but (nearly) no features for the corner detector."""
    left = _plane([-(zone_half_width + outer_width / 2), distance, 0.0],
                  [1.0, 0.0, 0.0], [0.0, 0.0, 1.0],
                  (outer_width / 2, half_height), make_texture(rng, **tex_kw))
    right = _plane([zone_half_width + outer_width / 2, distance, 0.0],
                   [1.0, 0.0, 0.0], [0.0, 0.0, 1.0],
                   (outer_width / 2, half_height), make_texture(rng, **tex_kw))
    # middle: one medium-frequency grating along x plus a faint vertical wave
    amps = np.array([55.0, 6.0])
    freqs = np.array([[1.0 / 0.21, 0.0], [0.0, 1.0 / 0.9]])
    phases = rng.uniform(0, 2 * math.pi, size=2)
    mid = TexturedPlane(np.array([0.0, distance, 0.0]), np.array([1.0, 0.0, 0.0]),
                        np.array([0.0, 0.0, 1.0]),
                        np.array([zone_half_width, half_height]),
                        120.0, amps, freqs, phases)
    return SyntheticScene((left, mid, right))


def look_at_pose(center, forward) -> SE3Pose:
    """World-to-camera pose at `center` looking along `forward` (image y down)."""
    z = np.asarray(forward, float)
    z = z / np.linalg.norm(z)
    x = np.cross([0.0, 0.0, -1.0], z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = x / nx
    y = np.cross(z, x)
    R_wc = np.stack([x, y, z], axis=1)
    t_wc = np.asarray(center, float)
    return SE3Pose(R_wc.T.copy(), -R_wc.T @ t_wc)


def orbit_trajectory(n_frames, path_radius=0.55):
    """Full outward-looking circle; last center coincides with the first."""
    poses = []
    for k in range(n_frames):
        phi = 2.0 * math.pi * k / (n_frames - 1)
        c = np.array([path_radius * math.cos(phi), path_radius * math.sin(phi), 0.0])
        poses.append(look_at_pose(c, [math.cos(phi), math.sin(phi), 0.0]))
    return poses


def straight_trajectory(n_frames, length=1.6, look=(0.0, 1.0, 0.0)):
    """Constant-direction lateral motion along x, camera looking at the wall."""
    poses = []
    for k in range(n_frames):
        x = -0.5 * length + length * k / (n_frames - 1)
        poses.append(look_at_pose([x, 0.0, 0.0], look))
    return poses


def figure_eight_trajectory(n_frames, width=0.45, height=0.30):
    """Lemniscate in the x/z plane facing the wall; start, crossing and end coincide."""
    poses = []
    for k in range(n_frames):
        u = 2.0 * math.pi * k / (n_frames - 1)
        c = np.array([width * math.sin(2.0 * u), 0.0, height * math.sin(u)])
        poses.append(look_at_pose(c, [0.0, 1.0, 0.0]))
    return poses


@dataclass
class SequenceSpec:
    kind: str = "orbit-loopy"     # orbit-loopy | straight-exploratory | figure-eight-with-revisit
    n_frames: int = 100
    frame_rate: float = 20.0
    seed: int = 0
    width: int = 192
    height: int = 144
    fov_deg: float = 75.0
    intensity_sigma: float = 0.5
    exposure_jitter: float = 0.0   # relative exposure spread; 0 = unknown exposures
    affine_a_amp: float = 0.0      # peak log brightness gain drift
    affine_b_amp: float = 0.0      # peak brightness offset drift
    extent: float = 0.0            # trajectory span override (kind-dependent)

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("a sequence needs at least 2 frames")

    def intrinsics(self) -> CameraIntrinsics:
        fx = 0.5 * self.width / math.tan(0.5 * math.radians(self.fov_deg))
        return CameraIntrinsics(fx, fx, 0.5 * self.width - 0.5,
                                0.5 * self.height - 0.5, self.width, self.height)

    @property
    def with_exposure(self) -> bool:
        return (self.exposure_jitter > 0.0 or self.affine_a_amp > 0.0
                or self.affine_b_amp > 0.0)


def render(scene: SyntheticScene, pose: SE3Pose, cam: CameraIntrinsics,
           exposure: float = 1.0, a: float = 0.0, b: float = 0.0,
           noise_sigma: float = 0.0, rng=None):
    """Ray-cast an image: I = exposure * e^a * radiance + b (+ noise).

    Returns (IntensityImage, ground-truth inverse depth map); pixels that hit
    no plane have the background radiance and inverse depth 0.
    """
    packed = scene.packed()
    R_wc = pose.R.T.copy()
    center = pose.camera_center()
    radiance, idepth = kernels.render_planes(
        center, R_wc, cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
        *packed[:5], *packed[5:], scene.background)
    img = exposure * math.exp(a) * radiance + b
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 255.0)
    return IntensityImage(img, exposure_t=exposure), idepth


def default_scene(spec: SequenceSpec, rng) -> SyntheticScene:
    if spec.kind.startswith("orbit"):
        return octagon_room(rng)
    return single_wall(rng)


def trajectory_for(spec: SequenceSpec):
    if spec.kind.startswith("orbit"):
        return orbit_trajectory(spec.n_frames, path_radius=spec.extent or 0.55)
    if spec.kind.startswith("straight"):
        return straight_trajectory(spec.n_frames, length=spec.extent or 1.6)
    if spec.kind.startswith("figure"):
        return figure_eight_trajectory(spec.n_frames)
    raise ValueError(f"unknown trajectory kind {spec.kind!r}")


@dataclass
class SequenceData:
    spec: SequenceSpec
    cam: CameraIntrinsics
    poses: list                      # world-to-camera SE3Pose per frame
    timestamps: np.ndarray
    images: list = field(default_factory=list)       # IntensityImage
    gt_idepth: list = field(default_factory=list)    # (H, W) arrays
    exposures_ms: np.ndarray = None
    affine_ab: np.ndarray = None     # (N, 2) ground-truth (a, b) per frame


def generate_sequence(spec: SequenceSpec, scene: SyntheticScene = None,
                      out_dir=None, keep_frames: bool = True) -> SequenceData:
    """Render a full sequence; optionally write the on-disk dataset layout.

    Deterministic for a fixed spec seed.  Raises if the trajectory leaves the
    scene's visible volume (less than half the pixels hit geometry).
    """
    rng = np.random.default_rng(spec.seed)
    if scene is None:
        scene = default_scene(spec, rng)
    poses = trajectory_for(spec)
    cam = spec.intrinsics()
    ts = np.arange(spec.n_frames, dtype=float) / spec.frame_rate

    phase_a, phase_b = rng.uniform(0, 2 * math.pi, size=2)
    aff = np.zeros((spec.n_frames, 2))
    if spec.affine_a_amp > 0.0:
        aff[:, 0] = spec.affine_a_amp * np.sin(
            2 * math.pi * np.arange(spec.n_frames) / spec.n_frames + phase_a)
    if spec.affine_b_amp > 0.0:
        aff[:, 1] = spec.affine_b_amp * np.sin(
            2 * math.pi * np.arange(spec.n_frames) / spec.n_frames + phase_b)
    exposures = np.ones(spec.n_frames)
    if spec.exposure_jitter > 0.0:
        exposures += spec.exposure_jitter * rng.uniform(-1, 1, size=spec.n_frames)

    data = SequenceData(spec, cam, poses, ts,
                        exposures_ms=10.0 * exposures, affine_ab=aff)
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "depths"), exist_ok=True)

    for k in range(spec.n_frames):
        img, idepth = render(scene, poses[k], cam, exposure=exposures[k],
                             a=aff[k, 0], b=aff[k, 1],
                             noise_sigma=spec.intensity_sigma, rng=rng)
        hit_fraction = float(np.count_nonzero(idepth)) / idepth.size
        if hit_fraction < 0.5:
            raise ValueError(
                f"trajectory exits scene visibility at frame {k} "
                f"(hit fraction {hit_fraction:.2f})")
        if out_dir is not None:
            save_png(img, os.path.join(out_dir, "images", f"{k:06d}.png"))
            np.save(os.path.join(out_dir, "depths", f"{k:06d}.npy"),
                    idepth.astype(np.float32))
        if keep_frames:
            data.images.append(img)
            data.gt_idepth.append(idepth)

    if out_dir is not None:
        _write_dataset_metadata(out_dir, spec, cam, ts, exposures, poses)
    return data


def _write_dataset_metadata(out_dir, spec, cam, ts, exposures, poses):
    with open(os.path.join(out_dir, "calib.txt"), "w") as f:
        f.write(f"{cam.fx:.9f} {cam.fy:.9f} {cam.cx:.9f} {cam.cy:.9f} "
                f"{cam.width} {cam.height}\n")
    with open(os.path.join(out_dir, "times.txt"), "w") as f:
        for k in range(spec.n_frames):
            if spec.with_exposure:
                f.write(f"{k:06d} {ts[k]:.9f} {10.0 * exposures[k]:.6f}\n")
            else:
                f.write(f"{k:06d} {ts[k]:.9f}\n")
    with open(os.path.join(out_dir, "groundtruth.csv"), "w") as f:
        f.write("#timestamp_ns,p_x,p_y,p_z,q_w,q_x,q_y,q_z\n")
        for k, T_cw in enumerate(poses):
            c = T_cw.camera_center()
            q = rotation_to_quat(T_cw.R.T)  # camera-to-world orientation
            f.write(f"{int(round(ts[k] * 1e9))},{c[0]:.9f},{c[1]:.9f},{c[2]:.9f},"
                    f"{q[0]:.9f},{q[1]:.9f},{q[2]:.9f},{q[3]:.9f}\n")
