"""Frame tracking: coarse-to-fine direct alignment against the last keyframe's
projected semi-dense depth map."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..geom import SE3Pose, se3_exp
from ..image import ImagePyramid, sample_bilinear_batch
from .window import STATUS_ACTIVE, DirectKeyframe, Window


@dataclass
class TrackingResult:
    ok: bool
    T_cw: SE3Pose
    a: float
    b: float
    rmse: float
    n_valid: int
    mean_flow2: float       # px^2 at level 0
    rel_brightness: float   # |a_new - a_ref|
    reference_kf: int = -1


def level_intrinsics(cam, level: int):
    """Intrinsics at a dyadic pyramid level (pixel centers at 2x+0.5)."""
    fx, fy, cx, cy = cam.fx, cam.fy, cam.cx, cam.cy
    for _ in range(level):
        fx, fy = 0.5 * fx, 0.5 * fy
        cx, cy = 0.5 * (cx - 0.5), 0.5 * (cy - 0.5)
    return fx, fy, cx, cy


def _level_coords(u, v, level):
    s = 0.5 ** level
    off = 0.5 * (1.0 - s)
    return u * s - off, v * s - off


def reference_depth_map(window: Window, ref: DirectKeyframe):
    """Project the window's active points into `ref`: (u, v, idepth) arrays."""
    cam = window.cam
    us, vs, ds = [], [], []
    for kf in window.keyframes:
        if kf.id == ref.id:
            rel = None
        else:
            rel = ref.T_cw @ kf.T_cw.inverse()
        for p in kf.points:
            if p.status != STATUS_ACTIVE:
                continue
            if rel is None:
                us.append(p.u)
                vs.append(p.v)
                ds.append(p.idepth)
                continue
            X = np.array([(p.u - cam.cx) / cam.fx, (p.v - cam.cy) / cam.fy,
                          1.0]) / p.idepth
            Xr = rel.R @ X + rel.t
            if Xr[2] <= 1e-3:
                continue
            u = cam.fx * Xr[0] / Xr[2] + cam.cx
            v = cam.fy * Xr[1] / Xr[2] + cam.cy
            if 2.0 <= u <= cam.width - 3.0 and 2.0 <= v <= cam.height - 3.0:
                us.append(u)
                vs.append(v)
                ds.append(1.0 / Xr[2])
    return np.array(us), np.array(vs), np.array(ds)


def track_frame(pyramid: ImagePyramid, window: Window, cfg,
                T_init: SE3Pose, a_init: float = 0.0, b_init: float = 0.0,
                reference: DirectKeyframe = None) -> TrackingResult:
    """Align a new frame against the last keyframe's semi-dense depth map.

    Constant-motion initialization is the caller's job (T_init).  Fails when
    fewer than cfg.track_min_valid pixels survive or the final RMSE exceeds
    cfg.track_fail_rmse.
    """
    ref = reference if reference is not None else window.latest()
    cam = window.cam
    u0, v0, d0 = reference_depth_map(window, ref)
    if u0.size < cfg.track_min_valid:
        return TrackingResult(False, T_init, a_init, b_init, np.inf, 0,
                              np.inf, 0.0, ref.id)
    T_rel = T_init @ ref.T_cw.inverse()
    a_new, b_new = a_init, b_init
    exp_ref = ref.exposure * math.exp(ref.a)
    levels = min(cfg.pyramid_levels, pyramid.n_levels)
    huber = cfg.huber_photo
    c2 = cfg.grad_weight_c2

    for level in reversed(range(levels)):
        fx, fy, cx, cy = level_intrinsics(cam, level)
        ul, vl = _level_coords(u0, v0, level)
        img_ref = ref.pyramid.levels[level]
        ref_vals = sample_bilinear_batch(img_ref, ul, vl)
        gxs = sample_bilinear_batch(ref.pyramid.grad_x[level], ul, vl)
        gys = sample_bilinear_batch(ref.pyramid.grad_y[level], ul, vl)
        ref_gw = c2 / (c2 + gxs * gxs + gys * gys)
        target = pyramid.levels[level]

        lam = 1e-4
        energy = None
        for _ in range(20):
            rho = pyramid.exposure_t * math.exp(a_new) / exp_ref
            H, g, e, n_valid, _, _ = kernels.track_accumulate(
                target, ul, vl, d0, ref_vals, ref_gw, T_rel.R, T_rel.t,
                rho, ref.b, b_new, fx, fy, cx, cy, huber, True)
            if n_valid < 10:
                break
            if energy is None:
                energy = e
            diag = np.diag(H).copy()
            diag[diag < 1e-9] = 1e-9
            try:
                step = -np.linalg.solve(H + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                break
            T_try = se3_exp(step[:6]) @ T_rel
            a_try = a_new + step[6]
            b_try = b_new + step[7]
            rho = pyramid.exposure_t * math.exp(a_try) / exp_ref
            _, _, e_new, nv, _, _ = kernels.track_accumulate(
                target, ul, vl, d0, ref_vals, ref_gw, T_try.R, T_try.t,
                rho, ref.b, b_try, fx, fy, cx, cy, huber, False)
            if nv >= 10 and e_new <= energy:
                improved = energy - e_new
                T_rel, a_new, b_new = T_try, a_try, b_try
                energy = e_new
                lam = max(lam / 3.0, 1e-7)
                if improved < 1e-5 * max(energy, 1.0):
                    break
            else:
                lam = min(lam * 5.0, 1e6)

    # final statistics at the finest level
    rho = pyramid.exposure_t * math.exp(a_new) / exp_ref
    fx, fy, cx, cy = level_intrinsics(cam, 0)
    img_ref = ref.pyramid.levels[0]
    ref_vals = sample_bilinear_batch(img_ref, u0, v0)
    gxs = sample_bilinear_batch(ref.pyramid.grad_x[0], u0, v0)
    gys = sample_bilinear_batch(ref.pyramid.grad_y[0], u0, v0)
    ref_gw = c2 / (c2 + gxs * gxs + gys * gys)
    _, _, _, n_valid, sq_res, sq_flow = kernels.track_accumulate(
        pyramid.levels[0], u0, v0, d0, ref_vals, ref_gw, T_rel.R, T_rel.t,
        rho, ref.b, b_new, fx, fy, cx, cy, huber, False)
    rmse = math.sqrt(sq_res / n_valid) if n_valid else np.inf
    mean_flow2 = sq_flow / n_valid if n_valid else np.inf
    ok = n_valid >= cfg.track_min_valid and rmse <= cfg.track_fail_rmse
    return TrackingResult(ok, T_rel @ ref.T_cw, a_new, b_new, rmse, n_valid,
                          mean_flow2, abs(a_new - ref.a), ref.id)


def need_new_keyframe(tr: TrackingResult, window_mean_rmse: float, cfg) -> bool:
    """Keyframe trigger: flow, brightness change, or degraded tracking quality.

    All comparisons are >= (threshold-inclusive).
    """
    if tr.mean_flow2 >= cfg.flow_threshold:
        return True
    if tr.rel_brightness >= cfg.affine_threshold:
        return True
    if (window_mean_rmse > 0.0 and np.isfinite(window_mean_rmse)
            and tr.rmse >= cfg.rmse_threshold * window_mean_rmse):
        return True
    return False
