"""Windowed photometric bundle adjustment and Schur-complement marginalization.

The energy is the weighted Huber sum of 8-pixel pattern residuals over all
(point, target-frame) pairs plus a quadratic prior pulling the affine
brightness parameters to zero (only when exposures are known), plus the
marginalization prior.  Solved by Levenberg-damped Gauss-Newton with the
point depths eliminated by Schur complement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..geom import se3_exp
from .window import (RESIDUAL_PATTERN, STATUS_ACTIVE, STATUS_MARGINALIZED,
                     DirectKeyframe, DirectPoint, ResidualTerm, Window)


class DegenerateGeometryError(RuntimeError):
    """The reduced normal equations are singular."""


def gradient_weight(grad_norm_sq: float, c: float) -> float:
    """Down-weighting of high-gradient pixels: c^2 / (c^2 + |grad|^2)."""
    if c <= 0.0:
        raise ValueError("gradient-weight constant must be positive")
    c2 = c * c
    return c2 / (c2 + grad_norm_sq)


def sample_host_data(pyramid, u, v, grad_weight_c2):
    """Host intensities and gradient weights at the pattern pixels (integer grid)."""
    img = pyramid.levels[0]
    gx = pyramid.grad_x[0]
    gy = pyramid.grad_y[0]
    us = (u + RESIDUAL_PATTERN[:, 0]).astype(int)
    vs = (v + RESIDUAL_PATTERN[:, 1]).astype(int)
    vals = img[vs, us]
    g2 = gx[vs, us] ** 2 + gy[vs, us] ** 2
    gw = grad_weight_c2 / (grad_weight_c2 + g2)
    return vals, gw


@dataclass
class SystemData:
    """Flat arrays describing the current window for the kernels."""

    frames: list
    id2idx: dict
    images: np.ndarray
    aff: np.ndarray
    ratio: np.ndarray
    R_cur: np.ndarray
    t_cur: np.ndarray
    R_lin: np.ndarray
    t_lin: np.ndarray
    points: list
    host_idx: np.ndarray
    px: np.ndarray
    py: np.ndarray
    idepth: np.ndarray
    host_vals: np.ndarray
    host_gw: np.ndarray
    term_point: np.ndarray
    term_target: np.ndarray

    @property
    def n_frames(self):
        return len(self.frames)

    @property
    def n_points(self):
        return len(self.points)

    @property
    def n_terms(self):
        return len(self.term_point)


def gather_system(window: Window, points=None) -> SystemData:
    frames = window.keyframes
    n_f = len(frames)
    id2idx = {kf.id: i for i, kf in enumerate(frames)}
    images = np.stack([kf.pyramid.levels[0] for kf in frames])
    aff = np.array([[kf.a, kf.b] for kf in frames])
    tea = np.array([kf.exposure * math.exp(kf.a) for kf in frames])
    ratio = tea[None, :] / tea[:, None]

    R_cur = np.zeros((n_f, n_f, 3, 3))
    t_cur = np.zeros((n_f, n_f, 3))
    R_lin = np.zeros((n_f, n_f, 3, 3))
    t_lin = np.zeros((n_f, n_f, 3))
    for i in range(n_f):
        inv_cur = frames[i].T_cw.inverse()
        inv_lin = frames[i].lin_T().inverse()
        for j in range(n_f):
            rel = frames[j].T_cw @ inv_cur
            R_cur[i, j] = rel.R
            t_cur[i, j] = rel.t
            rel_l = frames[j].lin_T() @ inv_lin
            R_lin[i, j] = rel_l.R
            t_lin[i, j] = rel_l.t

    if points is None:
        points = window.active_points()
    n_p = len(points)
    host_idx = np.array([id2idx[p.host_kf] for p in points], dtype=np.int64)
    px = np.array([p.u for p in points])
    py = np.array([p.v for p in points])
    idepth = np.array([p.idepth for p in points])
    host_vals = (np.stack([p.host_vals for p in points])
                 if n_p else np.zeros((0, 8)))
    host_gw = (np.stack([p.host_gw for p in points])
               if n_p else np.zeros((0, 8)))
    term_point = []
    term_target = []
    for k in range(n_p):
        for j in range(n_f):
            if j != host_idx[k]:
                term_point.append(k)
                term_target.append(j)
    return SystemData(frames, id2idx, images, aff, ratio, R_cur, t_cur,
                      R_lin, t_lin, points, host_idx, px, py, idepth,
                      host_vals, host_gw,
                      np.array(term_point, dtype=np.int64),
                      np.array(term_target, dtype=np.int64))


def _affine_lambdas(window: Window, n_terms: int, cfg) -> float:
    if not window.exposures_known:
        return 0.0
    return cfg.affine_prior_scale * n_terms


def total_energy(window: Window, cfg) -> float:
    """Photometric energy plus the affine-brightness prior (the optimized
    objective also adds the marginalization prior; see window_objective)."""
    sys = gather_system(window)
    cam = window.cam
    if sys.n_terms == 0:
        photo = 0.0
    else:
        photo, _ = kernels.photometric_energy(
            sys.images, sys.aff, sys.ratio, sys.R_cur, sys.t_cur,
            cam.fx, cam.fy, cam.cx, cam.cy,
            sys.host_idx, sys.px, sys.py, sys.idepth, sys.host_vals,
            sys.host_gw, RESIDUAL_PATTERN[:, 0].copy(),
            RESIDUAL_PATTERN[:, 1].copy(), sys.term_point, sys.term_target,
            cfg.huber_photo)
    lam = _affine_lambdas(window, sys.n_terms, cfg)
    aff_prior = lam * float((sys.aff ** 2).sum())
    return photo + aff_prior


def prior_energy(window: Window) -> float:
    pr = window.prior
    if pr.H.size == 0:
        return 0.0
    delta = np.concatenate([window.keyframe_by_id(k).state_delta()
                            for k in pr.kf_ids])
    return float(delta @ pr.H @ delta + 2.0 * pr.b @ delta)


def window_objective(window: Window, cfg) -> float:
    return total_energy(window, cfg) + prior_energy(window)


def photometric_residual(point: DirectPoint, host: DirectKeyframe,
                         target: DirectKeyframe, cam, huber: float = 9.0):
    """Evaluate one point's 8-pixel photometric term against one target frame.

    Returns a ResidualTerm, or None when every pattern pixel warps out of
    bounds or behind the camera (occlusion / FOV exit).
    """
    if point.idepth <= 0.0:
        raise ValueError("inverse depth must be positive")
    win = Window(cam=cam)
    win.keyframes = [host, target]
    sys = gather_system(win, points=[point])
    sys.host_idx = np.array([0], dtype=np.int64)
    _, _, _, _, _, _, res, wts, valid, _, _ = kernels.accumulate_photometric(
        sys.images, sys.aff, sys.ratio, sys.R_cur, sys.t_cur, sys.R_lin,
        sys.t_lin, cam.fx, cam.fy, cam.cx, cam.cy,
        sys.host_idx, sys.px, sys.py, sys.idepth, sys.host_vals, sys.host_gw,
        RESIDUAL_PATTERN[:, 0].copy(), RESIDUAL_PATTERN[:, 1].copy(),
        np.array([0], dtype=np.int64), np.array([1], dtype=np.int64), huber)
    ok = valid[0].astype(bool)
    if not ok.any():
        return None
    grad_w = point.host_gw.copy()
    huber_w = np.ones(8)
    nz = ok & (grad_w > 0)
    huber_w[nz] = wts[0, nz] / grad_w[nz]
    return ResidualTerm(point.id, target.id, res[0].copy(), grad_w, huber_w, ok)


def build_normal_equations(window: Window, cfg, sys: SystemData = None):
    """Accumulate the full GN system: photometric + affine prior + marg prior."""
    if sys is None:
        sys = gather_system(window)
    cam = window.cam
    out = kernels.accumulate_photometric(
        sys.images, sys.aff, sys.ratio, sys.R_cur, sys.t_cur, sys.R_lin,
        sys.t_lin, cam.fx, cam.fy, cam.cx, cam.cy,
        sys.host_idx, sys.px, sys.py, sys.idepth, sys.host_vals, sys.host_gw,
        RESIDUAL_PATTERN[:, 0].copy(), RESIDUAL_PATTERN[:, 1].copy(),
        sys.term_point, sys.term_target, cfg.huber_photo)
    Hff, bf, hfp, hpp, bp = out[0], out[1], out[2], out[3], out[4]

    lam = _affine_lambdas(window, sys.n_terms, cfg)
    if lam > 0.0:
        for i, kf in enumerate(sys.frames):
            Hff[8 * i + 6, 8 * i + 6] += lam
            Hff[8 * i + 7, 8 * i + 7] += lam
            bf[8 * i + 6] += lam * kf.a
            bf[8 * i + 7] += lam * kf.b

    pr = window.prior
    if pr.H.size:
        cols = np.concatenate([np.arange(8 * sys.id2idx[k], 8 * sys.id2idx[k] + 8)
                               for k in pr.kf_ids])
        delta = np.concatenate([window.keyframe_by_id(k).state_delta()
                                for k in pr.kf_ids])
        Hff[np.ix_(cols, cols)] += pr.H
        bf[cols] += pr.b + pr.H @ delta
    return sys, Hff, bf, hfp, hpp, bp, out


def gauge_fixed_columns(window: Window, sys: SystemData) -> np.ndarray:
    """Oldest keyframe pose is always fixed; its affine too when there is no
    affine prior (exact gauge freedom in `a`, near-gauge in `b`)."""
    cols = list(range(6))
    if not window.exposures_known:
        cols += [6, 7]
    return np.array(cols, dtype=np.int64)


def solve_step(Hff, bf, hfp, hpp, bp, fixed_cols, fixed_points, lam):
    """Levenberg-damped Schur solve; returns (delta_frames, delta_depths)."""
    dim = Hff.shape[0]
    free = np.setdiff1d(np.arange(dim), fixed_cols)
    diag = np.diag(Hff).copy()
    diag[diag < 1e-9] = 1e-9
    Hd = Hff + lam * np.diag(diag)
    hpp_d = hpp * (1.0 + lam)
    elim = (~fixed_points) & (hpp_d > 1e-12)

    A = hfp[elim][:, free]
    w = 1.0 / hpp_d[elim]
    Hs = Hd[np.ix_(free, free)] - A.T @ (A * w[:, None])
    rhs = -bf[free] + A.T @ (bp[elim] * w)
    try:
        df_free = np.linalg.solve(Hs, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateGeometryError(str(e)) from e
    if not np.all(np.isfinite(df_free)):
        raise DegenerateGeometryError("non-finite window update")
    df = np.zeros(dim)
    df[free] = df_free
    dd = np.zeros(hpp.shape[0])
    dd[elim] = w * (-bp[elim] - hfp[elim] @ df)
    return df, dd


def _save_states(window: Window, sys: SystemData):
    frame_states = [(kf.T_cw, kf.a, kf.b) for kf in sys.frames]
    depths = np.array([p.idepth for p in sys.points])
    return frame_states, depths


def _restore_states(window: Window, sys: SystemData, saved):
    frame_states, depths = saved
    for kf, (T, a, b) in zip(sys.frames, frame_states):
        kf.T_cw = T
        kf.a = a
        kf.b = b
    for p, d in zip(sys.points, depths):
        p.idepth = d


def apply_step(window: Window, sys: SystemData, df, dd):
    for i, kf in enumerate(sys.frames):
        x = df[8 * i: 8 * i + 8]
        if np.any(x[:6]):
            kf.T_cw = se3_exp(x[:6]) @ kf.T_cw
        kf.a += x[6]
        kf.b += x[7]
    for p, delta in zip(sys.points, dd):
        if delta != 0.0:
            p.idepth = float(np.clip(p.idepth + delta, 1e-4, 1e4))


def fixed_point_mask(window: Window, sys: SystemData) -> np.ndarray:
    mask = np.zeros(sys.n_points, dtype=bool)
    for k, p in enumerate(sys.points):
        if p.id == window.scale_anchor:
            mask[k] = True
    return mask


def optimize_window(window: Window, cfg, max_iterations=None):
    """Levenberg-damped GN on the window; energy is non-increasing across
    accepted iterations.  Returns the objective history."""
    if len(window.keyframes) < 2 or len(window.active_points()) < 8:
        return [window_objective(window, cfg)]
    max_iterations = max_iterations or cfg.ba_iterations
    lam = 1e-4
    energy = window_objective(window, cfg)
    history = [energy]
    for _ in range(max_iterations):
        sys, Hff, bf, hfp, hpp, bp, _ = build_normal_equations(window, cfg)
        for p, curv in zip(sys.points, hpp):
            p.curvature = float(curv)
        fixed_cols = gauge_fixed_columns(window, sys)
        fixed_pts = fixed_point_mask(window, sys)
        accepted = False
        for _attempt in range(8):
            try:
                df, dd = solve_step(Hff, bf, hfp, hpp, bp, fixed_cols,
                                    fixed_pts, lam)
            except DegenerateGeometryError:
                return history
            saved = _save_states(window, sys)
            apply_step(window, sys, df, dd)
            new_energy = window_objective(window, cfg)
            if new_energy <= energy * (1.0 + 1e-12):
                gain = energy - new_energy
                energy = new_energy
                accepted = True
                lam = max(lam / 3.0, 1e-7)
                break
            _restore_states(window, sys, saved)
            lam = min(lam * 5.0, 1e8)
        if not accepted:
            break
        history.append(energy)
        if gain < 1e-8 * max(energy, 1.0):
            break
    return history


def _fold_points(window: Window, cfg, subset, min_valid_pixels=8):
    """Marginalize `subset` points into the prior via Schur complement.

    Points with too few valid pixels or vanishing depth curvature are dropped
    instead of folded.  Returns the ids of folded points.
    """
    if not subset:
        return []
    sys = gather_system(window, points=subset)
    cam = window.cam
    if sys.n_terms == 0:
        return []
    out = kernels.accumulate_photometric(
        sys.images, sys.aff, sys.ratio, sys.R_cur, sys.t_cur, sys.R_lin,
        sys.t_lin, cam.fx, cam.fy, cam.cx, cam.cy,
        sys.host_idx, sys.px, sys.py, sys.idepth, sys.host_vals, sys.host_gw,
        RESIDUAL_PATTERN[:, 0].copy(), RESIDUAL_PATTERN[:, 1].copy(),
        sys.term_point, sys.term_target, cfg.huber_photo)
    Hff, bf, hfp, hpp, bp, _, _, _, valid = out[:9]
    n_valid_pt = np.zeros(sys.n_points, dtype=int)
    involved = np.zeros(sys.n_frames, dtype=bool)
    for t_i in range(sys.n_terms):
        nv = int(valid[t_i].sum())
        n_valid_pt[sys.term_point[t_i]] += nv
        if nv:
            involved[sys.host_idx[sys.term_point[t_i]]] = True
            involved[sys.term_target[t_i]] = True

    foldable = (n_valid_pt >= min_valid_pixels) & (hpp > 1e-9)
    if not foldable.any():
        return []

    # frame-state correction: contributions are linearized at FEJ states
    for i, kf in enumerate(sys.frames):
        if involved[i]:
            window.prior.ensure_member(kf)
    delta = np.concatenate([kf.state_delta() for kf in sys.frames])
    bf_corr = bf - Hff @ delta
    folded = []
    for k in np.nonzero(foldable)[0]:
        bp_corr = bp[k] - hfp[k] @ delta
        Hff -= np.outer(hfp[k], hfp[k]) / hpp[k]
        bf_corr -= hfp[k] * (bp_corr / hpp[k])
        folded.append(subset[k].id)

    pr = window.prior
    member_cols = []
    sys_cols = []
    for i, kf in enumerate(sys.frames):
        if kf.id in pr.kf_ids:
            m = pr.index_of(kf.id)
            member_cols.append(np.arange(8 * m, 8 * m + 8))
            sys_cols.append(np.arange(8 * i, 8 * i + 8))
    mc = np.concatenate(member_cols)
    sc = np.concatenate(sys_cols)
    pr.H[np.ix_(mc, mc)] += Hff[np.ix_(sc, sc)]
    pr.b[mc] += bf_corr[sc]
    return folded


def marginalize_points(window: Window, cfg):
    """Marginalize active points not observed in either of the two latest
    keyframes (points hosted there count as observed).  Returns their ids."""
    pts = window.active_points()
    if not pts or len(window.keyframes) < 2:
        return []
    sys = gather_system(window, points=pts)
    cam = window.cam
    _, n_valid = kernels.photometric_energy(
        sys.images, sys.aff, sys.ratio, sys.R_cur, sys.t_cur,
        cam.fx, cam.fy, cam.cx, cam.cy,
        sys.host_idx, sys.px, sys.py, sys.idepth, sys.host_vals, sys.host_gw,
        RESIDUAL_PATTERN[:, 0].copy(), RESIDUAL_PATTERN[:, 1].copy(),
        sys.term_point, sys.term_target, cfg.huber_photo)
    latest_two = {kf.id for kf in window.keyframes[-2:]}
    observed_in_recent = np.zeros(sys.n_points, dtype=bool)
    for k, p in enumerate(pts):
        if p.host_kf in latest_two:
            observed_in_recent[k] = True
    for t_i in range(sys.n_terms):
        if n_valid[t_i] > 0 and sys.frames[sys.term_target[t_i]].id in latest_two:
            observed_in_recent[sys.term_point[t_i]] = True

    to_marg = [pts[k] for k in np.nonzero(~observed_in_recent)[0]]
    if not to_marg:
        return []
    _fold_points(window, cfg, to_marg)
    out = []
    for p in to_marg:
        _retire_point(window, p)
        out.append(p.id)
    return out


def _retire_point(window: Window, p: DirectPoint):
    host = window.keyframe_by_id(p.host_kf)
    X_cam = np.array([(p.u - window.cam.cx) / window.cam.fx,
                      (p.v - window.cam.cy) / window.cam.fy, 1.0]) / p.idepth
    X_w = host.T_cw.inverse().apply(X_cam)
    window.marginalized_points.append((X_w, p.idepth_variance))
    p.status = STATUS_MARGINALIZED
    if window.scale_anchor == p.id:
        window.scale_anchor = -1


def visible_fraction(window: Window, kf: DirectKeyframe) -> float:
    """Fraction of kf's hosted points projecting inside the latest keyframe."""
    pts = [p for p in kf.points if p.status == STATUS_ACTIVE]
    if not pts:
        return 0.0
    cam = window.cam
    latest = window.latest()
    rel = latest.T_cw @ kf.T_cw.inverse()
    uv = np.array([[p.u, p.v] for p in pts])
    d = np.array([p.idepth for p in pts])
    X = np.stack([(uv[:, 0] - cam.cx) / cam.fx / d,
                  (uv[:, 1] - cam.cy) / cam.fy / d, 1.0 / d], axis=-1)
    Xl = X @ rel.R.T + rel.t
    ok = Xl[:, 2] > 1e-3
    z = np.where(ok, Xl[:, 2], 1.0)
    u = cam.fx * Xl[:, 0] / z + cam.cx
    v = cam.fy * Xl[:, 1] / z + cam.cy
    ok &= (u >= 1) & (u <= cam.width - 2) & (v >= 1) & (v <= cam.height - 2)
    return float(ok.sum()) / len(pts)


def select_marginalization_keyframe(window: Window, cfg):
    """Keyframe to marginalize, or None.

    First any non-latest-two keyframe with < 5% of its points visible in the
    latest keyframe (lowest id wins); otherwise, when over capacity, the
    keyframe with the highest distance score sqrt(d(i, latest)) *
    sum_j 1/(d(i,j) + eps).  Ties break to the lowest keyframe id.
    """
    if len(window.keyframes) < 3:
        return None
    candidates = window.keyframes[:-2]
    for kf in candidates:
        if visible_fraction(window, kf) < 0.05:
            return kf.id
    if len(window.keyframes) <= window.max_kf:
        return None
    centers = {kf.id: kf.T_cw.camera_center() for kf in window.keyframes}
    latest_id = window.latest().id
    eps = 1e-5
    best_id, best_score = None, -np.inf
    for kf in candidates:
        d_latest = np.linalg.norm(centers[kf.id] - centers[latest_id])
        inv_sum = sum(1.0 / (np.linalg.norm(centers[kf.id] - centers[j]) + eps)
                      for j in centers if j != kf.id)
        score = math.sqrt(d_latest) * inv_sum
        if score > best_score + 1e-15 or (abs(score - best_score) <= 1e-15
                                          and (best_id is None or kf.id < best_id)):
            best_id, best_score = kf.id, score
    return best_id


def marginalize_keyframe(window: Window, kf_id: int, cfg) -> DirectKeyframe:
    """Remove a keyframe: fold its still-active hosted points, then Schur the
    frame's states out of the prior."""
    kf = window.keyframe_by_id(kf_id)
    hosted = [p for p in kf.points if p.status == STATUS_ACTIVE]
    _fold_points(window, cfg, hosted)
    for p in hosted:
        _retire_point(window, p)
    if kf.id in window.prior.kf_ids:
        window.prior.remove_member(kf.id)
    window.keyframes.remove(kf)
    return kf


def choose_scale_anchor(window: Window):
    """Freeze the best-conditioned inverse depth as the scale gauge."""
    pts = window.active_points()
    if not pts:
        window.scale_anchor = -1
        return
    best = max(pts, key=lambda p: (p.curvature, -p.id))
    window.scale_anchor = best.id
