"""Two-frame map bootstrapping: joint coarse-to-fine estimation of relative
pose and candidate inverse depths, normalized to mean inverse depth 1."""

from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..geom import SE3Pose, se3_exp
from ..image import ImagePyramid, sample_bilinear_batch
from .ba import sample_host_data
from .points import select_candidate_points
from .tracker import level_intrinsics, _level_coords
from .window import (RESIDUAL_PATTERN, STATUS_ACTIVE, DirectKeyframe,
                     DirectPoint, Window)

INITIAL_IDEPTH_VARIANCE = 10.0


class Bootstrapper:
    """Consumes frames until a pair with sufficient parallax initializes a window."""

    def __init__(self, cam, cfg):
        self.cam = cam
        self.cfg = cfg
        self.ref = None
        self.attempts = 0
        self._warm_T = SE3Pose.identity()

    def _set_reference(self, pyramid, timestamp, index):
        self.ref = (pyramid, timestamp, index)
        uv = select_candidate_points(pyramid, 2 * self.cfg.candidate_target)
        self.cand_uv = uv
        n = uv.shape[0]
        self.idepth = np.ones(n)
        self.var = np.full(n, INITIAL_IDEPTH_VARIANCE)
        self.cost = np.full(n, np.inf)
        self.nval = np.zeros(n, dtype=np.int64)
        # per-level pattern samples of the reference frame
        self._lvl = []
        for level in range(self.cfg.pyramid_levels):
            ul, vl = _level_coords(uv[:, 0].astype(float),
                                   uv[:, 1].astype(float), level)
            vals = np.empty((n, 8))
            gws = np.empty((n, 8))
            c2 = self.cfg.grad_weight_c2
            for k, (dx, dy) in enumerate(RESIDUAL_PATTERN):
                vals[:, k] = sample_bilinear_batch(pyramid.levels[level],
                                                   ul + dx, vl + dy)
                gx = sample_bilinear_batch(pyramid.grad_x[level], ul + dx, vl + dy)
                gy = sample_bilinear_batch(pyramid.grad_y[level], ul + dx, vl + dy)
                gws[:, k] = c2 / (c2 + gx * gx + gy * gy)
            self._lvl.append((ul, vl, vals, gws))
        self._warm_T = SE3Pose.identity()
        self.attempts = 0

    def process(self, pyramid: ImagePyramid, timestamp: float, index: int):
        """Feed one frame; returns an initialized Window once parallax suffices."""
        if self.ref is None or self.cand_uv.shape[0] < 32:
            self._set_reference(pyramid, timestamp, index)
            return None
        cfg = self.cfg
        T_rel = self._warm_T
        a_new, b_new = 0.0, 0.0
        exp_ref = self.ref[0].exposure_t
        pat_dx = RESIDUAL_PATTERN[:, 0].copy()
        pat_dy = RESIDUAL_PATTERN[:, 1].copy()

        for sweep in range(2):
            for level in reversed(range(cfg.pyramid_levels)):
                ul, vl, vals, gws = self._lvl[level]
                fx, fy, cx, cy = level_intrinsics(self.cam, level)
                img = pyramid.levels[level]
                # pose step at fixed depths
                lam = 1e-3
                energy = None
                for _ in range(12):
                    rho = pyramid.exposure_t * math.exp(a_new) / exp_ref
                    H, g, e, nv, _, _ = kernels.track_accumulate(
                        img, ul, vl, self.idepth, vals[:, 0], gws[:, 0],
                        T_rel.R, T_rel.t, rho, 0.0, b_new, fx, fy, cx, cy,
                        cfg.huber_photo, True)
                    if nv < 20:
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
                    a_try, b_try = a_new + step[6], b_new + step[7]
                    rho = pyramid.exposure_t * math.exp(a_try) / exp_ref
                    _, _, e2, nv2, _, _ = kernels.track_accumulate(
                        img, ul, vl, self.idepth, vals[:, 0], gws[:, 0],
                        T_try.R, T_try.t, rho, 0.0, b_try, fx, fy, cx, cy,
                        cfg.huber_photo, False)
                    if nv2 >= 20 and e2 <= energy:
                        T_rel, a_new, b_new = T_try, a_try, b_try
                        gain = energy - e2
                        energy = e2
                        lam = max(lam / 3.0, 1e-7)
                        if gain < 1e-5 * max(energy, 1.0):
                            break
                    else:
                        lam = min(lam * 5.0, 1e6)
                # depth update at fixed pose
                rho = pyramid.exposure_t * math.exp(a_new) / exp_ref
                wide = (sweep == 0 and level == cfg.pyramid_levels - 1)
                lo, hi, n_hyp = ((1.0 / 3.0, 3.0, 24) if wide
                                 else (1.0 / 1.4, 1.4, 8))
                d, var, cost, nval = kernels.refine_point_depths(
                    img, ul, vl, self.idepth, vals, gws, T_rel.R, T_rel.t,
                    rho, 0.0, b_new, fx, fy, cx, cy, pat_dx, pat_dy,
                    lo, hi, n_hyp, 4, cfg.huber_photo)
                upd = nval >= 6
                self.idepth = np.where(upd, d, self.idepth)
                self.var = np.where(upd, var, self.var)
                self.cost = np.where(upd, cost, self.cost)
                self.nval = nval

        self._warm_T = T_rel
        parallax = self._median_parallax(T_rel)
        converged = (self.nval >= 6) & (self.cost < 120.0)
        n_ok = int(converged.sum())
        if parallax < cfg.bootstrap_min_parallax or n_ok < max(
                100, self.cand_uv.shape[0] // 6):
            self.attempts += 1
            if self.attempts >= cfg.bootstrap_max_attempts:
                self._set_reference(pyramid, timestamp, index)
            return None
        return self._build_window(pyramid, timestamp, index, T_rel, a_new,
                                  b_new, converged)

    def _median_parallax(self, T_rel) -> float:
        """Median translation-induced pixel displacement at level 0."""
        cam = self.cam
        u = self.cand_uv[:, 0].astype(float)
        v = self.cand_uv[:, 1].astype(float)
        X = np.stack([(u - cam.cx) / cam.fx / self.idepth,
                      (v - cam.cy) / cam.fy / self.idepth,
                      1.0 / self.idepth], axis=-1)
        full = X @ T_rel.R.T + T_rel.t
        rot = X @ T_rel.R.T
        ok = (full[:, 2] > 1e-3) & (rot[:, 2] > 1e-3)
        if ok.sum() < 20:
            return 0.0
        uf = cam.fx * full[ok, 0] / full[ok, 2]
        vf = cam.fy * full[ok, 1] / full[ok, 2]
        ur = cam.fx * rot[ok, 0] / rot[ok, 2]
        vr = cam.fy * rot[ok, 1] / rot[ok, 2]
        return float(np.median(np.hypot(uf - ur, vf - vr)))

    def _build_window(self, pyramid, timestamp, index, T_rel, a_new, b_new,
                      converged) -> Window:
        cfg = self.cfg
        scale = float(self.idepth[converged].mean())
        idepth = self.idepth / scale
        var = self.var / (scale * scale)
        T_rel = SE3Pose(T_rel.R.copy(), T_rel.t * scale)

        window = Window(cam=self.cam, max_kf=cfg.max_kf)
        ref_pyr, ref_ts, ref_idx = self.ref
        kf0 = DirectKeyframe(0, ref_idx, ref_ts, ref_pyr, SE3Pose.identity(),
                             exposure=ref_pyr.exposure_t)
        kf1 = DirectKeyframe(1, index, timestamp, pyramid, T_rel,
                             a=a_new, b=b_new, exposure=pyramid.exposure_t)
        order = np.argsort(self.cost[converged])
        sel = np.nonzero(converged)[0][order][:cfg.active_target]
        for k in sel:
            u, v = float(self.cand_uv[k, 0]), float(self.cand_uv[k, 1])
            vals, gw = sample_host_data(ref_pyr, u, v, cfg.grad_weight_c2)
            kf0.points.append(DirectPoint(window.new_point_id(), 0, u, v,
                                          float(idepth[k]),
                                          float(max(var[k], 1e-8)),
                                          vals, gw, status=STATUS_ACTIVE))
        window.keyframes = [kf0, kf1]
        return window
