"""Vectorized pure-numpy fallback for the hot kernels.

Same signatures and semantics as `_numba_impl`; accumulation order differs,
so results agree only to floating-point roundoff.
"""

import numpy as np

_EPS_Z = 1e-6


def render_planes(center, R_wc, fx, fy, cx, cy, width, height,
                  p_origin, p_e1, p_e2, p_n, p_he,
                  t_bias, t_amp, t_freq, t_phase, background):
    ys, xs = np.mgrid[0:height, 0:width]
    dirs_cam = np.stack([(xs - cx) / fx, (ys - cy) / fy, np.ones_like(xs, dtype=float)],
                        axis=-1).reshape(-1, 3)
    dirs = dirs_cam @ R_wc.T
    n_px = dirs.shape[0]
    best_l = np.full(n_px, np.inf)
    best_p = np.full(n_px, -1, dtype=np.int64)
    best_ab = np.zeros((n_px, 2))
    for p in range(p_origin.shape[0]):
        denom = dirs @ p_n[p]
        off = float(p_n[p] @ p_origin[p])
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (off - float(p_n[p] @ center)) / denom
        hit = center[None, :] + lam[:, None] * dirs - p_origin[p]
        a = hit @ p_e1[p]
        b = hit @ p_e2[p]
        ok = ((np.abs(denom) >= 1e-12) & (lam > 1e-3) & (lam < best_l)
              & (np.abs(a) <= p_he[p, 0]) & (np.abs(b) <= p_he[p, 1]))
        best_l[ok] = lam[ok]
        best_p[ok] = p
        best_ab[ok, 0] = a[ok]
        best_ab[ok, 1] = b[ok]
    out = np.full(n_px, float(background))
    idepth = np.zeros(n_px)
    for p in range(p_origin.shape[0]):
        sel = best_p == p
        if not np.any(sel):
            continue
        phase = (2.0 * np.pi * (best_ab[sel] @ t_freq[p].T) + t_phase[p][None, :])
        out[sel] = t_bias[p] + (t_amp[p][None, :] * np.cos(phase)).sum(axis=1)
        idepth[sel] = 1.0 / best_l[sel]
    return out.reshape(height, width), idepth.reshape(height, width)


def _bilinear_many(img, up, vp):
    """Vectorized bilinear value + exact in-cell derivative (callers pre-check bounds)."""
    h, w = img.shape
    x0 = np.minimum(up.astype(np.int64), w - 3)
    y0 = np.minimum(vp.astype(np.int64), h - 3)
    fx = up - x0
    fy = vp - y0
    i00 = img[y0, x0]
    i10 = img[y0, x0 + 1]
    i01 = img[y0 + 1, x0]
    i11 = img[y0 + 1, x0 + 1]
    val = (i00 * (1 - fx) * (1 - fy) + i10 * fx * (1 - fy)
           + i01 * (1 - fx) * fy + i11 * fx * fy)
    gx = (i10 - i00) * (1 - fy) + (i11 - i01) * fy
    gy = (i01 - i00) * (1 - fx) + (i11 - i10) * fx
    return val, gx, gy


def _huber_energy(r, gamma):
    a = np.abs(r)
    return np.where(a <= gamma, r * r, gamma * (2.0 * a - gamma))


def _warp_points(Xi, R, t):
    return Xi @ R.T + t


def accumulate_photometric(images, aff, ratio, R_cur, t_cur, R_lin, t_lin,
                           fx, fy, cx, cy,
                           host_idx, px, py, idepth, host_vals, host_gw,
                           pat_dx, pat_dy, term_point, term_target, huber):
    n_f, h, w = images.shape
    n_p = px.shape[0]
    n_t = term_point.shape[0]
    n_pat = pat_dx.shape[0]
    dim = n_f * 8

    Hff = np.zeros((dim, dim))
    bf = np.zeros(dim)
    hfp = np.zeros((n_p, dim))
    hpp = np.zeros(n_p)
    bp = np.zeros(n_p)
    res = np.zeros((n_t, n_pat))
    wts = np.zeros((n_t, n_pat))
    valid = np.zeros((n_t, n_pat), dtype=np.uint8)
    jf_out = np.zeros((n_t, n_pat, 16))
    jd_out = np.zeros((n_t, n_pat))
    energy = 0.0

    hosts = host_idx[term_point]
    for i in range(n_f):
        for j in range(n_f):
            sel = np.where((hosts == i) & (term_target == j))[0]
            if sel.size == 0:
                continue
            pts = term_point[sel]
            d = idepth[pts][:, None]
            u = px[pts][:, None] + pat_dx[None, :]
            v = py[pts][:, None] + pat_dy[None, :]
            Xi = np.stack([(u - cx) / fx / d, (v - cy) / fy / d,
                           np.broadcast_to(1.0 / d, u.shape)], axis=-1)
            Xc = _warp_points(Xi, R_cur[i, j], t_cur[i, j])
            ok = Xc[..., 2] > _EPS_Z
            zc = np.where(ok, Xc[..., 2], 1.0)
            up = fx * Xc[..., 0] / zc + cx
            vp = fy * Xc[..., 1] / zc + cy
            ok &= (up >= 1.0) & (up <= w - 2.0) & (vp >= 1.0) & (vp <= h - 2.0)
            if not np.any(ok):
                continue
            upv = np.where(ok, up, 1.0)
            vpv = np.where(ok, vp, 1.0)
            val, gx, gy = _bilinear_many(images[j], upv, vpv)
            rho = ratio[i, j]
            r = val - aff[j, 1] - rho * (host_vals[pts] - aff[i, 1])
            ar = np.abs(r)
            hw = np.where(ar <= huber, 1.0, huber / np.maximum(ar, 1e-12))
            gw = host_gw[pts]
            wt = gw * hw
            energy += float((gw * _huber_energy(r, huber))[ok].sum())
            res[sel] = np.where(ok, r, 0.0)
            wts[sel] = np.where(ok, wt, 0.0)
            valid[sel] = ok.astype(np.uint8)

            Xl = _warp_points(Xi, R_lin[i, j], t_lin[i, j])
            zl = np.maximum(Xl[..., 2], _EPS_Z)
            iz = 1.0 / zl
            g0 = gx * fx * iz
            g1 = gy * fy * iz
            g2 = -(gx * fx * Xl[..., 0] + gy * fy * Xl[..., 1]) * iz * iz
            q = np.stack([g0, g1, g2], axis=-1) @ R_lin[i, j]
            J = np.empty(u.shape + (16,))
            J[..., 0] = -q[..., 0]
            J[..., 1] = -q[..., 1]
            J[..., 2] = -q[..., 2]
            J[..., 3] = -(Xi[..., 1] * q[..., 2] - Xi[..., 2] * q[..., 1])
            J[..., 4] = -(Xi[..., 2] * q[..., 0] - Xi[..., 0] * q[..., 2])
            J[..., 5] = -(Xi[..., 0] * q[..., 1] - Xi[..., 1] * q[..., 0])
            J[..., 6] = rho * (host_vals[pts] - aff[i, 1])
            J[..., 7] = rho
            J[..., 8] = g0
            J[..., 9] = g1
            J[..., 10] = g2
            J[..., 11] = Xl[..., 1] * g2 - Xl[..., 2] * g1
            J[..., 12] = Xl[..., 2] * g0 - Xl[..., 0] * g2
            J[..., 13] = Xl[..., 0] * g1 - Xl[..., 1] * g0
            J[..., 14] = -J[..., 6]
            J[..., 15] = -1.0
            Jd = -((g0 * (Xl[..., 0] - t_lin[i, j, 0])
                    + g1 * (Xl[..., 1] - t_lin[i, j, 1])
                    + g2 * (Xl[..., 2] - t_lin[i, j, 2]))
                   / idepth[pts][:, None])

            jf_out[sel] = np.where(ok[..., None], J, 0.0)
            jd_out[sel] = np.where(ok, Jd, 0.0)

            Jok = J[ok]
            wok = wt[ok]
            rok = r[ok]
            Jdok = Jd[ok]
            p_of_px = np.broadcast_to(pts[:, None], ok.shape)[ok]
            cols = np.concatenate([np.arange(i * 8, i * 8 + 8),
                                   np.arange(j * 8, j * 8 + 8)])
            Hff[np.ix_(cols, cols)] += (Jok * wok[:, None]).T @ Jok
            bf[cols] += (Jok * (wok * rok)[:, None]).sum(axis=0)
            block = np.zeros((n_p, 16))
            np.add.at(block, p_of_px, Jok * (wok * Jdok)[:, None])
            hfp[:, cols] += block
            np.add.at(hpp, p_of_px, wok * Jdok * Jdok)
            np.add.at(bp, p_of_px, wok * Jdok * rok)
    return Hff, bf, hfp, hpp, bp, energy, res, wts, valid, jf_out, jd_out


def photometric_energy(images, aff, ratio, R_cur, t_cur,
                       fx, fy, cx, cy,
                       host_idx, px, py, idepth, host_vals, host_gw,
                       pat_dx, pat_dy, term_point, term_target, huber):
    n_f, h, w = images.shape
    n_t = term_point.shape[0]
    energy = 0.0
    n_valid = np.zeros(n_t, dtype=np.int64)
    hosts = host_idx[term_point]
    for i in range(n_f):
        for j in range(n_f):
            sel = np.where((hosts == i) & (term_target == j))[0]
            if sel.size == 0:
                continue
            pts = term_point[sel]
            d = idepth[pts][:, None]
            u = px[pts][:, None] + pat_dx[None, :]
            v = py[pts][:, None] + pat_dy[None, :]
            Xi = np.stack([(u - cx) / fx / d, (v - cy) / fy / d,
                           np.broadcast_to(1.0 / d, u.shape)], axis=-1)
            Xc = _warp_points(Xi, R_cur[i, j], t_cur[i, j])
            ok = Xc[..., 2] > _EPS_Z
            zc = np.where(ok, Xc[..., 2], 1.0)
            up = fx * Xc[..., 0] / zc + cx
            vp = fy * Xc[..., 1] / zc + cy
            ok &= (up >= 1.0) & (up <= w - 2.0) & (vp >= 1.0) & (vp <= h - 2.0)
            if not np.any(ok):
                continue
            val, _, _ = _bilinear_many(images[j], np.where(ok, up, 1.0),
                                       np.where(ok, vp, 1.0))
            r = val - aff[j, 1] - ratio[i, j] * (host_vals[pts] - aff[i, 1])
            energy += float((host_gw[pts] * _huber_energy(r, huber))[ok].sum())
            n_valid[sel] += ok.sum(axis=1)
    return energy, n_valid


def track_accumulate(image, u, v, idepth, ref_vals, ref_gw,
                     R, t, rho, b_ref, b_new, fx, fy, cx, cy, huber,
                     with_jacobian):
    h, w = image.shape
    Xi = np.stack([(u - cx) / fx / idepth, (v - cy) / fy / idepth, 1.0 / idepth],
                  axis=-1)
    Xc = Xi @ R.T + t
    ok = Xc[:, 2] > _EPS_Z
    z = np.where(ok, Xc[:, 2], 1.0)
    up = fx * Xc[:, 0] / z + cx
    vp = fy * Xc[:, 1] / z + cy
    ok &= (up >= 1.0) & (up <= w - 2.0) & (vp >= 1.0) & (vp <= h - 2.0)
    H = np.zeros((8, 8))
    g = np.zeros(8)
    if not np.any(ok):
        return H, g, 0.0, 0, 0.0, 0.0
    val, gx, gy = _bilinear_many(image, up[ok], vp[ok])
    r = val - b_new - rho * (ref_vals[ok] - b_ref)
    ar = np.abs(r)
    hw = np.where(ar <= huber, 1.0, huber / np.maximum(ar, 1e-12))
    wt = ref_gw[ok] * hw
    energy = float((ref_gw[ok] * _huber_energy(r, huber)).sum())
    n_valid = int(ok.sum())
    sq_res = float((r * r).sum())
    du = up[ok] - u[ok]
    dv = vp[ok] - v[ok]
    sq_flow = float((du * du + dv * dv).sum())
    if with_jacobian:
        Z = Xc[ok]
        iz = 1.0 / Z[:, 2]
        g0 = gx * fx * iz
        g1 = gy * fy * iz
        g2 = -(gx * fx * Z[:, 0] + gy * fy * Z[:, 1]) * iz * iz
        J = np.empty((n_valid, 8))
        J[:, 0] = g0
        J[:, 1] = g1
        J[:, 2] = g2
        J[:, 3] = Z[:, 1] * g2 - Z[:, 2] * g1
        J[:, 4] = Z[:, 2] * g0 - Z[:, 0] * g2
        J[:, 5] = Z[:, 0] * g1 - Z[:, 1] * g0
        J[:, 6] = -rho * (ref_vals[ok] - b_ref)
        J[:, 7] = -1.0
        H = (J * wt[:, None]).T @ J
        g = (J * (wt * r)[:, None]).sum(axis=0)
    return H, g, energy, n_valid, sq_res, sq_flow


def _depth_eval(image, u, v, d, host_vals, host_gw, R, t, rho, b_ref, b_new,
                fx, fy, cx, cy, pat_dx, pat_dy, huber):
    """Residual/Jacobian field for (N,) points at per-point inverse depths d."""
    h, w = image.shape
    uu = u[:, None] + pat_dx[None, :]
    vv = v[:, None] + pat_dy[None, :]
    dd = d[:, None]
    Xi = np.stack([(uu - cx) / fx / dd, (vv - cy) / fy / dd,
                   np.broadcast_to(1.0 / dd, uu.shape)], axis=-1)
    Xc = Xi @ R.T + t
    ok = Xc[..., 2] > _EPS_Z
    z = np.where(ok, Xc[..., 2], 1.0)
    up = fx * Xc[..., 0] / z + cx
    vp = fy * Xc[..., 1] / z + cy
    ok &= (up >= 1.0) & (up <= w - 2.0) & (vp >= 1.0) & (vp <= h - 2.0)
    val, gx, gy = _bilinear_many(image, np.where(ok, up, 1.0), np.where(ok, vp, 1.0))
    r = val - b_new - rho * (host_vals - b_ref)
    iz = 1.0 / np.maximum(Xc[..., 2], _EPS_Z)
    g0 = gx * fx * iz
    g1 = gy * fy * iz
    g2 = -(gx * fx * Xc[..., 0] + gy * fy * Xc[..., 1]) * iz * iz
    Jd = -(g0 * (Xc[..., 0] - t[0]) + g1 * (Xc[..., 1] - t[1])
           + g2 * (Xc[..., 2] - t[2])) / dd
    return r, Jd, ok


def refine_point_depths(image, u, v, d_init, host_vals, host_gw,
                        R, t, rho, b_ref, b_new, fx, fy, cx, cy,
                        pat_dx, pat_dy, hyp_lo, hyp_hi, n_hyp, gn_iters, huber):
    n = u.shape[0]
    n_pat = pat_dx.shape[0]
    best_d = d_init.copy()
    best_cost = np.full(n, np.inf)
    log_lo, log_hi = np.log(hyp_lo), np.log(hyp_hi)
    for s in range(n_hyp):
        frac = s / (n_hyp - 1.0) if n_hyp > 1 else 0.5
        d = d_init * np.exp(log_lo + (log_hi - log_lo) * frac)
        r, _, ok = _depth_eval(image, u, v, d, host_vals, host_gw, R, t, rho,
                               b_ref, b_new, fx, fy, cx, cy, pat_dx, pat_dy, huber)
        cost = np.where(ok, host_gw * _huber_energy(r, huber), 0.0).sum(axis=1)
        nval = ok.sum(axis=1)
        mean_cost = np.where(nval > 0, cost / np.maximum(nval, 1), np.inf)
        better = (nval >= n_pat // 2) & (mean_cost < best_cost)
        best_cost = np.where(better, mean_cost, best_cost)
        best_d = np.where(better, d, best_d)

    d = best_d.copy()
    for _ in range(gn_iters):
        r, Jd, ok = _depth_eval(image, u, v, d, host_vals, host_gw, R, t, rho,
                                b_ref, b_new, fx, fy, cx, cy, pat_dx, pat_dy, huber)
        ar = np.abs(r)
        hw = np.where(ar <= huber, 1.0, huber / np.maximum(ar, 1e-12))
        wt = np.where(ok, host_gw * hw, 0.0)
        num = (wt * Jd * r).sum(axis=1)
        curv = (wt * Jd * Jd).sum(axis=1)
        live = curv > 1e-12
        step = np.where(live, -num / np.maximum(curv, 1e-12), 0.0)
        step = np.clip(step, -0.3 * d, 0.3 * d)
        d = np.maximum(d + step, 1e-4)

    r, Jd, ok = _depth_eval(image, u, v, d, host_vals, host_gw, R, t, rho,
                            b_ref, b_new, fx, fy, cx, cy, pat_dx, pat_dy, huber)
    ar = np.abs(r)
    hw = np.where(ar <= huber, 1.0, huber / np.maximum(ar, 1e-12))
    curv = np.where(ok, host_gw * hw * Jd * Jd, 0.0).sum(axis=1)
    cost = np.where(ok, host_gw * _huber_energy(r, huber), 0.0).sum(axis=1)
    nval = ok.sum(axis=1).astype(np.int64)
    var_out = np.where(curv > 1e-12, 1.0 / np.maximum(curv, 1e-12), 1e6)
    cost_out = np.where(nval > 0, cost / np.maximum(nval, 1), np.inf)
    return d, var_out, cost_out, nval


def keypoint_orientations(image, kx, ky, disc_dx, disc_dy):
    h, w = image.shape
    x = np.rint(kx).astype(np.int64)[:, None] + disc_dx[None, :]
    y = np.rint(ky).astype(np.int64)[:, None] + disc_dy[None, :]
    ok = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    vals = np.where(ok, image[np.clip(y, 0, h - 1), np.clip(x, 0, w - 1)], 0.0)
    m10 = (disc_dx[None, :] * vals).sum(axis=1)
    m01 = (disc_dy[None, :] * vals).sum(axis=1)
    return np.arctan2(m01, m10)


def binary_descriptors(image, kx, ky, theta, pairs):
    h, w = image.shape
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    x1 = np.rint(kx[:, None] + c * pairs[None, :, 0] - s * pairs[None, :, 1]).astype(np.int64)
    y1 = np.rint(ky[:, None] + s * pairs[None, :, 0] + c * pairs[None, :, 1]).astype(np.int64)
    x2 = np.rint(kx[:, None] + c * pairs[None, :, 2] - s * pairs[None, :, 3]).astype(np.int64)
    y2 = np.rint(ky[:, None] + s * pairs[None, :, 2] + c * pairs[None, :, 3]).astype(np.int64)
    ok1 = (x1 >= 0) & (x1 < w) & (y1 >= 0) & (y1 < h)
    ok2 = (x2 >= 0) & (x2 < w) & (y2 >= 0) & (y2 < h)
    v1 = np.where(ok1, image[np.clip(y1, 0, h - 1), np.clip(x1, 0, w - 1)], 0.0)
    v2 = np.where(ok2, image[np.clip(y2, 0, h - 1), np.clip(x2, 0, w - 1)], 0.0)
    bits = (v1 < v2).astype(np.uint8)
    return np.packbits(bits, axis=1, bitorder="little")
