"""Numba implementations of the hot kernels.

All loops are serial (no prange): bit-reproducible accumulation order is part
of the determinism contract.
"""

import numpy as np
from numba import njit

_EPS_Z = 1e-6


@njit(cache=True)
def render_planes(center, R_wc, fx, fy, cx, cy, width, height,
                  p_origin, p_e1, p_e2, p_n, p_he,
                  t_bias, t_amp, t_freq, t_phase, background):
    """Ray-cast textured bounded planes: returns (radiance, inverse depth).

    Pixels hitting no plane get the background radiance and inverse depth 0.
    """
    n_planes = p_origin.shape[0]
    out = np.empty((height, width))
    idepth = np.zeros((height, width))
    for yy in range(height):
        for xx in range(width):
            dx = (xx - cx) / fx
            dy = (yy - cy) / fy
            # world ray direction for camera-frame direction (dx, dy, 1)
            wx = R_wc[0, 0] * dx + R_wc[0, 1] * dy + R_wc[0, 2]
            wy = R_wc[1, 0] * dx + R_wc[1, 1] * dy + R_wc[1, 2]
            wz = R_wc[2, 0] * dx + R_wc[2, 1] * dy + R_wc[2, 2]
            best_l = np.inf
            best_p = -1
            best_a = 0.0
            best_b = 0.0
            for p in range(n_planes):
                nx, ny, nz = p_n[p, 0], p_n[p, 1], p_n[p, 2]
                denom = nx * wx + ny * wy + nz * wz
                if abs(denom) < 1e-12:
                    continue
                off = (nx * p_origin[p, 0] + ny * p_origin[p, 1]
                       + nz * p_origin[p, 2])
                lam = (off - (nx * center[0] + ny * center[1] + nz * center[2])) / denom
                if lam <= 1e-3 or lam >= best_l:
                    continue
                hx = center[0] + lam * wx - p_origin[p, 0]
                hy = center[1] + lam * wy - p_origin[p, 1]
                hz = center[2] + lam * wz - p_origin[p, 2]
                a = hx * p_e1[p, 0] + hy * p_e1[p, 1] + hz * p_e1[p, 2]
                b = hx * p_e2[p, 0] + hy * p_e2[p, 1] + hz * p_e2[p, 2]
                if abs(a) > p_he[p, 0] or abs(b) > p_he[p, 1]:
                    continue
                best_l = lam
                best_p = p
                best_a = a
                best_b = b
            if best_p < 0:
                out[yy, xx] = background
            else:
                val = t_bias[best_p]
                for k in range(t_amp.shape[1]):
                    val += t_amp[best_p, k] * np.cos(
                        2.0 * np.pi * (t_freq[best_p, k, 0] * best_a
                                       + t_freq[best_p, k, 1] * best_b)
                        + t_phase[best_p, k])
                out[yy, xx] = val
                idepth[yy, xx] = 1.0 / best_l
    return out, idepth


@njit(cache=True, inline="always")
def _bilinear_cell(img, up, vp, h, w):
    """Bilinear value and exact in-cell derivative at a strictly interior point."""
    x0 = int(up)
    y0 = int(vp)
    if x0 > w - 3:
        x0 = w - 3
    if y0 > h - 3:
        y0 = h - 3
    fxw = up - x0
    fyw = vp - y0
    i00 = img[y0, x0]
    i10 = img[y0, x0 + 1]
    i01 = img[y0 + 1, x0]
    i11 = img[y0 + 1, x0 + 1]
    val = (i00 * (1.0 - fxw) * (1.0 - fyw) + i10 * fxw * (1.0 - fyw)
           + i01 * (1.0 - fxw) * fyw + i11 * fxw * fyw)
    gx = (i10 - i00) * (1.0 - fyw) + (i11 - i01) * fyw
    gy = (i01 - i00) * (1.0 - fxw) + (i11 - i10) * fxw
    return val, gx, gy


@njit(cache=True, inline="always")
def _huber_energy(r, gamma):
    a = abs(r)
    if a <= gamma:
        return r * r
    return gamma * (2.0 * a - gamma)


@njit(cache=True)
def accumulate_photometric(images, aff, ratio, R_cur, t_cur, R_lin, t_lin,
                           fx, fy, cx, cy,
                           host_idx, px, py, idepth, host_vals, host_gw,
                           pat_dx, pat_dy, term_point, term_target, huber):
    """Gauss-Newton system of the windowed photometric energy.

    Frame states are 8 per frame in order (v, w, a, b); depth columns are kept
    separate per point for the Schur complement.  Residuals use current
    states; geometric Jacobian factors use the provided linearization states.
    Returns (Hff, bf, hfp, hpp, bp, energy, res, wts, valid, jf, jd) where
    jf[t, k] is the 16-column (host 8 | target 8) Jacobian row of pattern
    pixel k of term t and jd the inverse-depth column; the normal equations
    are accumulated from exactly these rows.
    """
    n_f = images.shape[0]
    n_p = px.shape[0]
    n_t = term_point.shape[0]
    n_pat = pat_dx.shape[0]
    h = images.shape[1]
    w = images.shape[2]
    dim = n_f * 8

    Hff = np.zeros((dim, dim))
    bf = np.zeros(dim)
    hfp = np.zeros((n_p, dim))
    hpp = np.zeros(n_p)
    bp = np.zeros(n_p)
    res = np.zeros((n_t, n_pat))
    wts = np.zeros((n_t, n_pat))
    valid = np.zeros((n_t, n_pat), dtype=np.uint8)
    jf = np.zeros((n_t, n_pat, 16))
    jd = np.zeros((n_t, n_pat))
    energy = 0.0
    Jf = np.empty(16)
    cols = np.empty(16, dtype=np.int64)

    for t_i in range(n_t):
        p = term_point[t_i]
        i = host_idx[p]
        j = term_target[t_i]
        rho = ratio[i, j]
        b_i = aff[i, 1]
        b_j = aff[j, 1]
        d = idepth[p]
        for k in range(n_pat):
            xin = ((px[p] + pat_dx[k]) - cx) / fx
            yin = ((py[p] + pat_dy[k]) - cy) / fy
            # host-frame point at inverse depth d
            Xi0 = xin / d
            Xi1 = yin / d
            Xi2 = 1.0 / d
            Xc0 = R_cur[i, j, 0, 0] * Xi0 + R_cur[i, j, 0, 1] * Xi1 + R_cur[i, j, 0, 2] * Xi2 + t_cur[i, j, 0]
            Xc1 = R_cur[i, j, 1, 0] * Xi0 + R_cur[i, j, 1, 1] * Xi1 + R_cur[i, j, 1, 2] * Xi2 + t_cur[i, j, 1]
            Xc2 = R_cur[i, j, 2, 0] * Xi0 + R_cur[i, j, 2, 1] * Xi1 + R_cur[i, j, 2, 2] * Xi2 + t_cur[i, j, 2]
            if Xc2 <= _EPS_Z:
                continue
            up = fx * Xc0 / Xc2 + cx
            vp = fy * Xc1 / Xc2 + cy
            if up < 1.0 or up > w - 2.0 or vp < 1.0 or vp > h - 2.0:
                continue
            val, gx, gy = _bilinear_cell(images[j], up, vp, h, w)
            r = val - b_j - rho * (host_vals[p, k] - b_i)
            ar = abs(r)
            hw = 1.0 if ar <= huber else huber / ar
            gw = host_gw[p, k]
            wt = gw * hw
            energy += gw * _huber_energy(r, huber)
            res[t_i, k] = r
            wts[t_i, k] = wt
            valid[t_i, k] = 1

            # geometric chain at the linearization states
            Xl0 = R_lin[i, j, 0, 0] * Xi0 + R_lin[i, j, 0, 1] * Xi1 + R_lin[i, j, 0, 2] * Xi2 + t_lin[i, j, 0]
            Xl1 = R_lin[i, j, 1, 0] * Xi0 + R_lin[i, j, 1, 1] * Xi1 + R_lin[i, j, 1, 2] * Xi2 + t_lin[i, j, 1]
            Xl2 = R_lin[i, j, 2, 0] * Xi0 + R_lin[i, j, 2, 1] * Xi1 + R_lin[i, j, 2, 2] * Xi2 + t_lin[i, j, 2]
            if Xl2 <= _EPS_Z:
                Xl2 = _EPS_Z
            iz = 1.0 / Xl2
            # g3 = (gx, gy) @ dprojection/dX
            g0 = gx * fx * iz
            g1 = gy * fy * iz
            g2 = -(gx * fx * Xl0 + gy * fy * Xl1) * iz * iz
            # target pose: dr/dv_j = g3, dr/dw_j = Xl x g3
            Jf[8] = g0
            Jf[9] = g1
            Jf[10] = g2
            Jf[11] = Xl1 * g2 - Xl2 * g1
            Jf[12] = Xl2 * g0 - Xl0 * g2
            Jf[13] = Xl0 * g1 - Xl1 * g0
            # host pose: q = R_lin^T g3; dr/dv_i = -q, dr/dw_i = -(Xi x q)
            q0 = R_lin[i, j, 0, 0] * g0 + R_lin[i, j, 1, 0] * g1 + R_lin[i, j, 2, 0] * g2
            q1 = R_lin[i, j, 0, 1] * g0 + R_lin[i, j, 1, 1] * g1 + R_lin[i, j, 2, 1] * g2
            q2 = R_lin[i, j, 0, 2] * g0 + R_lin[i, j, 1, 2] * g1 + R_lin[i, j, 2, 2] * g2
            Jf[0] = -q0
            Jf[1] = -q1
            Jf[2] = -q2
            Jf[3] = -(Xi1 * q2 - Xi2 * q1)
            Jf[4] = -(Xi2 * q0 - Xi0 * q2)
            Jf[5] = -(Xi0 * q1 - Xi1 * q0)
            # affine: host (a_i, b_i) then target (a_j, b_j)
            Jf[6] = rho * (host_vals[p, k] - b_i)
            Jf[7] = rho
            Jf[14] = -Jf[6]
            Jf[15] = -1.0
            # depth
            Jd = -(g0 * (Xl0 - t_lin[i, j, 0]) + g1 * (Xl1 - t_lin[i, j, 1])
                   + g2 * (Xl2 - t_lin[i, j, 2])) / d

            for m in range(16):
                jf[t_i, k, m] = Jf[m]
            jd[t_i, k] = Jd

            for m in range(8):
                cols[m] = i * 8 + m
                cols[8 + m] = j * 8 + m
            for m in range(16):
                wjm = wt * Jf[m]
                cm = cols[m]
                bf[cm] += wjm * r
                for n in range(16):
                    Hff[cm, cols[n]] += wjm * Jf[n]
                hfp[p, cm] += wjm * Jd
            hpp[p] += wt * Jd * Jd
            bp[p] += wt * Jd * r
    return Hff, bf, hfp, hpp, bp, energy, res, wts, valid, jf, jd


@njit(cache=True)
def photometric_energy(images, aff, ratio, R_cur, t_cur,
                       fx, fy, cx, cy,
                       host_idx, px, py, idepth, host_vals, host_gw,
                       pat_dx, pat_dy, term_point, term_target, huber):
    """Photometric energy and per-term valid-pixel counts at the current states."""
    n_t = term_point.shape[0]
    n_pat = pat_dx.shape[0]
    h = images.shape[1]
    w = images.shape[2]
    energy = 0.0
    n_valid = np.zeros(n_t, dtype=np.int64)
    for t_i in range(n_t):
        p = term_point[t_i]
        i = host_idx[p]
        j = term_target[t_i]
        rho = ratio[i, j]
        b_i = aff[i, 1]
        b_j = aff[j, 1]
        d = idepth[p]
        for k in range(n_pat):
            Xi0 = ((px[p] + pat_dx[k]) - cx) / fx / d
            Xi1 = ((py[p] + pat_dy[k]) - cy) / fy / d
            Xi2 = 1.0 / d
            Xc2 = R_cur[i, j, 2, 0] * Xi0 + R_cur[i, j, 2, 1] * Xi1 + R_cur[i, j, 2, 2] * Xi2 + t_cur[i, j, 2]
            if Xc2 <= _EPS_Z:
                continue
            Xc0 = R_cur[i, j, 0, 0] * Xi0 + R_cur[i, j, 0, 1] * Xi1 + R_cur[i, j, 0, 2] * Xi2 + t_cur[i, j, 0]
            Xc1 = R_cur[i, j, 1, 0] * Xi0 + R_cur[i, j, 1, 1] * Xi1 + R_cur[i, j, 1, 2] * Xi2 + t_cur[i, j, 1]
            up = fx * Xc0 / Xc2 + cx
            vp = fy * Xc1 / Xc2 + cy
            if up < 1.0 or up > w - 2.0 or vp < 1.0 or vp > h - 2.0:
                continue
            val, gx, gy = _bilinear_cell(images[j], up, vp, h, w)
            r = val - b_j - rho * (host_vals[p, k] - b_i)
            energy += host_gw[p, k] * _huber_energy(r, huber)
            n_valid[t_i] += 1
    return energy, n_valid


@njit(cache=True)
def track_accumulate(image, u, v, idepth, ref_vals, ref_gw,
                     R, t, rho, b_ref, b_new, fx, fy, cx, cy, huber,
                     with_jacobian):
    """Direct-alignment GN system of a frame against a semi-dense point set.

    State is (v, w, a, b) of the new frame; the reference frame is fixed.
    Returns (H, b, energy, n_valid, sq_res_sum, sq_flow_sum).
    """
    n = u.shape[0]
    h = image.shape[0]
    w = image.shape[1]
    H = np.zeros((8, 8))
    g = np.zeros(8)
    J = np.empty(8)
    energy = 0.0
    n_valid = 0
    sq_res = 0.0
    sq_flow = 0.0
    for p in range(n):
        d = idepth[p]
        X0 = (u[p] - cx) / fx / d
        X1 = (v[p] - cy) / fy / d
        X2 = 1.0 / d
        Z0 = R[0, 0] * X0 + R[0, 1] * X1 + R[0, 2] * X2 + t[0]
        Z1 = R[1, 0] * X0 + R[1, 1] * X1 + R[1, 2] * X2 + t[1]
        Z2 = R[2, 0] * X0 + R[2, 1] * X1 + R[2, 2] * X2 + t[2]
        if Z2 <= _EPS_Z:
            continue
        up = fx * Z0 / Z2 + cx
        vp = fy * Z1 / Z2 + cy
        if up < 1.0 or up > w - 2.0 or vp < 1.0 or vp > h - 2.0:
            continue
        val, gx, gy = _bilinear_cell(image, up, vp, h, w)
        r = val - b_new - rho * (ref_vals[p] - b_ref)
        ar = abs(r)
        hw = 1.0 if ar <= huber else huber / ar
        wt = ref_gw[p] * hw
        energy += ref_gw[p] * _huber_energy(r, huber)
        n_valid += 1
        sq_res += r * r
        du = up - u[p]
        dv = vp - v[p]
        sq_flow += du * du + dv * dv
        if with_jacobian:
            iz = 1.0 / Z2
            g0 = gx * fx * iz
            g1 = gy * fy * iz
            g2 = -(gx * fx * Z0 + gy * fy * Z1) * iz * iz
            J[0] = g0
            J[1] = g1
            J[2] = g2
            J[3] = Z1 * g2 - Z2 * g1
            J[4] = Z2 * g0 - Z0 * g2
            J[5] = Z0 * g1 - Z1 * g0
            J[6] = -rho * (ref_vals[p] - b_ref)
            J[7] = -1.0
            for m in range(8):
                wjm = wt * J[m]
                g[m] += wjm * r
                for q in range(8):
                    H[m, q] += wjm * J[q]
    return H, g, energy, n_valid, sq_res, sq_flow


@njit(cache=True)
def refine_point_depths(image, u, v, d_init, host_vals, host_gw,
                        R, t, rho, b_ref, b_new, fx, fy, cx, cy,
                        pat_dx, pat_dy, hyp_lo, hyp_hi, n_hyp, gn_iters, huber):
    """Per-point inverse-depth estimation against one target frame.

    Scans n_hyp log-spaced hypotheses in [d*hyp_lo, d*hyp_hi], then polishes
    with 1-D Gauss-Newton.  Returns (d_out, var_out, cost_out, nval_out); the
    variance is the GN one (inverse curvature), cost the mean Huber residual
    energy per valid pixel, nval the valid-pixel count at the solution.
    """
    n = u.shape[0]
    n_pat = pat_dx.shape[0]
    h = image.shape[0]
    w = image.shape[1]
    d_out = np.empty(n)
    var_out = np.empty(n)
    cost_out = np.empty(n)
    nval_out = np.zeros(n, dtype=np.int64)
    log_lo = np.log(hyp_lo)
    log_hi = np.log(hyp_hi)
    for p in range(n):
        best_d = d_init[p]
        best_cost = np.inf
        for s in range(n_hyp):
            frac = s / (n_hyp - 1.0) if n_hyp > 1 else 0.5
            d = d_init[p] * np.exp(log_lo + (log_hi - log_lo) * frac)
            cost = 0.0
            nval = 0
            for k in range(n_pat):
                X0 = ((u[p] + pat_dx[k]) - cx) / fx / d
                X1 = ((v[p] + pat_dy[k]) - cy) / fy / d
                X2 = 1.0 / d
                Z2 = R[2, 0] * X0 + R[2, 1] * X1 + R[2, 2] * X2 + t[2]
                if Z2 <= _EPS_Z:
                    continue
                Z0 = R[0, 0] * X0 + R[0, 1] * X1 + R[0, 2] * X2 + t[0]
                Z1 = R[1, 0] * X0 + R[1, 1] * X1 + R[1, 2] * X2 + t[1]
                up = fx * Z0 / Z2 + cx
                vp = fy * Z1 / Z2 + cy
                if up < 1.0 or up > w - 2.0 or vp < 1.0 or vp > h - 2.0:
                    continue
                val, gx, gy = _bilinear_cell(image, up, vp, h, w)
                r = val - b_new - rho * (host_vals[p, k] - b_ref)
                cost += host_gw[p, k] * _huber_energy(r, huber)
                nval += 1
            if nval >= n_pat // 2 and cost / nval < best_cost:
                best_cost = cost / nval
                best_d = d
        # 1-D Gauss-Newton polish (fixed iteration count, same as the numpy path)
        d = best_d
        for _ in range(gn_iters):
            num = 0.0
            curv = 0.0
            for k in range(n_pat):
                X0 = ((u[p] + pat_dx[k]) - cx) / fx / d
                X1 = ((v[p] + pat_dy[k]) - cy) / fy / d
                X2 = 1.0 / d
                Z2 = R[2, 0] * X0 + R[2, 1] * X1 + R[2, 2] * X2 + t[2]
                if Z2 <= _EPS_Z:
                    continue
                Z0 = R[0, 0] * X0 + R[0, 1] * X1 + R[0, 2] * X2 + t[0]
                Z1 = R[1, 0] * X0 + R[1, 1] * X1 + R[1, 2] * X2 + t[1]
                up = fx * Z0 / Z2 + cx
                vp = fy * Z1 / Z2 + cy
                if up < 1.0 or up > w - 2.0 or vp < 1.0 or vp > h - 2.0:
                    continue
                val, gx, gy = _bilinear_cell(image, up, vp, h, w)
                r = val - b_new - rho * (host_vals[p, k] - b_ref)
                iz = 1.0 / Z2
                g0 = gx * fx * iz
                g1 = gy * fy * iz
                g2 = -(gx * fx * Z0 + gy * fy * Z1) * iz * iz
                Jd = -(g0 * (Z0 - t[0]) + g1 * (Z1 - t[1]) + g2 * (Z2 - t[2])) / d
                ar = abs(r)
                hw = 1.0 if ar <= huber else huber / ar
                wt = host_gw[p, k] * hw
                num += wt * Jd * r
                curv += wt * Jd * Jd
            if curv > 1e-12:
                step = -num / curv
                max_step = 0.3 * d
                if step > max_step:
                    step = max_step
                elif step < -max_step:
                    step = -max_step
                d = d + step
                if d < 1e-4:
                    d = 1e-4
        # final cost, curvature and validity at the solution
        cost = 0.0
        curv = 0.0
        nval = 0
        for k in range(n_pat):
            X0 = ((u[p] + pat_dx[k]) - cx) / fx / d
            X1 = ((v[p] + pat_dy[k]) - cy) / fy / d
            X2 = 1.0 / d
            Z2 = R[2, 0] * X0 + R[2, 1] * X1 + R[2, 2] * X2 + t[2]
            if Z2 > _EPS_Z:
                Z0 = R[0, 0] * X0 + R[0, 1] * X1 + R[0, 2] * X2 + t[0]
                Z1 = R[1, 0] * X0 + R[1, 1] * X1 + R[1, 2] * X2 + t[1]
                up = fx * Z0 / Z2 + cx
                vp = fy * Z1 / Z2 + cy
                if 1.0 <= up <= w - 2.0 and 1.0 <= vp <= h - 2.0:
                    val, gx, gy = _bilinear_cell(image, up, vp, h, w)
                    r = val - b_new - rho * (host_vals[p, k] - b_ref)
                    iz = 1.0 / Z2
                    g0 = gx * fx * iz
                    g1 = gy * fy * iz
                    g2 = -(gx * fx * Z0 + gy * fy * Z1) * iz * iz
                    Jd = -(g0 * (Z0 - t[0]) + g1 * (Z1 - t[1]) + g2 * (Z2 - t[2])) / d
                    ar = abs(r)
                    hw = 1.0 if ar <= huber else huber / ar
                    curv += host_gw[p, k] * hw * Jd * Jd
                    cost += host_gw[p, k] * _huber_energy(r, huber)
                    nval += 1
        d_out[p] = d
        var_out[p] = 1.0 / curv if curv > 1e-12 else 1e6
        cost_out[p] = cost / nval if nval > 0 else np.inf
        nval_out[p] = nval
    return d_out, var_out, cost_out, nval_out


@njit(cache=True)
def keypoint_orientations(image, kx, ky, disc_dx, disc_dy):
    """Intensity-centroid orientation of each keypoint patch."""
    n = kx.shape[0]
    h = image.shape[0]
    w = image.shape[1]
    theta = np.zeros(n)
    for i in range(n):
        m10 = 0.0
        m01 = 0.0
        x0 = int(round(kx[i]))
        y0 = int(round(ky[i]))
        for k in range(disc_dx.shape[0]):
            x = x0 + disc_dx[k]
            y = y0 + disc_dy[k]
            if x < 0 or x >= w or y < 0 or y >= h:
                continue
            val = image[y, x]
            m10 += disc_dx[k] * val
            m01 += disc_dy[k] * val
        theta[i] = np.arctan2(m01, m10)
    return theta


@njit(cache=True)
def binary_descriptors(image, kx, ky, theta, pairs):
    """256-bit binary descriptors from rotated pseudo-random pixel-pair tests."""
    n = kx.shape[0]
    h = image.shape[0]
    w = image.shape[1]
    desc = np.zeros((n, 32), dtype=np.uint8)
    for i in range(n):
        c = np.cos(theta[i])
        s = np.sin(theta[i])
        x0 = kx[i]
        y0 = ky[i]
        for b in range(256):
            ax = pairs[b, 0]
            ay = pairs[b, 1]
            bx = pairs[b, 2]
            by = pairs[b, 3]
            x1 = int(round(x0 + c * ax - s * ay))
            y1 = int(round(y0 + s * ax + c * ay))
            x2 = int(round(x0 + c * bx - s * by))
            y2 = int(round(y0 + s * bx + c * by))
            v1 = image[y1, x1] if 0 <= x1 < w and 0 <= y1 < h else 0.0
            v2 = image[y2, x2] if 0 <= x2 < w and 0 <= y2 < h else 0.0
            if v1 < v2:
                desc[i, b >> 3] |= np.uint8(1 << (b & 7))
    return desc
