"""Pure numpy implementation of the kernel interface.

Mirrors occlusim._kernels function by function.  Used when the compiled
extension is unavailable or when OCCLUSIM_PURE_PYTHON is set; also serves as
the reference implementation in the backend equivalence tests.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_BAND = 5


def cast_rays(ox, oy, angles, segs, max_range, out):
    angles = np.asarray(angles)
    segs = np.asarray(segs)
    n = angles.shape[0]
    if segs.shape[0] == 0:
        out[:] = max_range
        return out
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    ax = (segs[:, 0] - ox)[None, :]
    ay = (segs[:, 1] - oy)[None, :]
    ex = (segs[:, 2] - segs[:, 0])[None, :]
    ey = (segs[:, 3] - segs[:, 1])[None, :]
    denom = dx * ey - dy * ex
    ok = np.abs(denom) >= 1e-15
    safe = np.where(ok, denom, 1.0)
    t = (ax * ey - ay * ex) / safe
    u = (ax * dy - ay * dx) / safe
    hit = ok & (t >= 0.0) & (u >= -1e-12) & (u <= 1.0 + 1e-12)
    t = np.where(hit, t, max_range)
    np.minimum(t.min(axis=1), max_range, out=out[:n])
    return out


def poly_contains_many(verts, pts, eps, out):
    verts = np.asarray(verts)
    pts = np.asarray(pts)
    v2 = np.roll(verts, -1, axis=0)
    x1, y1 = verts[:, 0][None, :], verts[:, 1][None, :]
    x2, y2 = v2[:, 0][None, :], v2[:, 1][None, :]
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    ex = x2 - x1
    ey = y2 - y1
    l2 = ex * ex + ey * ey
    tt = np.clip(((px - x1) * ex + (py - y1) * ey) / np.where(l2 > 0, l2, 1.0),
                 0.0, 1.0)
    ddx = px - (x1 + tt * ex)
    ddy = py - (y1 + tt * ey)
    onedge = ((ddx * ddx + ddy * ddy <= eps * eps) & (l2 > 0)).any(axis=1)
    crosses = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (py - y1) * ex / ey
    inside = (crosses & (xint > px)).sum(axis=1) % 2 == 1
    out[:] = (onedge | inside).astype(np.uint8)
    return out


def star_contains_many(ox, oy, vang, verts, pts, eps, out):
    vang = np.asarray(vang)
    verts = np.asarray(verts)
    pts = np.asarray(pts)
    m = vang.shape[0]
    px = pts[:, 0] - ox
    py = pts[:, 1] - oy
    rq = np.hypot(px, py)
    phi = np.arctan2(py, px)
    ia = np.searchsorted(vang, phi, side="right") - 1
    wrap = (ia < 0) | (ia >= m - 1)
    ia = np.where(wrap, m - 1, ia)
    ib = np.where(wrap, 0, ia + 1)
    nz = rq > 0
    dx = np.where(nz, px / np.where(nz, rq, 1.0), 1.0)
    dy = np.where(nz, py / np.where(nz, rq, 1.0), 0.0)
    ax = verts[ia, 0] - ox
    ay = verts[ia, 1] - oy
    ex = verts[ib, 0] - ox - ax
    ey = verts[ib, 1] - oy - ay
    denom = dx * ey - dy * ex
    radial = np.abs(denom) < 1e-14
    rb = np.where(
        radial,
        np.maximum(np.hypot(ax, ay), np.hypot(ax + ex, ay + ey)),
        (ax * ey - ay * ex) / np.where(radial, 1.0, denom),
    )
    out[:] = ((rq <= rb + eps) | ~nz).astype(np.uint8)
    return out


def frenet_project_many(pts, ref, cum, out_s, out_d):
    pts = np.asarray(pts)
    ref = np.asarray(ref)
    cum = np.asarray(cum)
    p1 = ref[:-1]
    e = ref[1:] - ref[:-1]
    l2 = (e * e).sum(axis=1)
    l2s = np.where(l2 > 0, l2, 1.0)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    tt = np.clip(((px - p1[:, 0]) * e[:, 0] + (py - p1[:, 1]) * e[:, 1]) / l2s,
                 0.0, 1.0)
    qx = px - (p1[:, 0] + tt * e[:, 0])
    qy = py - (p1[:, 1] + tt * e[:, 1])
    d2 = qx * qx + qy * qy
    d2 = np.where(l2 > 0, d2, np.inf)
    # argmin takes the first minimum, keeping ties at the lowest s like the
    # compiled loop
    rows = np.arange(pts.shape[0])
    jfirst = np.argmin(d2, axis=1)
    tt_b = tt[rows, jfirst]
    out_s[:] = cum[jfirst] + tt_b * (cum[jfirst + 1] - cum[jfirst])
    cz = e[jfirst, 0] * qy[rows, jfirst] - e[jfirst, 1] * qx[rows, jfirst]
    dist = np.sqrt(d2[rows, jfirst])
    out_d[:] = np.where(cz < 0, -dist, dist)
    return out_s


def _srq_g_arr(s, ss, se, vmax, T):
    s = np.asarray(s, dtype=float)
    reach = vmax * T
    g = np.zeros_like(s)
    m1 = (s > ss) & (s <= se)
    m2 = (s > se) & (s <= ss + reach)
    m3 = (s > ss + reach) & (s < se + reach)
    g[m1] = 0.5 * (2.0 * vmax - (s[m1] - ss) / T) * (s[m1] - ss)
    g[m2] = 0.5 * (2.0 * vmax - (s[m2] - ss) / T - (s[m2] - se) / T) * (se - ss)
    g[m3] = 0.5 * (vmax - (s[m3] - se) / T) * (se - (s[m3] - reach))
    return g


def srq_g_one(s, ss, se, vmax, T):
    reach = vmax * T
    if s <= ss or s >= se + reach:
        return 0.0
    if s <= se:
        return 0.5 * (2.0 * vmax - (s - ss) / T) * (s - ss)
    if s <= ss + reach:
        return 0.5 * (2.0 * vmax - (s - ss) / T - (s - se) / T) * (se - ss)
    return 0.5 * (vmax - (s - se) / T) * (se - (s - reach))


def srq_g_many(s, ss, se, vmax, T, out):
    out[:] = _srq_g_arr(s, ss, se, vmax, T)
    return out


def ppz_cell_mass(dist, cell, vmax, T, cutoff, out):
    dist = np.asarray(dist)
    h = 0.5 * cell
    out[:] = cell * _srq_g_arr(dist, -h, h, vmax, T)
    out[dist > cutoff] = 0.0
    return out


def _band_to_dense(Lb, n):
    L = np.zeros((n, n))
    for r in range(Lb.shape[0]):
        idx = np.arange(n - r)
        L[idx + r, idx] = Lb[r, : n - r]
    return L


def _build_a(N, dt):
    n = 3 * N
    m = 5 * N
    A = np.zeros((m, n))
    dt2 = dt * dt
    A[0, 0] = 1.0
    A[1, 1] = 1.0
    A[2, 2] = 1.0
    r1 = 3
    r2 = 3 + (N - 1)
    r3 = 3 + 2 * (N - 1)
    r4 = r3 + N
    r5 = r4 + N
    for i in range(N - 1):
        A[r1 + i, 3 * (i + 1)] = 1.0
        A[r1 + i, 3 * i] = -1.0
        A[r1 + i, 3 * i + 1] = -dt
        A[r1 + i, 3 * i + 2] = -dt2 / 3.0
        A[r1 + i, 3 * (i + 1) + 2] = -dt2 / 6.0
        A[r2 + i, 3 * (i + 1) + 1] = 1.0
        A[r2 + i, 3 * i + 1] = -1.0
        A[r2 + i, 3 * i + 2] = -0.5 * dt
        A[r2 + i, 3 * (i + 1) + 2] = -0.5 * dt
    for i in range(N):
        A[r3 + i, 3 * i + 1] = 1.0
        A[r4 + i, 3 * i + 2] = 1.0
    for i in range(N - 1):
        A[r5 + i, 3 * (i + 1) + 2] = 1.0
        A[r5 + i, 3 * i + 2] = -1.0
    return A


def _build_p(N, dt, w_a, w_j, w_v):
    n = 3 * N
    P = np.zeros((n, n))
    cj = 2.0 * w_j / (dt * dt)
    for i in range(N):
        P[3 * i + 1, 3 * i + 1] = 2.0 * w_v
        P[3 * i + 2, 3 * i + 2] = 2.0 * w_a
    for i in range(N - 1):
        P[3 * i + 2, 3 * i + 2] += cj
        P[3 * (i + 1) + 2, 3 * (i + 1) + 2] += cj
        P[3 * i + 2, 3 * (i + 1) + 2] -= cj
        P[3 * (i + 1) + 2, 3 * i + 2] -= cj
    return P


def admm_solve(N, dt, w_a, w_j, w_v, Lb, sigma, alpha, rho, q, lo, hi,
               x, z, y, eps_p, eps_d, max_iter, xt, zt, wn, wm):
    n = 3 * N
    A = _build_a(N, dt)
    P = _build_p(N, dt, w_a, w_j, w_v)
    L = _band_to_dense(np.asarray(Lb), n)
    Linv = np.linalg.inv(L)
    rho = np.asarray(rho)
    q = np.asarray(q)
    lo_a = np.asarray(lo)
    hi_a = np.asarray(hi)
    xv = np.asarray(x)
    zv = np.asarray(z)
    yv = np.asarray(y)
    rp = rd = 0.0
    for it in range(max_iter):
        rhs = sigma * xv - q + A.T @ (rho * zv - yv)
        xt_v = Linv.T @ (Linv @ rhs)
        zt_v = A @ xt_v
        xv[:] = alpha * xt_v + (1.0 - alpha) * xv
        rel = alpha * zt_v + (1.0 - alpha) * zv
        znew = np.clip(rel + yv / rho, lo_a, hi_a)
        yv[:] = yv + rho * (rel - znew)
        zv[:] = znew
        rp = np.abs(A @ xv - zv).max()
        rd = np.abs(P @ xv + q + A.T @ yv).max()
        if rp <= eps_p and rd <= eps_d:
            return it + 1, float(rp), float(rd)
    return max_iter, float(rp), float(rd)
