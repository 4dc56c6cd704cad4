# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numeric kernels.

Hot loops for ray casting, polygon membership, Frenet projection, the
reachability mass function and the ADMM iteration of the speed planner.
`occlusim._kernels_py` provides a drop-in numpy implementation of the same
interface; `occlusim.kernels` picks one at import time.
"""

from libc.math cimport atan2, cos, fabs, sin, sqrt

import numpy as np

BACKEND_NAME = "compiled"

DEF BAND = 5  # half bandwidth of the planner normal matrix


def cast_rays(double ox, double oy, double[::1] angles, double[:, ::1] segs,
              double max_range, double[::1] out):
    """Distance from (ox, oy) along each angle to the nearest segment hit.

    Rays that hit nothing are reported at max_range.  segs rows are
    (x1, y1, x2, y2).
    """
    cdef Py_ssize_t n = angles.shape[0]
    cdef Py_ssize_t m = segs.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, ax, ay, ex, ey, denom, t, u, best
    for i in range(n):
        dx = cos(angles[i])
        dy = sin(angles[i])
        best = max_range
        for j in range(m):
            ax = segs[j, 0] - ox
            ay = segs[j, 1] - oy
            ex = segs[j, 2] - segs[j, 0]
            ey = segs[j, 3] - segs[j, 1]
            denom = dx * ey - dy * ex
            if fabs(denom) < 1e-15:
                continue
            t = (ax * ey - ay * ex) / denom
            u = (ax * dy - ay * dx) / denom
            if t >= 0.0 and -1e-12 <= u <= 1.0 + 1e-12:
                if t < best:
                    best = t
        out[i] = best
    return out


def poly_contains_many(double[:, ::1] verts, double[:, ::1] pts, double eps,
                       unsigned char[::1] out):
    """Boundary-inclusive point-in-polygon (crossing test) for a batch."""
    cdef Py_ssize_t m = verts.shape[0]
    cdef Py_ssize_t k = pts.shape[0]
    cdef Py_ssize_t i, j, jn
    cdef double px, py, x1, y1, x2, y2, ex, ey, l2, tt, ddx, ddy, xint
    cdef double eps2 = eps * eps
    cdef bint inside, onedge
    for i in range(k):
        px = pts[i, 0]
        py = pts[i, 1]
        inside = False
        onedge = False
        for j in range(m):
            jn = j + 1
            if jn == m:
                jn = 0
            x1 = verts[j, 0]
            y1 = verts[j, 1]
            x2 = verts[jn, 0]
            y2 = verts[jn, 1]
            ex = x2 - x1
            ey = y2 - y1
            l2 = ex * ex + ey * ey
            if l2 > 0.0:
                tt = ((px - x1) * ex + (py - y1) * ey) / l2
                if tt < 0.0:
                    tt = 0.0
                elif tt > 1.0:
                    tt = 1.0
                ddx = px - (x1 + tt * ex)
                ddy = py - (y1 + tt * ey)
                if ddx * ddx + ddy * ddy <= eps2:
                    onedge = True
                    break
            if (y1 > py) != (y2 > py):
                xint = x1 + (py - y1) * ex / ey
                if xint > px:
                    inside = not inside
        out[i] = 1 if (onedge or inside) else 0
    return out


def star_contains_many(double ox, double oy, double[::1] vang,
                       double[:, ::1] verts, double[:, ::1] pts, double eps,
                       unsigned char[::1] out):
    """Membership test for a star-shaped polygon around (ox, oy).

    vang holds the vertex angles sorted ascending in (-pi, pi]; verts are the
    matching vertices.  A point is inside when its radius does not exceed the
    boundary chord radius along its bearing (plus eps).
    """
    cdef Py_ssize_t m = vang.shape[0]
    cdef Py_ssize_t k = pts.shape[0]
    cdef Py_ssize_t i, lo, hi, mid, ia, ib
    cdef double px, py, phi, rq, dx, dy, ax, ay, ex, ey, denom, rb, ra, rb2
    for i in range(k):
        px = pts[i, 0] - ox
        py = pts[i, 1] - oy
        rq = sqrt(px * px + py * py)
        if rq == 0.0:
            out[i] = 1
            continue
        phi = atan2(py, px)
        # chord (ia, ib) spanning phi; vang is sorted so wrap-around is the
        # only special case
        if phi < vang[0] or phi >= vang[m - 1]:
            ia = m - 1
            ib = 0
        else:
            lo = 0
            hi = m - 1
            while hi - lo > 1:
                mid = (lo + hi) >> 1
                if vang[mid] <= phi:
                    lo = mid
                else:
                    hi = mid
            ia = lo
            ib = hi
        dx = px / rq
        dy = py / rq
        ax = verts[ia, 0] - ox
        ay = verts[ia, 1] - oy
        ex = verts[ib, 0] - ox - ax
        ey = verts[ib, 1] - oy - ay
        denom = dx * ey - dy * ex
        if fabs(denom) < 1e-14:
            # radial chord: visible out to the farther endpoint
            ra = sqrt(ax * ax + ay * ay)
            rb2 = sqrt((ax + ex) * (ax + ex) + (ay + ey) * (ay + ey))
            rb = ra if ra > rb2 else rb2
        else:
            rb = (ax * ey - ay * ex) / denom
        out[i] = 1 if rq <= rb + eps else 0
    return out


def frenet_project_many(double[:, ::1] pts, double[:, ::1] ref,
                        double[::1] cum, double[::1] out_s,
                        double[::1] out_d):
    """Project points onto a polyline: arc position s and signed offset d.

    d is positive to the left of the local tangent.  Ties go to the lowest s.
    """
    cdef Py_ssize_t nseg = ref.shape[0] - 1
    cdef Py_ssize_t k = pts.shape[0]
    cdef Py_ssize_t i, j
    cdef double px, py, ex, ey, l2, tt, qx, qy, d2, best, bs, cz, bcz
    for i in range(k):
        px = pts[i, 0]
        py = pts[i, 1]
        best = 1e300
        bs = 0.0
        bcz = 0.0
        for j in range(nseg):
            ex = ref[j + 1, 0] - ref[j, 0]
            ey = ref[j + 1, 1] - ref[j, 1]
            l2 = ex * ex + ey * ey
            if l2 <= 0.0:
                continue
            tt = ((px - ref[j, 0]) * ex + (py - ref[j, 1]) * ey) / l2
            if tt < 0.0:
                tt = 0.0
            elif tt > 1.0:
                tt = 1.0
            qx = px - (ref[j, 0] + tt * ex)
            qy = py - (ref[j, 1] + tt * ey)
            d2 = qx * qx + qy * qy
            if d2 < best - 1e-15:
                best = d2
                bs = cum[j] + tt * (cum[j + 1] - cum[j])
                bcz = ex * qy - ey * qx
        out_s[i] = bs
        if bcz > 0.0:
            out_d[i] = sqrt(best)
        elif bcz < 0.0:
            out_d[i] = -sqrt(best)
        else:
            out_d[i] = sqrt(best)
    return out_s


cdef inline double _srq_g(double s, double ss, double se, double vmax,
                          double T) nogil:
    cdef double reach = vmax * T
    if s <= ss or s >= se + reach:
        return 0.0
    if s <= se:
        return 0.5 * (2.0 * vmax - (s - ss) / T) * (s - ss)
    if s <= ss + reach:
        return 0.5 * (2.0 * vmax - (s - ss) / T - (s - se) / T) * (se - ss)
    return 0.5 * (vmax - (s - se) / T) * (se - (s - reach))


def srq_g_one(double s, double ss, double se, double vmax, double T):
    """Reachability mass at arc position s for an occluded interval."""
    return _srq_g(s, ss, se, vmax, T)


def srq_g_many(double[::1] s, double ss, double se, double vmax, double T,
               double[::1] out):
    cdef Py_ssize_t i
    for i in range(s.shape[0]):
        out[i] = _srq_g(s[i], ss, se, vmax, T)
    return out


def ppz_cell_mass(double[::1] dist, double cell, double vmax, double T,
                  double cutoff, double[::1] out):
    """Occlusion mass o for phantom-pedestrian cells at given distances.

    Each cell is a degenerate occluded interval of length `cell` centred at
    the origin of its own approach coordinate; the conflict point sits at the
    cell-to-route distance.
    """
    cdef Py_ssize_t i
    cdef double h = 0.5 * cell
    for i in range(dist.shape[0]):
        if dist[i] > cutoff:
            out[i] = 0.0
        else:
            out[i] = cell * _srq_g(dist[i], -h, h, vmax, T)
    return out


# ---------------------------------------------------------------------------
# ADMM iteration for the piecewise-jerk speed QP.
#
# Decision vector x interleaves the knots as (s_i, v_i, a_i) so that the
# normal matrix M = P + sigma*I + A' diag(rho) A is banded with half
# bandwidth 5.  A is never stored; its action is hardcoded from the row
# layout below.
#
# rows 0..2                      initial state equalities
# rows 3..3+(N-1)-1              position dynamics equalities
# rows ..+(N-1)                  velocity dynamics equalities
# rows ..+N                      velocity box
# rows ..+N                      acceleration box
# rows ..+(N-1)                  jerk box (scaled by dt)
# ---------------------------------------------------------------------------

cdef void _a_mul(int N, double dt, double* x, double* out) nogil:
    cdef int i, r1, r2, r3, r4, r5
    cdef double dt2 = dt * dt
    r1 = 3
    r2 = 3 + (N - 1)
    r3 = 3 + 2 * (N - 1)
    r4 = r3 + N
    r5 = r4 + N
    out[0] = x[0]
    out[1] = x[1]
    out[2] = x[2]
    for i in range(N - 1):
        out[r1 + i] = (x[3 * (i + 1)] - x[3 * i] - dt * x[3 * i + 1]
                       - dt2 / 3.0 * x[3 * i + 2]
                       - dt2 / 6.0 * x[3 * (i + 1) + 2])
        out[r2 + i] = (x[3 * (i + 1) + 1] - x[3 * i + 1]
                       - 0.5 * dt * (x[3 * i + 2] + x[3 * (i + 1) + 2]))
    for i in range(N):
        out[r3 + i] = x[3 * i + 1]
        out[r4 + i] = x[3 * i + 2]
    for i in range(N - 1):
        out[r5 + i] = x[3 * (i + 1) + 2] - x[3 * i + 2]


cdef void _at_mul(int N, double dt, double* v, double* out) nogil:
    cdef int i, r1, r2, r3, r4, r5
    cdef double dt2 = dt * dt
    cdef double a, b, c
    r1 = 3
    r2 = 3 + (N - 1)
    r3 = 3 + 2 * (N - 1)
    r4 = r3 + N
    r5 = r4 + N
    for i in range(3 * N):
        out[i] = 0.0
    out[0] += v[0]
    out[1] += v[1]
    out[2] += v[2]
    for i in range(N - 1):
        a = v[r1 + i]
        out[3 * (i + 1)] += a
        out[3 * i] -= a
        out[3 * i + 1] -= dt * a
        out[3 * i + 2] -= dt2 / 3.0 * a
        out[3 * (i + 1) + 2] -= dt2 / 6.0 * a
        b = v[r2 + i]
        out[3 * (i + 1) + 1] += b
        out[3 * i + 1] -= b
        out[3 * i + 2] -= 0.5 * dt * b
        out[3 * (i + 1) + 2] -= 0.5 * dt * b
    for i in range(N):
        out[3 * i + 1] += v[r3 + i]
        out[3 * i + 2] += v[r4 + i]
    for i in range(N - 1):
        c = v[r5 + i]
        out[3 * (i + 1) + 2] += c
        out[3 * i + 2] -= c


cdef void _p_mul(int N, double dt, double w_a, double w_j, double w_v,
                 double* x, double* out) nogil:
    cdef int i
    cdef double cj = 2.0 * w_j / (dt * dt)
    cdef double d
    for i in range(3 * N):
        out[i] = 0.0
    for i in range(N):
        out[3 * i + 1] = 2.0 * w_v * x[3 * i + 1]
        out[3 * i + 2] = 2.0 * w_a * x[3 * i + 2]
    for i in range(N - 1):
        d = cj * (x[3 * (i + 1) + 2] - x[3 * i + 2])
        out[3 * i + 2] -= d
        out[3 * (i + 1) + 2] += d


cdef void _band_solve(double[:, ::1] Lb, double* rhs, double* tmp, int n) nogil:
    """Solve (L L') u = rhs with L stored as a lower band; result in rhs."""
    cdef int j, k, kmin, kmax
    cdef double acc
    for j in range(n):
        acc = rhs[j]
        kmin = j - BAND
        if kmin < 0:
            kmin = 0
        for k in range(kmin, j):
            acc -= Lb[j - k, k] * tmp[k]
        tmp[j] = acc / Lb[0, j]
    for j in range(n - 1, -1, -1):
        acc = tmp[j]
        kmax = j + BAND
        if kmax > n - 1:
            kmax = n - 1
        for k in range(j + 1, kmax + 1):
            acc -= Lb[k - j, j] * rhs[k]
        rhs[j] = acc / Lb[0, j]


def admm_solve(int N, double dt, double w_a, double w_j, double w_v,
               double[:, ::1] Lb, double sigma, double alpha,
               double[::1] rho, double[::1] q,
               double[::1] lo, double[::1] hi,
               double[::1] x, double[::1] z, double[::1] y,
               double eps_p, double eps_d, int max_iter,
               double[::1] xt, double[::1] zt,
               double[::1] wn, double[::1] wm):
    """Run the ADMM iteration; x, z, y are warm-started in place.

    Stops once the primal residual falls below eps_p and the dual
    residual below eps_d.  Returns (iterations, primal_residual,
    dual_residual).
    """
    cdef int n = 3 * N
    cdef int m = 5 * N
    cdef int it, i, j
    cdef double rp, rd, val, znew, rel
    cdef double* px = &x[0]
    cdef double* pz = &z[0]
    cdef double* py_ = &y[0]
    cdef double* pxt = &xt[0]
    cdef double* pzt = &zt[0]
    cdef double* pwn = &wn[0]
    cdef double* pwm = &wm[0]
    cdef double* pq = &q[0]
    cdef double* plo = &lo[0]
    cdef double* phi = &hi[0]
    cdef double* prho = &rho[0]
    rp = 0.0
    rd = 0.0
    for it in range(max_iter):
        # x-step rhs: sigma*x - q + A'(rho*z - y)
        for j in range(m):
            pwm[j] = prho[j] * pz[j] - py_[j]
        _at_mul(N, dt, pwm, pxt)
        for i in range(n):
            pxt[i] += sigma * px[i] - pq[i]
        _band_solve(Lb, pxt, pwn, n)
        _a_mul(N, dt, pxt, pzt)
        # relaxed x and z updates
        for i in range(n):
            px[i] = alpha * pxt[i] + (1.0 - alpha) * px[i]
        for j in range(m):
            rel = alpha * pzt[j] + (1.0 - alpha) * pz[j]
            znew = rel + py_[j] / prho[j]
            if znew < plo[j]:
                znew = plo[j]
            elif znew > phi[j]:
                znew = phi[j]
            py_[j] += prho[j] * (rel - znew)
            pz[j] = znew
        # residuals
        _a_mul(N, dt, px, pwm)
        rp = 0.0
        for j in range(m):
            val = fabs(pwm[j] - pz[j])
            if val > rp:
                rp = val
        _p_mul(N, dt, w_a, w_j, w_v, px, pwn)
        _at_mul(N, dt, py_, pxt)
        rd = 0.0
        for i in range(n):
            val = fabs(pwn[i] + pq[i] + pxt[i])
            if val > rd:
                rd = val
        if rp <= eps_p and rd <= eps_d:
            return it + 1, rp, rd
    return max_iter, rp, rd
