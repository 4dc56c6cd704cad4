"""From route risk to a drivable velocity profile.

Risk samples are clustered, each cluster maps to a speed limit anchored at
its risk-weighted position, and a convex quadratic program plans a smooth
velocity profile that honors those limits as hard constraints together
with acceleration, jerk, lateral-acceleration and stop-envelope bounds.

The QP decision vector interleaves (s_i, v_i, a_i) per step; jerk is the
finite difference of consecutive accelerations.  It is solved by an
operator-splitting iteration with a banded Cholesky factorization computed
once per planner instance, so repeated cycles only pay matrix-free solve
cost and warm starts keep iteration counts low.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from ._kernels_py import _build_a, _build_p
from .risk import RiskProfile
from .scenario import Route
from .zones import PhantomVehicleSet


class Infeasible(RuntimeError):
    """The constraint set is structurally empty; names the binding rows."""

    def __init__(self, message: str, binding: Sequence[str] = ()):
        super().__init__(message)
        self.binding = tuple(binding)


class NonConvergent(RuntimeError):
    """The solver or the position/cap fixed point failed to settle."""


@dataclass
class RiskCluster:
    """Contiguous run of route samples carrying meaningful risk."""

    id: int
    route_s: np.ndarray
    risk: np.ndarray
    r_total: float
    p_limit_s: float

    @property
    def samples(self) -> list[dict]:
        return [{"route_s": float(s), "risk": float(r)}
                for s, r in zip(self.route_s, self.risk)]

    @property
    def s_min(self) -> float:
        return float(self.route_s[0])

    @property
    def s_max(self) -> float:
        return float(self.route_s[-1])


@dataclass(frozen=True)
class SpeedLimitDirective:
    """A speed bound anchored on the route.

    kind "limit" constrains an approach window around route_s (computed by
    the planner from the current speed); kind "envelope" is one sample of
    a braking curve and applies positionally, with samples of the same
    group interpolated together.
    """

    route_s: float
    v_limit: float
    extent: float = 0.0
    kind: str = "limit"
    group: str = ""

    def __post_init__(self):
        if self.v_limit < 0:
            raise ValueError("v_limit must be non-negative")
        if self.kind not in ("limit", "envelope"):
            raise ValueError(f"unknown directive kind {self.kind!r}")


@dataclass(frozen=True)
class StaticStopConstraint:
    stop_s: float
    standoff: float


def _param(params, key: str) -> float:
    if isinstance(params, dict):
        return float(params[key])
    return float(getattr(params, key))


def cluster_risk(profile: RiskProfile, gap_tolerance: float,
                 min_risk: float) -> list[RiskCluster]:
    """Split the profile into maximal runs of significant samples.

    A sample joins the current cluster while its risk stays at or above
    min_risk (floored at a tiny positive value so a zero threshold cannot
    sweep up empty samples) and the arc gap to the previous kept sample is
    within gap_tolerance.
    """
    floor = max(min_risk, 1e-9)
    keep = np.nonzero(np.asarray(profile.risk) >= floor)[0]
    clusters: list[RiskCluster] = []
    if keep.size == 0:
        return clusters
    s_all = np.asarray(profile.route_s, dtype=float)[keep]
    r_all = np.asarray(profile.risk, dtype=float)[keep]
    breaks = np.nonzero(np.diff(s_all) > gap_tolerance + 1e-9)[0]
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks + 1, [len(s_all)]))
    for cid, (a, b) in enumerate(zip(starts, ends)):
        s = s_all[a:b]
        r = r_all[a:b]
        r_total = float(r.sum())
        clusters.append(RiskCluster(cid, s, r, r_total,
                                    float((s * r).sum() / r_total)))
    return clusters


def speed_limit_value(r_total: float, params) -> float | None:
    """Map total cluster risk to a limit: none below the lower threshold,
    a linear ramp between the thresholds, the minimum limit above."""
    c_lo = _param(params, "c_th_min")
    c_hi = _param(params, "c_th_max")
    v_lo = _param(params, "v_occ_min")
    v_hi = _param(params, "v_occ_max")
    if r_total < c_lo:
        return None
    if r_total > c_hi:
        return v_lo
    frac = (r_total - c_lo) / (c_hi - c_lo)
    return v_hi + frac * (v_lo - v_hi)


def directives_from_clusters(clusters: Sequence[RiskCluster],
                             params) -> list[SpeedLimitDirective]:
    out = []
    for cluster in clusters:
        v = speed_limit_value(cluster.r_total, params)
        if v is None:
            continue
        out.append(SpeedLimitDirective(cluster.p_limit_s, v,
                                       extent=cluster.s_max
                                       - cluster.p_limit_s))
    return out


def stop_envelope(stop_s: float, route_length: float, a_brake: float,
                  standoff: float, *, sample_step: float = 0.5,
                  back_span: float = 80.0, group: str | None = None
                  ) -> list[SpeedLimitDirective]:
    """Braking envelope ending ``standoff`` metres before ``stop_s``.

    Emitted as envelope samples v(s) = sqrt(2 a_brake (stop - standoff -
    s)); beyond the last sample the interpolated cap stays at zero, so a
    single-cycle plan never commits past the stop point.
    """
    hold = stop_s - standoff
    s0 = max(0.0, hold - back_span)
    s1 = min(route_length, stop_s + 2.0 * sample_step)
    if s1 < s0:
        return []
    s_vals = np.arange(s0, s1 + 1e-9, sample_step)
    v_vals = np.sqrt(2.0 * a_brake * np.maximum(0.0, hold - s_vals))
    if group is None:
        group = f"stop:{stop_s:.3f}"
    return [SpeedLimitDirective(float(s), float(v), kind="envelope",
                                group=group)
            for s, v in zip(s_vals, v_vals)]


def static_stop_directive(static_pvs: PhantomVehicleSet | None,
                          ego_route: Route, a_brake: float,
                          standoff: float, *, sample_step: float = 0.5,
                          back_span: float = 80.0
                          ) -> list[SpeedLimitDirective]:
    """Stop envelope holding the ego ``standoff`` metres before a static
    phantom, the nearest occluded spot the ego itself must pass through."""
    if static_pvs is None:
        return []
    if static_pvs.kind != "static":
        raise ValueError("expected a static phantom vehicle set")
    return stop_envelope(float(static_pvs.conflict_s_ego),
                         ego_route.length, a_brake, standoff,
                         sample_step=sample_step, back_span=back_span)


@dataclass
class VelocityPlan:
    """Planned states on a fixed time grid, plus solver diagnostics.

    The effective per-step bounds that were actually imposed (v_cap and
    the possibly relaxed acceleration box) ride along so a plan can be
    re-verified without reconstructing planner internals.
    """

    dt: float
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    jerk: np.ndarray
    v_cap: np.ndarray
    a_lo: np.ndarray
    a_hi: np.ndarray
    cap_relaxed: bool = False
    iterations: int = 0
    residual_primal: float = 0.0
    residual_dual: float = 0.0
    duals: np.ndarray | None = None

    @property
    def states(self) -> list[dict]:
        return [{"s": float(s), "v": float(v), "a": float(a)}
                for s, v, a in zip(self.s, self.v, self.a)]

    @property
    def horizon(self) -> float:
        return (len(self.s) - 1) * self.dt

    def state_at(self, t: float) -> tuple[float, float, float]:
        """Cubic-in-position interpolation consistent with the plan's
        piecewise-constant jerk."""
        t = min(max(t, 0.0), self.horizon)
        i = min(int(t / self.dt), len(self.s) - 2)
        tau = t - i * self.dt
        j = self.jerk[i] if i < len(self.jerk) else 0.0
        s = (self.s[i] + self.v[i] * tau + 0.5 * self.a[i] * tau * tau
             + j * tau ** 3 / 6.0)
        v = self.v[i] + self.a[i] * tau + 0.5 * j * tau * tau
        a = self.a[i] + j * tau
        return float(s), float(max(v, 0.0)), float(a)


DEFAULT_BOUNDS = {"a_min": -4.0, "a_max": 2.0,
                  "jerk_min": -5.0, "jerk_max": 5.0}


class SpeedPlanner:
    """Stateful planner: one banded factorization, warm starts per cycle.

    The quadratic cost and the constraint matrix depend only on the step
    count, step length and weights, so they are assembled and factorized
    once; per solve only the bound vectors change.  Position-dependent
    speed caps are resolved by re-mapping them from the planned positions
    a few times; directive activation is sticky within one solve, which
    makes that fixed point monotone instead of oscillatory.
    """

    MAX_STEPS = 500
    RELAX_DERATE = 0.9

    def __init__(self, horizon_t: float, dt: float, w_a: float = 1.0,
                 w_j: float = 10.0, w_v: float = 0.1, *,
                 activation_brake: float = 2.5,
                 activation_margin: float = 0.5,
                 stop_standoff: float = 3.0, v_eps: float = 0.1,
                 sigma: float = 1e-6, alpha: float = 1.6,
                 rho_eq: float = 1e4, rho_box: float = 10.0,
                 eps: float = 2.5e-7, eps_rel: float = 1e-6,
                 max_iter: int = 2000):
        if dt <= 0:
            raise ValueError("dt must be positive")
        steps = int(math.floor(horizon_t / dt + 1e-9))
        if steps < 1:
            raise ValueError("horizon must cover at least one step")
        if steps > self.MAX_STEPS:
            raise ValueError(f"horizon exceeds {self.MAX_STEPS} steps")
        self.N = steps + 1
        self.dt = float(dt)
        self.weights = (float(w_a), float(w_j), float(w_v))
        self.activation_brake = float(activation_brake)
        self.activation_margin = float(activation_margin)
        self.stop_standoff = float(stop_standoff)
        self.v_eps = float(v_eps)
        self.sigma = float(sigma)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.eps_rel = float(eps_rel)
        self.max_iter = int(max_iter)
        N = self.N
        n, m = 3 * N, 5 * N
        self._rho0 = np.full(m, float(rho_box))
        self._rho0[:3 + 2 * (N - 1)] = float(rho_eq)
        self.rho = self._rho0.copy()
        self._rho_scale = 1.0
        A = _build_a(N, dt)
        P = _build_p(N, dt, *self.weights)
        # the penalty pattern is only ever rescaled as a whole, so the
        # normal matrix splits into a fixed part plus scale * G
        self._psi = P + self.sigma * np.eye(n)
        self._G = A.T @ (self._rho0[:, None] * A)
        self.Lb = np.zeros((6, n))
        self._refactor()
        self._A = A
        self._P = P
        # positions carry no cost and no bound rows, so the exact-solve
        # path eliminates them and works on the strictly convex
        # speed/acceleration block; the splitting kernel keeps the full
        # system
        self._cols_r = np.flatnonzero(np.arange(n) % 3 != 0)
        self._rows_r = np.concatenate(
            (np.array([1, 2]), np.arange(3 + (N - 1), m)))
        self._Ar = A[np.ix_(self._rows_r, self._cols_r)]
        self._Pr = P[np.ix_(self._cols_r, self._cols_r)]
        self._pinv = np.linalg.inv(self._Pr)
        self._pol_key = None
        self._pol_keep = None
        self._pol_G = None
        self._pol_pGT = None
        self._pol_Sinv = None
        self._cap_ref = None
        self._q = np.zeros(n)
        self._lo = np.zeros(m)
        self._hi = np.zeros(m)
        self._x = np.zeros(n)
        self._z = np.zeros(m)
        self._y = np.zeros(m)
        self._xt = np.zeros(n)
        self._zt = np.zeros(m)
        self._wn = np.zeros(n)
        self._wm = np.zeros(m)
        self._warm = False
        self._t = self.dt * np.arange(N)
        # distinct sub-tolerance slack per bound row: exact ties between
        # bounds coupled through the dynamics produce degenerate corners
        # that stall active-set updates, and any irregular spread breaks
        # the ties without moving the solution measurably
        self._pert = 1e-8 * np.modf(0.6180339887498949
                                    * (1.0 + np.arange(m)))[0]

    def reset(self):
        """Forget warm-start state (call between independent runs)."""
        self._warm = False
        self._x[:] = 0.0
        self._z[:] = 0.0
        self._y[:] = 0.0

    def _refactor(self):
        n = 3 * self.N
        M = self._psi + self._rho_scale * self._G
        L = np.linalg.cholesky(M)
        for r in range(6):
            self.Lb[r, : n - r] = np.diagonal(L, -r)

    def _dual_eps(self, x, y, q):
        """Dual tolerance: absolute floor plus a term relative to the
        gradient scale, which the jerk weight pushes into the thousands."""
        scale = max(np.abs(self._P @ x).max(),
                    np.abs(self._A.T @ y).max(),
                    np.abs(q).max(), 1e-10)
        return self.eps + self.eps_rel * scale

    def _kkt_solve(self, rows, b, q):
        """Solve the reduced QP with the given rows pinned to b.

        Pinned sets routinely carry dependent rows (a speed chain plus
        the dynamics that imply it), so the rows that add no new
        direction are detected by the triangular factor of the pin
        normals and solved around: they get zero multipliers and are
        satisfied through the rows that remain.  Schur complement through
        the exact cost inverse, a couple of refinement rounds to clear
        roundoff, cached on the row set so consecutive solves that only
        move the pinned values cost a handful of matrix-vector products.
        """
        key = rows.tobytes()
        if key != self._pol_key:
            G = self._Ar[rows]
            rdiag = np.abs(np.diag(np.linalg.qr(G.T, mode="r")))
            keep = np.zeros(rows.size, dtype=bool)
            keep[:rdiag.size] = rdiag > 1e-10 * max(float(rdiag.max()),
                                                    1e-30)
            Gk = G[keep] if not keep.all() else G
            pGT = self._pinv @ Gk.T
            try:
                Sinv = np.linalg.inv(Gk @ pGT)
            except np.linalg.LinAlgError:
                return None, None
            self._pol_key = key
            self._pol_keep = keep
            self._pol_G = Gk
            self._pol_pGT = pGT
            self._pol_Sinv = Sinv
        keep = self._pol_keep
        G = self._pol_G
        pGT = self._pol_pGT
        Sinv = self._pol_Sinv
        bk = b[keep]
        nu = Sinv @ (-(pGT.T @ q) - bk)
        x = -(self._pinv @ q) - pGT @ nu
        for _ in range(2):
            r1 = -q - self._Pr @ x - G.T @ nu
            r2 = bk - G @ x
            dnu = Sinv @ (pGT.T @ r1 - r2)
            x = x + (self._pinv @ r1 - pGT @ dnu)
            nu = nu + dnu
        nu_full = np.zeros(rows.size)
        nu_full[keep] = nu
        return x, nu_full

    def _expand(self, xr, s0):
        """Rebuild the full state vector from the reduced one by running
        the position chain forward from s0."""
        N, dt = self.N, self.dt
        x = np.empty(3 * N)
        x[1::3] = xr[0::2]
        x[2::3] = xr[1::2]
        v = x[1::3]
        a = x[2::3]
        incr = dt * v[:-1] + dt * dt * (a[:-1] / 3.0 + a[1:] / 6.0)
        x[0::3] = s0 + np.concatenate(([0.0], np.cumsum(incr)))
        return x

    @staticmethod
    def _gi_masks(m, rows_w, sides, t_w):
        act_lo = np.zeros(m, dtype=bool)
        act_hi = np.zeros(m, dtype=bool)
        w_rows = rows_w[:t_w]
        act_lo[w_rows[sides[:t_w] > 0]] = True
        act_hi[w_rows[sides[:t_w] < 0]] = True
        return True, act_lo, act_hi

    def _gi_sets(self, q, lo, hi):
        """Identify the binding bound rows by a dual active-set sweep.

        Starts from the equality-constrained optimum and repeatedly pulls
        in the most violated bound, taking the classic primal-dual step
        that keeps every held multiplier nonnegative and dropping whichever
        held bound blocks first.  The working-set inverse is updated one
        rank at a time and recomputed from scratch every few exchanges
        (and before returning), since rank-one updates drift on the
        near-dependent sets that bang-bang stretches produce.  Returns
        (ok, act_lo, act_hi) in reduced-row terms; the caller re-solves
        the returned set to verify it.
        """
        A, pinv = self._Ar, self._pinv
        m, n = A.shape
        q = q[self._cols_r]
        lo = lo[self._rows_r]
        hi = hi[self._rows_r]
        eq = (hi - lo) <= 1e-9
        eq_rows = np.flatnonzero(eq)
        t_w = eq_rows.size
        rows_w = np.empty(m, dtype=np.intp)
        sides = np.zeros(m, dtype=np.int8)
        lam = np.zeros(m)
        rows_w[:t_w] = eq_rows
        Gw = np.empty((m, n))
        Gw[:t_w] = A[eq_rows]
        pGT = np.empty((n, m))
        Sbuf = np.empty((m, m))

        def refresh():
            pGT[:, :t_w] = pinv @ Gw[:t_w].T
            try:
                Sbuf[:t_w, :t_w] = np.linalg.inv(Gw[:t_w] @ pGT[:, :t_w])
            except np.linalg.LinAlgError:
                return None
            bw = np.where(sides[:t_w] < 0, -hi[rows_w[:t_w]],
                          lo[rows_w[:t_w]])
            nu = Sbuf[:t_w, :t_w] @ (-(pGT[:, :t_w].T @ q) - bw)
            lam[:t_w] = -nu
            return -(pinv @ q) - pGT[:, :t_w] @ nu

        x = refresh()
        if x is None:
            return False, None, None
        steps = 0
        stale = 0
        while steps < 4 * m:
            if stale >= 16:
                x = refresh()
                if x is None:
                    return False, None, None
                stale = 0
            ax = A @ x
            gap = np.maximum(lo - ax, ax - hi)
            gap[rows_w[:t_w]] = 0.0
            p = int(np.argmax(gap))
            if gap[p] <= self.eps:
                if stale:
                    x = refresh()
                    if x is None:
                        return False, None, None
                    stale = 0
                    continue
                return self._gi_masks(m, rows_w, sides, t_w)
            if lo[p] - ax[p] >= ax[p] - hi[p]:
                side, n_p, b_p = 1, A[p].copy(), lo[p]
            else:
                side, n_p, b_p = -1, -A[p], -hi[p]
            lam_p = 0.0
            while steps < 4 * m:
                steps += 1
                u = pinv @ n_p
                c = Gw[:t_w] @ u
                r = Sbuf[:t_w, :t_w] @ c
                z = u - pGT[:, :t_w] @ r
                denom = float(n_p @ z)
                # fraction of the row outside the held span, scaled by its
                # own curvature: below the cut the row is numerically
                # dependent and only a dual step can make progress
                dep = denom <= 1e-7 * max(float(n_p @ u), 1e-12)
                block = (sides[:t_w] != 0) & (r > 1e-12)
                if block.any():
                    ratios = lam[:t_w][block] / r[block]
                    j = int(np.argmin(ratios))
                    t1 = float(ratios[j])
                    k = int(np.flatnonzero(block)[j])
                else:
                    t1, k = math.inf, -1
                viol_p = b_p - float(n_p @ x)
                t2 = math.inf if dep else viol_p / denom
                t = min(t1, t2)
                if not math.isfinite(t):
                    # no step can absorb this row: hand the current set to
                    # the caller as a seed instead of discarding the walk
                    return self._gi_masks(m, rows_w, sides, t_w)
                if t > 0.0:
                    if not dep:
                        x = x + t * z
                    lam[:t_w] -= t * r
                    lam_p += t
                if t2 <= t1:
                    s = denom
                    Sw = Sbuf[:t_w, :t_w]
                    Sw += np.outer(r, r) / s
                    Sbuf[:t_w, t_w] = -r / s
                    Sbuf[t_w, :t_w] = -r / s
                    Sbuf[t_w, t_w] = 1.0 / s
                    Gw[t_w] = n_p
                    pGT[:, t_w] = u
                    rows_w[t_w] = p
                    sides[t_w] = side
                    lam[t_w] = lam_p
                    t_w += 1
                    stale += 1
                    break
                # blocker k leaves the working set
                keep = np.arange(t_w) != k
                bk = Sbuf[:t_w, k].copy()
                d = bk[k]
                if abs(d) <= 1e-14:
                    return False, None, None
                sub = Sbuf[:t_w, :t_w][np.ix_(keep, keep)] \
                    - np.outer(bk[keep], bk[keep]) / d
                t_w -= 1
                Sbuf[:t_w, :t_w] = sub
                Gw[k:t_w] = Gw[k + 1:t_w + 1].copy()
                pGT[:, k:t_w] = pGT[:, k + 1:t_w + 1].copy()
                rows_w[k:t_w] = rows_w[k + 1:t_w + 1].copy()
                sides[k:t_w] = sides[k + 1:t_w + 1].copy()
                lam[k:t_w] = lam[k + 1:t_w + 1].copy()
                stale += 1
        return self._gi_masks(m, rows_w, sides, t_w)

    def _pdas(self, q, lo, hi, act_lo, act_hi, budget=120):
        """Primal-dual active-set iteration: exact solves, set updates.

        Each pass pins the equality rows plus the guessed binding bounds,
        solves that KKT system exactly, then pins every row the solution
        still violates; once feasible, it releases the row whose
        multiplier has the most wrong sign, one per pass, because
        releasing coupled rows together is what makes active-set updates
        cycle.  A revisited set degrades the adds to one row per pass as
        a last resort.  The loop runs on the reduced system; verification
        and the committed iterate are in full terms.  Takes reduced-row
        activity masks, returns (ok, rp, rd, eps_d, steps) and commits
        the iterate on success; failure leaves the solver state untouched
        so the caller can fall back.  ``budget`` caps the walk length so
        a seed known to be speculative fails cheaply.
        """
        qr = q[self._cols_r]
        lor = lo[self._rows_r]
        hir = hi[self._rows_r]
        eq = (hir - lor) <= 1e-9
        act_lo = act_lo & ~eq
        act_hi = act_hi & ~eq
        seen = set()
        m = lor.size
        single = False
        for step in range(1, budget + 1):
            key = (act_lo.tobytes(), act_hi.tobytes())
            if key in seen:
                if single:
                    break
                single = True
                seen.clear()
            seen.add(key)
            rows = np.flatnonzero(eq | act_lo | act_hi)
            b = np.where(act_lo[rows], lor[rows], hir[rows])
            x, nu = self._kkt_solve(rows, b, qr)
            if x is None:
                break
            ax = self._Ar @ x
            pinned = eq | act_lo | act_hi
            over_lo = np.where(pinned, 0.0, lor - ax)
            over_hi = np.where(pinned, 0.0, ax - hir)
            viol_lo = over_lo > self.eps
            viol_hi = over_hi > self.eps
            wrong = np.zeros(m)
            wrong[rows] = np.where(act_lo[rows], np.maximum(nu, 0.0),
                                   np.maximum(-nu, 0.0))
            wrong[rows] *= (act_lo[rows] | act_hi[rows])
            if not (viol_lo.any() or viol_hi.any()
                    or (wrong > 1e-12).any()):
                x_full = self._expand(x, lo[0])
                y = np.zeros(5 * self.N)
                y[self._rows_r[rows]] = nu
                ax_full = self._A @ x_full
                z = np.clip(ax_full, lo, hi)
                rp = float(np.abs(ax_full - z).max())
                rd = float(np.abs(self._P @ x_full + q
                                  + self._A.T @ y).max())
                eps_d = self._dual_eps(x_full, y, q)
                if rp <= self.eps and rd <= eps_d:
                    self._x[:] = x_full
                    self._z[:] = z
                    self._y[:] = y
                    return True, rp, rd, eps_d, step
                break
            if viol_lo.any() or viol_hi.any():
                if single:
                    if over_lo.max() >= over_hi.max():
                        act_lo[int(np.argmax(over_lo))] = True
                    else:
                        act_hi[int(np.argmax(over_hi))] = True
                else:
                    act_lo |= viol_lo
                    act_hi |= viol_hi & ~act_lo
            else:
                r = int(np.argmax(wrong))
                act_lo[r] = False
                act_hi[r] = False
        return False, math.inf, math.inf, math.inf, 0

    def _iterate(self, q, lo, hi):
        """Solve one cap assignment: active-set first, splitting fallback.

        A warm start reuses the previous solve's binding rows, which
        usually verify in one exact solve.  Otherwise a dual active-set
        sweep identifies the binding rows from scratch.  If neither set
        verifies, the splitting kernel runs in chunks, rebalancing the
        penalty whenever primal and dual progress drift apart on a
        relative scale, and the final iterate's binding rows get one more
        exact solve.
        """
        N, dt = self.N, self.dt
        w_a, w_j, w_v = self.weights
        rr = self._rows_r
        eqf = (hi - lo) <= 1e-9
        lo = np.where(eqf, lo, lo - self._pert)
        hi = np.where(eqf, hi, hi + self._pert)
        # the previous binding rows only transfer when the caps they were
        # computed against are still roughly in place; a shifted cap
        # profile (braking tail moving with the ego) makes the stale set
        # walk long and fail, so it gets a short leash and a freshness
        # gate while the identification sweep handles the rest
        r3 = 3 + 2 * (N - 1)
        caps_now = hi[r3:r3 + N]
        fresh = (self._cap_ref is not None
                 and float(np.abs(caps_now - self._cap_ref).max()) <= 0.5)
        self._cap_ref = caps_now.copy()
        if self._warm and fresh:
            act_lo = self._y[rr] < 0.0
            act_hi = self._y[rr] > 0.0
            ok, rp, rd, eps_d, steps = self._pdas(q, lo, hi, act_lo, act_hi,
                                                  budget=8)
            if ok:
                return steps, rp, rd, eps_d
        ok_set, act_lo, act_hi = self._gi_sets(q, lo, hi)
        if ok_set:
            ok, rp, rd, eps_d, steps = self._pdas(q, lo, hi, act_lo, act_hi)
            if ok:
                return steps, rp, rd, eps_d
        used = 0
        rp = rd = eps_d = math.inf
        while used < self.max_iter:
            scale_d = max(np.abs(self._P @ self._x).max(),
                          np.abs(self._A.T @ self._y).max(),
                          np.abs(q).max(), 1e-10)
            eps_d = self.eps + self.eps_rel * scale_d
            budget = min(100, self.max_iter - used)
            iters, rp, rd = kernels.admm_solve(
                N, dt, w_a, w_j, w_v, self.Lb, self.sigma, self.alpha,
                self.rho, q, lo, hi, self._x, self._z, self._y,
                self.eps, eps_d, budget,
                self._xt, self._zt, self._wn, self._wm)
            used += iters
            if rp <= self.eps and rd <= eps_d:
                return used, rp, rd, eps_d
            # one exact solve on the rows the iterate now marks binding
            act_lo = (self._z[rr] <= lo[rr] + 1e-12) | (self._y[rr] < 0.0)
            act_hi = (self._z[rr] >= hi[rr] - 1e-12) | (self._y[rr] > 0.0)
            ok, rp2, rd2, eps_d2, _ = self._pdas(q, lo, hi,
                                                 act_lo & ~act_hi, act_hi)
            if ok:
                return used, rp2, rd2, eps_d2
            scale_p = max(np.abs(self._A @ self._x).max(),
                          np.abs(self._z).max(), 1e-10)
            ratio = math.sqrt((rp / scale_p) / max(rd / scale_d, 1e-16))
            ratio = min(max(ratio, 1e-3), 1e3)
            new_scale = min(max(self._rho_scale * ratio, 1e-4), 1e6)
            if not (0.2 < new_scale / self._rho_scale < 5.0):
                self._rho_scale = new_scale
                self.rho[:] = self._rho0 * new_scale
                self._refactor()
        eps_d = self._dual_eps(self._x, self._y, q)
        return used, rp, rd, eps_d

    def solve(self, s0: float, v0: float, a0: float, cruise_v: float,
              directives: Sequence[SpeedLimitDirective] = (), *,
              curvature=None, bounds=None) -> VelocityPlan:
        """Plan from state (s0, v0, a0) toward cruise_v under all caps.

        ``curvature`` is an optional (route_s, v_max) lookup table;
        ``bounds`` overrides the acceleration/jerk box, letting the caller
        widen it for emergency braking without refactorizing.
        """
        if v0 < -1e-9:
            raise Infeasible("initial speed below zero", ["v >= 0 @0"])
        v0 = max(v0, 0.0)
        b = DEFAULT_BOUNDS if bounds is None else bounds
        a_min = _param(b, "a_min")
        a_max = _param(b, "a_max")
        j_min = _param(b, "jerk_min")
        j_max = _param(b, "jerk_max")
        if a_min > a_max or j_min > j_max:
            raise Infeasible("empty acceleration or jerk box",
                             ["a box", "jerk box"])
        if j_min > -1e-12 or j_max < 1e-12:
            raise Infeasible("jerk box must allow braking and recovery",
                             ["jerk box"])
        N, dt = self.N, self.dt
        _, floor_a = _brake_floor(v0, a0, a_min, j_min, j_max, N, dt)
        a_lo = np.minimum(a_min, floor_a) - 1e-12
        a_hi = np.full(N, a_max)
        if a0 > a_max:
            a_hi = np.maximum(a_hi, a0 + self._t * j_min)
        limits = [d for d in directives if d.kind == "limit"]
        groups: dict[str, list[SpeedLimitDirective]] = {}
        for k, d in enumerate(directives):
            if d.kind == "envelope":
                groups.setdefault(d.group or f"env:{k}", []).append(d)
        env_tables = []
        for members in groups.values():
            members = sorted(members, key=lambda d: d.route_s)
            env_tables.append((np.array([d.route_s for d in members]),
                               np.array([d.v_limit for d in members])))
        # position-dependent caps and planned positions form a fixed
        # point: each pass evaluates the caps at reference positions,
        # plans against them, and moves the reference halfway toward the
        # plan, which damps the tighten/loosen oscillation that plain
        # re-linearization produces; the pass whose plan respects the
        # caps at its own positions and whose reference has settled wins,
        # with the farthest-reaching validated plan kept as the fallback
        s_ref = self._reference_positions(s0, v0, a0, cruise_v, limits,
                                          env_tables, curvature,
                                          a_min, a_max)
        caps = None
        plan = None
        relaxed = False
        best = None
        best_end = -math.inf
        # relaxing a cap to exactly the braking floor pinches the feasible
        # set onto a single trajectory whose acceleration and jerk ride
        # their own bounds, which leaves the binding rows linearly
        # dependent and stalls every solver; passes that need relaxing are
        # instead lifted to a derated braking profile, which stays
        # strictly inside the acceleration and jerk boxes and is still a
        # hard stop, just a slightly longer one
        soft_v, _ = _brake_floor(v0, a0, self.RELAX_DERATE * a_min,
                                 self.RELAX_DERATE * j_min, j_max, N, dt)
        relax_pad = soft_v + 1e-9
        for _ in range(6):
            caps_pass = self._caps(s_ref, cruise_v, limits,
                                   env_tables, curvature)
            caps = np.maximum(caps_pass, 0.0)
            relaxed = bool((relax_pad > caps + 1e-9).any())
            caps = np.maximum(caps, relax_pad)
            plan = self._solve_once(s0, v0, a0, cruise_v, caps,
                                    (a_lo, a_hi), (j_min, j_max))
            target = self._caps(plan.s, cruise_v, limits, env_tables,
                                curvature)
            allowed = np.maximum(target, relax_pad)
            over = float((plan.v - allowed).max())
            if over <= 0.1 and plan.s[-1] > best_end:
                best = (plan, caps, relaxed)
                best_end = float(plan.s[-1])
            if over <= 0.05:
                break
            s_ref = 0.5 * (s_ref + plan.s)
        else:
            if best is not None:
                plan, caps, relaxed = best
            else:
                caps_pass = self._conservative_caps(
                    s0, v0, cruise_v, a_max, limits, env_tables, curvature)
                caps = np.maximum(caps_pass, 0.0)
                relaxed = bool((relax_pad > caps + 1e-9).any())
                caps = np.maximum(caps, relax_pad)
                plan = self._solve_once(s0, v0, a0, cruise_v, caps,
                                        (a_lo, a_hi), (j_min, j_max))
        plan.v_cap = caps
        plan.a_lo = a_lo
        plan.a_hi = a_hi
        plan.cap_relaxed = relaxed
        self._warm = True
        self._last_s = plan.s.copy()
        return plan

    def _reference_positions(self, s0, v0, a0, cruise_v, limits,
                             env_tables, curvature, a_min, a_max):
        if self._warm:
            return self._last_s + (s0 - self._last_s[0])
        # cold start: ride the caps greedily (acceleration box, no jerk
        # shaping) and re-evaluate them at the ridden positions a few
        # times, so the first pass linearizes near its own fixed point
        # instead of at a constant-rate guess
        dt = self.dt
        a_up = a_max * dt
        a_dn = a_min * dt
        v = np.maximum(v0 + a0 * self._t, 0.0)
        s_ref = s0 + np.concatenate(([0.0], np.cumsum(
            0.5 * (v[1:] + v[:-1]) * dt)))
        for _ in range(3):
            caps = self._caps(s_ref, cruise_v, limits, env_tables,
                              curvature)
            v = np.empty(self.N)
            v[0] = v0
            for i in range(1, self.N):
                v[i] = max(min(caps[i], v[i - 1] + a_up),
                           v[i - 1] + a_dn, 0.0)
            s_ref = s0 + np.concatenate(([0.0], np.cumsum(
                0.5 * (v[1:] + v[:-1]) * dt)))
        return s_ref

    def _caps(self, s_plan, cruise_v, limits, env_tables, curvature):
        caps = np.full(self.N, float(cruise_v))
        if curvature is not None:
            cs, cv = curvature
            caps = np.minimum(caps, np.interp(s_plan, cs, cv))
        for d in limits:
            margin = self.activation_margin
            if d.v_limit <= self.v_eps:
                margin += self.stop_standoff
            # braking-envelope taper into the limited window: binds only
            # within braking range of it, is independent of the current
            # speed, and its slope stays bounded by brake / v_limit
            dist = np.maximum(d.route_s - margin - s_plan, 0.0)
            taper = np.sqrt(d.v_limit * d.v_limit
                            + 2.0 * self.activation_brake * dist)
            inside = s_plan <= d.route_s + d.extent + margin
            caps = np.minimum(caps, np.where(inside, taper, np.inf))
        for xs, vs in env_tables:
            caps = np.minimum(caps, np.interp(s_plan, xs, vs))
        return caps

    def _conservative_caps(self, s0, v0, cruise_v, a_max, limits,
                           env_tables, curvature):
        """Caps evaluated at an upper bound of the reachable positions.

        Stop envelopes are nonincreasing in position, so sampling them at
        positions the plan cannot exceed under-approximates the true caps.
        This is the escape hatch when the remap passes have not settled:
        possibly over-cautious, never over-permissive.
        """
        t = self._t
        v_ub = np.minimum(max(float(cruise_v), v0), v0 + a_max * t)
        s_ub = s0 + np.concatenate(([0.0], np.cumsum(
            0.5 * (v_ub[1:] + v_ub[:-1]) * self.dt)))
        caps = np.full(self.N, float(cruise_v))
        if curvature is not None:
            cs, cv = curvature
            sel = (cs >= s0 - 1.0) & (cs <= s_ub[-1] + 1.0)
            if sel.any():
                caps = np.minimum(caps, float(cv[sel].min()))
        for d in limits:
            lo_w = d.route_s - self.activation_margin
            caps[s_ub >= lo_w] = np.minimum(
                caps[s_ub >= lo_w], d.v_limit)
        for xs, vs in env_tables:
            caps = np.minimum(caps, np.interp(s_ub, xs, vs))
        return caps

    def _solve_once(self, s0, v0, a0, cruise_v, caps, a_box, jerk_box):
        N, dt = self.N, self.dt
        w_a, w_j, w_v = self.weights
        q = self._q
        q[:] = 0.0
        q[1::3] = -2.0 * w_v * cruise_v
        lo, hi = self._lo, self._hi
        lo[0] = hi[0] = s0
        lo[1] = hi[1] = v0
        lo[2] = hi[2] = a0
        r3 = 3 + 2 * (N - 1)
        r4 = r3 + N
        r5 = r4 + N
        lo[3:r3] = hi[3:r3] = 0.0
        lo[r3:r4] = 0.0
        hi[r3:r4] = caps
        lo[r4:r5] = a_box[0]
        hi[r4:r5] = a_box[1]
        lo[r5:] = jerk_box[0] * dt
        hi[r5:] = jerk_box[1] * dt
        if not self._warm:
            self._x[0::3] = s0
            self._x[1::3] = v0
            self._x[2::3] = 0.0
            self._z[:] = self._A @ self._x
            self._y[:] = 0.0
        iters, rp, rd, eps_d = self._iterate(q, lo, hi)
        self._warm = True
        if rp > self.eps or rd > eps_d:
            raise NonConvergent(
                f"solver stopped at residuals {rp:.2e}/{rd:.2e}")
        x = self._x
        s = x[0::3].copy()
        v = x[1::3].copy()
        a = x[2::3].copy()
        return VelocityPlan(dt, s, v, a, np.diff(a) / dt, caps,
                            np.full(N, a_box[0]), np.full(N, a_box[1]),
                            iterations=iters, residual_primal=rp,
                            residual_dual=rd, duals=self._y.copy())


def _brake_floor(v0, a0, a_min, j_min, j_max, N, dt):
    """A discrete maximal-braking trajectory from (v0, a0).

    Used to relax speed caps the ego physically cannot honor yet: jerk
    down toward a_min while the recovery check says the speed can still
    ride back to zero without undershoot, then ride that recovery and
    settle exactly at standstill.  Returns velocities and accelerations.
    """
    def step_toward(prev, target):
        return prev + min(max(target - prev, j_min * dt), j_max * dt)

    def recovers(vr, ar):
        # jerk the acceleration back to zero at full rate and check the
        # speed never crosses below zero on the way
        while ar < -1e-12:
            a2 = min(ar + j_max * dt, 0.0)
            vr += 0.5 * (ar + a2) * dt
            if vr < -1e-12:
                return False
            ar = a2
        return True

    v = np.empty(N)
    a = np.empty(N)
    v[0] = v0
    a[0] = a0
    for i in range(1, N):
        a_dn = step_toward(a[i - 1], a_min)
        v_dn = v[i - 1] + 0.5 * (a[i - 1] + a_dn) * dt
        if v_dn >= 0.0 and recovers(v_dn, a_dn):
            a[i] = a_dn
            v[i] = v_dn
            continue
        # a residual crawl from zero acceleration dips for one cell and
        # lands standstill exactly when the dip fits the jerk window
        a_dip = -v[i - 1] / dt
        if (a[i - 1] >= -1e-12 and a_dip >= max(a_min, -j_max * dt)
                and a_dip >= a[i - 1] + j_min * dt - 1e-12):
            a[i] = min(a_dip, 0.0)
            v[i] = 0.5 * v[i - 1]
            continue
        a[i] = min(step_toward(a[i - 1], 0.0), 0.0)
        v[i] = max(v[i - 1] + 0.5 * (a[i - 1] + a[i]) * dt, 0.0)
    return v, a


def pjso_plan(ego, horizon_t: float, dt: float, cruise_v: float,
              directives: Sequence[SpeedLimitDirective] = (),
              curvature_limit=None, bounds=None, **planner_kwargs
              ) -> VelocityPlan:
    """One-shot planning entry point (no warm-start state).

    ``ego`` carries s0/v0/a0; ``curvature_limit`` optionally carries
    a_lateral_max plus a kappa_max_profile of (route_s, kappa) arrays,
    which is converted to a speed lookup table.
    """
    s0 = _param(ego, "s0")
    v0 = _param(ego, "v0")
    a0 = _param(ego, "a0")
    curve = None
    if curvature_limit is not None:
        a_lat = _param(curvature_limit, "a_lateral_max")
        key = ("kappa_max_profile"
               if (isinstance(curvature_limit, dict)
                   and "kappa_max_profile" in curvature_limit)
               else "kappa_profile")
        cs, kappa = (curvature_limit[key]
                     if isinstance(curvature_limit, dict)
                     else getattr(curvature_limit, key))
        kappa = np.maximum(np.asarray(kappa, dtype=float), 1e-12)
        curve = (np.asarray(cs, dtype=float), np.sqrt(a_lat / kappa))
    planner = SpeedPlanner(horizon_t, dt, **planner_kwargs)
    return planner.solve(s0, v0, a0, cruise_v, directives,
                         curvature=curve, bounds=bounds)


def check_plan_constraints(plan: VelocityPlan, s0: float, v0: float,
                           a0: float, jerk_box=(-5.0, 5.0)) -> dict:
    """Independent worst-violation report for a returned plan.

    Uses only the plan's own recorded effective bounds and plain
    arithmetic, no solver state.
    """
    dt = plan.dt
    s, v, a, j = plan.s, plan.v, plan.a, plan.jerk
    dyn_s = s[1:] - (s[:-1] + v[:-1] * dt + 0.5 * a[:-1] * dt * dt
                     + j * dt ** 3 / 6.0)
    dyn_v = v[1:] - (v[:-1] + a[:-1] * dt + 0.5 * j * dt * dt)
    dyn_a = a[1:] - (a[:-1] + j * dt)
    out = {
        "init": max(abs(s[0] - s0), abs(v[0] - v0), abs(a[0] - a0)),
        "dyn_s": float(np.abs(dyn_s).max()),
        "dyn_v": float(np.abs(dyn_v).max()),
        "dyn_a": float(np.abs(dyn_a).max()),
        "v_low": float(np.maximum(-v, 0.0).max()),
        "v_cap": float(np.maximum(v - plan.v_cap, 0.0).max()),
        "a_box": float(max(np.maximum(plan.a_lo - a, 0.0).max(),
                           np.maximum(a - plan.a_hi, 0.0).max())),
        "jerk_box": float(max(np.maximum(jerk_box[0] - j, 0.0).max(),
                              np.maximum(j - jerk_box[1], 0.0).max())),
    }
    out["max"] = max(out.values())
    return out


def speed_limit_vs_target_velocity_demo(plan_a: VelocityPlan,
                                        plan_b: VelocityPlan,
                                        v_target: float, *,
                                        tol: float = 1e-3) -> dict:
    """Where does each plan first slow to v_target?

    Returns the interpolated arc positions (None when a plan never gets
    there), for contrasting hard speed limits against softened cruise
    targets.
    """
    return {
        "v_target": float(v_target),
        "s_meet_a": _first_meet(plan_a, v_target + tol),
        "s_meet_b": _first_meet(plan_b, v_target + tol),
    }


def _first_meet(plan: VelocityPlan, v_target: float) -> float | None:
    below = np.nonzero(plan.v <= v_target)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(plan.s[0])
    dv = plan.v[i - 1] - plan.v[i]
    frac = (plan.v[i - 1] - v_target) / dv if dv > 1e-12 else 1.0
    return float(plan.s[i - 1] + frac * (plan.s[i] - plan.s[i - 1]))
