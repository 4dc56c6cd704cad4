"""Occlusion risk quantification.

A phantom vehicle hides somewhere in an occluded lane stretch [s_s, s_e]
with an unknown speed in [0, v_max].  The reachability mass g(s)
integrates, over that position-velocity rectangle, the indicator that the
vehicle reaches arc position s within the horizon; multiplying by the
stretch length gives the occlusion risk o(s), and a normal lateral
deviation profile spreads it across the lane width.  Projecting onto the
ego route turns all of it into a single risk-over-arc profile the driving
strategy can threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from . import kernels
from .geometry import frenet_project_many
from .scenario import LaneMap, Route
from .zones import PhantomPedestrianZone, PhantomVehicleSet

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SrqParams:
    """Phantom set bounds plus the speed/horizon assumptions behind g."""

    v_max: float
    t_pred: float
    s_s: float
    s_e: float

    def __post_init__(self):
        if self.t_pred <= 0:
            raise ValueError("t_pred must be positive")
        if self.v_max < 0:
            raise ValueError("v_max must be non-negative")
        if self.s_s > self.s_e:
            raise ValueError("s_s must not exceed s_e")
        if self.s_e - self.s_s > self.v_max * self.t_pred + 1e-9:
            raise ValueError("set length exceeds v_max * t_pred")


@dataclass(frozen=True)
class LateralModel:
    """Normal lateral deviation tuned so the chosen confidence mass stays
    inside the lane width."""

    lane_width: float
    confidence: float
    sigma: float = field(init=False)

    def __post_init__(self):
        if self.lane_width <= 0:
            raise ValueError("lane_width must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        z = NormalDist().inv_cdf(1.0 - 0.5 * (1.0 - self.confidence))
        object.__setattr__(self, "sigma", self.lane_width / (2.0 * z))


@dataclass
class RiskProfile:
    """Risk sampled along the ego route, nonzero support only."""

    route_s: np.ndarray
    risk: np.ndarray
    source: str

    @property
    def samples(self) -> list[dict]:
        return [{"route_s": float(s), "risk": float(r), "source": self.source}
                for s, r in zip(self.route_s, self.risk)]

    def __len__(self) -> int:
        return len(self.route_s)


def srq_g(s, params: SrqParams):
    """Reachability mass at arc position(s) s."""
    if np.ndim(s) == 0:
        return kernels.srq_g_one(float(s), params.s_s, params.s_e,
                                 params.v_max, params.t_pred)
    s = np.ascontiguousarray(s, dtype=float)
    out = np.empty_like(s)
    kernels.srq_g_many(s, params.s_s, params.s_e, params.v_max,
                       params.t_pred, out)
    return out


def occlusion_risk_o(s, params: SrqParams):
    """Risk mass: reachability scaled by the hidden stretch length."""
    return (params.s_e - params.s_s) * srq_g(s, params)


def lateral_weight(d_offset, model: LateralModel):
    """Normal pdf of lateral deviation at the given offset(s)."""
    d = np.asarray(d_offset, dtype=float)
    w = np.exp(-0.5 * (d / model.sigma) ** 2) / (model.sigma * _SQRT_TWO_PI)
    return float(w) if np.ndim(d_offset) == 0 else w


def risk_r(s, d_offset, params: SrqParams, model: LateralModel):
    """Pointwise risk density: o(s) spread laterally by w(d)."""
    return occlusion_risk_o(s, params) * lateral_weight(d_offset, model)


def make_route_grid(route, step: float) -> np.ndarray:
    """Canonical sample positions {0, step, ...} not exceeding the route
    length.  Route objects and plain lengths are both accepted."""
    if step <= 0:
        raise ValueError("step must be positive")
    length = route if isinstance(route, (int, float)) else route.length
    n = int(math.floor(length / step + 1e-9))
    return step * np.arange(n + 1)


def _lane_projection_table(grid_pts: np.ndarray, lane, route_width: float):
    """Grid points close enough to a lane to see its risk, with their
    Frenet coordinates on that lane."""
    s_l, d_l = frenet_project_many(grid_pts, lane.centerline)
    cutoff = (lane.width + route_width) / 2.0 + 3.0
    keep = np.nonzero(np.abs(d_l) <= cutoff)[0]
    return keep.astype(np.intp), s_l[keep], d_l[keep]


def _chain_offsets(lane_map: LaneMap, lane_id: str, support_end: float):
    """(lane_id, arc offset) pieces reachable within support_end metres of
    the starting lane origin, following every successor branch."""
    pieces = [(lane_id, 0.0)]
    stack = [(lane_id, 0.0)]
    while stack:
        lid, off = stack.pop()
        length = lane_map[lid].length
        if support_end - off > length + 1e-9:
            for suc in lane_map[lid].successors:
                nxt = (suc, off + length)
                pieces.append(nxt)
                stack.append(nxt)
    return pieces


def accumulate_pvs_risk(out: np.ndarray, grid: np.ndarray,
                        pvs: PhantomVehicleSet, params: SrqParams,
                        model: LateralModel, lane_map: LaneMap,
                        tables, route: Route | None = None) -> None:
    """Add one phantom vehicle set's route risk onto a dense grid array.

    ``tables`` maps lane ids to (grid indices, s on lane, d off lane); pass
    a dict from RouteConflicts.lane_tables, or None with ``route`` set to
    build projections on the fly.
    """
    length = params.s_e - params.s_s
    if length <= 0.0:
        return
    support_end = params.s_e + params.v_max * params.t_pred
    grid_pts = None
    route_width = None
    for lid, off in _chain_offsets(lane_map, pvs.lane_id, support_end):
        if tables is not None:
            table = tables.get(lid)
        else:
            if route is None:
                raise ValueError("need either tables or a route")
            if grid_pts is None:
                grid_pts = route.line.points_at(grid)
                route_width = max(lane_map[r].width for r in route.lane_ids)
            table = _lane_projection_table(grid_pts, lane_map[lid],
                                           route_width)
        if table is None or len(table[0]) == 0:
            continue
        idx, s_l, d_l = table
        g = np.empty_like(s_l)
        kernels.srq_g_many(np.ascontiguousarray(s_l + off), params.s_s,
                           params.s_e, params.v_max, params.t_pred, g)
        if g.any():
            out[idx] += length * g * lateral_weight(d_l, model)


def project_pvs_risk_to_route(pvs: PhantomVehicleSet, ego_route: Route,
                              params: SrqParams, model: LateralModel,
                              sample_step: float, lane_map: LaneMap, *,
                              grid: np.ndarray | None = None,
                              tables=None) -> RiskProfile:
    """Project one dynamic PVS onto the route as a sampled risk profile.

    Static or degenerate sets carry no reachability mass and produce an
    empty profile.
    """
    if grid is None:
        grid = make_route_grid(ego_route, sample_step)
    source = f"pvs:{pvs.lane_id}:{pvs.s_range[1]:.2f}"
    dense = np.zeros(len(grid))
    if pvs.kind == "dynamic":
        accumulate_pvs_risk(dense, grid, pvs, params, model, lane_map,
                            tables, route=ego_route)
    nz = np.nonzero(dense > 0.0)[0]
    return RiskProfile(grid[nz], dense[nz], source)


def filter_far_pvs(pvs_list, ego_state, static_node_s,
                   k_threshold: float, *, floor_distance: float = 20.0):
    """Drop dynamic sets whose conflict lies beyond attention range.

    The range is ego_s + max(k_threshold * v, floor_distance), further
    capped at the first static node: whatever hides past a point the ego
    must already stop for cannot matter yet.
    """
    ego_s, ego_v = _state_sv(ego_state)
    bound = ego_s + max(k_threshold * ego_v, floor_distance)
    if static_node_s is not None:
        bound = min(bound, float(static_node_s))
    return [pvs for pvs in pvs_list
            if pvs.kind != "dynamic" or pvs.conflict_s_ego <= bound]


def _state_sv(state):
    if isinstance(state, dict):
        return float(state["s"]), float(state["v"])
    if isinstance(state, (tuple, list)):
        return float(state[0]), float(state[1])
    return float(state.s), float(state.v)


def pedestrian_risk_profile(ppz: PhantomPedestrianZone, ego_route: Route,
                            v_max_pp: float, t_pred: float,
                            distance_cutoff: float, model: LateralModel, *,
                            grid: np.ndarray | None = None,
                            sample_step: float = 0.5,
                            out: np.ndarray | None = None) -> RiskProfile:
    """Per-cell pedestrian risk accumulated at the nearest route sample.

    Each occluded cell is a hidden stretch of one cell length on the
    straight walking line toward the route; its mass is evaluated at the
    cell's distance (clamped to half a cell, so cells overlapping the
    route count like touching ones) and dropped beyond the cutoff.
    """
    if grid is None:
        grid = make_route_grid(ego_route, sample_step)
    dense = np.zeros(len(grid)) if out is None else out
    if len(ppz):
        half = 0.5 * ppz.cell_size
        d_eval = np.maximum(ppz.distance_to_route, half)
        mass = np.empty_like(d_eval)
        kernels.ppz_cell_mass(d_eval, ppz.cell_size, v_max_pp, t_pred,
                              float(distance_cutoff), mass)
        mass[ppz.distance_to_route > distance_cutoff] = 0.0
        step = grid[1] - grid[0] if len(grid) > 1 else 1.0
        idx = np.clip(np.rint(ppz.closest_route_s / step).astype(np.intp),
                      0, len(grid) - 1)
        dense += lateral_weight(0.0, model) * np.bincount(
            idx, weights=mass, minlength=len(grid))
    if out is not None:
        return RiskProfile(grid, out, "ppz")
    nz = np.nonzero(dense > 0.0)[0]
    return RiskProfile(grid[nz], dense[nz], "ppz")


def combined_risk(grid: np.ndarray, profiles) -> np.ndarray:
    """Dense pointwise sum of sparse profiles on a uniform grid."""
    total = np.zeros(len(grid))
    if len(grid) > 1:
        step = grid[1] - grid[0]
    else:
        step = 1.0
    for prof in profiles:
        if len(prof):
            idx = np.clip(np.rint((prof.route_s - grid[0]) / step)
                          .astype(np.intp), 0, len(grid) - 1)
            np.add.at(total, idx, prof.risk)
    return total
