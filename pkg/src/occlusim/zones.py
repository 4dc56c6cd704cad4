"""Phantom agents hidden in occluded space.

A phantom vehicle set (PVS) is the lane stretch that could conceal a
vehicle able to reach the ego route in time; the phantom pedestrian zone
(PPZ) is a grid of occluded cells close enough to the route for a hidden
pedestrian to step into it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Point2, frenet_project_many
from .nodes import (IntersectingNode, MOTION_DYNAMIC, MOTION_STATIC,
                    RELEVANT, RouteConflicts)
from .scenario import LaneMap, Route


@dataclass(frozen=True)
class PhantomVehicleSet:
    """Occluded lane stretch [s_s, s_e] that may hide one vehicle.

    Arc positions are on the node's lane; s_s may be negative when the
    stretch continues through a unique predecessor lane.  conflict_s_pv is
    where that lane chain enters the route corridor, conflict_s_ego where
    the route enters the shared corridor.
    """

    kind: str
    lane_id: str
    s_range: tuple[float, float]
    conflict_s_ego: float
    conflict_s_pv: float


@dataclass
class PhantomPedestrianZone:
    """Occluded grid cells within stepping range of the route window."""

    centers: np.ndarray
    closest_route_s: np.ndarray
    distance_to_route: np.ndarray
    cell_size: float

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def cells(self) -> list[Point2]:
        return [Point2(x, y) for x, y in self.centers]


def build_static_pvs(relevant_static_node: IntersectingNode
                     ) -> PhantomVehicleSet:
    """Degenerate set at the first occlusion boundary on the ego path."""
    node = relevant_static_node
    if node.kind is None or node.kind.motion != MOTION_STATIC \
            or node.kind.relevance != RELEVANT:
        raise ValueError("node must be a relevant static node")
    s = float(node.s_on_lane)
    return PhantomVehicleSet("static", node.lane_id, (s, s),
                             float(node.route_s), s)


def build_dynamic_pvs(start_node: IntersectingNode, obs, ego_route: Route,
                      v_max: float, t_pred: float, step: float,
                      lane_map: LaneMap, *, conflicts=None,
                      ego_s: float = 0.0) -> PhantomVehicleSet:
    """Walk upstream from a relevant dynamic node collecting hidden space.

    Points are added while they stay occluded and a vehicle there could
    still reach the conflict within the horizon; the walk follows a unique
    predecessor lane past the lane start and halts at junctions.  The span
    is additionally capped at v_max * t_pred so the set never outgrows
    what a single horizon can move through.
    """
    node = start_node
    if node.kind is None or node.kind.motion != MOTION_DYNAMIC \
            or node.kind.relevance != RELEVANT:
        raise ValueError("node must be a relevant dynamic node")
    if step <= 0:
        raise ValueError("step must be positive")
    if conflicts is None:
        conflicts = RouteConflicts(ego_route, lane_map)
    hit = conflicts.nearest_for(node, t_pred, v_max, lane_map, ego_s=ego_s)
    if hit is None:
        raise ValueError("node cannot reach any route conflict")
    conflict, dist = hit
    s_e = float(node.s_on_lane)
    reach = v_max * t_pred
    conflict_entry = s_e + dist
    p_min = max(s_e - reach, conflict_entry - reach)
    n = int(math.floor((s_e - p_min) / step + 1e-9))
    s_s = s_e
    if n > 0:
        cand = s_e - step * np.arange(1, n + 1)
        pts, valid_n = _chain_points(lane_map, node.lane_id, cand)
        visible = np.ones(n, dtype=bool)
        if valid_n > 0:
            visible[:valid_n] = obs.contains_many(pts[:valid_n])
        stops = np.nonzero(visible)[0]
        keep = stops[0] if stops.size else valid_n
        if keep > 0:
            s_s = float(cand[keep - 1])
    return PhantomVehicleSet("dynamic", node.lane_id, (s_s, s_e),
                             float(conflict.route_range[0]),
                             max(conflict_entry, s_e))


def _chain_points(lane_map: LaneMap, lane_id: str, chain_s: np.ndarray):
    """World points for descending arc positions on a lane chain.

    Negative positions continue through unique predecessors.  Returns the
    points plus the count that could be resolved; resolution stops at the
    first junction or dead end, which truncates everything after it.
    """
    pts = np.empty((len(chain_s), 2))
    on_lane = chain_s >= 0.0
    line = lane_map[lane_id].centerline
    k = int(on_lane.sum())
    pts[:k] = line.points_at(chain_s[:k])
    shift = 0.0
    lid = lane_id
    i = k
    while i < len(chain_s):
        preds = lane_map.predecessors.get(lid, ())
        if len(preds) != 1:
            break
        lid = preds[0]
        shift += lane_map[lid].length
        local = chain_s[i:] + shift
        m = int((local >= 0.0).sum())
        pts[i:i + m] = lane_map[lid].centerline.points_at(local[:m])
        i += m
    return pts, i


class PpzGrid:
    """Candidate pedestrian cells precomputed once per scenario.

    Cell centers sit on a world-aligned lattice of the given size; only
    cells within ``radius`` of the full route are kept, sorted by their
    route arc projection so a window lookup is a binary search.
    """

    def __init__(self, route: Route, cell_size: float, radius: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self.radius = float(radius)
        c = self.cell_size
        pad = self.radius + c
        lo = route.line.points.min(axis=0) - pad
        hi = route.line.points.max(axis=0) + pad
        xs = (np.arange(math.floor(lo[0] / c),
                        math.ceil(hi[0] / c)) + 0.5) * c
        ys = (np.arange(math.floor(lo[1] / c),
                        math.ceil(hi[1] / c)) + 0.5) * c
        gx, gy = np.meshgrid(xs, ys)
        centers = np.column_stack((gx.ravel(), gy.ravel()))
        s, d = frenet_project_many(centers, route.line)
        keep = np.abs(d) <= self.radius + 1e-9
        order = np.argsort(s[keep], kind="stable")
        self.centers = np.ascontiguousarray(centers[keep][order])
        self.route_s = s[keep][order]
        self.route_dist = np.abs(d[keep][order])
        self.route = route

    def window(self, s_lo: float, s_hi: float, radius: float):
        """Cells within ``radius`` of the route segment [s_lo, s_hi].

        Returns (centers, closest_route_s, distance), boundary inclusive.
        """
        if radius > self.radius + 1e-9:
            raise ValueError("window radius exceeds grid radius")
        s_lo = max(0.0, s_lo)
        s_hi = min(self.route.length, s_hi)
        if s_hi <= s_lo:
            return (np.empty((0, 2)), np.empty(0), np.empty(0))
        pad = radius + self.cell_size
        a = int(np.searchsorted(self.route_s, s_lo - pad, side="left"))
        b = int(np.searchsorted(self.route_s, s_hi + pad, side="right"))
        centers = self.centers[a:b]
        s = self.route_s[a:b]
        dist = self.route_dist[a:b].copy()
        before = s < s_lo
        after = s > s_hi
        if before.any():
            p = self.route.line.point_at(s_lo)
            dist[before] = np.hypot(centers[before, 0] - p.x,
                                    centers[before, 1] - p.y)
        if after.any():
            p = self.route.line.point_at(s_hi)
            dist[after] = np.hypot(centers[after, 0] - p.x,
                                   centers[after, 1] - p.y)
        keep = dist <= radius + 1e-9
        return (centers[keep], np.clip(s[keep], s_lo, s_hi), dist[keep])


def build_ppz(obs, ego_route: Route, v_max_pp: float, t_pred: float,
              cell_size: float, route_window, *,
              grid: PpzGrid | None = None) -> PhantomPedestrianZone:
    """Occluded cells a pedestrian could walk onto the route window from.

    A cell qualifies when it lies outside the observable region and within
    v_max_pp * t_pred of the window segment, boundaries included.
    """
    radius = v_max_pp * t_pred
    if grid is None:
        grid = PpzGrid(ego_route, cell_size, radius)
    elif abs(grid.cell_size - cell_size) > 1e-12:
        raise ValueError("grid was built with a different cell size")
    s_lo, s_hi = route_window
    centers, closest_s, dist = grid.window(float(s_lo), float(s_hi), radius)
    if len(centers):
        occluded = ~obs.contains_many(centers)
        centers = centers[occluded]
        closest_s = closest_s[occluded]
        dist = dist[occluded]
    return PhantomPedestrianZone(centers, closest_s, dist, float(cell_size))
