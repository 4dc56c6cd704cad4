"""Intersecting nodes: points where the observable-region boundary crosses
lane centerlines, classified as static/dynamic and relevant/irrelevant.

A node is *static* when the ego itself can reach it within the prediction
horizon while staying inside the route corridor, and *dynamic* otherwise.
A dynamic node is *relevant* when a vehicle emerging there could reach a
stretch of its lane that crosses the ego route in time; among static nodes
only the first one along the route matters, because the ego must already
resolve that one before any later ones apply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Point2, Polyline, frenet_project_many
from .scenario import LaneMap, Route

MOTION_STATIC = "static"
MOTION_DYNAMIC = "dynamic"
RELEVANT = "relevant"
IRRELEVANT = "irrelevant"
SENSE_ENTER = "entering-occlusion"
SENSE_LEAVE = "leaving-occlusion"


@dataclass(frozen=True)
class NodeKind:
    motion: str
    relevance: str

    def __post_init__(self):
        if self.motion not in (MOTION_STATIC, MOTION_DYNAMIC):
            raise ValueError(f"bad motion label {self.motion!r}")
        if self.relevance not in (RELEVANT, IRRELEVANT):
            raise ValueError(f"bad relevance label {self.relevance!r}")


@dataclass
class IntersectingNode:
    """One crossing of a lane centerline with the observable boundary.

    ``boundary_sense`` records the direction of the crossing when walking
    the lane forward: entering-occlusion means visible before, occluded
    after.  ``route_s``/``route_d`` cache the Frenet projection onto the
    ego route once classify_static_dynamic has run.
    """

    position: Point2
    lane_id: str
    s_on_lane: float
    boundary_sense: str
    kind: NodeKind | None = None
    route_s: float = float("nan")
    route_d: float = float("nan")


@dataclass(frozen=True)
class FrsInterval:
    """Forward-reachable arc interval of a lane-bound phantom vehicle.

    ``s_range`` is expressed on the starting lane; the upper end may exceed
    the lane length, in which case the interval continues into successor
    lanes (expand with frs_segments).
    """

    lane_id: str
    s_range: tuple[float, float]


@dataclass(frozen=True)
class LaneConflict:
    """A stretch where another lane's corridor crosses the route corridor.

    ``lane_range`` is in arc length on the crossing lane, ``route_range``
    in arc length on the ego route.
    """

    lane_id: str
    lane_range: tuple[float, float]
    route_range: tuple[float, float]


def intersect_observable_with_lanes(obs, lane_map: LaneMap,
                                    other_vehicles, clearance: float = 0.5,
                                    *, step: float = 0.5,
                                    lane_windows=None):
    """Find all boundary crossings of lane centerlines with ``obs``.

    ``obs`` needs a boundary-inclusive contains_many; both Polygon and
    StarPolygon qualify.  Crossings closer than ``clearance`` to a known
    vehicle footprint are dropped: a real vehicle parked on the boundary
    leaves no room for a phantom one.  ``lane_windows`` optionally limits
    the search to ``{lane_id: (s_lo, s_hi)}``; lanes absent from it are
    skipped entirely.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    vehicle_segs = [(v, v.edges_array()) for v in other_vehicles]
    nodes: list[IntersectingNode] = []
    for lane in lane_map.lanes.values():
        if lane_windows is not None:
            if lane.id not in lane_windows:
                continue
            lo, hi = lane_windows[lane.id]
            lo = max(0.0, float(lo))
            hi = min(lane.length, float(hi))
            if hi - lo < 1e-9:
                continue
        else:
            lo, hi = 0.0, lane.length
        s_vals = np.arange(lo, hi, step)
        if hi - s_vals[-1] > 1e-12:
            s_vals = np.append(s_vals, hi)
        inside = obs.contains_many(lane.centerline.points_at(s_vals))
        flips = np.nonzero(inside[:-1] != inside[1:])[0]
        if flips.size == 0:
            continue
        crossings = _refine_crossings(lane.centerline, s_vals[flips],
                                      s_vals[flips + 1], inside[flips], obs)
        for i, s_cross in zip(flips, crossings):
            pos = lane.centerline.point_at(s_cross)
            if any(_point_polygon_distance(pos, poly, segs) <= clearance
                   for poly, segs in vehicle_segs):
                continue
            sense = SENSE_ENTER if inside[i] else SENSE_LEAVE
            nodes.append(IntersectingNode(pos, lane.id, float(s_cross),
                                          sense))
    return nodes


def _refine_crossings(line: Polyline, s_a, s_b, inside_a, obs,
                      tol: float = 1e-7) -> np.ndarray:
    """Bisect each (s_a, s_b) bracket down to ``tol`` of arc length.

    All brackets advance together so the containment probe stays one
    vectorized call per iteration.
    """
    s_a = s_a.astype(float).copy()
    s_b = s_b.astype(float).copy()
    for _ in range(64):
        if (s_b - s_a).max() <= tol:
            break
        mid = 0.5 * (s_a + s_b)
        same = obs.contains_many(line.points_at(mid)) == inside_a
        s_a = np.where(same, mid, s_a)
        s_b = np.where(same, s_b, mid)
    return 0.5 * (s_a + s_b)


def _point_polygon_distance(point, poly, segs=None) -> float:
    if poly.contains(point):
        return 0.0
    if segs is None:
        segs = poly.edges_array()
    p = np.asarray(point, dtype=float)
    a = segs[:, :2]
    ab = segs[:, 2:] - a
    denom = np.maximum((ab * ab).sum(axis=1), 1e-300)
    t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.sqrt(((p - closest) ** 2).sum(axis=1).min()))


def pv_frs_interval(node_s: float, lane_id: str, v_max: float,
                    t_pred: float, lane_map: LaneMap) -> FrsInterval:
    """Arc interval a phantom vehicle at ``node_s`` can occupy within
    ``t_pred`` driving forward at up to ``v_max``."""
    if lane_id not in lane_map:
        raise KeyError(f"unknown lane {lane_id!r}")
    reach = max(0.0, float(v_max)) * float(t_pred)
    return FrsInterval(lane_id, (float(node_s), float(node_s) + reach))


def frs_segments(frs: FrsInterval, lane_map: LaneMap):
    """Expand an FRS interval into concrete per-lane pieces.

    Every successor branch is followed; pieces that meet again on a shared
    downstream lane are merged.  Returns {lane_id: [(s_lo, s_hi), ...]}.
    """
    pieces: dict[str, list[tuple[float, float]]] = {}
    stack = [(frs.lane_id, frs.s_range[0], frs.s_range[1])]
    while stack:
        lane_id, lo, hi = stack.pop()
        length = lane_map[lane_id].length
        cut = min(hi, length)
        if cut >= lo:
            pieces.setdefault(lane_id, []).append((lo, cut))
        spill = hi - length
        if spill > 1e-9:
            for suc in lane_map[lane_id].successors:
                stack.append((suc, 0.0, spill))
    return {lane: _merge_intervals(ivs) for lane, ivs in pieces.items()}


def _merge_intervals(intervals, tol: float = 1e-9):
    ivs = sorted(intervals)
    merged = [list(ivs[0])]
    for lo, hi in ivs[1:]:
        if lo <= merged[-1][1] + tol:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def classify_static_dynamic(nodes, ego_route: Route, ego_v_max: float,
                            t_pred: float, *, ego_s: float = 0.0):
    """Label each node static or dynamic and cache its route projection.

    Static means the ego reaches the node within the horizon without
    leaving its corridor: |d| within corridor_half_width and the projected
    arc inside [ego_s, ego_s + ego_v_max * t_pred].
    """
    if not nodes:
        return nodes
    pts = np.array([node.position for node in nodes], dtype=float)
    s_route, d_route = frenet_project_many(pts, ego_route.line)
    half = ego_route.corridor_half_width
    reach = ego_s + ego_v_max * t_pred
    for node, s, d in zip(nodes, s_route, d_route):
        node.route_s = float(s)
        node.route_d = float(d)
        static = abs(d) <= half and ego_s <= s <= reach
        relevance = node.kind.relevance if node.kind else IRRELEVANT
        node.kind = NodeKind(MOTION_STATIC if static else MOTION_DYNAMIC,
                             relevance)
    return nodes


def classify_relevance(nodes, ego_route: Route, t_pred: float,
                       v_max: float, lane_map: LaneMap, *,
                       conflicts=None, ego_s: float = 0.0,
                       behind_margin: float = 5.0):
    """Label each classified node relevant or irrelevant.

    A dynamic node is relevant when its phantom-vehicle FRS overlaps a
    conflict stretch whose route-side span is not yet fully behind the
    ego (within ``behind_margin``).  Exactly the first static node along
    the route is relevant.
    """
    if any(node.kind is None for node in nodes):
        raise ValueError("run classify_static_dynamic first")
    if conflicts is None:
        conflicts = RouteConflicts(ego_route, lane_map)
    statics = [n for n in nodes if n.kind.motion == MOTION_STATIC]
    first = min(statics, key=lambda n: n.route_s, default=None)
    for node in nodes:
        if node.kind.motion == MOTION_STATIC:
            relevant = node is first
        else:
            relevant = _frs_hits_conflict(node, ego_route, t_pred, v_max,
                                          lane_map, conflicts, ego_s,
                                          behind_margin) is not None
        node.kind = NodeKind(node.kind.motion,
                             RELEVANT if relevant else IRRELEVANT)
    return nodes


def _frs_hits_conflict(node, ego_route, t_pred, v_max, lane_map,
                       conflicts, ego_s, behind_margin):
    """First conflict the node's FRS can still reach, or None.

    Returns (conflict, distance from the node to the conflict start along
    the lane chain); the nearest overlapping conflict wins.
    """
    frs = pv_frs_interval(node.s_on_lane, node.lane_id, v_max, t_pred,
                          lane_map)
    best = None
    for lane_id, pieces in frs_segments(frs, lane_map).items():
        for conflict in conflicts.by_lane.get(lane_id, ()):
            if conflict.route_range[1] < ego_s - behind_margin:
                continue
            c_lo, c_hi = conflict.lane_range
            for lo, hi in pieces:
                if lo <= c_hi and hi >= c_lo:
                    if lane_id == node.lane_id:
                        dist = c_lo - node.s_on_lane
                    else:
                        # piece starts at the successor lane origin; the
                        # walk to it consumed (reach - remaining) metres
                        dist = (v_max * t_pred - (hi - lo)) + (c_lo - lo)
                    if best is None or dist < best[1]:
                        best = (conflict, dist)
                    break
    return best


class RouteConflicts:
    """Precomputed crossings of every other lane with the ego route.

    A lane sample counts as conflicting when it sits inside the combined
    corridor (lateral offset below the half-width sum) and its tangent
    differs from the route tangent by at least ``crossing_angle_deg``, so
    adjacent parallel lanes never conflict while merging and crossing
    lanes do.  Contiguous samples become LaneConflict stretches.

    When ``route_grid`` (arc positions on the route) is given, a lateral
    projection table is prepared per conflicting lane for fast risk
    transfer onto the grid.
    """

    def __init__(self, route: Route, lane_map: LaneMap, *,
                 sample_step: float = 0.5, crossing_angle_deg: float = 25.0,
                 route_grid: np.ndarray | None = None,
                 lateral_cutoff: float | None = None):
        self.route = route
        self.by_lane: dict[str, list[LaneConflict]] = {}
        self.lane_tables: dict[str, tuple[np.ndarray, np.ndarray,
                                          np.ndarray]] = {}
        cos_thresh = float(np.cos(np.radians(crossing_angle_deg)))
        member_widths = np.array([lane_map[lid].width
                                  for lid in route.lane_ids])
        route_ids = set(route.lane_ids)
        for lane in lane_map.lanes.values():
            if lane.id in route_ids:
                continue
            s_vals = np.arange(0.0, lane.length, sample_step)
            if lane.length - s_vals[-1] > 1e-12:
                s_vals = np.append(s_vals, lane.length)
            pts = lane.centerline.points_at(s_vals)
            s_r, d_r = frenet_project_many(pts, route.line)
            idx = np.clip(np.searchsorted(route.lane_offsets, s_r,
                                          side="right") - 1,
                          0, len(member_widths) - 1)
            half = (lane.width + member_widths[idx]) / 2.0
            dots = (lane.centerline.tangents_at(s_vals)
                    * route.line.tangents_at(s_r)).sum(axis=1)
            mask = (np.abs(d_r) < half - 1e-9) & (dots <= cos_thresh + 1e-12)
            found = []
            for i0, i1 in _mask_runs(mask, bridge=2):
                lane_lo = max(0.0, s_vals[i0] - sample_step / 2.0)
                lane_hi = min(lane.length, s_vals[i1] + sample_step / 2.0)
                r_lo = max(0.0, s_r[i0:i1 + 1].min() - sample_step / 2.0)
                r_hi = min(route.length,
                           s_r[i0:i1 + 1].max() + sample_step / 2.0)
                found.append(LaneConflict(lane.id,
                                          (float(lane_lo), float(lane_hi)),
                                          (float(r_lo), float(r_hi))))
            if found:
                self.by_lane[lane.id] = found
        if route_grid is not None:
            grid_pts = route.line.points_at(np.asarray(route_grid,
                                                       dtype=float))
            route_w = member_widths.max()
            for lane_id in self.by_lane:
                lane = lane_map[lane_id]
                cutoff = (lateral_cutoff if lateral_cutoff is not None
                          else (lane.width + route_w) / 2.0 + 3.0)
                s_l, d_l = frenet_project_many(grid_pts, lane.centerline)
                keep = np.nonzero(np.abs(d_l) <= cutoff)[0]
                if keep.size:
                    self.lane_tables[lane_id] = (keep.astype(np.intp),
                                                 s_l[keep], d_l[keep])

    def nearest_for(self, node: IntersectingNode, t_pred: float,
                    v_max: float, lane_map: LaneMap, *,
                    ego_s: float = 0.0, behind_margin: float = 5.0):
        """The conflict binding a relevant dynamic node, with its distance
        ahead of the node along the lane chain."""
        return _frs_hits_conflict(node, self.route, t_pred, v_max,
                                  lane_map, self, ego_s, behind_margin)


def _mask_runs(mask: np.ndarray, bridge: int = 0):
    """Index ranges (inclusive) of True runs; gaps of up to ``bridge``
    False samples between runs are swallowed."""
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    splits = np.nonzero(np.diff(idx) > bridge + 1)[0]
    starts = np.concatenate(([0], splits + 1))
    ends = np.concatenate((splits, [idx.size - 1]))
    return [(int(idx[a]), int(idx[b])) for a, b in zip(starts, ends)]
