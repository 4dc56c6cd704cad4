"""Scenario configuration: lane maps, routes, obstacles, agents and tunable
parameters, with strict JSON loading and lossless round-tripping."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Polygon, Polyline

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


class DisconnectedLanes(ScenarioError):
    def __init__(self, id_a: str, id_b: str):
        super().__init__(f"lane {id_b!r} is not connected to {id_a!r}")
        self.id_a = id_a
        self.id_b = id_b


@dataclass
class Params:
    """All tunables, with defaults suitable for the urban fixtures.

    Speeds are m/s, distances metres, times seconds, accelerations m/s^2.
    """

    # sensing
    sensor_range: float = 50.0
    angular_resolution_deg: float = 1.0
    t_pred: float = 3.0
    confidence: float = 0.90
    # speed assumptions for phantom agents; v_max_pv defaults to 1.5x the
    # road limit when omitted
    road_speed_limit: float = 8.33
    v_max_pv: float = 0.0
    v_max_pp: float = 1.67
    # nonzero enables the pedestrian-zone risk term (sidewalk fixtures)
    pedestrian_risk: float = 0.0
    # risk thresholds and clustering
    c_th_min: float = 120.0
    c_th_max: float = 650.0
    v_occ_min: float = 2.2
    v_occ_max: float = 5.5
    gap_tolerance: float = 3.0
    k_threshold: float = 8.0
    far_floor: float = 20.0
    # sampling
    route_sample_step: float = 0.5
    lane_sample_step: float = 0.5
    pvs_walk_step: float = 0.5
    ppz_cell_size: float = 0.5
    ppz_distance_cutoff: float = 0.0
    crossing_angle_deg: float = 25.0
    # speed planning
    plan_horizon: float = 5.0
    plan_dt: float = 0.2
    w_a: float = 1.0
    w_j: float = 10.0
    w_v: float = 0.1
    a_max: float = 2.0
    a_min: float = -4.0
    jerk_max: float = 5.0
    jerk_min: float = -5.0
    a_lateral_max: float = 2.0
    a_brake_comfort: float = 2.5
    a_emergency: float = -8.0
    a_th: float = 4.0
    standoff: float = 3.0
    # simulation
    sim_dt: float = 0.05
    t_max: float = 60.0
    yield_gap: float = 1.5
    freeze_window: float = 20.0
    v_eps: float = 0.1
    goal_margin: float = 1.0
    ego_length: float = 4.5
    ego_width: float = 1.8
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    ped_radius: float = 0.3
    agent_spawn_jitter: float = 10.0
    seed: int = 0

    def __post_init__(self):
        self.seed = int(self.seed)
        if self.v_max_pv == 0.0:
            self.v_max_pv = 1.5 * self.road_speed_limit
        if self.ppz_distance_cutoff == 0.0:
            self.ppz_distance_cutoff = (self.v_max_pp * self.t_pred
                                        + self.ppz_cell_size)
        _check(self.t_pred > 0, "t_pred must be positive")
        _check(0.0 < self.confidence < 1.0, "confidence must be in (0, 1)")
        _check(self.sensor_range > 0, "sensor_range must be positive")
        _check(self.c_th_min < self.c_th_max,
               "c_th_min must be below c_th_max")
        _check(self.v_occ_min <= self.v_occ_max,
               "v_occ_min must not exceed v_occ_max")
        _check(self.a_min < 0 < self.a_max, "acceleration bounds must span 0")
        _check(self.jerk_min < 0 < self.jerk_max, "jerk bounds must span 0")
        _check(self.plan_dt > 0 and self.plan_horizon > self.plan_dt,
               "plan horizon must cover at least one step")
        _check(self.sim_dt > 0, "sim_dt must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "Params":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ScenarioError(f"unknown params keys: {sorted(unknown)}")
        for key, val in raw.items():
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ScenarioError(f"params.{key} must be a number")
        vals = {k: (int(v) if k == "seed" else float(v))
                for k, v in raw.items()}
        return cls(**vals)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name)
                for f in dataclasses.fields(self)}


@dataclass
class Lane:
    id: str
    width: float
    centerline: Polyline
    successors: tuple[str, ...] = ()

    @property
    def length(self) -> float:
        return self.centerline.length


class LaneMap:
    """Lanes keyed by id, with the successor graph inverted for upstream
    walks."""

    def __init__(self, lanes: Sequence[Lane]):
        self.lanes: dict[str, Lane] = {}
        for lane in lanes:
            if lane.id in self.lanes:
                raise ScenarioError(f"duplicate lane id {lane.id!r}")
            self.lanes[lane.id] = lane
        for lane in lanes:
            for suc in lane.successors:
                if suc not in self.lanes:
                    raise ScenarioError(
                        f"lane {lane.id!r} lists unknown successor {suc!r}")
        self.predecessors: dict[str, tuple[str, ...]] = {
            lid: () for lid in self.lanes}
        for lane in lanes:
            for suc in lane.successors:
                self.predecessors[suc] = self.predecessors[suc] + (lane.id,)

    def __contains__(self, lane_id: str) -> bool:
        return lane_id in self.lanes

    def __getitem__(self, lane_id: str) -> Lane:
        return self.lanes[lane_id]

    @property
    def ids(self) -> list[str]:
        return list(self.lanes)


class Route:
    """Concatenated centerline of an ordered, connected lane sequence."""

    def __init__(self, lane_map: LaneMap, lane_ids: Sequence[str]):
        if not lane_ids:
            raise ScenarioError("route needs at least one lane")
        for lid in lane_ids:
            if lid not in lane_map:
                raise ScenarioError(f"route references unknown lane {lid!r}")
        for a, b in zip(lane_ids, lane_ids[1:]):
            if b not in lane_map[a].successors:
                raise DisconnectedLanes(a, b)
            pa = lane_map[a].centerline.points[-1]
            pb = lane_map[b].centerline.points[0]
            if float(np.hypot(*(pa - pb))) > 1e-6:
                raise DisconnectedLanes(a, b)
        self.lane_ids = tuple(lane_ids)
        self.lane_map = lane_map
        pts = [lane_map[lane_ids[0]].centerline.points]
        offsets = [0.0]
        total = lane_map[lane_ids[0]].length
        for lid in lane_ids[1:]:
            offsets.append(total)
            pts.append(lane_map[lid].centerline.points[1:])
            total += lane_map[lid].length
        self.line = Polyline(np.vstack(pts))
        self.lane_offsets = np.array(offsets)

    @property
    def length(self) -> float:
        return self.line.length

    @property
    def corridor_half_width(self) -> float:
        """Half the narrowest member lane's width."""
        return min(self.lane_map[lid].width for lid in self.lane_ids) / 2.0

    def lane_at(self, s: float) -> tuple[str, float]:
        """Lane id and lane-local arc position for a route arc position."""
        i = int(np.clip(np.searchsorted(self.lane_offsets, s, side="right")
                        - 1, 0, len(self.lane_ids) - 1))
        return self.lane_ids[i], float(s - self.lane_offsets[i])

    def width_at(self, s: float) -> float:
        lid, _ = self.lane_at(s)
        return self.lane_map[lid].width


@dataclass
class EgoSpec:
    route: tuple[str, ...]
    start_s: float
    start_v: float


@dataclass
class AgentSpec:
    kind: str  # "vehicle" or "pedestrian"
    spawn_s: float
    speed_range: tuple[float, float]
    lane: str | None = None
    path: Polyline | None = None
    spawn_jitter: float | None = None


@dataclass
class ScenarioConfig:
    lanes: LaneMap
    obstacles: list[Polygon]
    ego: EgoSpec
    agents: list[AgentSpec]
    params: Params
    name: str = "scenario"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return dump_scenario(self) == dump_scenario(other)

    def build_route(self) -> Route:
        return Route(self.lanes, self.ego.route)


def _check(cond: bool, msg: str):
    if not cond:
        raise ScenarioError(msg)


def _require_keys(raw: dict, required: set[str], optional: set[str],
                  where: str):
    missing = required - set(raw)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    unknown = set(raw) - required - optional
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_points(raw, where: str) -> np.ndarray:
    if (not isinstance(raw, list) or len(raw) < 2
            or not all(isinstance(p, list) and len(p) == 2 for p in raw)):
        raise ScenarioError(f"{where}: expected a list of [x, y] pairs")
    pts = np.asarray(raw, dtype=float)
    if not np.isfinite(pts).all():
        raise ScenarioError(f"{where}: non-finite coordinate")
    return pts


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    """Parse a scenario from JSON text, reporting malformed input with the
    offending line number."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{name}: invalid JSON at line {exc.lineno}, column "
            f"{exc.colno}: {exc.msg}") from exc
    return load_scenario(raw, name=name)


def load_scenario(source: str | Path | dict, name: str = "scenario"
                  ) -> ScenarioConfig:
    """Parse and validate a scenario from a JSON file or an already-loaded
    dict.  Unknown keys anywhere in the document are an error."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        return parse_scenario(path.read_text(), name=path.stem)
    raw = source
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _require_keys(raw, {"schema", "lanes", "ego"},
                  {"obstacles", "agents", "params"}, "scenario")
    if raw["schema"] != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported schema version {raw['schema']!r}, expected "
            f"{SCHEMA_VERSION}")

    lanes = []
    for i, lraw in enumerate(raw["lanes"]):
        where = f"lanes[{i}]"
        if not isinstance(lraw, dict):
            raise ScenarioError(f"{where}: expected an object")
        _require_keys(lraw, {"id", "width", "centerline"}, {"successors"},
                      where)
        if not isinstance(lraw["id"], str) or not lraw["id"]:
            raise ScenarioError(f"{where}: id must be a non-empty string")
        width = lraw["width"]
        if not isinstance(width, (int, float)) or width <= 0:
            raise ScenarioError(f"{where}: width must be positive")
        pts = _parse_points(lraw["centerline"], f"{where}.centerline")
        succ = lraw.get("successors", [])
        if not isinstance(succ, list) or not all(
                isinstance(s, str) for s in succ):
            raise ScenarioError(f"{where}: successors must be lane ids")
        lanes.append(Lane(lraw["id"], float(width), Polyline(pts),
                          tuple(succ)))
    lane_map = LaneMap(lanes)

    obstacles = []
    for i, oraw in enumerate(raw.get("obstacles", [])):
        pts = _parse_points(oraw, f"obstacles[{i}]")
        if len(pts) < 3:
            raise ScenarioError(f"obstacles[{i}]: needs at least 3 vertices")
        try:
            obstacles.append(Polygon(pts))
        except ValueError as exc:
            raise ScenarioError(f"obstacles[{i}]: {exc}") from exc

    eraw = raw["ego"]
    _require_keys(eraw, {"route", "start_s", "start_v"}, set(), "ego")
    route_ids = eraw["route"]
    if (not isinstance(route_ids, list) or not route_ids
            or not all(isinstance(r, str) for r in route_ids)):
        raise ScenarioError("ego.route must be a non-empty list of lane ids")
    ego = EgoSpec(tuple(route_ids), float(eraw["start_s"]),
                  float(eraw["start_v"]))
    _check(ego.start_v >= 0, "ego.start_v must be non-negative")

    agents = []
    for i, araw in enumerate(raw.get("agents", [])):
        where = f"agents[{i}]"
        _require_keys(araw, {"kind", "spawn_s", "speed_range"},
                      {"lane", "path", "spawn_jitter"}, where)
        kind = araw["kind"]
        if kind not in ("vehicle", "pedestrian"):
            raise ScenarioError(f"{where}: kind must be vehicle or pedestrian")
        sr = araw["speed_range"]
        if (not isinstance(sr, list) or len(sr) != 2
                or not 0 <= sr[0] <= sr[1]):
            raise ScenarioError(f"{where}: speed_range must be [lo, hi] with "
                                "0 <= lo <= hi")
        lane_id = araw.get("lane")
        path = None
        if araw.get("path") is not None:
            path = Polyline(_parse_points(araw["path"], f"{where}.path"))
        if (lane_id is None) == (path is None):
            raise ScenarioError(f"{where}: exactly one of lane or path")
        if lane_id is not None and lane_id not in lane_map:
            raise ScenarioError(f"{where}: unknown lane {lane_id!r}")
        jitter = araw.get("spawn_jitter")
        if jitter is not None:
            jitter = float(jitter)
            _check(jitter >= 0, f"{where}: spawn_jitter must be >= 0")
        agents.append(AgentSpec(kind, float(araw["spawn_s"]),
                                (float(sr[0]), float(sr[1])),
                                lane_id, path, jitter))

    params = Params.from_dict(raw.get("params", {}))
    config = ScenarioConfig(lane_map, obstacles, ego, agents, params, name)
    # route validation happens here so broken connectivity fails at load time
    route = config.build_route()
    _check(0 <= ego.start_s < route.length,
           "ego.start_s must lie on the route")
    return config


def dump_scenario(config: ScenarioConfig) -> dict:
    """Serialize back to the JSON document structure.

    load_scenario(dump_scenario(c)) == c holds; floats survive exactly via
    repr round-tripping.
    """
    lanes = []
    for lane in config.lanes.lanes.values():
        lanes.append({
            "id": lane.id,
            "width": lane.width,
            "centerline": lane.centerline.points.tolist(),
            "successors": list(lane.successors),
        })
    agents = []
    for spec in config.agents:
        entry: dict = {
            "kind": spec.kind,
            "spawn_s": spec.spawn_s,
            "speed_range": list(spec.speed_range),
        }
        if spec.lane is not None:
            entry["lane"] = spec.lane
        if spec.path is not None:
            entry["path"] = spec.path.points.tolist()
        if spec.spawn_jitter is not None:
            entry["spawn_jitter"] = spec.spawn_jitter
        agents.append(entry)
    return {
        "schema": SCHEMA_VERSION,
        "lanes": lanes,
        "obstacles": [o.vertices.tolist() for o in config.obstacles],
        "ego": {
            "route": list(config.ego.route),
            "start_s": config.ego.start_s,
            "start_v": config.ego.start_v,
        },
        "agents": agents,
        "params": config.params.to_dict(),
    }


def save_scenario(config: ScenarioConfig, path: str | Path):
    Path(path).write_text(json.dumps(dump_scenario(config), indent=1))


def extend_lane_path(lane_map: LaneMap, lane_id: str,
                     max_length: float = 500.0) -> Polyline:
    """Lane centerline extended through successor lanes.

    Successor choice is deterministic: the first listed successor.  Stops at
    a lane with no successors, at a cycle, or once max_length is reached.
    """
    pts = [lane_map[lane_id].centerline.points]
    seen = {lane_id}
    total = lane_map[lane_id].length
    current = lane_map[lane_id]
    while current.successors and total < max_length:
        nxt = current.successors[0]
        if nxt in seen:
            break
        seen.add(nxt)
        current = lane_map[nxt]
        pts.append(current.centerline.points[1:])
        total += current.length
    return Polyline(np.vstack(pts))
