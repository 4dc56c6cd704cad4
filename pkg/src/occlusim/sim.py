"""Closed-loop scenario simulation with hidden agents.

One World couples the full perception-to-plan pipeline to simple
kinematics: every tick it rebuilds the observable polygon, derives
occlusion risk and speed directives, plans a velocity profile, and moves
the ego exactly along that profile while agents follow their paths at
constant speed.  Everything is deterministic given the scenario and the
run seed; wall-clock timings are collected on the side and never feed
back into behavior.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from .geometry import (Polygon, Polyline, build_visibility_polygon,
                       convex_overlap, curvature_profile,
                       frenet_project_many, oriented_rect,
                       polygons_to_segments)
from .nodes import (MOTION_STATIC, RELEVANT, RouteConflicts,
                    classify_relevance, classify_static_dynamic,
                    intersect_observable_with_lanes)
from .planning import (NonConvergent, SpeedLimitDirective, SpeedPlanner,
                       VelocityPlan, _brake_floor, cluster_risk,
                       directives_from_clusters, static_stop_directive,
                       stop_envelope)
from .risk import (LateralModel, RiskProfile, SrqParams,
                   accumulate_pvs_risk, filter_far_pvs, make_route_grid,
                   pedestrian_risk_profile)
from .scenario import Params, Route, ScenarioConfig
from .zones import PpzGrid, build_dynamic_pvs, build_ppz, build_static_pvs

VARIANTS = ("proposed", "baseline1", "baseline3")


def variant_params(params: Params, variant: str) -> Params:
    """Parameter overrides per method variant.

    baseline1 keeps the parameters and instead skips the occlusion
    pipeline entirely; baseline3 degenerates the risk-to-limit map so
    every cluster demands a full stop.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "baseline3":
        return dataclasses.replace(params, c_th_min=0.0, v_occ_min=0.0,
                                   v_occ_max=0.0)
    return dataclasses.replace(params)


@dataclass
class EgoState:
    route_s: float
    v: float
    a: float
    length: float
    width: float


@dataclass
class AgentState:
    idx: int
    kind: str
    path: Polyline
    path_s: float
    v: float
    length: float
    width: float
    conflict: tuple | None
    active: bool = True

    def pose(self):
        pos = self.path.point_at(self.path_s)
        tan = self.path.tangent_at(self.path_s)
        return pos, math.atan2(tan[1], tan[0])


@dataclass
class RunMetrics:
    collided: bool
    discomfort: float
    traversal_time: float
    froze: bool
    mean_cycle_time: float
    p99_cycle_time: float
    goal_reached: bool
    sim_time: float
    n_ticks: int


@dataclass
class BatchAggregate:
    n_runs: int
    collision_rate: float
    discomfort: float
    traversal_time: float
    freeze_rate: float
    goal_rate: float
    mean_cycle_ms: float
    p99_cycle_ms: float


def detect_collision(ego: EgoState, agents, route: Route) -> bool:
    """Closed-contact overlap between the ego footprint and any agent."""
    center = route.line.point_at(ego.route_s)
    tan = route.line.tangent_at(ego.route_s)
    heading = math.atan2(tan[1], tan[0])
    rect = oriented_rect(center, heading, ego.length, ego.width)
    reach = (ego.length + ego.width)
    for agent in agents:
        if not agent.active:
            continue
        pos, ahead = agent.pose()
        gate = reach + max(agent.length, agent.width)
        if (pos[0] - center[0]) ** 2 + (pos[1] - center[1]) ** 2 \
                > gate * gate:
            continue
        if agent.kind == "pedestrian":
            if _rect_disc_hit(center, heading, ego.length, ego.width,
                              pos, agent.width / 2.0):
                return True
        else:
            other = oriented_rect(pos, ahead, agent.length, agent.width)
            if convex_overlap(rect, other):
                return True
    return False


def _rect_disc_hit(center, heading, length, width, c, r) -> bool:
    dx = c[0] - center[0]
    dy = c[1] - center[1]
    ch, sh = math.cos(heading), math.sin(heading)
    lx = dx * ch + dy * sh
    ly = -dx * sh + dy * ch
    qx = min(max(lx, -length / 2.0), length / 2.0)
    qy = min(max(ly, -width / 2.0), width / 2.0)
    return (lx - qx) ** 2 + (ly - qy) ** 2 <= r * r + 1e-12


def discomfort_score(accel_trace, a_th: float) -> float:
    """Time-averaged exceedance of |a| over the comfort threshold."""
    rows = [(float(r["t"]), float(r["a"])) if isinstance(r, dict)
            else (float(r[0]), float(r[1])) for r in accel_trace]
    if len(rows) < 2:
        return 0.0
    t = np.array([r[0] for r in rows])
    ex = np.maximum(np.abs([r[1] for r in rows]) - a_th, 0.0)
    span = t[-1] - t[0]
    if span <= 0:
        return 0.0
    return float(np.trapz(ex, t) / span)


def detect_freeze(history, window: float, v_eps: float,
                  goal_reached: bool) -> bool:
    """True when the trailing ``window`` seconds all show the ego below
    ``v_eps`` with an occlusion directive still ahead.

    ``history`` rows are (t, v, occlusion_ahead) triples or dicts with
    those keys, on a uniform time grid.
    """
    if goal_reached:
        return False
    rows = [(float(r["t"]), float(r["v"]), bool(r["occlusion_ahead"]))
            if isinstance(r, dict) else
            (float(r[0]), float(r[1]), bool(r[2])) for r in history]
    if len(rows) < 2:
        return False
    dt = rows[1][0] - rows[0][0]
    run = 0
    for _, v, occ in reversed(rows):
        if v < v_eps and occ:
            run += 1
        else:
            break
    return run * dt >= window - 1e-9


class ScenarioRuntime:
    """Per-scenario precomputation shared by every run and variant."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        p = config.params
        self.params = p
        self.route = Route(config.lanes, config.ego.route)
        self.grid = make_route_grid(self.route, p.route_sample_step)
        self.conflicts = RouteConflicts(
            self.route, config.lanes, sample_step=p.lane_sample_step,
            crossing_angle_deg=p.crossing_angle_deg, route_grid=self.grid)
        self.model = LateralModel(self.route.width_at(config.ego.start_s),
                                  p.confidence)
        self.segments = polygons_to_segments(config.obstacles)
        self.base_angles = np.arange(
            -math.pi, math.pi, math.radians(p.angular_resolution_deg))
        kappa = curvature_profile(self.route.line)
        self.curve_lut = (self.route.line.cum_s.copy(),
                          np.sqrt(p.a_lateral_max
                                  / np.maximum(kappa, 1e-6)))
        self.ppz_grid = (PpzGrid(self.route, p.ppz_cell_size,
                                 p.v_max_pp * p.t_pred)
                         if p.pedestrian_risk else None)
        self.agent_paths: list[Polyline] = []
        self.agent_conflicts: list[tuple | None] = []
        for spec in config.agents:
            path = spec.path
            if path is None:
                path = config.lanes[spec.lane].centerline
            self.agent_paths.append(path)
            wid = (2.0 * p.ped_radius if spec.kind == "pedestrian"
                   else p.vehicle_width)
            self.agent_conflicts.append(
                _path_conflict(path, self.route, wid))
        # coarse per-lane samples to window the node search near the ego
        self._win_pts = []
        self._win_s = []
        self._win_lane = []
        for lid, lane in config.lanes.lanes.items():
            s = np.arange(0.0, lane.length + 1e-9, 2.0)
            self._win_pts.append(lane.centerline.points_at(s))
            self._win_s.append(s)
            self._win_lane.append(lid)

    def lane_windows(self, origin, reach: float) -> dict:
        windows = {}
        ox, oy = origin
        for lid, pts, s in zip(self._win_lane, self._win_pts, self._win_s):
            d2 = (pts[:, 0] - ox) ** 2 + (pts[:, 1] - oy) ** 2
            near = np.nonzero(d2 <= reach * reach)[0]
            if near.size:
                windows[lid] = (s[near[0]] - 2.0, s[near[-1]] + 2.0)
        return windows


def _path_conflict(path: Polyline, route: Route, agent_width: float):
    """Where an agent path crosses the ego corridor.

    Returns (path_lo, path_hi, route_lo, route_hi) for the first crossing
    stretch, or None when the path never meets the corridor.
    """
    step = 0.25
    s = np.arange(0.0, path.length + 1e-9, step)
    s_r, d_r = frenet_project_many(path.points_at(s), route.line)
    width = np.array([route.width_at(x) for x in s_r])
    mask = np.abs(d_r) <= (width + agent_width) / 2.0
    # drop the stretch where the path runs along the route itself rather
    # than across it (parallel approach tails)
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return None
    splits = np.nonzero(np.diff(idx) > 3)[0]
    first = idx[: splits[0] + 1] if splits.size else idx
    r_span = s_r[first]
    return (float(s[first[0]]), float(s[first[-1]]),
            float(r_span.min()), float(r_span.max()))


def make_agents(runtime: ScenarioRuntime, rng: np.random.Generator
                ) -> list[AgentState]:
    """Instantiate agents for one run; speed and spawn jitter per seed."""
    p = runtime.params
    agents = []
    for i, spec in enumerate(runtime.config.agents):
        v = float(rng.uniform(*spec.speed_range))
        jitter = (spec.spawn_jitter if spec.spawn_jitter is not None
                  else p.agent_spawn_jitter)
        off = float(rng.uniform(-jitter / 2.0, jitter / 2.0))
        path = runtime.agent_paths[i]
        if spec.kind == "pedestrian":
            length = width = 2.0 * p.ped_radius
        else:
            length, width = p.vehicle_length, p.vehicle_width
        agents.append(AgentState(
            i, spec.kind, path,
            float(np.clip(spec.spawn_s + off, 0.0, path.length)), v,
            length, width, runtime.agent_conflicts[i]))
    return agents


class World:
    """One simulation run: ego, agents, and the assessment pipeline."""

    def __init__(self, runtime: ScenarioRuntime, variant: str,
                 agents: list[AgentState]):
        self.rt = runtime
        self.variant = variant
        base = runtime.params
        self.p = variant_params(base, variant)
        self.ego = EgoState(runtime.config.ego.start_s,
                            runtime.config.ego.start_v, 0.0,
                            base.ego_length, base.ego_width)
        self.agents = agents
        self.planner = SpeedPlanner(
            base.plan_horizon, base.plan_dt, base.w_a, base.w_j, base.w_v,
            activation_brake=base.a_brake_comfort,
            stop_standoff=base.standoff, v_eps=base.v_eps)
        self.bounds = {"a_min": base.a_min, "a_max": base.a_max,
                       "jerk_min": base.jerk_min, "jerk_max": base.jerk_max}
        self.bounds_emergency = {
            "a_min": base.a_emergency, "a_max": base.a_max,
            "jerk_min": 4.0 * base.jerk_min,
            "jerk_max": 4.0 * base.jerk_max}
        self.tick = 0
        self.trace: list[tuple] = []
        self.cycle_ms: list[float] = []
        self._dense = np.zeros(len(runtime.grid))
        self._freeze_run = 0
        self._min_risk = base.c_th_min / 100.0 if variant != "baseline3" \
            else 0.0
        self._cache_key = None
        self._cache = None
        self.collided = False
        self.froze = False
        self.goal_reached = False
        self._a_hist: list[float] = []
        self._v_hist: list[float] = []

    @property
    def t(self) -> float:
        return self.tick * self.p.sim_dt

    # -- per-tick pipeline -------------------------------------------------

    def _observe(self):
        p = self.p
        origin = self.rt.route.line.point_at(self.ego.route_s)
        obs = build_visibility_polygon(
            origin, self.rt.config.obstacles, p.sensor_range,
            segments=self.rt.segments, base_angles=self.rt.base_angles)
        visible = []
        for agent in self.agents:
            if not agent.active:
                continue
            pos, heading = agent.pose()
            gate = p.sensor_range + max(agent.length, agent.width)
            if (pos[0] - origin[0]) ** 2 + (pos[1] - origin[1]) ** 2 \
                    > gate * gate:
                continue
            corners = oriented_rect(pos, heading, agent.length,
                                    agent.width)
            probe = np.vstack([corners, [pos]])
            if obs.contains_many(probe).any():
                visible.append((agent, Polygon(corners, validate=False)))
        return obs, visible

    def _assess(self, obs, visible):
        """Occlusion pipeline: nodes -> zones -> risk -> directives.

        Returns (directives, stop positions, occlusion_ahead, risk_ahead).
        """
        p = self.p
        ego_s = self.ego.route_s
        if self.variant == "baseline1":
            return [], [], False, 0.0
        origin = self.rt.route.line.point_at(ego_s)
        windows = self.rt.lane_windows(origin, p.sensor_range + 2.0)
        nodes = intersect_observable_with_lanes(
            obs, self.rt.config.lanes, [poly for _, poly in visible],
            step=p.lane_sample_step, lane_windows=windows)
        directives: list[SpeedLimitDirective] = []
        stops: list[float] = []
        first_static = None
        if nodes:
            classify_static_dynamic(nodes, self.rt.route,
                                    p.road_speed_limit, p.t_pred,
                                    ego_s=ego_s)
            classify_relevance(nodes, self.rt.route, p.t_pred, p.v_max_pv,
                               self.rt.config.lanes,
                               conflicts=self.rt.conflicts, ego_s=ego_s)
        dense = self._dense
        dense[:] = 0.0
        pvs_list = []
        for node in nodes:
            if node.kind.relevance != RELEVANT:
                continue
            if node.kind.motion == MOTION_STATIC:
                if first_static is None or node.route_s < first_static[1]:
                    first_static = (node, node.route_s)
                continue
            pvs = build_dynamic_pvs(node, obs, self.rt.route, p.v_max_pv,
                                    p.t_pred, p.pvs_walk_step,
                                    self.rt.config.lanes,
                                    conflicts=self.rt.conflicts,
                                    ego_s=ego_s)
            if pvs.s_range[1] - pvs.s_range[0] > 1e-9:
                pvs_list.append(pvs)
        static_s = first_static[1] if first_static else None
        pvs_list = filter_far_pvs(pvs_list, (ego_s, self.ego.v), static_s,
                                  p.k_threshold,
                                  floor_distance=p.far_floor)
        for pvs in pvs_list:
            srq = SrqParams(p.v_max_pv, p.t_pred, *pvs.s_range)
            accumulate_pvs_risk(dense, self.rt.grid, pvs, srq,
                                self.rt.model, self.rt.config.lanes,
                                self.rt.conflicts.lane_tables)
        if self.rt.ppz_grid is not None:
            bound = ego_s + max(p.k_threshold * self.ego.v, p.far_floor)
            if static_s is not None:
                bound = min(bound, static_s)
            bound = min(bound, self.rt.route.length)
            if bound > ego_s:
                ppz = build_ppz(obs, self.rt.route, p.v_max_pp, p.t_pred,
                                p.ppz_cell_size, (ego_s, bound),
                                grid=self.rt.ppz_grid)
                pedestrian_risk_profile(
                    ppz, self.rt.route, p.v_max_pp, p.t_pred,
                    p.ppz_distance_cutoff, self.rt.model,
                    grid=self.rt.grid, out=dense)
        clusters = cluster_risk(RiskProfile(self.rt.grid, dense, "tick"),
                                p.gap_tolerance, self._min_risk)
        clusters = [c for c in clusters if c.s_max >= ego_s - 1.0]
        directives.extend(directives_from_clusters(clusters, p))
        if first_static is not None:
            static_pvs = build_static_pvs(first_static[0])
            env = static_stop_directive(static_pvs, self.rt.route,
                                        p.a_brake_comfort, p.standoff,
                                        sample_step=p.route_sample_step)
            if env:
                directives.extend(env)
                stops.append(float(static_pvs.conflict_s_ego))
        i0 = np.searchsorted(self.rt.grid, ego_s - 1e-9)
        risk_ahead = float(dense[i0:].sum())
        occ_ahead = any(d.route_s + d.extent >= ego_s - 0.5
                        for d in directives)
        return directives, stops, occ_ahead, risk_ahead

    def _yields(self, visible):
        """Stop envelopes for perceived agents about to cross the route."""
        p = self.p
        ego = self.ego
        directives: list[SpeedLimitDirective] = []
        stops: list[float] = []
        for agent, _ in visible:
            c = agent.conflict
            if c is None:
                continue
            a_lo, a_hi, c_lo, c_hi = c
            if agent.path_s > a_hi + agent.length:
                continue
            front = ego.route_s + ego.length / 2.0
            if ego.route_s - ego.length / 2.0 > c_hi + 0.5:
                continue
            if front > c_lo - 0.2:
                continue
            t_in = max(0.0, (a_lo - agent.path_s - agent.length / 2.0)
                       / agent.v)
            t_out = (a_hi - agent.path_s + agent.length) / agent.v
            v_ref = max(ego.v, 1.0)
            t_ego_in = (c_lo - front) / v_ref
            t_ego_out = (c_hi + ego.length - ego.route_s) / max(ego.v, 0.3)
            if t_ego_out + p.yield_gap < t_in or \
                    t_ego_in > t_out + p.yield_gap:
                continue
            stop_s = c_lo - 0.5
            env = stop_envelope(stop_s, self.rt.route.length,
                                p.a_brake_comfort, p.standoff,
                                sample_step=p.route_sample_step,
                                group=f"yield:{agent.idx}")
            if env:
                directives.extend(env)
                stops.append(stop_s)
        return directives, stops

    def _plan(self, directives, stops) -> VelocityPlan:
        p = self.p
        ego = self.ego
        bounds = self.bounds
        if ego.v > p.v_eps:
            for stop_s in stops:
                d = stop_s - p.standoff - ego.route_s
                if d <= 0.05:
                    a_req = math.inf
                else:
                    a_req = ego.v * ego.v / (2.0 * d)
                if a_req > 0.85 * abs(p.a_min):
                    bounds = self.bounds_emergency
                    break
        try:
            return self.planner.solve(ego.route_s, ego.v, ego.a,
                                      p.road_speed_limit, directives,
                                      curvature=self.rt.curve_lut,
                                      bounds=bounds)
        except NonConvergent:
            if bounds is not self.bounds_emergency:
                try:
                    return self.planner.solve(
                        ego.route_s, ego.v, ego.a, p.road_speed_limit,
                        directives, curvature=self.rt.curve_lut,
                        bounds=self.bounds_emergency)
                except NonConvergent:
                    pass
            return self._fallback_plan()

    def _fallback_plan(self) -> VelocityPlan:
        """Open-loop hard braking when the QP will not converge."""
        p = self.p
        N, dt = self.planner.N, self.planner.dt
        v, a = _brake_floor(self.ego.v, self.ego.a, p.a_emergency,
                            4.0 * p.jerk_min, 4.0 * p.jerk_max, N, dt)
        s = self.ego.route_s + np.concatenate(
            ([0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)))
        caps = np.full(N, np.inf)
        return VelocityPlan(dt, s, v, a, np.diff(a) / dt, caps,
                            np.full(N, p.a_emergency),
                            np.full(N, p.a_max), cap_relaxed=True)

    def step(self):
        p = self.p
        ego = self.ego
        near_agent = False
        origin = None
        for agent in self.agents:
            if agent.active:
                if origin is None:
                    origin = self.rt.route.line.point_at(ego.route_s)
                pos = agent.path.point_at(agent.path_s)
                lim = p.sensor_range + 15.0
                if (pos[0] - origin[0]) ** 2 + (pos[1] - origin[1]) ** 2 \
                        <= lim * lim:
                    near_agent = True
                    break
        key = (round(ego.route_s, 6), round(ego.v, 4))
        if not near_agent and self._cache_key == key:
            directives, stops, occ_ahead, risk_ahead, plan = self._cache
        else:
            t0 = time.perf_counter()
            obs, visible = self._observe()
            directives, stops, occ_ahead, risk_ahead = \
                self._assess(obs, visible)
            y_dirs, y_stops = self._yields(visible)
            directives = directives + y_dirs
            stops = stops + y_stops
            self.cycle_ms.append((time.perf_counter() - t0) * 1e3)
            plan = self._plan(directives, stops)
            if not near_agent:
                self._cache_key = key
                self._cache = (directives, stops, occ_ahead, risk_ahead,
                               plan)
            else:
                self._cache_key = None
        cruise = p.road_speed_limit
        cap0 = float(plan.v_cap[0])
        active_limit = cap0 if cap0 < cruise - 1e-6 else None
        self.trace.append((self.t, ego.route_s, ego.v, ego.a,
                           active_limit, risk_ahead, occ_ahead))
        self._a_hist.append(ego.a)
        self._v_hist.append(ego.v)
        if ego.v < p.v_eps and occ_ahead:
            self._freeze_run += 1
        else:
            self._freeze_run = 0
        s, v, a = plan.state_at(p.sim_dt)
        ego.route_s = min(s, self.rt.route.length)
        ego.v = v
        ego.a = a
        for agent in self.agents:
            if not agent.active:
                continue
            agent.path_s += agent.v * p.sim_dt
            if agent.path_s >= agent.path.length:
                agent.active = False
        self.tick += 1
        if detect_collision(ego, self.agents, self.rt.route):
            self.collided = True
        if ego.route_s >= self.rt.route.length - p.goal_margin:
            self.goal_reached = True
        if self._freeze_run * p.sim_dt >= p.freeze_window:
            self.froze = True

    def run(self) -> RunMetrics:
        p = self.p
        while True:
            self.step()
            if self.collided or self.goal_reached or self.froze:
                break
            if self.t >= p.t_max:
                break
        t_end = self.t
        times = np.arange(len(self._a_hist)) * p.sim_dt
        discomfort = discomfort_score(
            list(zip(times, self._a_hist)), p.a_th)
        cyc = np.array(self.cycle_ms) if self.cycle_ms else np.zeros(1)
        return RunMetrics(
            collided=self.collided, discomfort=discomfort,
            traversal_time=t_end, froze=self.froze,
            mean_cycle_time=float(cyc.mean()),
            p99_cycle_time=float(np.percentile(cyc, 99)),
            goal_reached=self.goal_reached, sim_time=t_end,
            n_ticks=self.tick)


def run_single(config: ScenarioConfig, variant: str, seed: int, *,
               runtime: ScenarioRuntime | None = None, run_idx: int = 0
               ) -> tuple[RunMetrics, list[tuple]]:
    """One seeded run; returns metrics plus the per-tick trace rows
    (t, s, v, a, active_limit, risk_ahead, occlusion_ahead)."""
    rt = runtime if runtime is not None else ScenarioRuntime(config)
    rng = np.random.default_rng([seed, run_idx])
    world = World(rt, variant, make_agents(rt, rng))
    metrics = world.run()
    return metrics, world.trace


def run_batch(config: ScenarioConfig, variant: str, n_runs: int,
              seed: int, *, runtime: ScenarioRuntime | None = None
              ) -> tuple[list[RunMetrics], BatchAggregate]:
    """n_runs seeded runs with per-run agent speed and spawn draws."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    rt = runtime if runtime is not None else ScenarioRuntime(config)
    metrics = []
    cycles = []
    for i in range(n_runs):
        rng = np.random.default_rng([seed, i])
        world = World(rt, variant, make_agents(rt, rng))
        metrics.append(world.run())
        cycles.extend(world.cycle_ms)
    return metrics, aggregate_runs(metrics, cycles)


def aggregate_runs(metrics: list[RunMetrics],
                   cycle_samples=None) -> BatchAggregate:
    n = len(metrics)
    reached = [m.traversal_time for m in metrics if m.goal_reached]
    if cycle_samples is None or len(cycle_samples) == 0:
        cyc = np.array([m.mean_cycle_time for m in metrics])
    else:
        cyc = np.asarray(cycle_samples)
    return BatchAggregate(
        n_runs=n,
        collision_rate=sum(m.collided for m in metrics) / n,
        discomfort=float(np.mean([m.discomfort for m in metrics])),
        traversal_time=float(np.mean(reached)) if reached
        else float("nan"),
        freeze_rate=sum(m.froze for m in metrics) / n,
        goal_rate=len(reached) / n,
        mean_cycle_ms=float(cyc.mean()),
        p99_cycle_ms=float(np.percentile(cyc, 99)))


def replicate_obstacles(config: ScenarioConfig, factor: int
                        ) -> ScenarioConfig:
    """Scale occlusion severity by stacking shifted obstacle copies on
    their off-route side (more edges, larger shadows, same road)."""
    if factor <= 1:
        return config
    route = Route(config.lanes, config.ego.route)
    obstacles = list(config.obstacles)
    for poly in config.obstacles:
        cx, cy = poly.centroid
        s_c, d_c = frenet_project_many(np.array([[cx, cy]]), route.line)
        foot = route.line.point_at(float(s_c[0]))
        away = np.array([cx - foot[0], cy - foot[1]])
        norm = float(np.hypot(*away))
        if norm < 1e-9:
            away = np.array([0.0, 1.0])
            norm = 1.0
        away /= norm
        span = poly.vertices @ away
        depth = span.max() - span.min() + 0.5
        for k in range(1, factor):
            obstacles.append(Polygon(poly.vertices + k * depth * away,
                                     validate=False))
    return dataclasses.replace(config, obstacles=obstacles)


def bench_cycle(config: ScenarioConfig, iterations: int = 200, *,
                obstacle_factor: int = 1, probes: int = 8) -> dict:
    """Wall-time statistics for the risk-assessment cycle.

    The ego is teleported across evenly spaced route positions and the
    perception-to-directive pipeline is timed at each; plan execution and
    IO are excluded.  Reports the full cycle and the cycle without the
    visibility-polygon build.
    """
    cfg = replicate_obstacles(config, obstacle_factor)
    rt = ScenarioRuntime(cfg)
    world = World(rt, "proposed", [])
    length = rt.route.length
    positions = np.linspace(0.1 * length, 0.85 * length, probes)
    full_ms = []
    inner_ms = []
    for i in range(iterations):
        world.ego.route_s = float(positions[i % probes])
        world.ego.v = 0.5 * rt.params.road_speed_limit
        t0 = time.perf_counter()
        obs, visible = world._observe()
        t1 = time.perf_counter()
        world._assess(obs, visible)
        t2 = time.perf_counter()
        full_ms.append((t2 - t0) * 1e3)
        inner_ms.append((t2 - t1) * 1e3)
    full = np.array(full_ms)
    inner = np.array(inner_ms)
    return {
        "iterations": iterations,
        "obstacle_factor": obstacle_factor,
        "mean_ms": float(full.mean()),
        "median_ms": float(np.median(full)),
        "p99_ms": float(np.percentile(full, 99)),
        "mean_ms_no_visibility": float(inner.mean()),
        "median_ms_no_visibility": float(np.median(inner)),
    }
