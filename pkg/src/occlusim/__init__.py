"""Occlusion-aware risk assessment and speed planning for 2D driving.

The pipeline mirrors one perception cycle: build the observable polygon,
intersect it with lane centerlines to place phantom-agent hypotheses,
quantify their reachability as route risk, convert risk clusters to
speed-limit directives, and plan a jerk-limited velocity profile.  A
deterministic closed-loop simulator and CLI sit on top for scenario
studies and benchmarks.
"""

from .geometry import (FrenetCoord, GeometryError, OriginInsideObstacle,
                       Point2, Polygon, Polyline, StarPolygon,
                       build_visibility_polygon, curvature_profile,
                       frenet_project, frenet_project_many,
                       resample_polyline)
from .kernels import BACKEND_NAME
from .nodes import (FrsInterval, IntersectingNode, LaneConflict, NodeKind,
                    RouteConflicts, classify_relevance,
                    classify_static_dynamic, frs_segments,
                    intersect_observable_with_lanes, pv_frs_interval)
from .planning import (Infeasible, NonConvergent, RiskCluster,
                       SpeedLimitDirective, SpeedPlanner,
                       StaticStopConstraint, VelocityPlan,
                       check_plan_constraints, cluster_risk,
                       directives_from_clusters, pjso_plan,
                       speed_limit_value,
                       speed_limit_vs_target_velocity_demo,
                       static_stop_directive, stop_envelope)
from .risk import (LateralModel, RiskProfile, SrqParams,
                   accumulate_pvs_risk, combined_risk, filter_far_pvs,
                   lateral_weight, make_route_grid, occlusion_risk_o,
                   pedestrian_risk_profile, project_pvs_risk_to_route,
                   risk_r, srq_g)
from .scenario import (AgentSpec, DisconnectedLanes, EgoSpec, Lane,
                       LaneMap, Params, Route, ScenarioConfig,
                       ScenarioError, dump_scenario, extend_lane_path,
                       load_scenario, parse_scenario, save_scenario)
from .sim import (VARIANTS, AgentState, BatchAggregate, EgoState,
                  RunMetrics, ScenarioRuntime, World, aggregate_runs,
                  bench_cycle, detect_collision, detect_freeze,
                  discomfort_score, make_agents, replicate_obstacles,
                  run_batch, run_single, variant_params)
from .zones import (PhantomPedestrianZone, PhantomVehicleSet, PpzGrid,
                    build_dynamic_pvs, build_ppz, build_static_pvs)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
