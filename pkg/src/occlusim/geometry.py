"""Planar geometry primitives: polylines, polygons, Frenet projection and
visibility polygons under a bounded sensor range."""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels


class Point2(NamedTuple):
    x: float
    y: float


class FrenetCoord(NamedTuple):
    """Arc position s along a reference line and signed lateral offset d.

    d is positive to the left of the direction of travel.
    """

    s: float
    d: float


class GeometryError(ValueError):
    pass


class OriginInsideObstacle(GeometryError):
    """Raised when a visibility query starts strictly inside an obstacle."""


class Polyline:
    """Piecewise-linear curve with precomputed cumulative arc length."""

    __slots__ = ("points", "cum_s")

    def __init__(self, points: Sequence | np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise GeometryError("polyline needs at least two 2-d points")
        if not np.isfinite(pts).all():
            raise GeometryError("polyline has non-finite coordinates")
        seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
        if (seg <= 0.0).any():
            raise GeometryError("polyline has repeated consecutive points")
        self.points = pts
        self.cum_s = np.concatenate(([0.0], np.cumsum(seg)))

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    def point_at(self, s: float) -> Point2:
        x = float(np.interp(s, self.cum_s, self.points[:, 0]))
        y = float(np.interp(s, self.cum_s, self.points[:, 1]))
        return Point2(x, y)

    def points_at(self, s: np.ndarray) -> np.ndarray:
        x = np.interp(s, self.cum_s, self.points[:, 0])
        y = np.interp(s, self.cum_s, self.points[:, 1])
        return np.column_stack((x, y))

    def tangent_at(self, s: float) -> Point2:
        i = int(np.clip(np.searchsorted(self.cum_s, s, side="right") - 1,
                        0, len(self.cum_s) - 2))
        dx, dy = self.points[i + 1] - self.points[i]
        norm = math.hypot(dx, dy)
        return Point2(dx / norm, dy / norm)

    def tangents_at(self, s: np.ndarray) -> np.ndarray:
        idx = np.clip(np.searchsorted(self.cum_s, s, side="right") - 1,
                      0, len(self.cum_s) - 2)
        d = self.points[idx + 1] - self.points[idx]
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]


def resample_polyline(line: Polyline, step: float) -> Polyline:
    """Points at arc lengths {0, step, 2*step, ...} plus the final endpoint."""
    if step <= 0:
        raise GeometryError("step must be positive")
    s_vals = np.arange(0.0, line.length, step)
    if line.length - s_vals[-1] < 1e-9:
        s_vals[-1] = line.length
    else:
        s_vals = np.append(s_vals, line.length)
    return Polyline(line.points_at(s_vals))


def frenet_project(point, line: Polyline) -> FrenetCoord:
    pts = np.asarray(point, dtype=float).reshape(1, 2)
    s = np.empty(1)
    d = np.empty(1)
    kernels.frenet_project_many(pts, line.points, line.cum_s, s, d)
    return FrenetCoord(float(s[0]), float(d[0]))


def frenet_project_many(pts: np.ndarray, line: Polyline):
    pts = np.ascontiguousarray(pts, dtype=float)
    s = np.empty(len(pts))
    d = np.empty(len(pts))
    kernels.frenet_project_many(pts, line.points, line.cum_s, s, d)
    return s, d


def curvature_profile(line: Polyline) -> np.ndarray:
    """Unsigned Menger curvature at each vertex (zero at the endpoints)."""
    p = line.points
    kappa = np.zeros(len(p))
    if len(p) < 3:
        return kappa
    a = p[:-2]
    b = p[1:-1]
    c = p[2:]
    cross = ((b[:, 0] - a[:, 0]) * (c[:, 1] - b[:, 1])
             - (b[:, 1] - a[:, 1]) * (c[:, 0] - b[:, 0]))
    la = np.hypot(*(b - a).T)
    lb = np.hypot(*(c - b).T)
    lc = np.hypot(*(c - a).T)
    denom = la * lb * lc
    kappa[1:-1] = np.where(denom > 1e-12, 2.0 * np.abs(cross) / denom, 0.0)
    return kappa


class Polygon:
    """Simple polygon stored counter-clockwise."""

    __slots__ = ("vertices",)

    def __init__(self, vertices: Sequence | np.ndarray, validate: bool = True):
        verts = np.ascontiguousarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("polygon needs at least three 2-d vertices")
        if not np.isfinite(verts).all():
            raise GeometryError("polygon has non-finite coordinates")
        if _signed_area(verts) < 0:
            verts = np.ascontiguousarray(verts[::-1])
        self.vertices = verts
        if validate:
            if abs(_signed_area(verts)) < 1e-12:
                raise GeometryError("polygon has zero area")
            if _self_intersects(verts):
                raise GeometryError("polygon is self-intersecting")

    @property
    def area(self) -> float:
        return abs(_signed_area(self.vertices))

    def centroid(self) -> Point2:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = cross.sum() / 2.0
        cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a)
        cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a)
        return Point2(cx, cy)

    def edges_array(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return np.ascontiguousarray(np.column_stack((v, w)))

    def contains(self, point, eps: float = 1e-9) -> bool:
        return bool(self.contains_many(np.asarray(point, dtype=float)
                                       .reshape(1, 2), eps)[0])

    def contains_many(self, pts: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=float)
        out = np.empty(len(pts), dtype=np.uint8)
        kernels.poly_contains_many(self.vertices, pts, eps, out)
        return out.astype(bool)


class StarPolygon(Polygon):
    """Polygon star-shaped around an origin, e.g. a visibility region.

    Vertices are stored in ascending bearing from the origin, which makes
    membership queries a binary search instead of an edge walk.
    """

    __slots__ = ("origin", "angles", "radii")

    def __init__(self, origin, angles: np.ndarray, radii: np.ndarray):
        self.origin = Point2(*map(float, origin))
        self.angles = np.ascontiguousarray(angles, dtype=float)
        self.radii = np.ascontiguousarray(radii, dtype=float)
        verts = np.column_stack((
            self.origin.x + self.radii * np.cos(self.angles),
            self.origin.y + self.radii * np.sin(self.angles),
        ))
        super().__init__(verts, validate=False)

    def contains_many(self, pts: np.ndarray, eps: float = 1e-9) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=float)
        out = np.empty(len(pts), dtype=np.uint8)
        kernels.star_contains_many(self.origin.x, self.origin.y, self.angles,
                                   self.vertices, pts, eps, out)
        return out.astype(bool)


def polygon_contains(polygon: Polygon, point, eps: float = 1e-9) -> bool:
    """Boundary-inclusive point membership."""
    return polygon.contains(point, eps)


def polygons_to_segments(polygons: Iterable[Polygon]) -> np.ndarray:
    chunks = [p.edges_array() for p in polygons]
    if not chunks:
        return np.zeros((0, 4))
    return np.ascontiguousarray(np.vstack(chunks))


def build_visibility_polygon(origin, obstacles: Sequence[Polygon],
                             sensor_range: float,
                             angular_resolution: float = math.radians(1.0),
                             segments: np.ndarray | None = None,
                             base_angles: np.ndarray | None = None,
                             ) -> StarPolygon:
    """Region visible from `origin` given occluding obstacle edges.

    Rays are cast at a uniform angular grid plus rays bracketing every
    obstacle vertex in range, so occlusion boundaries land on polygon edges.
    `segments` and `base_angles` allow reuse of precomputed arrays across
    calls with the same obstacles and resolution.
    """
    ox, oy = float(origin[0]), float(origin[1])
    for obs in obstacles:
        if obs.contains((ox, oy), eps=0.0) and not _on_boundary(
                obs.vertices, ox, oy, 1e-9):
            raise OriginInsideObstacle(
                f"sensor origin ({ox:.3f}, {oy:.3f}) lies inside an obstacle")
    if segments is None:
        segments = polygons_to_segments(obstacles)
    if base_angles is None:
        base_angles = np.arange(-math.pi, math.pi, angular_resolution)
    extra = []
    for obs in obstacles:
        d = obs.vertices - (ox, oy)
        r = np.hypot(d[:, 0], d[:, 1])
        near = r <= sensor_range + 1e-9
        if near.any():
            ang = np.arctan2(d[near, 1], d[near, 0])
            extra.append(ang - 1e-6)
            extra.append(ang)
            extra.append(ang + 1e-6)
    if extra:
        angles = np.concatenate([base_angles] + extra)
        # wrap bracketing rays back into (-pi, pi]
        angles = np.arctan2(np.sin(angles), np.cos(angles))
        angles = np.unique(angles)
    else:
        angles = np.unique(base_angles)
    radii = np.empty(len(angles))
    kernels.cast_rays(ox, oy, angles, segments, sensor_range, radii)
    return StarPolygon((ox, oy), angles, radii)


def oriented_rect(center, heading: float, length: float,
                  width: float) -> np.ndarray:
    """Corner coordinates of a rectangle footprint, CCW order."""
    cx, cy = center
    ch = math.cos(heading)
    sh = math.sin(heading)
    hl = length / 2.0
    hw = width / 2.0
    local = np.array([(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)])
    rot = np.array([(ch, -sh), (sh, ch)])
    return local @ rot.T + (cx, cy)


def convex_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis overlap test for two convex polygons.

    Touching counts as overlap.
    """
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.column_stack((-edges[:, 1], edges[:, 0]))
        for nx, ny in normals:
            pa = a[:, 0] * nx + a[:, 1] * ny
            pb = b[:, 0] * nx + b[:, 1] * ny
            if pa.max() < pb.min() - 1e-12 or pb.max() < pa.min() - 1e-12:
                return False
    return True


def _signed_area(verts: np.ndarray) -> float:
    x = verts[:, 0]
    y = verts[:, 1]
    return float((x * np.roll(y, -1) - np.roll(x, -1) * y).sum() / 2.0)


def _on_boundary(verts: np.ndarray, px: float, py: float,
                 eps: float) -> bool:
    w = np.roll(verts, -1, axis=0)
    e = w - verts
    l2 = (e * e).sum(axis=1)
    l2s = np.where(l2 > 0, l2, 1.0)
    t = np.clip(((px - verts[:, 0]) * e[:, 0]
                 + (py - verts[:, 1]) * e[:, 1]) / l2s, 0.0, 1.0)
    dx = px - (verts[:, 0] + t * e[:, 0])
    dy = py - (verts[:, 1] + t * e[:, 1])
    return bool((dx * dx + dy * dy <= eps * eps).any())


def _self_intersects(verts: np.ndarray) -> bool:
    n = len(verts)
    segs = np.column_stack((verts, np.roll(verts, -1, axis=0)))
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(segs[i], segs[j]):
                return True
    return False


def _segments_cross(s1, s2) -> bool:
    def orient(ax, ay, bx, by, cx, cy):
        return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)

    d1 = orient(s2[0], s2[1], s2[2], s2[3], s1[0], s1[1])
    d2 = orient(s2[0], s2[1], s2[2], s2[3], s1[2], s1[3])
    d3 = orient(s1[0], s1[1], s1[2], s1[3], s2[0], s2[1])
    d4 = orient(s1[0], s1[1], s1[2], s1[3], s2[2], s2[3])
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))
