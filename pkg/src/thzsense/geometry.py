"""Planar scene layout for the radar / surface-pair setup.

All angles are measured at the midpoint of the surface pair, from the
axis direction that points from surface 1 to surface 2, towards the
half-plane that contains the radar.  Values live in (0, pi).

``theta_in`` follows the arrival convention: it is the propagation
direction of the wave leaving the radar and hitting the surfaces, i.e.
``pi`` minus the angle of the midpoint->radar ray.  With that choice the
far-field path differences read ``t2 = t1 + d cos(theta_in)`` and
``s2 = s1 - d cos(theta)``, and both agree with the exact distances.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class DegenerateGeometryError(ValueError):
    """Two points that must be distinct coincide."""


class InfeasibleRangeError(ValueError):
    """No target position at the requested angle has the requested range."""


class NearFieldWarning(UserWarning):
    pass


class BoundaryAngleWarning(UserWarning):
    pass


_EPS = 1e-12


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Point2":
        return cls(float(a[0]), float(a[1]))


def _dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(math.hypot(a[0] - b[0], a[1] - b[1]))


@dataclass(frozen=True)
class SceneGeometry:
    radar: Point2
    surface1_center: Point2
    surface2_center: Point2

    def __post_init__(self):
        r, c1, c2 = (p.as_array() for p in (self.radar, self.surface1_center, self.surface2_center))
        if _dist(c1, c2) <= _EPS:
            raise DegenerateGeometryError("surface centers coincide (d must be > 0)")
        if min(_dist(r, c1), _dist(r, c2)) <= _EPS:
            raise DegenerateGeometryError("radar coincides with a surface center")
        # radar on the surface axis leaves the illuminated side undefined
        if abs(self._ray_components(r)[1]) <= _EPS:
            raise DegenerateGeometryError("radar lies on the surface axis")

    @cached_property
    def d(self) -> float:
        return _dist(self.surface1_center.as_array(), self.surface2_center.as_array())

    @cached_property
    def axis_unit(self) -> np.ndarray:
        c1, c2 = self.surface1_center.as_array(), self.surface2_center.as_array()
        return (c2 - c1) / self.d

    @cached_property
    def normal_unit(self) -> np.ndarray:
        """Unit normal of the axis pointing into the radar half-plane."""
        u = self.axis_unit
        n = np.array([-u[1], u[0]])
        if np.dot(self.radar.as_array() - self.midpoint.as_array(), n) < 0:
            n = -n
        return n

    @cached_property
    def midpoint(self) -> Point2:
        c1, c2 = self.surface1_center.as_array(), self.surface2_center.as_array()
        return Point2.from_array(0.5 * (c1 + c2))

    def _ray_components(self, point: np.ndarray) -> tuple[float, float]:
        c1, c2 = self.surface1_center.as_array(), self.surface2_center.as_array()
        mid = 0.5 * (c1 + c2)
        u = (c2 - c1) / np.linalg.norm(c2 - c1)
        v = point - mid
        return float(np.dot(v, u)), float(u[0] * v[1] - u[1] * v[0])

    @cached_property
    def t1(self) -> float:
        return _dist(self.radar.as_array(), self.surface1_center.as_array())

    @cached_property
    def t2(self) -> float:
        return _dist(self.radar.as_array(), self.surface2_center.as_array())

    @cached_property
    def t(self) -> float:
        """Radar to pair-midpoint distance."""
        return _dist(self.radar.as_array(), self.midpoint.as_array())

    @cached_property
    def radar_ray_angle(self) -> float:
        return self.angle_of(self.radar)

    @cached_property
    def theta_in(self) -> float:
        return math.pi - self.radar_ray_angle

    def angle_of(self, point: Point2) -> float:
        """Angle of the midpoint->point ray, in [0, pi] on the radar side."""
        v = point.as_array() - self.midpoint.as_array()
        return float(math.atan2(np.dot(v, self.normal_unit), np.dot(v, self.axis_unit)))

    def polar_to_point(self, theta: float, s: float) -> Point2:
        mid = self.midpoint.as_array()
        pos = mid + s * (math.cos(theta) * self.axis_unit + math.sin(theta) * self.normal_unit)
        return Point2.from_array(pos)


@dataclass(frozen=True)
class TargetPlacement:
    """A point target given either by position or by (theta, s1_ref).

    ``s1_ref`` is the distance from the pair midpoint, which is the
    quantity quoted as "distance from the surface pair" in the scenarios.
    """

    scene: SceneGeometry
    position: Point2
    rcs: float = 1.0

    def __post_init__(self):
        if not self.rcs >= 0:
            raise ValueError("rcs must be non-negative")
        exact_path_lengths(self.scene, self.position)

    @classmethod
    def from_polar(cls, scene: SceneGeometry, theta: float, s1_ref: float, rcs: float = 1.0):
        if s1_ref <= 0:
            raise DegenerateGeometryError("target at the pair midpoint")
        return cls(scene, scene.polar_to_point(theta, s1_ref), rcs)

    @property
    def theta(self) -> float:
        return self.scene.angle_of(self.position)

    @property
    def s1_ref(self) -> float:
        return _dist(self.position.as_array(), self.scene.midpoint.as_array())

    @property
    def p(self) -> float:
        return _dist(self.position.as_array(), self.scene.radar.as_array())

    @property
    def s1(self) -> float:
        return _dist(self.position.as_array(), self.scene.surface1_center.as_array())

    @property
    def s2(self) -> float:
        return _dist(self.position.as_array(), self.scene.surface2_center.as_array())


def exact_path_lengths(scene: SceneGeometry, target: Point2) -> tuple[float, float, float, float, float]:
    """Euclidean ``(t1, t2, s1, s2, p)`` for a target position.

    Surface distances are taken from the surface centers.
    """
    x = target.as_array()
    r = scene.radar.as_array()
    c1 = scene.surface1_center.as_array()
    c2 = scene.surface2_center.as_array()
    s1, s2, p = _dist(x, c1), _dist(x, c2), _dist(x, r)
    if min(s1, s2) <= _EPS:
        raise DegenerateGeometryError("target coincides with a surface center")
    if p <= _EPS:
        raise DegenerateGeometryError("target coincides with the radar")
    return scene.t1, scene.t2, s1, s2, p


def far_field_angles(scene: SceneGeometry, target: Point2, exclusion_factor: float = 10.0) -> tuple[float, float]:
    """Return ``(theta, theta_in)`` for a target.

    Warns with :class:`NearFieldWarning` if the target is within
    ``exclusion_factor * d`` of the pair midpoint and with
    :class:`BoundaryAngleWarning` if it sits on the surface axis.
    """
    r = _dist(target.as_array(), scene.midpoint.as_array())
    if r < exclusion_factor * scene.d:
        warnings.warn(
            f"target at {r:.4g} m is inside the far-field exclusion radius {exclusion_factor * scene.d:.4g} m",
            NearFieldWarning,
            stacklevel=2,
        )
    theta = scene.angle_of(target)
    if not (0.0 < theta < math.pi) or min(theta, math.pi - theta) < 1e-9:
        warnings.warn(f"target angle {math.degrees(theta):.6g} deg lies on the surface axis", BoundaryAngleWarning, stacklevel=2)
    return theta, scene.theta_in


def far_field_path_model(scene: SceneGeometry, theta: float, theta_in: float, s1: float) -> tuple[float, float]:
    """Plane-wave model of the second-surface path lengths ``(t2, s2)``."""
    d = scene.d
    return scene.t1 + d * math.cos(theta_in), s1 - d * math.cos(theta)


def s1_from_range(scene: SceneGeometry, p: float, theta, branch: str = "near"):
    """Distance from the pair midpoint to a target at angle ``theta`` and range ``p``.

    Solves the law of cosines in the (radar, midpoint, target) triangle,
    ``p^2 = t^2 + s^2 - 2 t s cos(alpha)``, with ``alpha`` the angle at
    the midpoint between the radar ray and the target ray.  Up to two
    positive roots exist; ``branch="near"`` returns the smaller one and
    ``"far"`` the larger.

    ``theta`` may be an array, in which case infeasible entries come back
    as NaN instead of raising.
    """
    if branch not in ("near", "far"):
        raise ValueError(f"unknown branch {branch!r}")
    if p <= 0:
        raise InfeasibleRangeError("range must be positive")
    t = scene.t
    th = np.asarray(theta, dtype=float)
    alpha = np.abs(scene.radar_ray_angle - th)
    b = t * np.cos(alpha)
    disc = p * p - (t * np.sin(alpha)) ** 2
    root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    lo, hi = b - root, b + root
    if branch == "near":
        s = np.where(lo > 0, lo, np.where(hi > 0, hi, np.nan))
    else:
        s = np.where(hi > 0, hi, np.nan)
    if th.ndim == 0:
        s = float(s)
        if not math.isfinite(s):
            raise InfeasibleRangeError(
                f"range {p:.6g} m is not reachable at angle {math.degrees(float(th)):.6g} deg"
            )
        return s
    return s
