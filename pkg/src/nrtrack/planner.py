"""Reference-trajectory generation for the merging scenario.

Road geometry is a single lane, either straight along the first axis or a
circular arc; positions are parameterized by arc length.  Merging-zone entry
times follow a FIFO schedule with a minimum headway, and each vehicle gets a
smooth arc-length profile: a polynomial segment through the control zone that
arrives at the scheduled time and speed with zero acceleration, then constant
speed through the merging zone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InfeasibleProfileError(ValueError):
    """The boundary conditions force the speed through zero."""


@dataclass(frozen=True)
class RoadGeometry:
    kind: str                  # "straight" or "arc"
    control_zone: float        # length of the control zone (m)
    merge_zone: float          # length of the merging zone (m)
    radius: float | None = None  # arc radius (m), arc roads only

    def __post_init__(self):
        if self.kind not in ("straight", "arc"):
            raise ValueError(f"unknown road kind {self.kind!r}")
        if self.control_zone <= 0 or self.merge_zone <= 0:
            raise ValueError("zone lengths must be positive")
        if self.kind == "arc":
            if self.radius is None or self.radius <= 0:
                raise ValueError("arc roads need a positive radius")

    @property
    def total_length(self) -> float:
        return self.control_zone + self.merge_zone


def arc_position(s: float, geom: RoadGeometry) -> tuple[float, float, float]:
    """Plane position and road heading at arc length s.

    Arc roads run along the circle z1^2 + (z2 - R)^2 = R^2 starting at the
    origin with heading 0; straight roads run along the first axis.
    """
    if not 0.0 <= s <= geom.total_length + 1e-9:
        raise ValueError(f"arc length {s} outside [0, {geom.total_length}]")
    if geom.kind == "straight":
        return s, 0.0, 0.0
    theta = s / geom.radius
    return (geom.radius * math.sin(theta),
            geom.radius * (1.0 - math.cos(theta)),
            theta)


def road_arc_length(z1: float, z2: float, geom: RoadGeometry) -> float:
    """Arc length of the road point closest in angle to (z1, z2)."""
    if geom.kind == "straight":
        return z1
    return geom.radius * math.atan2(z1, geom.radius - z2)


def lateral_offset(z1: float, z2: float, geom: RoadGeometry) -> float:
    """Signed lateral deviation of (z1, z2) from the lane center.

    Positive to the left of the travel direction.
    """
    if geom.kind == "straight":
        return z2
    # distance from the arc center, against the radius
    return geom.radius - math.hypot(z1, z2 - geom.radius)


@dataclass(frozen=True)
class ScheduleEntry:
    t_arrival: float
    v_arrival: float
    t_merge: float
    v_merge: float


def schedule_merging(arrivals, geom: RoadGeometry, headway: float,
                     v_merge: float) -> list[ScheduleEntry]:
    """FIFO merging-zone entry schedule.

    arrivals is a list of (t_arrival, v_arrival) sorted by arrival time.
    Each vehicle enters the merging zone no earlier than its free-flow time
    and no earlier than `headway` after its predecessor.
    """
    if headway < 0:
        raise ValueError("headway must be nonnegative")
    out: list[ScheduleEntry] = []
    prev_merge = -math.inf
    prev_arrival = -math.inf
    for t_a, v_a in arrivals:
        if t_a < prev_arrival:
            raise ValueError("arrivals must be sorted by time")
        prev_arrival = t_a
        free_flow = t_a + geom.control_zone / v_a
        t_m = max(free_flow, prev_merge + headway)
        out.append(ScheduleEntry(t_a, v_a, t_m, v_merge))
        prev_merge = t_m
    return out


def min_energy_profile(t0: float, tf: float, s0: float, v0: float,
                       sf: float, vf: float) -> np.ndarray:
    """Coefficients (c0..c3) of the minimum-effort double-integrator cubic.

    s(t) = sum c_k (t - t0)^k matches position and speed at both ends; this
    is the minimizer of the integrated squared acceleration.  Raises
    InfeasibleProfileError if the speed crosses zero inside the interval.
    """
    if tf <= t0:
        raise ValueError("tf must exceed t0")
    tau = tf - t0
    a = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [1.0, tau, tau ** 2, tau ** 3],
        [0.0, 1.0, 2 * tau, 3 * tau ** 2],
    ])
    coeffs = np.linalg.solve(a, np.array([s0, v0, sf, vf]))
    _check_positive_speed(coeffs, tau)
    return coeffs


def _quartic_arrival(tau: float, s0: float, v0: float, sf: float,
                     vf: float) -> np.ndarray:
    """Quartic through (s0, v0) at 0 and (sf, vf, accel 0) at tau."""
    a = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, tau, tau ** 2, tau ** 3, tau ** 4],
        [0.0, 1.0, 2 * tau, 3 * tau ** 2, 4 * tau ** 3],
        [0.0, 0.0, 2.0, 6 * tau, 12 * tau ** 2],
    ])
    return np.linalg.solve(a, np.array([s0, v0, sf, vf, 0.0]))


def _check_positive_speed(coeffs: np.ndarray, tau: float):
    """Reject profiles whose speed reaches zero strictly inside the span.

    Zero speed exactly at an endpoint is allowed (rest-to-rest segments)."""
    dc = np.polynomial.polynomial.polyder(coeffs)
    tol = 1e-12 * max(1.0, float(np.abs(dc).max()))
    while len(dc) > 1 and abs(dc[-1]) <= tol:
        dc = dc[:-1]
    grid = np.linspace(0.0, tau, 513)[1:-1]
    if len(grid) and np.polynomial.polynomial.polyval(grid, dc).min() < 0.0:
        raise InfeasibleProfileError("profile speed drops below zero")
    if len(dc) == 1:
        if dc[0] <= 0.0:
            raise InfeasibleProfileError("profile speed is nonpositive")
        return
    for r in np.atleast_1d(np.polynomial.polynomial.polyroots(dc)):
        r = complex(r)
        if abs(r.imag) < 1e-9 and 1e-9 < r.real < tau - 1e-9:
            raise InfeasibleProfileError("profile speed reaches zero")


class SpeedProfile:
    """Piecewise-polynomial arc length s(t), clamped outside its domain.

    When exit_speed is set, position() extrapolates linearly past t_end
    instead of holding, so a controller looking T seconds ahead near the
    road end still sees a moving target (the vehicle drives on past the
    merging zone instead of braking towards a frozen point).
    """

    def __init__(self, segments, exit_speed: float | None = None):
        # segments: list of (t_start, t_end, coeffs ascending in t - t_start)
        if not segments:
            raise ValueError("profile needs at least one segment")
        self.segments = segments
        self.t_start = segments[0][0]
        self.t_end = segments[-1][1]
        self.exit_speed = exit_speed
        self.s_end = float(np.polynomial.polynomial.polyval(
            segments[-1][1] - segments[-1][0], segments[-1][2]))

    def _locate(self, t: float):
        t = min(max(t, self.t_start), self.t_end)
        for t0, t1, c in self.segments:
            if t <= t1:
                return t - t0, c
        t0, t1, c = self.segments[-1]
        return t1 - t0, c

    def position(self, t: float) -> float:
        if t > self.t_end and self.exit_speed is not None:
            return self.s_end + self.exit_speed * (t - self.t_end)
        x, c = self._locate(t)
        return float(np.polynomial.polynomial.polyval(x, c))

    def speed(self, t: float) -> float:
        if not self.t_start <= t <= self.t_end:
            return 0.0
        x, c = self._locate(t)
        return float(np.polynomial.polynomial.polyval(
            x, np.polynomial.polynomial.polyder(c)))

    def accel(self, t: float) -> float:
        if not self.t_start <= t <= self.t_end:
            return 0.0
        x, c = self._locate(t)
        return float(np.polynomial.polynomial.polyval(
            x, np.polynomial.polynomial.polyder(c, 2)))


def build_merge_profile(entry: ScheduleEntry, geom: RoadGeometry) -> SpeedProfile:
    """Arc-length profile for one scheduled vehicle.

    A quartic covers the control zone: it leaves at the arrival speed and
    reaches the merging point at the scheduled time and speed with zero
    acceleration, which is the smooth minimum-effort arrival consistent with
    the frozen-speed merging zone.  An unconstrained vehicle degenerates to
    constant speed.  The merging zone is appended at constant speed.
    """
    tau = entry.t_merge - entry.t_arrival
    if tau <= 0:
        raise InfeasibleProfileError("merge time before arrival")
    coeffs = _quartic_arrival(tau, 0.0, entry.v_arrival,
                              geom.control_zone, entry.v_merge)
    _check_positive_speed(coeffs, tau)
    t_exit = entry.t_merge + geom.merge_zone / entry.v_merge
    merge_seg = (entry.t_merge, t_exit,
                 np.array([geom.control_zone, entry.v_merge]))
    return SpeedProfile([(entry.t_arrival, entry.t_merge, coeffs), merge_seg],
                        exit_speed=entry.v_merge)


def reference_at(t: float, profile: SpeedProfile,
                 geom: RoadGeometry) -> tuple[float, float]:
    """Target plane position at time t; held constant outside the profile."""
    s = min(max(profile.position(t), 0.0), geom.total_length)
    z1, z2, _ = arc_position(s, geom)
    return z1, z2


def extended_reference_at(t: float, profile: SpeedProfile,
                          geom: RoadGeometry) -> tuple[float, float]:
    """Target plane position, continued past the road end along its tangent.

    Used for controller lookahead queries: a predictor with horizon T asks
    for the reference up to T seconds ahead, which near the road end falls
    beyond the merging zone.  Continuing straight along the exit heading
    keeps the target moving so the tracked vehicle crosses the end at speed
    rather than braking towards a held point.
    """
    s = max(profile.position(t), 0.0)
    if s <= geom.total_length:
        z1, z2, _ = arc_position(s, geom)
        return z1, z2
    z1, z2, heading = arc_position(geom.total_length, geom)
    extra = s - geom.total_length
    return (z1 + extra * math.cos(heading), z2 + extra * math.sin(heading))
