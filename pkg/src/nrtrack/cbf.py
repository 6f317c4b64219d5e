"""Control-barrier-function safety filters.

Two independent 1-D filters modify the tracking controller's commands:

* longitudinal: keeps the distance to a lead vehicle above d0, accounting for
  braking capability through the term k*vhat^2 (k = 1/(2*max braking)).  The
  barrier condition is affine in the acceleration command, so the projection
  onto the admissible set is closed form.
* lateral: keeps the deviation from the lane center below y_max.  The
  dynamics are not affine in the steering angle, so the nearest admissible
  angle is found by bisection towards each end of the steering range.

Filters return the nominal command unchanged (bit-exact) whenever it is
already admissible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .dynamics import (A_MAX_DEFAULT, A_MIN_DEFAULT, STEER_LIMIT,
                       VehicleParams, VehicleState)


def identity_kappa(h: float) -> float:
    return h


@dataclass(frozen=True)
class LongitudinalCbfSpec:
    d0: float = 5.0        # minimum inter-vehicle distance (m)
    a_bar: float = 7.0     # maximum braking deceleration magnitude (m/s^2)
    kappa: Callable[[float], float] = identity_kappa

    def __post_init__(self):
        if self.d0 <= 0 or self.a_bar <= 0:
            raise ValueError("d0 and a_bar must be positive")

    @property
    def k(self) -> float:
        return 1.0 / (2.0 * self.a_bar)


@dataclass(frozen=True)
class LateralCbfSpec:
    y_max: float = 0.5     # maximum lateral deviation (m)
    a_tilde: float = 5.0   # maximum lateral acceleration (m/s^2)
    gamma: float = 15.0    # cubic class-K coefficient, kappa(h) = gamma*h^3

    def __post_init__(self):
        if self.y_max <= 0 or self.a_tilde <= 0 or self.gamma <= 0:
            raise ValueError("y_max, a_tilde and gamma must be positive")

    @property
    def k(self) -> float:
        return 1.0 / (2.0 * self.a_tilde)


@dataclass(frozen=True)
class RelativeKinematics:
    delta_p: np.ndarray   # p1 - p2 (m)
    delta_v: np.ndarray   # v1 - v2 (m/s)
    v_hat: float          # closing speed along the displacement (m/s)

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.delta_p))


def relative_kinematics(p1, v1, p2, v2) -> RelativeKinematics:
    """Displacement, relative velocity and their inner-product speed.

    All arguments are world-frame 2-vectors; index 1 is the lead vehicle.
    """
    dp = np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float)
    dv = np.asarray(v1, dtype=float) - np.asarray(v2, dtype=float)
    dist = float(np.linalg.norm(dp))
    if dist == 0.0:
        raise ValueError("coincident positions: v_hat undefined")
    return RelativeKinematics(dp, dv, float(dp @ dv) / dist)


def longitudinal_barrier(rk: RelativeKinematics,
                         spec: LongitudinalCbfSpec) -> float:
    """Barrier value ||dp|| - k*vhat^2 - d0 (nonnegative inside the safe set)."""
    return rk.distance - spec.k * rk.v_hat ** 2 - spec.d0


def cbf_condition(h: float, h_dot: float,
                  kappa: Callable[[float], float] = identity_kappa) -> float:
    """Value of hdot + kappa(h); the barrier condition holds iff >= 0."""
    return h_dot + kappa(h)


def lateral_barrier(y: float, y_dot: float, spec: LateralCbfSpec) -> float:
    """Lane-keeping barrier y_max - |y + k*sign(y)*ydot^2|.

    sign(0) is taken as sign(y_dot) so the value is continuous along
    trajectories crossing the center line.
    """
    return _kernels.lateral_barrier_value(y, y_dot, spec.y_max, spec.k)


def longitudinal_filter(u_star_a: float, ego: VehicleState, delta_f: float,
                        lead_position, lead_velocity, lead_accel,
                        spec: LongitudinalCbfSpec, params: VehicleParams,
                        a_min: float = A_MIN_DEFAULT,
                        a_max: float = A_MAX_DEFAULT) -> tuple[float, bool]:
    """Acceleration command closest to u_star_a that keeps the headway barrier.

    delta_f is the (frozen) steering command; the lead's world-frame position,
    velocity and acceleration come from its scripted profile.  Returns
    (a_safe, infeasible).  When no admissible acceleration satisfies the
    condition the filter commands maximum braking and reports infeasible.
    """
    lp = np.asarray(lead_position, dtype=float)
    lv = np.asarray(lead_velocity, dtype=float)
    la = np.asarray(lead_accel, dtype=float)
    rk = relative_kinematics(lp, lv, ego.position(), ego.world_velocity())
    h = longitudinal_barrier(rk, spec)
    a_safe, bits = _kernels.longitudinal_filter_kernel(
        u_star_a, *ego.as_tuple(), delta_f,
        lp[0], lp[1], lv[0], lv[1], la[0], la[1],
        spec.d0, spec.k, spec.kappa(h),
        params.m, params.l_f, params.l_r, params.c_af, params.c_ar,
        a_min, a_max, spec.a_bar)
    return a_safe, bool(bits & _kernels.FLAG_INFEAS_LONG)


def lateral_deviation_state(ego: VehicleState) -> tuple[float, float]:
    """(y, ydot) of the ego vehicle on a straight road along the first axis."""
    return ego.z2, ego.v_l * math.sin(ego.psi) + ego.v_n * math.cos(ego.psi)


def lateral_filter(u_star_delta: float, ego: VehicleState, a_l_fixed: float,
                   spec: LateralCbfSpec, params: VehicleParams,
                   tol: float = 1e-4,
                   max_iter: int = 60) -> tuple[float, bool]:
    """Steering command closest to u_star_delta keeping the lane barrier.

    a_l_fixed is the (frozen) acceleration command.  Returns
    (delta_safe, infeasible); on infeasibility the least-violating angle from
    a 101-point grid is commanded.
    """
    y, _ = lateral_deviation_state(ego)
    delta, bits = _kernels.lateral_filter_kernel(
        u_star_delta, y, ego.v_l, ego.v_n, ego.psi, ego.psi_dot, a_l_fixed,
        spec.y_max, spec.k, spec.gamma,
        params.m, params.l_f, params.l_r, params.c_af, params.c_ar,
        STEER_LIMIT, tol, max_iter)
    return delta, bool(bits & _kernels.FLAG_INFEAS_LAT)


def lateral_condition_value(delta: float, ego: VehicleState, a_l: float,
                            spec: LateralCbfSpec,
                            params: VehicleParams) -> float:
    """Barrier condition value for one steering angle (used by the filter
    and by grid-based checks)."""
    y, _ = lateral_deviation_state(ego)
    return _kernels.lateral_condition(
        delta, y, ego.v_l, ego.v_n, ego.psi, ego.psi_dot, a_l,
        spec.y_max, spec.k, spec.gamma,
        params.m, params.l_f, params.l_r, params.c_af, params.c_ar)
