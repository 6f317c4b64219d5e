"""Six-state dynamic bicycle model.

State: planar CoG position (z1, z2), longitudinal/lateral body-frame
velocities (v_l, v_n), heading psi and yaw rate psi_dot.  Inputs are the
longitudinal acceleration command a_l and front-wheel steering angle delta_f.
Lateral tire forces use the linear cornering-stiffness model, so slip angles
divide by v_l; a configurable floor v_min keeps that well defined.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

V_MIN_DEFAULT = 0.1       # m/s, floor on v_l (slip angles are singular at 0)
A_MIN_DEFAULT = -7.0      # m/s^2
A_MAX_DEFAULT = 7.0       # m/s^2
STEER_LIMIT = math.pi / 4  # rad


class DegenerateSpeedError(ValueError):
    """Raised when v_l is below the admissible floor."""


@dataclass(frozen=True)
class VehicleParams:
    m: float      # mass (kg)
    i_z: float    # yaw inertia (kg m^2)
    l_f: float    # CoG to front axle (m)
    l_r: float    # CoG to rear axle (m)
    c_af: float   # front cornering stiffness (N/rad)
    c_ar: float   # rear cornering stiffness (N/rad)

    def __post_init__(self):
        for name in ("m", "i_z", "l_f", "l_r", "c_af", "c_ar"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"VehicleParams.{name} must be positive, got {v}")

    def with_mass_factor(self, factor: float) -> "VehicleParams":
        return VehicleParams(self.m * factor, self.i_z, self.l_f, self.l_r,
                             self.c_af, self.c_ar)


#: mid-size sedan parameter set used by the bundled scenarios
DEFAULT_PARAMS = VehicleParams(m=2050.0, i_z=3344.0, l_f=1.105, l_r=1.738,
                               c_af=57500.0, c_ar=92500.0)


@dataclass(frozen=True)
class VehicleState:
    z1: float
    z2: float
    v_l: float
    v_n: float
    psi: float
    psi_dot: float

    def __post_init__(self):
        for name in ("z1", "z2", "v_l", "v_n", "psi", "psi_dot"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"VehicleState.{name} must be finite")

    def as_tuple(self):
        return (self.z1, self.z2, self.v_l, self.v_n, self.psi, self.psi_dot)

    def position(self) -> np.ndarray:
        return np.array([self.z1, self.z2])

    def world_velocity(self) -> np.ndarray:
        vx, vy = _kernels.world_velocity(self.v_l, self.v_n, self.psi)
        return np.array([vx, vy])


@dataclass(frozen=True)
class ControlInput:
    a_l: float      # longitudinal acceleration command (m/s^2)
    delta_f: float  # front-wheel steering angle (rad)

    def __post_init__(self):
        if not (math.isfinite(self.a_l) and math.isfinite(self.delta_f)):
            raise ValueError("ControlInput fields must be finite")
        if abs(self.delta_f) > STEER_LIMIT + 1e-12:
            raise ValueError(f"delta_f {self.delta_f} outside +/- pi/4")

    @classmethod
    def saturated(cls, a_l: float, delta_f: float,
                  a_min: float = A_MIN_DEFAULT,
                  a_max: float = A_MAX_DEFAULT) -> tuple["ControlInput", bool]:
        """Clamp raw commands into the admissible box; reports whether the
        clamp fired."""
        a = min(max(a_l, a_min), a_max)
        d = min(max(delta_f, -STEER_LIMIT), STEER_LIMIT)
        return cls(a, d), (a != a_l or d != delta_f)


@dataclass(frozen=True)
class StateDerivative:
    d_z1: float
    d_z2: float
    d_v_l: float
    d_v_n: float
    d_psi: float
    d_psi_dot: float

    def as_tuple(self):
        return (self.d_z1, self.d_z2, self.d_v_l, self.d_v_n,
                self.d_psi, self.d_psi_dot)


def _check_speed(state: VehicleState, v_min: float):
    if state.v_l < v_min:
        raise DegenerateSpeedError(
            f"v_l={state.v_l} below the admissible floor {v_min}")


def lateral_tire_forces(state: VehicleState, delta_f: float,
                        params: VehicleParams,
                        v_min: float = V_MIN_DEFAULT) -> tuple[float, float]:
    """Front and rear lateral tire forces (N) for the given steering angle."""
    _check_speed(state, v_min)
    slip_f = math.atan((state.v_n + params.l_f * state.psi_dot) / state.v_l)
    slip_r = math.atan((state.v_n - params.l_r * state.psi_dot) / state.v_l)
    f_cf = params.c_af * (delta_f - slip_f)
    f_cr = -params.c_ar * slip_r
    return f_cf, f_cr


def state_derivative(state: VehicleState, u: ControlInput,
                     params: VehicleParams,
                     v_min: float = V_MIN_DEFAULT) -> StateDerivative:
    _check_speed(state, v_min)
    d = _kernels.deriv(*state.as_tuple(), u.a_l, u.delta_f,
                       params.m, params.i_z, params.l_f, params.l_r,
                       params.c_af, params.c_ar)
    return StateDerivative(*d)


def euler_step(state: VehicleState, u: ControlInput, params: VehicleParams,
               dt: float,
               v_min: float = V_MIN_DEFAULT) -> tuple[VehicleState, bool]:
    """One forward-Euler step.  Returns (next state, v_min clamp fired)."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return state, False
    _check_speed(state, v_min)
    out = _kernels.rollout(*state.as_tuple(), u.a_l, u.delta_f,
                           params.m, params.i_z, params.l_f, params.l_r,
                           params.c_af, params.c_ar, dt, 1, v_min)
    return VehicleState(*out[:6]), bool(out[6])


def rollout(state: VehicleState, u: ControlInput, params: VehicleParams,
            horizon: float, step: float,
            v_min: float = V_MIN_DEFAULT) -> VehicleState:
    """Terminal state after repeated Euler steps with the input held fixed.

    The horizon is rounded to the nearest whole number of steps.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(round(horizon / step))
    if n == 0:
        return state
    _check_speed(state, v_min)
    out = _kernels.rollout(*state.as_tuple(), u.a_l, u.delta_f,
                           params.m, params.i_z, params.l_f, params.l_r,
                           params.c_af, params.c_ar, step, n, v_min)
    return VehicleState(*out[:6])
