"""Newton-Raphson flow tracking controller.

The controller is a standalone integrator on the input: a constant-input
Euler predictor maps (state, input) to the position T seconds ahead, and the
input flows along alpha * J^-1 * (future reference - predicted position),
where J is the finite-difference Jacobian of the predictor with respect to
the input.  A memoryless variant (plant y = g(u), no state) is provided as a
closed-form-checkable reference for the same flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .dynamics import (A_MAX_DEFAULT, A_MIN_DEFAULT, STEER_LIMIT,
                       V_MIN_DEFAULT, ControlInput, VehicleParams,
                       VehicleState, DEFAULT_PARAMS)


class SingularJacobianError(RuntimeError):
    """Predictor Jacobian condition number above the configured ceiling."""


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 100.0          # speedup gain
    horizon: float = 1.0          # prediction horizon T (s)
    predictor_step: float = 0.001  # Euler step of the output predictor (s)
    ctrl_step: float = 0.001      # Euler step of the input ODE (s)
    jac_eps_accel: float = 0.01   # FD perturbation, accel channel (m/s^2)
    jac_eps_steer: float = 0.001  # FD perturbation, steering channel (rad)
    cond_max: float = 1e6         # Jacobian condition-number ceiling
    model_params: VehicleParams = field(default_factory=lambda: DEFAULT_PARAMS)
    a_min: float = A_MIN_DEFAULT
    a_max: float = A_MAX_DEFAULT
    v_min: float = V_MIN_DEFAULT

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.predictor_step <= self.horizon:
            raise ValueError("predictor_step must lie in (0, horizon]")
        if self.ctrl_step <= 0:
            raise ValueError("ctrl_step must be positive")
        if self.jac_eps_accel <= 0 or self.jac_eps_steer <= 0:
            raise ValueError("jacobian perturbations must be positive")
        if self.cond_max <= 1:
            raise ValueError("cond_max must exceed 1")

    @property
    def predictor_steps(self) -> int:
        return int(round(self.horizon / self.predictor_step))

    def _kernel_args(self):
        p = self.model_params
        return (p.m, p.i_z, p.l_f, p.l_r, p.c_af, p.c_ar,
                self.predictor_step, self.predictor_steps, self.v_min)


@dataclass(frozen=True)
class ControllerState:
    u: ControlInput


def predict_output(state: VehicleState, u: ControlInput,
                   cfg: ControllerConfig) -> np.ndarray:
    """Position T seconds ahead under the constant-input Euler predictor."""
    y1, y2 = _kernels.predict_xy(*state.as_tuple(), u.a_l, u.delta_f,
                                 *cfg._kernel_args())
    return np.array([y1, y2])


def predictor_jacobian(state: VehicleState, u: ControlInput,
                       cfg: ControllerConfig) -> tuple[np.ndarray, float]:
    """Finite-difference Jacobian of the predicted position w.r.t. the input.

    Returns (2x2 matrix, condition number).  Raises SingularJacobianError when
    the condition number exceeds cfg.cond_max.
    """
    j11, j12, j21, j22, cond = _kernels.predictor_jacobian(
        *state.as_tuple(), u.a_l, u.delta_f, *cfg._kernel_args(),
        cfg.jac_eps_accel, cfg.jac_eps_steer, cfg.a_min, cfg.a_max,
        STEER_LIMIT)
    if not cond <= cfg.cond_max:
        raise SingularJacobianError(
            f"condition number {cond:.3g} exceeds ceiling {cfg.cond_max:.3g}")
    return np.array([[j11, j12], [j21, j22]]), cond


def nr_control_derivative(state: VehicleState, u: ControlInput,
                          r_future, cfg: ControllerConfig) -> np.ndarray:
    """Input flow alpha * J^-1 * (r(t+T) - predicted position)."""
    jac, _ = predictor_jacobian(state, u, cfg)
    err = np.asarray(r_future, dtype=float) - predict_output(state, u, cfg)
    return cfg.alpha * np.linalg.solve(jac, err)


def controller_update(ctrl: ControllerState, state: VehicleState,
                      reference: Callable[[float], tuple],
                      t: float, cfg: ControllerConfig,
                      dt_plant: float) -> tuple[ControllerState, frozenset]:
    """Advance the input ODE over one plant step of dt_plant.

    Integrates with substeps of cfg.ctrl_step while the plant state stays
    frozen; the future reference is sampled once per plant step and held
    across the substeps, consistent with the frozen state (advancing r while
    the predicted output cannot move would bias the equilibrium ahead of the
    reference).  The sample is taken at the predictor grid point following
    the horizon, t + T + predictor_step: the predicted output lives on the
    step grid and chases the next grid sample, which leaves a residual
    tracking offset of one predictor step of travel.  The input is clamped
    into its box after every substep.  Returns the new controller state and
    a set of event flags ('sat_accel', 'sat_steer', 'singular_jacobian').
    """
    n_sub = int(round(dt_plant / cfg.ctrl_step))
    if abs(n_sub * cfg.ctrl_step - dt_plant) > 1e-9:
        raise ValueError("dt_plant must be an integer multiple of ctrl_step")
    r_sub = np.empty((n_sub, 2))
    r_sub[:] = reference(t + cfg.horizon + cfg.predictor_step)
    p = cfg.model_params
    ua, ud, bits = _kernels.controller_substeps(
        *state.as_tuple(), ctrl.u.a_l, ctrl.u.delta_f, r_sub,
        cfg.alpha, cfg.ctrl_step, p.m, p.i_z, p.l_f, p.l_r, p.c_af, p.c_ar,
        cfg.predictor_step, cfg.predictor_steps, cfg.v_min,
        cfg.jac_eps_accel, cfg.jac_eps_steer, cfg.cond_max,
        cfg.a_min, cfg.a_max, STEER_LIMIT)
    flags = set()
    if bits & _kernels.FLAG_SAT_ACCEL:
        flags.add("sat_accel")
    if bits & _kernels.FLAG_SAT_STEER:
        flags.add("sat_steer")
    if bits & _kernels.FLAG_SINGULAR:
        flags.add("singular_jacobian")
    return ControllerState(ControlInput(ua, ud)), frozenset(flags)


def memoryless_nr_track(g: Callable[[np.ndarray], np.ndarray],
                        r: Callable[[float], np.ndarray],
                        alpha: float, u0, duration: float, dt: float,
                        jacobian: Optional[Callable] = None,
                        fd_eps: float = 1e-6):
    """Euler-integrate the memoryless flow udot = alpha*(dg/du)^-1*(r - g(u)).

    Works for scalar or vector maps.  Returns (times, inputs, errors) where
    errors[i] = r(t_i) - g(u_i).  The derivative is central-FD unless an
    analytic jacobian is supplied.  Raises SingularJacobianError if dg/du
    becomes numerically singular along the way.
    """
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    m = u.size
    n = int(round(duration / dt))
    times = np.arange(n + 1) * dt
    us = np.empty((n + 1, m))
    errs = np.empty((n + 1, m))

    def fd_jac(uv):
        jac = np.empty((m, m))
        for j in range(m):
            up = uv.copy()
            um = uv.copy()
            up[j] += fd_eps
            um[j] -= fd_eps
            jac[:, j] = (np.atleast_1d(g(up)) - np.atleast_1d(g(um))) / (2 * fd_eps)
        return jac

    jac_fn = jacobian if jacobian is not None else fd_jac
    for i in range(n + 1):
        e = np.atleast_1d(np.asarray(r(times[i]), dtype=float)) - np.atleast_1d(g(u))
        us[i] = u
        errs[i] = e
        if i == n:
            break
        jac = np.atleast_2d(np.asarray(jac_fn(u), dtype=float))
        if abs(np.linalg.det(jac)) < 1e-300:
            raise SingularJacobianError("dg/du singular along the trajectory")
        u = u + dt * alpha * np.linalg.solve(jac, e)
    return times, us, errs
