"""Bicycle-model unit tests: tire forces, derivatives, Euler stepping."""
import math

import numpy as np
import pytest

from nrtrack.dynamics import (DEFAULT_PARAMS, ControlInput,
                              DegenerateSpeedError, VehicleParams,
                              VehicleState, euler_step, lateral_tire_forces,
                              rollout, state_derivative)


def make_state(**kw):
    base = dict(z1=0.0, z2=0.0, v_l=13.4, v_n=0.0, psi=0.0, psi_dot=0.0)
    base.update(kw)
    return VehicleState(**base)


class TestParams:
    def test_default_values(self):
        p = DEFAULT_PARAMS
        assert (p.m, p.i_z) == (2050.0, 3344.0)
        assert (p.l_f, p.l_r) == (1.105, 1.738)
        assert (p.c_af, p.c_ar) == (57500.0, 92500.0)

    @pytest.mark.parametrize("field", ["m", "i_z", "l_f", "l_r", "c_af", "c_ar"])
    def test_rejects_nonpositive(self, field):
        kw = {"m": 2050.0, "i_z": 3344.0, "l_f": 1.105, "l_r": 1.738,
              "c_af": 57500.0, "c_ar": 92500.0}
        kw[field] = 0.0
        with pytest.raises(ValueError):
            VehicleParams(**kw)

    def test_mass_factor_scales_mass_only(self):
        p = DEFAULT_PARAMS.with_mass_factor(2.0)
        assert p.m == 4100.0
        assert p.i_z == DEFAULT_PARAMS.i_z


class TestControlInput:
    def test_steering_bound(self):
        with pytest.raises(ValueError):
            ControlInput(0.0, 0.8)

    def test_saturated_clamps_and_flags(self):
        u, clamped = ControlInput.saturated(9.0, 0.0, -7.0, 7.0)
        assert u.a_l == 7.0 and clamped
        u, clamped = ControlInput.saturated(1.0, 0.0, -7.0, 7.0)
        assert u.a_l == 1.0 and not clamped


class TestTireForces:
    def test_zero_slip(self):
        f_cf, f_cr = lateral_tire_forces(make_state(), 0.0, DEFAULT_PARAMS)
        assert f_cf == 0.0 and f_cr == 0.0

    def test_pure_steering(self):
        # with zero lateral/yaw motion the arctan terms vanish
        f_cf, f_cr = lateral_tire_forces(make_state(), 0.1, DEFAULT_PARAMS)
        assert f_cf == pytest.approx(5750.0, abs=1e-9)
        assert f_cr == 0.0

    def test_generic_state_oracle(self):
        # frozen values from a direct evaluation of the force formulas
        st = make_state(v_n=0.5, psi_dot=0.1)
        f_cf, f_cr = lateral_tire_forces(st, 0.05, DEFAULT_PARAMS)
        assert f_cf == pytest.approx(257.1274568317506, rel=1e-12)
        assert f_cr == pytest.approx(-2251.309096416352, rel=1e-12)

    def test_odd_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v_n, pd, d = rng.uniform(-1, 1, 3)
            a = lateral_tire_forces(make_state(v_n=v_n, psi_dot=pd),
                                    d * 0.5, DEFAULT_PARAMS)
            b = lateral_tire_forces(make_state(v_n=-v_n, psi_dot=-pd),
                                    -d * 0.5, DEFAULT_PARAMS)
            assert a[0] == pytest.approx(-b[0], rel=1e-12, abs=1e-9)
            assert a[1] == pytest.approx(-b[1], rel=1e-12, abs=1e-9)

    def test_rejects_degenerate_speed(self):
        with pytest.raises(DegenerateSpeedError):
            lateral_tire_forces(make_state(v_l=0.05), 0.0, DEFAULT_PARAMS)


class TestStateDerivative:
    def test_straight_motion(self):
        d = state_derivative(make_state(), ControlInput(2.0, 0.0),
                             DEFAULT_PARAMS).as_tuple()
        assert d == (13.4, 0.0, 2.0, 0.0, 0.0, 0.0)

    def test_rotated_frame(self):
        d = state_derivative(make_state(psi=math.pi / 2),
                             ControlInput(0.0, 0.0), DEFAULT_PARAMS).as_tuple()
        assert d[0] == pytest.approx(0.0, abs=1e-12)
        assert d[1] == pytest.approx(13.4, rel=1e-12)

    def test_generic_state_oracle(self):
        # frozen six-vector from a term-by-term independent evaluation
        st = make_state(v_n=0.5, psi=0.2, psi_dot=0.1)
        d = state_derivative(st, ControlInput(1.0, 0.05), DEFAULT_PARAMS)
        expect = (13.033557477675108, 3.1522023215744412, 1.05,
                  -3.28585656775702, 0.1, 2.509895912712855)
        assert d.as_tuple() == pytest.approx(expect, rel=1e-12)

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v_n, pd = rng.uniform(-0.5, 0.5, 2)
            psi = rng.uniform(-1, 1)
            theta = rng.uniform(-math.pi, math.pi)
            u = ControlInput(rng.uniform(-3, 3), rng.uniform(-0.3, 0.3))
            d0 = state_derivative(make_state(v_n=v_n, psi=psi, psi_dot=pd),
                                  u, DEFAULT_PARAMS).as_tuple()
            d1 = state_derivative(
                make_state(v_n=v_n, psi=psi + theta, psi_dot=pd),
                u, DEFAULT_PARAMS).as_tuple()
            c, s = math.cos(theta), math.sin(theta)
            assert d1[0] == pytest.approx(c * d0[0] - s * d0[1], rel=1e-10)
            assert d1[1] == pytest.approx(s * d0[0] + c * d0[1], rel=1e-10)
            assert d1[3] == pytest.approx(d0[3], rel=1e-12)
            assert d1[5] == pytest.approx(d0[5], rel=1e-12)


class TestEulerStep:
    def test_zero_dt_identity(self):
        st = make_state(v_n=0.2, psi=0.1)
        out, clamped = euler_step(st, ControlInput(1.0, 0.1),
                                  DEFAULT_PARAMS, 0.0)
        assert out == st and not clamped

    def test_straight_arithmetic(self):
        out, _ = euler_step(make_state(), ControlInput(1.0, 0.0),
                            DEFAULT_PARAMS, 0.005)
        assert out.v_l == pytest.approx(13.405, rel=1e-12)
        assert out.z1 == pytest.approx(0.067, rel=1e-12)

    def test_speed_floor_clamps_and_flags(self):
        out, clamped = euler_step(make_state(v_l=0.11),
                                  ControlInput(-7.0, 0.0),
                                  DEFAULT_PARAMS, 0.005)
        assert clamped and out.v_l == 0.1

    def test_first_order_convergence(self):
        """Global endpoint error halves with the step (ratio 2.0 +- 0.2)."""
        st = make_state(v_n=0.1, psi=0.05, psi_dot=0.02)
        u = ControlInput(0.5, 0.03)

        def endpoint(dt, t_end=1.0):
            s = st
            for _ in range(int(round(t_end / dt))):
                s, _ = euler_step(s, u, DEFAULT_PARAMS, dt)
            return np.array(s.as_tuple())

        ref = endpoint(1e-5)
        e1 = np.linalg.norm(endpoint(0.01) - ref)
        e2 = np.linalg.norm(endpoint(0.005) - ref)
        assert e1 / e2 == pytest.approx(2.0, abs=0.2)


class TestRollout:
    def test_zero_horizon(self):
        st = make_state()
        assert rollout(st, ControlInput(1.0, 0.1), DEFAULT_PARAMS,
                       0.0, 0.001) == st

    def test_straight_advances_vt(self):
        out = rollout(make_state(), ControlInput(0.0, 0.0), DEFAULT_PARAMS,
                      1.0, 0.001)
        assert out.z1 == pytest.approx(13.4, rel=1e-12)
        assert out.z2 == 0.0

    def test_against_fine_reference(self):
        st = make_state(v_n=0.3, psi=0.1, psi_dot=0.05)
        u = ControlInput(1.0, 0.02)
        coarse = np.array(rollout(st, u, DEFAULT_PARAMS, 1.0,
                                  0.001).as_tuple())
        fine = np.array(rollout(st, u, DEFAULT_PARAMS, 1.0,
                                1e-5).as_tuple())
        # first-order accurate: discrepancy shrinks with the step
        assert np.linalg.norm(coarse - fine) < 0.05
