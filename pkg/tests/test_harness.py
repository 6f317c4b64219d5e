"""Scenario harness tests: config loading, trace IO, determinism, CLI."""
import json
import math

import numpy as np
import pytest

from nrtrack.cli import main as cli_main
from nrtrack.config import (CbfConfig, ConfigError, LeadScript,
                            ScenarioConfig, VehicleSpec, config_from_dict,
                            load_config)
from nrtrack.controller import ControllerConfig
from nrtrack.planner import RoadGeometry
from nrtrack.simulate import (DATA_COLUMNS, SimTrace, compute_metrics,
                              run_simulation)


def small_scenario(**over):
    """A scenario small enough to simulate in well under a second."""
    base = dict(
        geometry=RoadGeometry("straight", 40.0, 10.0),
        vehicles=(VehicleSpec(t_arrival=0.0, initial_speed=10.0),),
        controller=ControllerConfig(alpha=100.0, horizon=0.1,
                                    predictor_step=0.001, ctrl_step=0.001),
        dt_sim=0.005, duration=2.0, merge_speed=10.0, headway=5.0)
    base.update(over)
    return ScenarioConfig(**base)


def small_dict(**over):
    d = {
        "geometry": {"kind": "straight", "control_zone": 40.0,
                     "merge_zone": 10.0},
        "vehicles": [{"t_arrival": 0.0, "initial_speed": 10.0}],
        "controller": {"alpha": 100.0, "horizon": 0.1},
        "dt_sim": 0.005, "duration": 2.0, "merge_speed": 10.0,
    }
    d.update(over)
    return d


class TestConfigValidation:
    def test_minimal_dict_loads(self):
        cfg = config_from_dict(small_dict())
        assert cfg.geometry.kind == "straight"
        assert cfg.controller.horizon == 0.1

    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            config_from_dict(small_dict(velocity=3.0))

    def test_unknown_nested_keys(self):
        d = small_dict()
        d["controller"]["gain"] = 1.0
        with pytest.raises(ConfigError, match="controller"):
            config_from_dict(d)
        d = small_dict()
        d["vehicles"][0]["speed"] = 1.0
        with pytest.raises(ConfigError, match=r"vehicles\[0\]"):
            config_from_dict(d)
        d = small_dict(cbf={"lateral": {"enabled": True, "ymax": 0.5}})
        with pytest.raises(ConfigError, match="cbf.lateral"):
            config_from_dict(d)

    def test_missing_geometry(self):
        d = small_dict()
        del d["geometry"]
        with pytest.raises(ConfigError, match="geometry"):
            config_from_dict(d)

    def test_dt_must_divide_ctrl_step(self):
        with pytest.raises(ConfigError, match="integer multiple"):
            small_scenario(dt_sim=0.0033)

    def test_lead_requires_straight_road(self):
        with pytest.raises(ConfigError, match="straight"):
            small_scenario(
                geometry=RoadGeometry("arc", 40.0, 10.0, radius=100.0),
                lead=LeadScript())

    def test_longitudinal_filter_requires_lead(self):
        from nrtrack.cbf import LateralCbfSpec, LongitudinalCbfSpec
        with pytest.raises(ConfigError, match="lead"):
            small_scenario(cbf=CbfConfig(True, LongitudinalCbfSpec(),
                                         False, LateralCbfSpec()))

    def test_lateral_filter_requires_straight(self):
        from nrtrack.cbf import LateralCbfSpec, LongitudinalCbfSpec
        with pytest.raises(ConfigError, match="straight"):
            small_scenario(
                geometry=RoadGeometry("arc", 40.0, 10.0, radius=100.0),
                cbf=CbfConfig(False, LongitudinalCbfSpec(),
                              True, LateralCbfSpec()))

    def test_arrival_window_shape(self):
        with pytest.raises(ConfigError, match="arrival_window"):
            config_from_dict(small_dict(arrival_window=[5.0, 1.0]))

    def test_resolved_arrivals_seeded_and_sorted(self):
        cfg = small_scenario(
            vehicles=tuple(VehicleSpec(initial_speed=10.0) for _ in range(4)),
            arrival_window=(0.0, 10.0), seed=3)
        a1 = cfg.resolved_arrivals()
        a2 = cfg.resolved_arrivals()
        assert a1 == a2
        assert a1 == sorted(a1)
        # snapped to the simulation grid
        for t in a1:
            assert abs(round(t / cfg.dt_sim) * cfg.dt_sim - t) < 1e-12
        other = small_scenario(
            vehicles=tuple(VehicleSpec(initial_speed=10.0) for _ in range(4)),
            arrival_window=(0.0, 10.0), seed=4)
        assert other.resolved_arrivals() != a1


class TestLeadScript:
    KNOTS = ((-5.0, 2.0), (50.0, 2.0), (52.0, 1.0), (75.0, 1.0), (77.0, 2.0))

    def test_speed_interpolation(self):
        lead = LeadScript(speed_knots=self.KNOTS)
        assert lead.speed(0.0) == 2.0
        assert lead.speed(51.0) == 1.5
        assert lead.speed(100.0) == 2.0

    def test_accel_piecewise(self):
        lead = LeadScript(speed_knots=self.KNOTS)
        assert lead.accel(10.0) == 0.0
        assert lead.accel(51.0) == pytest.approx(-0.5)
        assert lead.accel(76.0) == pytest.approx(0.5)

    def test_position_anchored_at_gap(self):
        lead = LeadScript(initial_gap=10.0, speed_knots=self.KNOTS)
        assert lead.position(0.0) == pytest.approx(10.0)
        assert lead.position(50.0) == pytest.approx(110.0)
        # ramp 2 -> 1 over [50, 52] adds the trapezoid area 3
        assert lead.position(52.0) == pytest.approx(113.0)

    def test_unsorted_knots_rejected(self):
        with pytest.raises(ConfigError):
            LeadScript(speed_knots=((0.0, 1.0), (-1.0, 2.0)))


class TestTraceIO:
    def test_csv_roundtrip_stable(self, tmp_path):
        trace = run_simulation(small_scenario())
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        trace.write_csv(p1)
        again = SimTrace.read_csv(p1)
        again.write_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(again.t, np.array([float(f"{x:.9g}")
                                                 for x in trace.t]))
        assert again.flags == trace.flags

    def test_header_checked(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            SimTrace.read_csv(p)

    def test_column_and_flag_helpers(self):
        trace = run_simulation(small_scenario())
        assert trace.column("v_l").shape == trace.t.shape
        assert trace.vehicle_ids() == [1]
        assert not trace.has_flag("lead").any()


class TestDeterminism:
    def test_repeat_runs_bit_identical(self):
        cfg = small_scenario()
        t1 = run_simulation(cfg)
        t2 = run_simulation(cfg)
        assert np.array_equal(t1.data, t2.data, equal_nan=True)
        assert np.array_equal(t1.t, t2.t)
        assert t1.flags == t2.flags

    def test_disabled_filters_match_absent_filters(self):
        from nrtrack.cbf import LateralCbfSpec, LongitudinalCbfSpec
        cfg_off = small_scenario()
        cfg_noop = small_scenario(
            cbf=CbfConfig(False, LongitudinalCbfSpec(),
                          False, LateralCbfSpec()))
        a = run_simulation(cfg_off)
        b = run_simulation(cfg_noop)
        assert np.array_equal(a.data, b.data, equal_nan=True)

    def test_inactive_lateral_filter_is_passthrough(self):
        # straight road, perfectly centered start: the lane filter never
        # binds, so enabling it must not change the applied inputs
        from nrtrack.cbf import LateralCbfSpec, LongitudinalCbfSpec
        base = run_simulation(small_scenario())
        filt = run_simulation(small_scenario(
            cbf=CbfConfig(False, LongitudinalCbfSpec(),
                          True, LateralCbfSpec())))
        for col in ("z1", "z2", "a_l", "delta_f"):
            assert np.array_equal(base.column(col), filt.column(col))


class TestMetrics:
    def test_empty_trace_rejected(self):
        trace = run_simulation(small_scenario(duration=0.0))
        assert len(trace) == 0
        with pytest.raises(ValueError):
            compute_metrics(trace)

    def test_synthetic_fixture(self):
        # two vehicles on a straight road with hand-built rows
        n = 8
        t = np.tile(np.arange(4) * 1.0, 2)
        vid = np.repeat([1, 2], 4)
        data = np.zeros((n, len(DATA_COLUMNS)))
        z1 = DATA_COLUMNS.index("z1")
        r1 = DATA_COLUMNS.index("r1")
        a_l = DATA_COLUMNS.index("a_l")
        # vehicle 1 at x = 10 t with error 0.5 early, 0.1 late
        data[:4, z1] = 10.0 * np.arange(4)
        data[:4, r1] = data[:4, z1] + [0.5, 0.5, 0.1, 0.1]
        data[:4, a_l] = [1.0, -2.0, 0.5, 0.0]
        # vehicle 2 trails by 6 m exactly
        data[4:, z1] = data[:4, z1] - 6.0
        data[4:, r1] = data[4:, z1]
        trace = SimTrace(t, vid, data, [""] * n)
        m = compute_metrics(trace, transient_window=1.5)
        v1 = m.per_vehicle[0]
        assert v1.transient_peak_error == pytest.approx(0.5)
        assert v1.steady_error == pytest.approx(0.1)
        assert v1.max_abs_accel == pytest.approx(2.0)
        assert m.min_separation == pytest.approx(6.0)
        assert m.max_lateral_deviation == 0.0

    def test_lead_rows_excluded(self):
        lead = LeadScript(start_time=-5.0, initial_gap=15.0,
                          speed_knots=((-5.0, 10.0),))
        cfg = small_scenario(lead=lead)
        trace = run_simulation(cfg)
        assert 1 in trace.vehicle_ids() and 2 in trace.vehicle_ids()
        m = compute_metrics(trace, cfg.geometry)
        assert [v.vehicle_id for v in m.per_vehicle] == [2]


class TestCli:
    def write_config(self, tmp_path, **over):
        p = tmp_path / "scenario.json"
        p.write_text(json.dumps(small_dict(**over)))
        return p

    def test_run_writes_outputs(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, out_dir=str(tmp_path / "out"))
        assert cli_main(["run", str(cfg)]) == 0
        out = tmp_path / "out"
        assert (out / "trace.csv").exists()
        assert (out / "metrics.json").exists()
        svgs = sorted(p.name for p in out.glob("*.svg"))
        assert len(svgs) == 7
        body = json.loads((out / "metrics.json").read_text())
        assert "min_separation" in body

    def test_run_invalid_config_exits_2(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(small_dict(velocity=1.0)))
        assert cli_main(["run", str(p)]) == 2

    def test_run_missing_file_exits_2(self, tmp_path, capsys):
        assert cli_main(["run", str(tmp_path / "nope.json")]) == 2

    def test_metrics_roundtrip(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, out_dir=str(tmp_path / "out"))
        cli_main(["run", str(cfg)])
        capsys.readouterr()
        assert cli_main(["metrics", str(tmp_path / "out" / "trace.csv")]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["per_vehicle"][0]["vehicle_id"] == 1

    def test_plot_from_trace(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, out_dir=str(tmp_path / "out"))
        cli_main(["run", str(cfg)])
        plot_dir = tmp_path / "plots"
        assert cli_main(["plot", str(tmp_path / "out" / "trace.csv"),
                         "--out-dir", str(plot_dir)]) == 0
        assert len(list(plot_dir.glob("*.svg"))) == 7

    def test_overrides(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, out_dir=str(tmp_path / "out"))
        assert cli_main(["run", str(cfg), "--duration", "1.0",
                         "--alpha", "50.0"]) == 0
        echo = capsys.readouterr().out
        assert "alpha=50.0" in echo and "duration=1.0" in echo
