"""Main simulation loop, trace container and metric computation.

Per plant step, for every active vehicle: query the planner reference,
advance the tracking-flow controller with frozen plant state, pass the
command through the enabled safety filters, then Euler-step the plant.  The
loop is single threaded and, given a config and seed, bit-deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import numpy as np

from .cbf import (lateral_barrier, lateral_deviation_state, lateral_filter,
                  longitudinal_barrier, longitudinal_filter,
                  relative_kinematics)
from .config import ScenarioConfig
from .controller import ControllerState, controller_update, predict_output
from .dynamics import ControlInput, VehicleState, euler_step
from .planner import (arc_position, build_merge_profile,
                      extended_reference_at, lateral_offset, reference_at,
                      road_arc_length, schedule_merging)

#: trace column order (after t and vehicle_id, before flags)
DATA_COLUMNS = ("z1", "z2", "v_l", "v_n", "psi", "psi_dot",
                "a_l_nom", "delta_f_nom", "a_l", "delta_f",
                "r1", "r2", "yhat1", "yhat2", "h_long", "h_lat")

CSV_HEADER = ("t", "vehicle_id") + DATA_COLUMNS + ("flags",)


class SimulationAbortError(RuntimeError):
    """The plant state became non-finite; carries the failing step index."""

    def __init__(self, step: int, vehicle_id: int):
        super().__init__(f"non-finite state for vehicle {vehicle_id} "
                         f"at step {step}")
        self.step = step
        self.vehicle_id = vehicle_id


@dataclass
class SimTrace:
    t: np.ndarray            # (n,)
    vehicle_id: np.ndarray   # (n,) int
    data: np.ndarray         # (n, len(DATA_COLUMNS))
    flags: list              # (n,) strings, tokens joined by '|'

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, DATA_COLUMNS.index(name)]

    def vehicle_ids(self):
        seen = []
        for v in self.vehicle_id:
            if v not in seen:
                seen.append(int(v))
        return seen

    def rows_for(self, vid: int) -> np.ndarray:
        return self.vehicle_id == vid

    def has_flag(self, token: str) -> np.ndarray:
        return np.array([token in f.split("|") for f in self.flags])

    def tracking_error(self) -> np.ndarray:
        return np.hypot(self.column("r1") - self.column("z1"),
                        self.column("r2") - self.column("z2"))

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_HEADER) + "\n")
            for i in range(len(self.t)):
                vals = [f"{self.t[i]:.9g}", str(int(self.vehicle_id[i]))]
                vals += [f"{v:.9g}" for v in self.data[i]]
                vals.append(self.flags[i])
                fh.write(",".join(vals) + "\n")

    @classmethod
    def read_csv(cls, path) -> "SimTrace":
        path = Path(path)
        ts, vids, rows, flags = [], [], [], []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != CSV_HEADER:
                raise ValueError(f"{path}: unexpected trace header")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                ts.append(float(parts[0]))
                vids.append(int(parts[1]))
                rows.append([float(x) for x in parts[2:-1]])
                flags.append(parts[-1])
        return cls(np.array(ts), np.array(vids, dtype=int),
                   np.array(rows).reshape(len(ts), len(DATA_COLUMNS)), flags)


def _flag_string(tokens) -> str:
    return "|".join(tokens)


class _Vehicle:
    """Mutable per-vehicle loop state."""

    def __init__(self, vid, spec, profile, ctrl_cfg, geom):
        self.vid = vid
        self.spec = spec
        self.profile = profile
        self.ctrl_cfg = ctrl_cfg
        self.geom = geom
        self.state = None
        self.ctrl = None
        self.exited = False
        self.hold_ref = None

    def activate(self):
        z1, z2, heading = arc_position(0.0, self.geom)
        z2 += self.spec.initial_lateral_offset
        psi = heading + self.spec.initial_heading_offset
        self.state = VehicleState(z1, z2, self.spec.initial_speed, 0.0,
                                  psi, 0.0)
        self.ctrl = ControllerState(
            ControlInput(0.0, self.spec.initial_steering))

    def reference(self, t: float):
        """Recorded reference: held at the road endpoint."""
        return reference_at(t, self.profile, self.geom)

    def control_reference(self, t: float):
        """Lookahead reference for the controller, extended past the end."""
        return extended_reference_at(t, self.profile, self.geom)

    def arc_length(self) -> float:
        return road_arc_length(self.state.z1, self.state.z2, self.geom)


def run_simulation(cfg: ScenarioConfig) -> SimTrace:
    """Run the configured scenario and return the full trace."""
    geom = cfg.geometry
    arrivals = cfg.resolved_arrivals()
    entries = schedule_merging([(t, v.initial_speed) for t, v in
                                zip(arrivals, cfg.vehicles)],
                               geom, cfg.headway, cfg.merge_speed)
    lead = cfg.lead
    vid0 = 2 if lead is not None else 1
    vehicles = []
    for i, (spec, entry) in enumerate(zip(cfg.vehicles, entries)):
        ctrl_cfg = dc_replace(
            cfg.controller,
            model_params=spec.params.with_mass_factor(spec.mass_factor))
        vehicles.append(_Vehicle(vid0 + i, spec,
                                 build_merge_profile(entry, geom),
                                 ctrl_cfg, geom))
    arrival_steps = [round(t / cfg.dt_sim) for t in arrivals]

    n_steps = int(round(cfg.duration / cfg.dt_sim))
    ts, vids, rows, flags = [], [], [], []
    lat_spec = cfg.cbf.lateral
    lon_spec = cfg.cbf.longitudinal

    for step in range(n_steps):
        t = step * cfg.dt_sim

        lead_pos = lead_vel = lead_acc = None
        if lead is not None:
            lead_pos = np.array([lead.position(t), 0.0])
            lead_vel = np.array([lead.speed(t), 0.0])
            lead_acc = np.array([lead.accel(t), 0.0])
            ts.append(t)
            vids.append(1)
            rows.append([lead_pos[0], 0.0, lead_vel[0], 0.0, 0.0, 0.0,
                         lead_acc[0], 0.0, lead_acc[0], 0.0,
                         lead_pos[0], 0.0, math.nan, math.nan,
                         math.nan, math.nan])
            flags.append("lead")

        for veh, a_step in zip(vehicles, arrival_steps):
            if step < a_step:
                continue
            if veh.state is None:
                veh.activate()
            r_now = veh.reference(t)
            if veh.exited:
                st = veh.state
                ts.append(t)
                vids.append(veh.vid)
                rows.append([st.z1, st.z2, st.v_l, st.v_n, st.psi,
                             st.psi_dot, 0.0, 0.0, 0.0, 0.0,
                             r_now[0], r_now[1], math.nan, math.nan,
                             math.nan, math.nan])
                flags.append("exited")
                continue

            tokens = []
            veh.ctrl, cflags = controller_update(
                veh.ctrl, veh.state, veh.control_reference, t, veh.ctrl_cfg,
                cfg.dt_sim)
            tokens.extend(sorted(cflags))
            u_nom = veh.ctrl.u
            a_f, d_f = u_nom.a_l, u_nom.delta_f

            if cfg.cbf.longitudinal_enabled:
                a_f, infeas = longitudinal_filter(
                    a_f, veh.state, d_f, lead_pos, lead_vel, lead_acc,
                    lon_spec, veh.spec.params,
                    cfg.controller.a_min, cfg.controller.a_max)
                if infeas:
                    tokens.append("infeas_long")
            if cfg.cbf.lateral_enabled:
                d_f, infeas = lateral_filter(d_f, veh.state, a_f, lat_spec,
                                             veh.spec.params)
                if infeas:
                    tokens.append("infeas_lat")
            u_applied = ControlInput(a_f, d_f)

            yhat = predict_output(veh.state, u_applied, veh.ctrl_cfg)
            h_long = math.nan
            if lead is not None:
                rk = relative_kinematics(lead_pos, lead_vel,
                                         veh.state.position(),
                                         veh.state.world_velocity())
                h_long = longitudinal_barrier(rk, lon_spec)
            h_lat = math.nan
            if geom.kind == "straight":
                y, ydot = lateral_deviation_state(veh.state)
                h_lat = lateral_barrier(y, ydot, lat_spec)

            st = veh.state
            new_state, clamped = euler_step(st, u_applied, veh.spec.params,
                                            cfg.dt_sim,
                                            cfg.controller.v_min)
            if clamped:
                tokens.append("vmin_clamp")
            if not all(map(math.isfinite, new_state.as_tuple())):
                raise SimulationAbortError(step, veh.vid)

            ts.append(t)
            vids.append(veh.vid)
            rows.append([st.z1, st.z2, st.v_l, st.v_n, st.psi, st.psi_dot,
                         u_nom.a_l, u_nom.delta_f, a_f, d_f,
                         r_now[0], r_now[1], yhat[0], yhat[1],
                         h_long, h_lat])
            flags.append(_flag_string(tokens))

            veh.state = new_state
            if veh.arc_length() >= geom.total_length:
                veh.exited = True

    data = (np.array(rows).reshape(len(ts), len(DATA_COLUMNS))
            if ts else np.empty((0, len(DATA_COLUMNS))))
    return SimTrace(np.array(ts), np.array(vids, dtype=int), data, flags)


def _json_float(x: float):
    """Strict-JSON value: non-finite floats become None."""
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class VehicleMetrics:
    vehicle_id: int
    transient_peak_error: float   # max tracking error in the transient window
    steady_error: float           # max tracking error after the window
    max_abs_accel: float
    merge_entry_accel: float      # |a_l| when crossing into the merging zone

    def to_dict(self):
        return {"vehicle_id": self.vehicle_id,
                "transient_peak_error": self.transient_peak_error,
                "steady_error": self.steady_error,
                "max_abs_accel": self.max_abs_accel,
                "merge_entry_accel": _json_float(self.merge_entry_accel)}


@dataclass(frozen=True)
class Metrics:
    per_vehicle: tuple
    min_separation: float
    max_lateral_deviation: float

    def to_dict(self):
        return {"per_vehicle": [m.to_dict() for m in self.per_vehicle],
                "min_separation": _json_float(self.min_separation),
                "max_lateral_deviation": self.max_lateral_deviation}


def compute_metrics(trace: SimTrace, geometry=None,
                    transient_window: float = 3.0) -> Metrics:
    """Tracking and safety metrics from a trace.

    geometry is needed to measure arc length and lateral deviation on curved
    roads; a straight road is assumed when omitted.  Lead and post-exit rows
    are excluded from the tracking statistics; post-exit rows are also
    excluded from the separation metric because held vehicles stack up at
    the road endpoint.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    is_lead = trace.has_flag("lead")
    is_exited = trace.has_flag("exited")
    err = trace.tracking_error()
    if geometry is not None:
        s = np.array([road_arc_length(a, b, geometry) for a, b in
                      zip(trace.column("z1"), trace.column("z2"))])
        lat = np.array([lateral_offset(a, b, geometry) for a, b in
                        zip(trace.column("z1"), trace.column("z2"))])
        control_zone = geometry.control_zone
    else:
        s = trace.column("z1")
        lat = trace.column("z2")
        control_zone = math.inf

    per_vehicle = []
    for vid in trace.vehicle_ids():
        sel = trace.rows_for(vid) & ~is_lead & ~is_exited
        if not sel.any():
            continue
        tv = trace.t[sel]
        ev = err[sel]
        av = trace.column("a_l")[sel]
        sv = s[sel]
        arrival = tv[0]
        transient = tv <= arrival + transient_window
        peak = float(ev[transient].max()) if transient.any() else 0.0
        steady = float(ev[~transient].max()) if (~transient).any() else 0.0
        crossed = np.nonzero(sv >= control_zone)[0]
        entry_a = float(abs(av[crossed[0]])) if len(crossed) else math.nan
        per_vehicle.append(VehicleMetrics(vid, peak, steady,
                                          float(np.abs(av).max()), entry_a))

    alive = ~is_exited
    min_sep = math.inf
    for i, vid_a in enumerate(trace.vehicle_ids()):
        for vid_b in trace.vehicle_ids()[i + 1:]:
            sel_a = trace.rows_for(vid_a) & alive
            sel_b = trace.rows_for(vid_b) & alive
            ta = trace.t[sel_a]
            tb = trace.t[sel_b]
            common, ia, ib = np.intersect1d(ta, tb, return_indices=True)
            if len(common) == 0:
                continue
            dx = trace.column("z1")[sel_a][ia] - trace.column("z1")[sel_b][ib]
            dy = trace.column("z2")[sel_a][ia] - trace.column("z2")[sel_b][ib]
            min_sep = min(min_sep, float(np.hypot(dx, dy).min()))

    lat_sel = ~is_lead & ~is_exited
    max_lat = float(np.abs(lat[lat_sel]).max()) if lat_sel.any() else 0.0
    return Metrics(tuple(per_vehicle),
                   min_sep if math.isfinite(min_sep) else math.nan, max_lat)
