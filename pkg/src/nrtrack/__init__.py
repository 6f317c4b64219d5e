"""Newton-Raphson flow output tracking with barrier-function safety filters.

A deterministic simulator for single-lane merging scenarios: a six-state
dynamic bicycle model tracked by a predictor-based Newton-Raphson flow
controller, with optional control-barrier-function filters for headway and
lane-deviation constraints.
"""
from .cbf import (LateralCbfSpec, LongitudinalCbfSpec, RelativeKinematics,
                  cbf_condition, lateral_barrier, lateral_filter,
                  longitudinal_barrier, longitudinal_filter,
                  relative_kinematics)
from .config import (ConfigError, LeadScript, ScenarioConfig, VehicleSpec,
                     config_from_dict, load_config)
from .controller import (ControllerConfig, ControllerState,
                         SingularJacobianError, controller_update,
                         memoryless_nr_track, nr_control_derivative,
                         predict_output, predictor_jacobian)
from .dynamics import (DEFAULT_PARAMS, ControlInput, DegenerateSpeedError,
                       StateDerivative, VehicleParams, VehicleState,
                       euler_step, lateral_tire_forces, rollout,
                       state_derivative)
from .planner import (InfeasibleProfileError, RoadGeometry, ScheduleEntry,
                      SpeedProfile, arc_position, build_merge_profile,
                      extended_reference_at, min_energy_profile, reference_at,
                      schedule_merging)
from .simulate import (Metrics, SimTrace, SimulationAbortError,
                       compute_metrics, run_simulation)

__version__ = "0.1.0"
