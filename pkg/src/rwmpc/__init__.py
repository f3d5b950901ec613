"""Constrained MPC toolkit for rotating-instability stabilization studies.

Subpackages cover the full desk-scale stack: synthetic plant construction,
model order reduction, Riccati/Kalman design, condensed box-QP assembly, a
fixed-budget fast gradient solver with an independent active-set oracle,
closed-loop simulation with sweeps, and a configuration-driven CLI.
"""

from .condensed import BlockingMap, CondensedQp, build_blocking, condense, linear_term, mpc_cost
from .design import (ControllerDesign, ControlModelConfig, KalmanConfig,
                     MpcConfig, SolverConfig, design_controller,
                     frequency_deviation, with_u_limit)
from .fgm import FgmPlan, FgmResult, beta_sequence, fgm_solve, make_plan, mse, precondition, prox_box
from .models import (ContinuousModel, DiscreteModel, actuator_model,
                     first_order_lag, freq_response, pade_delay,
                     replicate_channels, series_compose, zoh_discretize)
from .oracle import OracleSolution, kkt_check, oracle_solve
from .reduction import (ModalModel, balanced_truncate, davison_reduce,
                        modal_decompose, reassemble,
                        stable_hankel_singular_values)
from .riccati import (EstimatorState, KalmanDesign, LqDesign, dare_residual,
                      kalman_gain, kf_step, lq_gain, lqg_control, solve_dare)
from .simulation import (NoiseConfig, PsChannel, SensorReducer, SimScenario,
                         SimTrace, bap_sweep, classify, inject_noise,
                         power_integral, robustness_sweep, settling_time,
                         simulate)
from .surrogate import SurrogateConfig, build_surrogate, coil_angles_deg, harmonic_basis

__version__ = "0.1.0"
