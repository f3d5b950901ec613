"""Controller assembly: control-oriented model pipeline plus all designs.

The control-oriented model is the actuator bank (first-order lag in series
with a rational delay per channel) cascaded with the plant, with the sensor
vector already reduced to its two harmonic amplitudes.  Large plants are
first cut down by dominant-mode reduction, the cascade is then balanced-
truncated to the target order with the unstable pair kept verbatim, and the
result is discretized at the control period.  Because the unstable pair
leads the reduced state, the diagonal mode weights apply directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .condensed import CondensedQp, build_blocking, condense
from .fgm import FgmPlan, make_plan
from .models import (ContinuousModel, DiscreteModel, actuator_model,
                     freq_response, series_compose, zoh_discretize)
from .reduction import balanced_truncate, davison_reduce
from .riccati import KalmanDesign, LqDesign
from .surrogate import harmonic_basis


@dataclass(frozen=True)
class ControlModelConfig:
    order: int = 50
    davison_order: int = 120
    control_period: float = 0.75e-3
    ps_time_constant: float = 7.5e-3
    ps_delay: float = 2.5e-3
    pade_order: int = 2
    davison_dc_correction: bool = True

    def __post_init__(self):
        if self.order < 3:
            raise ValueError("control model order must be >= 3")
        if self.control_period <= 0:
            raise ValueError("control period must be > 0")


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 80
    blocking: tuple[int, ...] = (2, 2, 76)
    u_limit: float = 34.0
    q_unstable: float = 10.0
    q_stable: float = 0.1
    r_input: float = 1e-2

    def __post_init__(self):
        if sum(self.blocking) != self.horizon:
            raise ValueError(
                f"blocking {self.blocking} does not sum to horizon {self.horizon}")
        if self.u_limit <= 0:
            raise ValueError("input limit must be > 0")
        if self.r_input <= 0:
            raise ValueError("input weight must be > 0 for a convex QP")


@dataclass(frozen=True)
class KalmanConfig:
    q_unstable: float = 0.1
    q_stable: float = 0.01
    r_meas: float = 1.0


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 50
    width: str = "wide"
    restart: bool = True
    restart_rule: str = "paper"
    preconditioner: str = "row-sum"


def reduced_output_map(sensor_angles_deg) -> np.ndarray:
    """Least-squares extraction of the two harmonic amplitudes (pseudo-inverse
    of the cos/sin basis at the sensor angles)."""
    return np.linalg.pinv(harmonic_basis(sensor_angles_deg))


def build_control_model(plant: ContinuousModel, sensor_angles_deg,
                        cfg: ControlModelConfig) -> ContinuousModel:
    """Actuator-plus-plant cascade reduced to the configured order."""
    t_out = reduced_output_map(sensor_angles_deg)
    plant2 = ContinuousModel(A=plant.A, B=plant.B, C=t_out @ plant.C,
                             D=t_out @ plant.D)
    if plant2.n_x > cfg.davison_order:
        plant2 = davison_reduce(plant2, cfg.davison_order,
                                dc_correction=cfg.davison_dc_correction)
    act = actuator_model(plant.n_u, cfg.ps_time_constant, cfg.ps_delay,
                         cfg.pade_order)
    cascade = series_compose(act, plant2)
    if cascade.n_x < cfg.order:
        raise ValueError(
            f"cascade order {cascade.n_x} is below the target {cfg.order}")
    return balanced_truncate(cascade, cfg.order)


def modal_weight(order: int, w_unstable: float, w_stable: float) -> np.ndarray:
    """Diagonal weight: the leading pair carries the unstable-mode weight."""
    d = np.full(order, w_stable)
    d[:2] = w_unstable
    return np.diag(d)


@dataclass(frozen=True)
class ControllerDesign:
    """Everything one closed loop needs, built once per tuning."""

    model: DiscreteModel
    model_c: ContinuousModel
    t_out: np.ndarray
    sensor_angles_deg: tuple[float, ...]
    lq: LqDesign
    kalman: KalmanDesign
    qp: CondensedQp
    plan: FgmPlan
    u_limit: float
    mpc_cfg: MpcConfig
    solver_cfg: SolverConfig
    control_cfg: ControlModelConfig

    @property
    def n_u(self) -> int:
        return self.model.n_u

    @property
    def bounds(self):
        lo = np.full(self.n_u, -self.u_limit)
        return lo, -lo


def design_controller(plant: ContinuousModel, sensor_angles_deg,
                      control_cfg: ControlModelConfig | None = None,
                      mpc_cfg: MpcConfig | None = None,
                      kalman_cfg: KalmanConfig | None = None,
                      solver_cfg: SolverConfig | None = None) -> ControllerDesign:
    """Design the full controller stack for a plant."""
    control_cfg = control_cfg or ControlModelConfig()
    mpc_cfg = mpc_cfg or MpcConfig()
    kalman_cfg = kalman_cfg or KalmanConfig()
    solver_cfg = solver_cfg or SolverConfig()

    sensor_angles_deg = tuple(float(a) for a in sensor_angles_deg)
    model_c = build_control_model(plant, sensor_angles_deg, control_cfg)
    model = zoh_discretize(model_c, control_cfg.control_period)

    order = model.n_x
    Q_C = modal_weight(order, mpc_cfg.q_unstable, mpc_cfg.q_stable)
    R_C = mpc_cfg.r_input * np.eye(model.n_u)
    lq = LqDesign.design(model, Q_C, R_C)

    Q_K = modal_weight(order, kalman_cfg.q_unstable, kalman_cfg.q_stable)
    R_K = kalman_cfg.r_meas * np.eye(model.n_y)
    kalman = KalmanDesign.design(model, Q_K, R_K)

    blocking = build_blocking(mpc_cfg.blocking)
    qp = condense(model, Q_C, R_C, lq.P, blocking,
                  -mpc_cfg.u_limit, mpc_cfg.u_limit)
    plan = make_plan(qp, solver_cfg.iterations, width=solver_cfg.width,
                     restart=solver_cfg.restart,
                     restart_rule=solver_cfg.restart_rule,
                     preconditioner=solver_cfg.preconditioner)
    return ControllerDesign(model=model, model_c=model_c,
                            t_out=reduced_output_map(sensor_angles_deg),
                            sensor_angles_deg=sensor_angles_deg,
                            lq=lq, kalman=kalman, qp=qp, plan=plan,
                            u_limit=mpc_cfg.u_limit, mpc_cfg=mpc_cfg,
                            solver_cfg=solver_cfg, control_cfg=control_cfg)


def with_u_limit(design: ControllerDesign, u_limit: float) -> ControllerDesign:
    """Re-bound an existing design at a different saturation level.

    The Hessian, gains and solver plan are unchanged (bounds do not enter
    them); only the box and the stored limit are replaced.
    """
    if u_limit <= 0:
        raise ValueError("input limit must be > 0")
    qp = replace(design.qp,
                 u_min=np.full(design.qp.dim, -float(u_limit)),
                 u_max=np.full(design.qp.dim, float(u_limit)))
    return replace(design, qp=qp, u_limit=float(u_limit),
                   mpc_cfg=replace(design.mpc_cfg, u_limit=float(u_limit)))


def frequency_deviation(full: ContinuousModel, reduced: ContinuousModel,
                        omega_grid) -> float:
    """Peak entrywise response deviation relative to the peak full response."""
    g_full = freq_response(full, omega_grid)
    g_red = freq_response(reduced, omega_grid)
    ref = float(np.abs(g_full).max())
    if ref == 0.0:
        raise ValueError("full model response is identically zero on the grid")
    return float(np.abs(g_full - g_red).max() / ref)
