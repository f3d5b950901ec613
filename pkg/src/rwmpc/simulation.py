"""Closed-loop simulation of plant, power supplies, sensors and controller.

The truth plant is integrated exactly at a fine substep so that both the
control period and the supply transport delay are integer numbers of
substeps; the supply saturation, delay line and output lag are evaluated at
the same resolution.  The controller side (estimator, feedback law or QP
solve) runs once per control period on the reduced measurement vector.

Sweeps spawn one scenario per grid point with an RNG stream derived from
``(seed, grid index)`` and merge results by index, so multi-worker runs are
deterministic.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .condensed import linear_term
from .design import ControllerDesign
from .fgm import fgm_solve
from .models import ContinuousModel, zoh_discretize
from .oracle import oracle_solve
from .reduction import modal_decompose, reassemble
from .riccati import EstimatorState, kf_step, lqg_control
from .surrogate import harmonic_basis

DIVERGENCE_NORM = 1e9
COIL_CURRENT_LIMIT = 1.5e4

CONTROLLERS = ("mpc", "lqg", "lqg-ewp")
TRACE_COLUMNS = (["t", "yA", "yB"]
                 + [f"ym{i}" for i in range(1, 7)]
                 + [f"u{i}" for i in range(1, 28)]
                 + [f"uelm{i}" for i in range(1, 28)]
                 + [f"ielm{i}" for i in range(1, 28)]
                 + ["power_w", "iters", "solve_us"])


class PsChannel:
    """Saturation, transport delay and first-order lag of the supply bank.

    Vectorized over channels: the internal lag state and the delay ring
    buffer hold one entry per channel.  The command is clipped on entry, so
    the output can never exceed the saturation level at any substep.
    """

    def __init__(self, time_constant: float, delay: float, v_sat: float,
                 substep: float, n_channels: int):
        if time_constant <= 0 or substep <= 0 or v_sat <= 0:
            raise ValueError("time constant, substep and saturation must be > 0")
        steps = delay / substep
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(
                f"delay {delay} is not an integer multiple of substep {substep}")
        self.time_constant = time_constant
        self.delay_steps = int(round(steps))
        self.v_sat = float(v_sat)
        self.substep = float(substep)
        self.n_channels = int(n_channels)
        self._decay = float(np.exp(-substep / time_constant))
        self.reset()

    def reset(self) -> None:
        self.lag_state = np.zeros(self.n_channels)
        self._ring = np.zeros((max(self.delay_steps, 1), self.n_channels))
        self._head = 0

    def step_period(self, u_cmd: np.ndarray, substeps: int) -> np.ndarray:
        """Advance by ``substeps`` and return the output at each substep end."""
        clipped = np.clip(np.asarray(u_cmd, dtype=float), -self.v_sat, self.v_sat)
        out = np.empty((substeps, self.n_channels))
        a = self._decay
        for s in range(substeps):
            if self.delay_steps > 0:
                delayed = self._ring[self._head].copy()
                self._ring[self._head] = clipped
                self._head = (self._head + 1) % self.delay_steps
            else:
                delayed = clipped
            self.lag_state = a * self.lag_state + (1.0 - a) * delayed
            out[s] = self.lag_state
        return out


class SensorReducer:
    """Least-squares cos/sin amplitude extraction from the sensor ring."""

    def __init__(self, sensor_angles_deg):
        basis = harmonic_basis(sensor_angles_deg)
        self.T_out = np.linalg.pinv(basis)
        if not np.allclose(self.T_out @ basis, np.eye(2), atol=1e-12):
            raise ValueError("sensor angles do not resolve both amplitudes")

    def reduce(self, y_m: np.ndarray) -> np.ndarray:
        y_m = np.asarray(y_m, dtype=float)
        if not np.all(np.isfinite(y_m)):
            raise ValueError("sensor vector must be finite")
        return self.T_out @ y_m


@dataclass(frozen=True)
class NoiseConfig:
    """Band-limited white noise levels for the actuator and measurement sites.

    ``power`` follows the noise-power convention of block-diagram simulators:
    the per-sample variance is ``power / T_s``.  Set ``per_sample_variance``
    to interpret the numbers as raw per-sample variances instead.
    """

    actuator_power: float = 0.0
    measurement_power: float = 0.0
    per_sample_variance: bool = False

    def std(self, power: float, t_s: float) -> float:
        if power < 0:
            raise ValueError("noise power must be >= 0")
        var = power if self.per_sample_variance else power / t_s
        return float(np.sqrt(var))


@dataclass(frozen=True)
class SimScenario:
    """One closed-loop run: plant, controller design, protocol settings."""

    plant: ContinuousModel
    design: ControllerDesign
    controller: str = "mpc"
    saturation: float = 34.0
    xi0: tuple[float, float] = (0.5, 0.5)
    duration: float = 0.5
    control_period: float = 0.75e-3
    substep: float = 5e-5
    gamma_override: float | None = None
    omega_override: float | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    solver: str = "fgm"

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if self.solver not in ("fgm", "oracle"):
            raise ValueError("solver must be 'fgm' or 'oracle'")
        ratio = self.control_period / self.substep
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control period must be an integer number of substeps")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.saturation <= 0:
            raise ValueError("saturation must be > 0")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.duration / self.control_period - 1e-9))

    @property
    def substeps_per_period(self) -> int:
        return int(round(self.control_period / self.substep))


@dataclass
class SimTrace:
    """Per-control-sample record of one run; arrays share the time index."""

    t: np.ndarray
    y: np.ndarray
    y_m: np.ndarray
    u: np.ndarray
    u_elm: np.ndarray
    i_elm: np.ndarray
    power: np.ndarray
    iterations: np.ndarray
    solve_us: np.ndarray
    x_hat: np.ndarray
    stable: bool

    @property
    def n_samples(self) -> int:
        return self.t.size

    @property
    def peak_input(self) -> float:
        return float(np.abs(self.u).max(initial=0.0))

    @property
    def peak_coil_current(self) -> float:
        return float(np.abs(self.i_elm).max(initial=0.0))

    def to_csv(self, path) -> None:
        header = ",".join(TRACE_COLUMNS)
        data = np.column_stack([
            self.t, self.y, self.y_m, self.u, self.u_elm, self.i_elm,
            self.power, self.iterations, self.solve_us,
        ])
        with open(path, "w", encoding="ascii") as fh:
            fh.write(header + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _apply_overrides(scenario: SimScenario) -> ContinuousModel:
    if scenario.gamma_override is None and scenario.omega_override is None:
        return scenario.plant
    modal = modal_decompose(scenario.plant)
    return reassemble(modal, gamma=scenario.gamma_override,
                      omega=scenario.omega_override)


def simulate(scenario: SimScenario) -> SimTrace:
    """Run the closed loop and collect the trace.

    A diverging state (norm above 1e9 or non-finite) truncates the run and
    flags it unstable rather than raising.
    """
    design = scenario.design
    if abs(design.model.T_s - scenario.control_period) > 1e-12:
        raise ValueError("scenario control period differs from the design's")
    if abs(design.u_limit - scenario.saturation) > 1e-9:
        raise ValueError(
            f"scenario saturation {scenario.saturation} V differs from the "
            f"design limit {design.u_limit} V; rebuild or re-bound the design")
    plant = _apply_overrides(scenario)
    plant_d = zoh_discretize(plant, scenario.substep)
    if plant.C_aux is None:
        raise ValueError("plant must expose coil currents via C_aux")

    n_steps = scenario.n_steps
    substeps = scenario.substeps_per_period
    n_u = design.n_u
    t_s = scenario.control_period

    ps = PsChannel(design.control_cfg.ps_time_constant,
                   design.control_cfg.ps_delay,
                   scenario.saturation, scenario.substep, n_u)
    reducer = SensorReducer(design.sensor_angles_deg)

    rng_meas = np.random.default_rng([scenario.seed, 101])
    rng_act = np.random.default_rng([scenario.seed, 202])
    std_meas = scenario.noise.std(scenario.noise.measurement_power, t_s)
    std_act = scenario.noise.std(scenario.noise.actuator_power, t_s)

    x = np.zeros(plant.n_x)
    x[0], x[1] = scenario.xi0
    est = EstimatorState.zero(design.model.n_x)
    u_for_estimator = np.zeros(n_u)
    last_drive = np.zeros(n_u)
    lo, hi = design.bounds

    tr_t = np.arange(n_steps) * t_s
    tr_y = np.zeros((n_steps, 2))
    tr_ym = np.zeros((n_steps, plant.n_y))
    tr_u = np.zeros((n_steps, n_u))
    tr_uelm = np.zeros((n_steps, n_u))
    tr_ielm = np.zeros((n_steps, n_u))
    tr_pow = np.zeros(n_steps)
    tr_iters = np.zeros(n_steps)
    tr_us = np.zeros(n_steps)
    tr_xhat = np.zeros((n_steps, design.model.n_x))
    stable = True
    taken = n_steps

    for k in range(n_steps):
        y_m = plant.C @ x
        if std_meas > 0.0:
            y_m = y_m + std_meas * rng_meas.standard_normal(plant.n_y)
        y = reducer.reduce(y_m)
        est = kf_step(est, u_for_estimator, y, design.model, design.kalman.M_K)

        t0 = time.perf_counter_ns()
        if scenario.controller == "mpc":
            f_c = linear_term(design.qp, est.x_hat)
            if scenario.solver == "fgm":
                res = fgm_solve(design.qp, f_c, design.plan)
                u_cmd = res.u_opt[:n_u].copy()
                iters = res.iterations
            else:
                sol = oracle_solve(design.qp, f_c)
                u_cmd = sol.u_star[:n_u].copy()
                iters = 0
            u_for_estimator = u_cmd
        else:
            ewp = scenario.controller == "lqg-ewp"
            u_cmd, u_for_estimator = lqg_control(est.x_hat, design.lq.K_LQ,
                                                 ewp, (lo, hi))
            iters = 0
        tr_us[k] = (time.perf_counter_ns() - t0) / 1e3

        i_elm = plant.C_aux @ x
        tr_y[k] = y
        tr_ym[k] = y_m
        tr_u[k] = u_cmd
        tr_uelm[k] = last_drive
        tr_ielm[k] = i_elm
        tr_pow[k] = float(np.abs(last_drive * i_elm).sum())
        tr_iters[k] = iters
        tr_xhat[k] = est.x_hat

        outputs = ps.step_period(u_cmd, substeps)
        noise_k = (std_act * rng_act.standard_normal(n_u)
                   if std_act > 0.0 else None)
        for s in range(substeps):
            drive = outputs[s] if noise_k is None else outputs[s] + noise_k
            x = plant_d.A @ x + plant_d.B @ drive
        last_drive = outputs[-1] if noise_k is None else outputs[-1] + noise_k

        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            stable = False
            taken = k + 1
            break

    sl = slice(0, taken)
    return SimTrace(t=tr_t[sl], y=tr_y[sl], y_m=tr_ym[sl], u=tr_u[sl],
                    u_elm=tr_uelm[sl], i_elm=tr_ielm[sl], power=tr_pow[sl],
                    iterations=tr_iters[sl], solve_us=tr_us[sl],
                    x_hat=tr_xhat[sl], stable=stable)


def settling_time(trace: SimTrace, threshold: float = 0.1) -> float | None:
    """First time after which both reduced outputs stay within the threshold.

    Returns ``None`` when the trace never settles (including unstable runs).
    """
    if not trace.stable or trace.n_samples == 0:
        return None
    peak = np.abs(trace.y).max(axis=1)
    above = np.nonzero(peak >= threshold)[0]
    if above.size == 0:
        return 0.0
    last = above[-1]
    if last == trace.n_samples - 1:
        return None
    return float(trace.t[last + 1])


def power_integral(trace: SimTrace, t_end: float = 0.5) -> float:
    """Trapezoid integral of the total supply power over samples up to t_end."""
    t_s = float(trace.t[1] - trace.t[0]) if trace.n_samples > 1 else 0.0
    if trace.t[-1] + t_s < t_end - 1e-12:
        raise ValueError(f"trace ends at {trace.t[-1]:.6f} s, before {t_end} s")
    mask = trace.t <= t_end + 1e-12
    return float(np.trapezoid(trace.power[mask], trace.t[mask]))


def inject_noise(values, power: float, t_s: float, rng,
                 per_sample_variance: bool = False) -> np.ndarray:
    """Add one seeded zero-mean Gaussian draw to a signal sample."""
    cfg = NoiseConfig(per_sample_variance=per_sample_variance)
    std = cfg.std(power, t_s)
    values = np.asarray(values, dtype=float)
    if std == 0.0:
        return values.copy()
    return values + std * rng.standard_normal(values.shape)


def classify(trace: SimTrace, threshold: float = 0.1,
             power_cap: float | None = None, t_end: float = 0.5):
    """Reduce a trace to (stabilized, settling time, power integral)."""
    settling = settling_time(trace, threshold)
    power = power_integral(trace, t_end) if trace.stable else float("inf")
    ok = trace.stable and settling is not None
    if ok and power_cap is not None and power > power_cap:
        ok = False
    return ok, settling, power


# --- sweeps ---------------------------------------------------------------

_WORKER_SCENARIO: SimScenario | None = None


def _sweep_worker_init(scenario: SimScenario):
    global _WORKER_SCENARIO
    _WORKER_SCENARIO = scenario


def _robustness_task(args):
    idx, gamma, omega = args
    base = _WORKER_SCENARIO
    scen = replace(base, gamma_override=gamma, omega_override=omega,
                   seed=base.seed + idx)
    trace = simulate(scen)
    ok, settling, power = classify(trace, t_end=scen.n_steps * scen.control_period)
    return idx, gamma, omega, ok, settling, power


def robustness_sweep(scenario: SimScenario, gamma_list, omega_list,
                     workers: int = 1):
    """Simulate the fixed nominal design against modified plant dynamics.

    Returns rows ``(gamma, omega, stabilized, settling_s, power_j)`` in grid
    order (gamma-major).
    """
    tasks = [(i, float(g), float(w))
             for i, (g, w) in enumerate((g, w) for g in gamma_list
                                        for w in omega_list)]
    results = _run_tasks(_robustness_task, tasks, scenario, workers)
    return [(g, w, ok, settling, power)
            for _, g, w, ok, settling, power in sorted(results)]


def _bap_task(args):
    idx, xi1, xi2, controller = args
    base = _WORKER_SCENARIO
    scen = replace(base, xi0=(xi1, xi2), controller=controller,
                   seed=base.seed + idx)
    trace = simulate(scen)
    t_end = scen.n_steps * scen.control_period
    ok, settling, power = classify(trace, t_end=t_end)
    return idx, xi1, xi2, controller, ok, settling, power


def bap_sweep(scenario: SimScenario, xi1_values, xi2_values,
              controllers=("mpc", "lqg-ewp"), power_cap: float = 5e6,
              workers: int = 1):
    """Grid the initial unstable-mode amplitudes for each controller.

    A point counts as stabilizable when the run settles and its power
    integral stays within the cap.  Returns a dict mapping controller name
    to rows ``(xi1, xi2, stabilizable, settling_s, power_j)``.
    """
    tasks = []
    idx = 0
    for ctrl in controllers:
        for xi1 in xi1_values:
            for xi2 in xi2_values:
                tasks.append((idx, float(xi1), float(xi2), ctrl))
                idx += 1
    results = sorted(_run_tasks(_bap_task, tasks, scenario, workers))
    out = {ctrl: [] for ctrl in controllers}
    for _, xi1, xi2, ctrl, ok, settling, power in results:
        capped_ok = ok and power <= power_cap
        out[ctrl].append((xi1, xi2, capped_ok, settling, power))
    return out


def _run_tasks(fn, tasks, scenario: SimScenario, workers: int):
    if workers <= 1:
        _sweep_worker_init(scenario)
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers,
                             initializer=_sweep_worker_init,
                             initargs=(scenario,)) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
