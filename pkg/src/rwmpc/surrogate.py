"""Seeded synthetic plant with one rotating unstable mode, a stable tail,
and in-vessel coil current dynamics.

State layout: ``[xi_1, xi_2, xi_s (n_stable), I_coil (27)]``.  The two mode
amplitudes are driven by the coil currents through a first-harmonic
(cos/sin of coil angle) pattern; the coil currents follow RL dynamics driven
by the supply voltages; the sensor outputs read the mode amplitudes through
the same harmonic pattern at the sensor angles, plus small seeded
contributions of the stable tail.  Construction is a pure function of the
configuration: the same seed yields bit-identical matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ContinuousModel

N_COIL_ROWS = 3
N_COIL_SECTORS = 9
N_COILS = N_COIL_ROWS * N_COIL_SECTORS

DEFAULT_SENSOR_ANGLES_DEG = (39.0, 101.0, 159.0, 221.0, 279.0, 341.0)


def coil_angles_deg() -> np.ndarray:
    """Toroidal angles of the 27 coils: 3 rows of 9 sectors at 40*(i-1) deg."""
    sector = 40.0 * np.arange(N_COIL_SECTORS)
    return np.tile(sector, N_COIL_ROWS)


def harmonic_basis(angles_deg) -> np.ndarray:
    """Rows ``(cos phi_i, sin phi_i)`` for a first-harmonic pattern."""
    phi = np.deg2rad(np.asarray(angles_deg, dtype=float))
    return np.column_stack([np.cos(phi), np.sin(phi)])


@dataclass(frozen=True)
class SurrogateConfig:
    """Parameters of the synthetic plant.

    ``n_stable`` sets the stable-tail size; the total model order is
    ``2 + n_stable + 27``.  Stable decay rates are drawn log-uniformly from
    ``[stable_decay_min, stable_decay_max]`` (1/s).  ``row_weights`` scales
    the coupling of the three coil rows (upper, equatorial, lower).
    """

    gamma: float = 19.0
    omega: float = 0.26
    n_stable: int = 48
    stable_decay_min: float = 30.0
    stable_decay_max: float = 3000.0
    coil_time_constant: float = 20e-3
    coil_resistance: float = 0.1
    mode_coupling: float = 6e-3
    stable_coupling: float = 2e-3
    stable_sensor_coupling: float = 0.05
    row_weights: tuple[float, float, float] = (0.7, 1.0, 0.7)
    sensor_angles_deg: tuple[float, ...] = DEFAULT_SENSOR_ANGLES_DEG
    seed: int = 20201

    def __post_init__(self):
        for name in ("gamma", "omega", "mode_coupling", "stable_coupling",
                     "stable_sensor_coupling", "coil_resistance"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not np.isfinite(self.coil_time_constant) or self.coil_time_constant <= 0:
            raise ValueError("coil_time_constant must be finite and > 0")
        if self.coil_resistance <= 0:
            raise ValueError("coil_resistance must be > 0")
        if self.n_stable < 0:
            raise ValueError("n_stable must be >= 0")
        if self.n_stable > 0 and not (0 < self.stable_decay_min < self.stable_decay_max):
            raise ValueError("stable decay range must satisfy 0 < min < max")
        if len(self.row_weights) != N_COIL_ROWS:
            raise ValueError(f"row_weights must have {N_COIL_ROWS} entries")
        angles = np.asarray(self.sensor_angles_deg, dtype=float)
        if np.any(angles < 0.0) or np.any(angles >= 360.0):
            raise ValueError("sensor angles must lie in [0, 360) degrees")

    @property
    def n_x(self) -> int:
        return 2 + self.n_stable + N_COILS


def build_surrogate(cfg: SurrogateConfig) -> ContinuousModel:
    """Assemble the plant matrices for a configuration.

    The dynamics matrix is block upper triangular over
    ``[modes, stable tail, coil currents]``, so the unstable eigenvalue pair
    is exactly ``gamma +/- i*omega`` and the unstable invariant subspace is
    the span of the two leading coordinates.
    """
    rng = np.random.default_rng(cfg.seed)
    n_s = cfg.n_stable
    n = cfg.n_x
    i_mode = slice(0, 2)
    i_stab = slice(2, 2 + n_s)
    i_coil = slice(2 + n_s, n)

    A = np.zeros((n, n))
    A[0, 0] = cfg.gamma
    A[0, 1] = cfg.omega
    A[1, 0] = -cfg.omega
    A[1, 1] = cfg.gamma

    # coil geometry: first-harmonic coupling into the mode pair
    phi_coil = coil_angles_deg()
    basis = harmonic_basis(phi_coil)                      # (27, 2)
    weights = np.repeat(np.asarray(cfg.row_weights, dtype=float), N_COIL_SECTORS)
    A[i_mode, i_coil] = cfg.mode_coupling * (basis * weights[:, None]).T

    if n_s > 0:
        decay = np.exp(rng.uniform(np.log(cfg.stable_decay_min),
                                   np.log(cfg.stable_decay_max), size=n_s))
        decay.sort()
        A[i_stab, i_stab] = np.diag(-decay)
        tail_scale = cfg.stable_coupling / (1.0 + np.arange(n_s))
        A[i_stab, i_coil] = rng.standard_normal((n_s, N_COILS)) * tail_scale[:, None]

    tau = cfg.coil_time_constant
    A[i_coil, i_coil] = -np.eye(N_COILS) / tau

    # supply voltage drives the RL coil circuits only
    B = np.zeros((n, N_COILS))
    B[i_coil, :] = np.eye(N_COILS) / (cfg.coil_resistance * tau)

    n_sens = len(cfg.sensor_angles_deg)
    C = np.zeros((n_sens, n))
    C[:, i_mode] = harmonic_basis(cfg.sensor_angles_deg)
    if n_s > 0:
        sens_scale = cfg.stable_sensor_coupling / (1.0 + np.arange(n_s))
        C[:, i_stab] = rng.standard_normal((n_sens, n_s)) * sens_scale[None, :]

    C_aux = np.zeros((N_COILS, n))
    C_aux[:, i_coil] = np.eye(N_COILS)
    return ContinuousModel(A=A, B=B, C=C, C_aux=C_aux)
