"""Dense LTI state-space containers and elementary transforms.

Models are immutable value objects; every operation returns a new model.
The feedthrough ``D`` defaults to zero and is only nonzero for all-pass
blocks such as the rational delay approximation.  ``C_aux`` is an optional
secondary output map (used for coil-current monitoring) that is carried
through discretization and composition but never enters control design.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy.linalg import expm

from . import matio


def _as_matrix(value, name: str) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} must contain only finite values")
    mat = mat.copy()
    mat.setflags(write=False)
    return mat


def _check_dims(A, B, C, D, C_aux):
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
    if C.shape[1] != n:
        raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
    if D.shape != (C.shape[0], B.shape[1]):
        raise ValueError(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
    if C_aux is not None and C_aux.shape[1] != n:
        raise ValueError(f"C_aux has {C_aux.shape[1]} columns, expected {n}")


@dataclass(frozen=True)
class ContinuousModel:
    """Continuous-time LTI system dx/dt = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    C_aux: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D") if self.D is not None else _zeros_ro(C.shape[0], B.shape[1])
        C_aux = _as_matrix(self.C_aux, "C_aux") if self.C_aux is not None else None
        _check_dims(A, B, C, D, C_aux)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "C_aux", C_aux)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def save(self, path) -> None:
        mats = {"A": self.A, "B": self.B, "C": self.C, "D": self.D}
        if self.C_aux is not None:
            mats["C_aux"] = self.C_aux
        matio.save_matrices(path, mats)

    @classmethod
    def load(cls, path) -> "ContinuousModel":
        mats = matio.load_matrices(path)
        return cls(A=mats["A"], B=mats["B"], C=mats["C"],
                   D=mats.get("D"), C_aux=mats.get("C_aux"))


@dataclass(frozen=True)
class DiscreteModel:
    """Discrete-time LTI system x+ = A x + B u, y = C x + D u at period T_s."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    T_s: float
    D: np.ndarray | None = None
    C_aux: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.T_s) or self.T_s <= 0.0:
            raise ValueError("T_s must be finite and > 0")
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D") if self.D is not None else _zeros_ro(C.shape[0], B.shape[1])
        C_aux = _as_matrix(self.C_aux, "C_aux") if self.C_aux is not None else None
        _check_dims(A, B, C, D, C_aux)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "C_aux", C_aux)
        object.__setattr__(self, "T_s", float(self.T_s))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def save(self, path) -> None:
        mats = {"T_s": np.array([[self.T_s]]), "A": self.A, "B": self.B,
                "C": self.C, "D": self.D}
        if self.C_aux is not None:
            mats["C_aux"] = self.C_aux
        matio.save_matrices(path, mats)

    @classmethod
    def load(cls, path) -> "DiscreteModel":
        mats = matio.load_matrices(path)
        return cls(A=mats["A"], B=mats["B"], C=mats["C"],
                   T_s=float(mats["T_s"][0, 0]),
                   D=mats.get("D"), C_aux=mats.get("C_aux"))


def _zeros_ro(rows: int, cols: int) -> np.ndarray:
    z = np.zeros((rows, cols))
    z.setflags(write=False)
    return z


def zoh_discretize(model: ContinuousModel, t_s: float) -> DiscreteModel:
    """Exact zero-order-hold discretization via the augmented matrix exponential.

    ``A_d = exp(A*T_s)`` and ``B_d = (int_0^Ts exp(A*tau) dtau) B`` are read
    off one ``expm`` of the block matrix ``[[A, B], [0, 0]] * T_s``.
    """
    if not np.isfinite(t_s) or t_s <= 0.0:
        raise ValueError("sampling time must be finite and > 0")
    n, m = model.n_x, model.n_u
    block = np.zeros((n + m, n + m))
    block[:n, :n] = model.A * t_s
    block[:n, n:] = model.B * t_s
    exp_block = expm(block)
    A_d = exp_block[:n, :n]
    B_d = exp_block[:n, n:]
    if not (np.all(np.isfinite(A_d)) and np.all(np.isfinite(B_d))):
        raise OverflowError("matrix exponential overflowed; A*T_s is too large")
    return DiscreteModel(A=A_d, B=B_d, C=model.C, T_s=t_s, D=model.D,
                         C_aux=model.C_aux)


def freq_response(model: ContinuousModel, omega_grid) -> np.ndarray:
    """Evaluate ``C (jwI - A)^-1 B + D`` on a frequency grid.

    Returns a complex array of shape ``(len(omega_grid), n_y, n_u)``.
    Frequencies closer than 1e-12 to an eigenvalue of ``A`` (so the resolvent
    is singular) are rejected with a list of the offending grid points.
    """
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    eigs = np.linalg.eigvals(model.A)
    bad = [w for w in omega_grid if np.min(np.abs(1j * w - eigs)) < 1e-12]
    if bad:
        raise ValueError(f"resolvent singular at omega = {bad}")
    n = model.n_x
    out = np.empty((omega_grid.size, model.n_y, model.n_u), dtype=complex)
    eye = np.eye(n)
    for k, w in enumerate(omega_grid):
        out[k] = model.C @ np.linalg.solve(1j * w * eye - model.A, model.B) + model.D
    return out


def first_order_lag(tau: float, gain: float = 1.0) -> ContinuousModel:
    """Single-state low-pass ``gain / (tau*s + 1)``."""
    if not np.isfinite(tau) or tau <= 0.0:
        raise ValueError("lag time constant must be finite and > 0")
    return ContinuousModel(A=[[-1.0 / tau]], B=[[gain / tau]], C=[[1.0]])


def pade_delay(tau: float, order: int = 2) -> ContinuousModel:
    """Rational all-pass approximation of a pure transport delay of ``tau`` s.

    Diagonal (order, order) approximant; the numerator is the denominator
    with ``s -> -s``, so the magnitude response is exactly 1 at every
    frequency.  Realized in controller canonical form with unit feedthrough.
    """
    if not np.isfinite(tau) or tau <= 0.0:
        raise ValueError("delay must be finite and > 0")
    if order < 1:
        raise ValueError("order must be >= 1")
    # c_k = (2n-k)! n! / ((2n)! k! (n-k)!), coefficient of (s*tau)^k
    n = order
    c = np.array([factorial(2 * n - k) * factorial(n)
                  / (factorial(2 * n) * factorial(k) * factorial(n - k))
                  for k in range(n + 1)], dtype=float)
    den = c * tau ** np.arange(n + 1)             # ascending powers of s
    num = den * (-1.0) ** np.arange(n + 1)
    # normalize to monic denominator, highest power first
    den_hi = den[::-1] / den[-1]
    num_hi = num[::-1] / den[-1]
    d_feed = num_hi[0]
    # strictly proper remainder after removing the feedthrough
    rem = num_hi[1:] - d_feed * den_hi[1:]
    A = np.zeros((n, n))
    A[0, :] = -den_hi[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n)
    return ContinuousModel(A=A, B=B, C=C, D=[[d_feed]])


def series_compose(first: ContinuousModel, second: ContinuousModel) -> ContinuousModel:
    """Cascade two systems: input -> ``first`` -> ``second`` -> output.

    The composite state is ``[x_first; x_second]``.  Auxiliary outputs of the
    second system are carried through; the first system's auxiliary outputs
    are dropped (they monitor internal signals that no longer exist).
    """
    if second.n_u != first.n_y:
        raise ValueError(
            f"cannot compose: first has {first.n_y} outputs, "
            f"second expects {second.n_u} inputs")
    n1, n2 = first.n_x, second.n_x
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = first.A
    A[n1:, n1:] = second.A
    A[n1:, :n1] = second.B @ first.C
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    C_aux = None
    if second.C_aux is not None:
        C_aux = np.hstack([np.zeros((second.C_aux.shape[0], n1)), second.C_aux])
    return ContinuousModel(A=A, B=B, C=C, D=D, C_aux=C_aux)


def replicate_channels(model: ContinuousModel, n_channels: int) -> ContinuousModel:
    """Block-diagonal copy of a SISO system across ``n_channels`` channels."""
    if model.n_u != 1 or model.n_y != 1:
        raise ValueError("replicate_channels expects a SISO model")
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    eye = np.eye(n_channels)
    return ContinuousModel(A=np.kron(eye, model.A), B=np.kron(eye, model.B),
                           C=np.kron(eye, model.C), D=np.kron(eye, model.D))


def actuator_model(n_channels: int, lag_tau: float, delay_tau: float,
                   pade_order: int = 2) -> ContinuousModel:
    """Power-supply model per channel: first-order lag in series with a
    rational delay, replicated block-diagonally over all channels."""
    chain = series_compose(first_order_lag(lag_tau), pade_delay(delay_tau, pade_order))
    return replicate_channels(chain, n_channels)
