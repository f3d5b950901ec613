"""Steady-state LQ and Kalman design with residual-certified Riccati solutions.

The discrete algebraic Riccati equation is solved by the structure-preserving
doubling iteration, which converges quadratically for stabilizable/detectable
problems.  Every solution is verified against the equation residual before it
is returned, so downstream consumers can rely on the certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matio
from .models import DiscreteModel

RESIDUAL_RTOL = 1e-8
EIG_TOL = 1e-9


class RiccatiError(RuntimeError):
    """Raised when the doubling iteration fails or its output is uncertified."""


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _check_psd(M: np.ndarray, name: str) -> None:
    M = np.asarray(M, dtype=float)
    if not np.allclose(M, M.T, atol=1e-12 * (1.0 + np.abs(M).max())):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(_sym(M))) < -1e-10 * (1.0 + np.abs(M).max()):
        raise ValueError(f"{name} must be positive semidefinite")


def _check_pd(M: np.ndarray, name: str) -> None:
    _check_psd(M, name)
    if np.min(np.linalg.eigvalsh(_sym(np.asarray(M, dtype=float)))) <= 0.0:
        raise ValueError(f"{name} must be positive definite")


def _pbh_deficient_modes(A: np.ndarray, B: np.ndarray) -> list[complex]:
    """Eigenvalues on or outside the unit circle that B cannot reach."""
    n = A.shape[0]
    scale = np.linalg.norm(A) + np.linalg.norm(B) + 1.0
    bad = []
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - EIG_TOL:
            continue
        pencil = np.hstack([A - lam * np.eye(n), B])
        if np.linalg.svd(pencil, compute_uv=False)[-1] < EIG_TOL * scale:
            bad.append(complex(lam))
    return bad


def dare_residual(A, B, Q, R, P) -> float:
    """Spectral norm of the Riccati equation residual at ``P``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    BtPB = B.T @ P @ B
    gain_term = A.T @ P @ B @ np.linalg.solve(R + BtPB, B.T @ P @ A)
    res = A.T @ P @ A - gain_term + Q - P
    return float(np.linalg.norm(res, 2))


def solve_dare(A, B, Q, R, max_doublings: int = 100) -> np.ndarray:
    """Stabilizing solution of ``P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q``.

    Structure-preserving doubling iteration; raises :class:`RiccatiError`
    with the achieved residual if the certificate ``res <= 1e-8 * ||P||``
    cannot be met.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n):
        raise ValueError("inconsistent matrix dimensions")
    _check_pd(R, "R")
    _check_psd(Q, "Q")
    bad = _pbh_deficient_modes(A, B)
    if bad:
        raise ValueError(f"(A, B) is not stabilizable: unreachable modes {bad}")

    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Hk = Q.copy()
    eye = np.eye(n)
    for _ in range(max_doublings):
        W = eye + Gk @ Hk
        try:
            Winv_A = np.linalg.solve(W, Ak)
            Winv_G = np.linalg.solve(W, Gk)
        except np.linalg.LinAlgError as exc:
            raise RiccatiError(f"doubling iteration broke down: {exc}") from exc
        H_next = _sym(Hk + Ak.T @ Hk @ Winv_A)
        G_next = _sym(Gk + Ak @ Winv_G @ Ak.T)
        A_next = Ak @ Winv_A
        if not np.all(np.isfinite(H_next)):
            raise RiccatiError("doubling iteration diverged")
        delta = np.linalg.norm(H_next - Hk, "fro")
        Ak, Gk, Hk = A_next, G_next, H_next
        if delta <= 1e-14 * max(1.0, np.linalg.norm(Hk, "fro")):
            break

    P = _sym(Hk)
    res = dare_residual(A, B, Q, R, P)
    norm_p = np.linalg.norm(P, 2)
    if not np.isfinite(res) or res > RESIDUAL_RTOL * max(norm_p, 1e-300):
        raise RiccatiError(
            f"Riccati residual {res:.3e} exceeds {RESIDUAL_RTOL:.0e} * ||P|| "
            f"= {RESIDUAL_RTOL * norm_p:.3e}")
    return P


def lq_gain(P, A, B, R) -> np.ndarray:
    """State-feedback gain ``K = -(R + B'PB)^-1 B'PA``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    inner = np.asarray(R, dtype=float) + B.T @ P @ B
    try:
        return -np.linalg.solve(inner, B.T @ P @ np.asarray(A, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"R + B'PB is singular: {exc}") from exc


def kalman_gain(A, C, Q_K, R_K) -> np.ndarray:
    """Steady-state gain of the current estimator ``M = S C'(C S C' + R)^-1``.

    ``S`` is the prediction-error covariance, obtained from the dual Riccati
    equation on ``(A', C')``.  The closed estimator ``(I - M C) A`` is
    guaranteed stable by the stabilizing property of the dual solution.
    """
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    bad = _pbh_deficient_modes(A.T, C.T)
    if bad:
        raise ValueError(f"(A, C) is not detectable: unobservable modes {bad}")
    S = solve_dare(A.T, C.T, Q_K, R_K)
    M = np.linalg.solve(C @ S @ C.T + np.asarray(R_K, dtype=float), C @ S).T
    est_radius = np.max(np.abs(np.linalg.eigvals((np.eye(A.shape[0]) - M @ C) @ A)))
    if est_radius >= 1.0:
        raise RiccatiError(f"estimator spectral radius {est_radius:.6f} >= 1")
    return M


@dataclass(frozen=True)
class LqDesign:
    """Terminal cost and feedback gain pair with verified certificates."""

    P: np.ndarray
    K_LQ: np.ndarray
    Q_C: np.ndarray
    R_C: np.ndarray

    @classmethod
    def design(cls, model: DiscreteModel, Q_C, R_C) -> "LqDesign":
        P = solve_dare(model.A, model.B, Q_C, R_C)
        K = lq_gain(P, model.A, model.B, R_C)
        radius = np.max(np.abs(np.linalg.eigvals(model.A + model.B @ K)))
        if radius >= 1.0:
            raise RiccatiError(f"closed-loop spectral radius {radius:.6f} >= 1")
        return cls(P=P, K_LQ=K, Q_C=np.asarray(Q_C, float), R_C=np.asarray(R_C, float))

    def save(self, path) -> None:
        matio.save_matrices(path, {"P": self.P, "K_LQ": self.K_LQ,
                                   "Q_C": self.Q_C, "R_C": self.R_C})

    @classmethod
    def load(cls, path) -> "LqDesign":
        m = matio.load_matrices(path)
        return cls(P=m["P"], K_LQ=m["K_LQ"], Q_C=m["Q_C"], R_C=m["R_C"])


@dataclass(frozen=True)
class KalmanDesign:
    """Steady-state estimator gain with its tuning covariances."""

    M_K: np.ndarray
    Q_K: np.ndarray
    R_K: np.ndarray

    @classmethod
    def design(cls, model: DiscreteModel, Q_K, R_K) -> "KalmanDesign":
        _check_pd(np.asarray(Q_K, float), "Q_K")
        _check_pd(np.asarray(R_K, float), "R_K")
        M = kalman_gain(model.A, model.C, Q_K, R_K)
        return cls(M_K=M, Q_K=np.asarray(Q_K, float), R_K=np.asarray(R_K, float))

    def save(self, path) -> None:
        matio.save_matrices(path, {"M_K": self.M_K, "Q_K": self.Q_K,
                                   "R_K": self.R_K})

    @classmethod
    def load(cls, path) -> "KalmanDesign":
        m = matio.load_matrices(path)
        return cls(M_K=m["M_K"], Q_K=m["Q_K"], R_K=m["R_K"])


@dataclass(frozen=True)
class EstimatorState:
    """Current estimate ``x(k|k)`` and one-step prediction ``x(k|k-1)``."""

    x_hat: np.ndarray
    x_pred: np.ndarray

    @classmethod
    def zero(cls, n_x: int) -> "EstimatorState":
        return cls(x_hat=np.zeros(n_x), x_pred=np.zeros(n_x))


def kf_step(est: EstimatorState, u_prev, y, model: DiscreteModel,
            M_K: np.ndarray) -> EstimatorState:
    """One predict/correct cycle of the steady-state filter.

    Predict with the previously applied input, then correct the prediction
    with the measurement innovation.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    y = np.asarray(y, dtype=float)
    if u_prev.shape != (model.n_u,) or y.shape != (model.n_y,):
        raise ValueError("input/measurement dimensions do not match the model")
    x_pred = model.A @ est.x_hat + model.B @ u_prev
    x_hat = x_pred + M_K @ (y - model.C @ x_pred)
    return EstimatorState(x_hat=x_hat, x_pred=x_pred)


def lqg_control(x_hat, K_LQ, ewp: bool, bounds=None):
    """Feedback law ``u = K x_hat`` with optional wind-up protection.

    Returns ``(u_command, u_for_estimator)``.  With ``ewp`` the estimator is
    fed the saturated signal actually applied downstream; without it, the raw
    command.
    """
    u = np.asarray(K_LQ) @ np.asarray(x_hat, dtype=float)
    if not ewp:
        return u, u
    if bounds is None:
        raise ValueError("wind-up protection requires finite bounds")
    lo, hi = bounds
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("wind-up protection requires finite bounds")
    return u, np.clip(u, lo, hi)
