"""Condensed formulation of the input-constrained MPC problem.

States are eliminated by substituting the dynamics into the quadratic cost,
leaving a box-constrained QP over the stacked input sequence.  Move blocking
is realized as a variable-space compression (the blocked Hessian is
``M' H M`` for the expansion operator ``M``), which keeps the feasible set a
plain box as the first-order solver requires.  The per-sample stage weight
is accumulated once per original sample, so an interval of length ``l``
carries ``l`` copies of the input weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matio
from .models import DiscreteModel
from .riccati import RESIDUAL_RTOL, dare_residual


@dataclass(frozen=True)
class BlockingMap:
    """Partition of the horizon into constant-input intervals."""

    intervals: tuple[int, ...]

    def __post_init__(self):
        intervals = tuple(int(v) for v in self.intervals)
        if not intervals:
            raise ValueError("blocking must contain at least one interval")
        if any(v < 1 for v in intervals):
            raise ValueError("all blocking intervals must have length >= 1")
        object.__setattr__(self, "intervals", intervals)

    @property
    def N(self) -> int:
        return sum(self.intervals)

    @property
    def N_u(self) -> int:
        return len(self.intervals)

    def pattern(self) -> np.ndarray:
        """0/1 matrix of shape (N, N_u) repeating each block over its interval."""
        P = np.zeros((self.N, self.N_u))
        row = 0
        for j, length in enumerate(self.intervals):
            P[row:row + length, j] = 1.0
            row += length
        return P

    def expansion(self, n_u: int) -> np.ndarray:
        """Expansion operator from blocked to full input sequences."""
        return np.kron(self.pattern(), np.eye(n_u))

    def expand(self, u_blocked: np.ndarray, n_u: int) -> np.ndarray:
        u_blocked = np.asarray(u_blocked, dtype=float)
        if u_blocked.shape != (self.N_u * n_u,):
            raise ValueError(
                f"blocked vector must have length {self.N_u * n_u}")
        blocks = u_blocked.reshape(self.N_u, n_u)
        return np.repeat(blocks, self.intervals, axis=0).reshape(-1)


def build_blocking(intervals) -> BlockingMap:
    """Validate interval lengths and build the blocking map."""
    return BlockingMap(intervals=tuple(intervals))


@dataclass(frozen=True)
class CondensedQp:
    """Precomputed data of the condensed box-constrained QP.

    The per-sample cost is ``0.5 u'H_c u + (F x)'u + 0.5 x'S_const x``; only
    the linear term depends on the current state.
    """

    H_c: np.ndarray
    F: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    blocking: BlockingMap
    n_u: int
    n_x: int
    S_const: np.ndarray

    def __post_init__(self):
        if np.any(self.u_min >= self.u_max):
            raise ValueError("bounds must satisfy u_min < u_max elementwise")
        dim = self.blocking.N_u * self.n_u
        if self.H_c.shape != (dim, dim) or self.F.shape != (dim, self.n_x):
            raise ValueError("inconsistent QP dimensions")

    @property
    def N(self) -> int:
        return self.blocking.N

    @property
    def dim(self) -> int:
        return self.blocking.N_u * self.n_u

    def save(self, path) -> None:
        matio.save_matrices(path, {
            "H_c": self.H_c, "F": self.F,
            "u_min": self.u_min.reshape(1, -1),
            "u_max": self.u_max.reshape(1, -1),
            "intervals": np.asarray(self.blocking.intervals, float).reshape(1, -1),
            "n_u": np.array([[float(self.n_u)]]),
            "S_const": self.S_const,
        })

    @classmethod
    def load(cls, path) -> "CondensedQp":
        m = matio.load_matrices(path)
        blocking = build_blocking(int(v) for v in m["intervals"].ravel())
        return cls(H_c=m["H_c"], F=m["F"],
                   u_min=m["u_min"].ravel(), u_max=m["u_max"].ravel(),
                   blocking=blocking, n_u=int(m["n_u"][0, 0]),
                   n_x=m["F"].shape[1], S_const=m["S_const"])


def _stack_prediction(model: DiscreteModel, N: int):
    """Stacked free/forced response operators over the horizon.

    Returns ``(calA, calB)`` with ``x_stack = calA x0 + calB u_stack`` where
    ``x_stack`` holds ``x_0 .. x_N`` and ``u_stack`` holds ``u_0 .. u_{N-1}``.
    """
    n, m = model.n_x, model.n_u
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(model.A @ powers[-1])
    calA = np.vstack(powers)
    calB = np.zeros(((N + 1) * n, N * m))
    impulse = [model.B]                      # A^j B for j = 0..N-1
    for _ in range(N - 1):
        impulse.append(model.A @ impulse[-1])
    for i in range(1, N + 1):
        for j in range(i):
            calB[i * n:(i + 1) * n, j * m:(j + 1) * m] = impulse[i - 1 - j]
    return calA, calB


def _weight_stack(Q_C, P, calX, N, n):
    """Apply blockdiag(Q_C, ..., Q_C, P) to a stacked operator."""
    out = np.empty_like(calX)
    for i in range(N):
        out[i * n:(i + 1) * n] = Q_C @ calX[i * n:(i + 1) * n]
    out[N * n:] = P @ calX[N * n:]
    return out


def condense(model: DiscreteModel, Q_C, R_C, P, blocking: BlockingMap,
             u_min, u_max) -> CondensedQp:
    """Assemble the condensed QP for a terminal-cost MPC problem.

    ``P`` must be the verified Riccati solution for the same weights; the
    residual certificate is re-checked here.  Bounds may be scalars or
    per-input vectors and are replicated over every blocked entry.
    """
    n, m = model.n_x, model.n_u
    Q_C = np.atleast_2d(np.asarray(Q_C, dtype=float))
    R_C = np.atleast_2d(np.asarray(R_C, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if Q_C.shape != (n, n) or P.shape != (n, n) or R_C.shape != (m, m):
        raise ValueError("weight dimensions do not match the model")
    res = dare_residual(model.A, model.B, Q_C, R_C, P)
    if res > RESIDUAL_RTOL * max(np.linalg.norm(P, 2), 1e-300):
        raise ValueError(
            f"terminal cost fails the Riccati residual check ({res:.3e})")

    N = blocking.N
    calA, calB = _stack_prediction(model, N)
    # compress columns per blocking interval: calB @ kron(pattern, I_m)
    starts = np.cumsum([0, *blocking.intervals[:-1]])
    rows = calB.shape[0]
    calBM = (np.add.reduceat(calB.reshape(rows, N, m), starts, axis=1)
             .reshape(rows, blocking.N_u * m))
    QBM = _weight_stack(Q_C, P, calBM, N, n)
    QA = _weight_stack(Q_C, P, calA, N, n)

    R_blocked = np.kron(np.diag([float(l) for l in blocking.intervals]), R_C)
    H = calBM.T @ QBM + R_blocked
    H = 0.5 * (H + H.T)
    F = calBM.T @ QA
    S_const = calA.T @ QA
    S_const = 0.5 * (S_const + S_const.T)

    lo = np.broadcast_to(np.asarray(u_min, dtype=float), (m,)).astype(float)
    hi = np.broadcast_to(np.asarray(u_max, dtype=float), (m,)).astype(float)
    return CondensedQp(H_c=H, F=F,
                       u_min=np.tile(lo, blocking.N_u),
                       u_max=np.tile(hi, blocking.N_u),
                       blocking=blocking, n_u=m, n_x=n, S_const=S_const)


def linear_term(qp: CondensedQp, x_hat) -> np.ndarray:
    """Per-sample linear cost term ``f_c = F x_hat``."""
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (qp.n_x,):
        raise ValueError(f"state must have dimension {qp.n_x}")
    return qp.F @ x_hat


def mpc_cost(qp: CondensedQp, u_blocked, x_hat) -> float:
    """Full cost of a blocked input sequence, constant term included.

    The constant term matters when reporting cost gaps between an iterate and
    the optimum; it cancels in their difference only if both use it.
    """
    u = np.asarray(u_blocked, dtype=float)
    x = np.asarray(x_hat, dtype=float)
    if u.shape != (qp.dim,):
        raise ValueError(f"input sequence must have dimension {qp.dim}")
    return float(0.5 * u @ qp.H_c @ u + (qp.F @ x) @ u + 0.5 * x @ qp.S_const @ x)
