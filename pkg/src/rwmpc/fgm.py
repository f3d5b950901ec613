"""Preconditioned primal fast gradient method for box-constrained QPs.

The solver runs a fixed iteration budget with no early exit, so its latency
is deterministic.  Preconditioning uses a diagonal matrix that dominates the
Hessian in the Loewner order (certified numerically at plan construction),
which normalizes the generalized Lipschitz constant to at most one and lets
the momentum coefficient be the constant strongly-convex optimum.  The
projection is an elementwise clip and is always the last operation applied
to the returned iterate, so results are feasible exactly.

Arithmetic width is selectable: ``wide`` runs the whole loop in float64,
``narrow`` in float32 (mimicking a reduced-precision embedded target).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condensed import CondensedQp


class PlanError(ValueError):
    """Raised when a solver plan cannot be certified for a QP."""


def precondition(H_c: np.ndarray, mode: str = "row-sum") -> np.ndarray:
    """Diagonal preconditioner dominating ``H_c``; returned as a vector.

    ``row-sum`` uses absolute row sums (Gershgorin guarantees domination),
    ``scalar`` uses the largest eigenvalue uniformly.  The domination
    certificate ``lambda_max(L^-1/2 H L^-1/2) <= 1`` is verified numerically.
    """
    H = np.asarray(H_c, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hessian must be square")
    if not np.allclose(H, H.T, atol=1e-10 * (1.0 + np.abs(H).max())):
        raise PlanError("Hessian must be symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (H + H.T))
    if eigs[0] <= 0.0:
        raise PlanError(f"Hessian is not positive definite (lambda_min={eigs[0]:.3e})")
    if mode == "row-sum":
        L = np.abs(H).sum(axis=1)
    elif mode == "scalar":
        L = np.full(H.shape[0], eigs[-1])
    else:
        raise ValueError(f"unknown preconditioner mode {mode!r}")
    if np.any(L <= 0.0):
        raise PlanError("preconditioner has a nonpositive diagonal entry")
    scaled_max = _preconditioned_extremes(H, L)[1]
    if scaled_max > 1.0 + 1e-9:
        raise PlanError(
            f"preconditioner fails the domination certificate "
            f"(lambda_max = {scaled_max:.12f})")
    return L


def _preconditioned_extremes(H: np.ndarray, L: np.ndarray):
    d = 1.0 / np.sqrt(L)
    eigs = np.linalg.eigvalsh(0.5 * ((H * d).T * d + (H * d[:, None]) * d))
    return float(eigs[0]), float(eigs[-1])


def beta_sequence(H_c: np.ndarray, L: np.ndarray, i_max: int) -> np.ndarray:
    """Constant momentum sequence for a strongly convex preconditioned QP.

    With the preconditioned spectrum inside ``[mu, 1]`` the optimal constant
    coefficient is ``(1 - sqrt(mu)) / (1 + sqrt(mu))``.
    """
    if i_max < 1:
        raise ValueError("iteration budget must be >= 1")
    mu = _preconditioned_extremes(np.asarray(H_c, float), np.asarray(L, float))[0]
    if mu <= 0.0:
        raise PlanError(f"preconditioned strong convexity is nonpositive ({mu:.3e})")
    beta = (1.0 - np.sqrt(mu)) / (1.0 + np.sqrt(mu))
    return np.full(i_max, beta)


def prox_box(x, u_min, u_max) -> np.ndarray:
    """Projection onto the box: elementwise clip, exact."""
    lo = np.asarray(u_min, dtype=float)
    hi = np.asarray(u_max, dtype=float)
    if np.any(lo > hi):
        raise ValueError("box bounds are not ordered")
    return np.clip(np.asarray(x, dtype=float), lo, hi)


@dataclass(frozen=True)
class FgmPlan:
    """Precomputed solver data certified for one Hessian.

    ``restart_rule`` selects what the adaptive restart assigns: ``"paper"``
    rolls both the iterate and the momentum point back to the previous
    iterate; ``"momentum"`` keeps the iterate and only zeroes the momentum.
    """

    L: np.ndarray
    L_inv: np.ndarray
    beta: np.ndarray
    i_max: int
    restart: bool = True
    restart_rule: str = "paper"
    width: str = "wide"
    mu: float = 0.0
    h_fingerprint: tuple = (0, 0.0, 0.0)

    def __post_init__(self):
        if self.width not in ("wide", "narrow"):
            raise ValueError("width must be 'wide' or 'narrow'")
        if self.restart_rule not in ("paper", "momentum"):
            raise ValueError("restart_rule must be 'paper' or 'momentum'")
        if self.beta.shape != (self.i_max,):
            raise ValueError("beta sequence length must equal the budget")
        if np.any(self.beta < 0.0) or np.any(self.beta >= 1.0):
            raise ValueError("momentum coefficients must lie in [0, 1)")


def make_plan(qp: CondensedQp, i_max: int, width: str = "wide",
              restart: bool = True, restart_rule: str = "paper",
              preconditioner: str = "row-sum") -> FgmPlan:
    """Build and certify a solver plan for a condensed QP."""
    L = precondition(qp.H_c, preconditioner)
    beta = beta_sequence(qp.H_c, L, i_max)
    mu = _preconditioned_extremes(qp.H_c, L)[0]
    return FgmPlan(L=L, L_inv=1.0 / L, beta=beta, i_max=int(i_max),
                   restart=restart, restart_rule=restart_rule, width=width,
                   mu=mu, h_fingerprint=_fingerprint(qp.H_c))


def _fingerprint(H: np.ndarray) -> tuple:
    return (H.shape[0], float(np.trace(H)), float(np.linalg.norm(H)))


@dataclass(frozen=True)
class FgmResult:
    u_opt: np.ndarray
    iterations: int
    restarts: int
    grad_map_norm: float


def fgm_solve(qp: CondensedQp, f_c: np.ndarray, plan: FgmPlan,
              warm_start: np.ndarray | None = None,
              record: list | None = None) -> FgmResult:
    """Run exactly ``plan.i_max`` accelerated projected-gradient iterations.

    Cold start is the zero vector (projected onto the box).  When ``record``
    is a list, a ``(iteration, cost, grad_map_norm, restarted)`` tuple is
    appended per iteration; recording adds work and is meant for diagnostics
    only.  Returns the final iterate, which is feasible exactly.
    """
    dim = qp.dim
    fp = _fingerprint(qp.H_c)
    if (fp[0] != plan.h_fingerprint[0]
            or abs(fp[1] - plan.h_fingerprint[1]) > 1e-9 * (1.0 + abs(fp[1]))
            or abs(fp[2] - plan.h_fingerprint[2]) > 1e-9 * (1.0 + abs(fp[2]))):
        raise PlanError("plan was certified for a different Hessian")
    f64 = np.asarray(f_c, dtype=float)
    if f64.shape != (dim,):
        raise ValueError(f"linear term must have dimension {dim}")
    if warm_start is None:
        start = np.zeros(dim)
    else:
        start = np.asarray(warm_start, dtype=float)
        if start.shape != (dim,):
            raise ValueError(f"warm start must have dimension {dim}")

    dtype = np.float64 if plan.width == "wide" else np.float32
    H = qp.H_c.astype(dtype, copy=True)
    f = f64.astype(dtype)
    lo = qp.u_min.astype(dtype)
    hi = qp.u_max.astype(dtype)
    l_inv = plan.L_inv.astype(dtype)
    beta = plan.beta.astype(dtype)

    u_prev = np.clip(start.astype(dtype), lo, hi)
    v = u_prev.copy()
    u = np.empty(dim, dtype=dtype)
    g = np.empty(dim, dtype=dtype)
    diff = np.empty(dim, dtype=dtype)
    restarts = 0

    for i in range(plan.i_max):
        np.dot(H, v, out=g)
        g += f
        g *= l_inv
        np.subtract(v, g, out=g)                 # candidate point
        np.clip(g, lo, hi, out=u)
        np.subtract(u, u_prev, out=diff)
        restarted = False
        if plan.restart and float(np.dot(v, diff) - np.dot(u, diff)) > 0.0:
            restarted = True
            restarts += 1
            if plan.restart_rule == "paper":
                u[:] = u_prev
                v[:] = u_prev
            else:
                v[:] = u
        else:
            np.multiply(diff, beta[i], out=v)
            v += u
        if record is not None:
            uf = u.astype(float)
            cost = float(0.5 * uf @ qp.H_c @ uf + f64 @ uf)
            record.append((i + 1, cost, _grad_map_norm(qp, f64, plan, uf),
                           restarted))
        u_prev, u = u, u_prev

    u_final = np.clip(u_prev.astype(float), qp.u_min, qp.u_max)
    if not np.all(np.isfinite(u_final)):
        raise FloatingPointError(
            "solver iterate is not finite; check conditioning and width")
    return FgmResult(u_opt=u_final, iterations=plan.i_max, restarts=restarts,
                     grad_map_norm=_grad_map_norm(qp, f64, plan, u_final))


def _grad_map_norm(qp: CondensedQp, f_c: np.ndarray, plan: FgmPlan,
                   u: np.ndarray) -> float:
    """Max-norm of the preconditioned projected-gradient displacement."""
    step = np.clip(u - plan.L_inv * (qp.H_c @ u + f_c), qp.u_min, qp.u_max)
    return float(np.abs(step - u).max(initial=0.0))


def mse(u_iter, u_star, u_min, u_max) -> float:
    """Root-mean-square of bound-normalized componentwise errors."""
    u_iter = np.asarray(u_iter, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    span = np.asarray(u_max, dtype=float) - np.asarray(u_min, dtype=float)
    if u_iter.shape != u_star.shape or u_iter.shape != span.shape:
        raise ValueError("mismatched dimensions")
    if np.any(span <= 0.0):
        raise ValueError("bound spans must be positive")
    return float(np.sqrt(np.mean(((u_iter - u_star) / span) ** 2)))


def write_iteration_csv(path, rows) -> None:
    """Dump recorded per-iteration diagnostics as CSV."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iteration,cost,grad_map_norm,restart\n")
        for it, cost, norm, restarted in rows:
            fh.write(f"{it},{cost:.17g},{norm:.17g},{int(restarted)}\n")
