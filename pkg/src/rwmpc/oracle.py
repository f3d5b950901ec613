"""High-accuracy reference solver for box-constrained QPs.

Primal active-set iteration: solve the equality-constrained problem on the
free variables, clamp any bound violators, then release clamped components
whose multiplier has the wrong sign; repeat until the KKT conditions hold.
The returned active set makes the solution directly comparable with an
exhaustive per-component enumeration on small problems.  A long projected
gradient run serves as a fallback if the active-set exchange ever cycles.

The oracle always computes in float64 and is not intended for use inside a
real-time loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condensed import CondensedQp

KKT_RTOL = 1e-10


@dataclass(frozen=True)
class OracleSolution:
    """Minimizer with per-component bound status and KKT certificate.

    ``active_set`` holds -1 (at lower bound), 0 (free) or +1 (at upper
    bound) per component.
    """

    u_star: np.ndarray
    active_set: np.ndarray
    kkt_residual: float


def kkt_check(qp: CondensedQp, f_c: np.ndarray, u: np.ndarray) -> float:
    """Max-norm of the bound-projected gradient at a feasible point.

    Components at a bound only contribute the gradient part pointing out of
    the box; interior components contribute the full gradient.
    """
    u = np.asarray(u, dtype=float)
    f_c = np.asarray(f_c, dtype=float)
    if np.any(u < qp.u_min) or np.any(u > qp.u_max):
        raise ValueError("point is infeasible")
    g = qp.H_c @ u + f_c
    proj = g.copy()
    at_lower = u <= qp.u_min
    at_upper = u >= qp.u_max
    proj[at_lower] = np.minimum(g[at_lower], 0.0)
    proj[at_upper] = np.maximum(g[at_upper], 0.0)
    # a component pinned by equal-ish bounds cannot move either way
    proj[at_lower & at_upper] = 0.0
    return float(np.abs(proj).max(initial=0.0))


def _projected_gradient_fallback(H, f, lo, hi, tol, max_iter=10 ** 6):
    """Plain projected gradient with the exact 1/lambda_max step size."""
    step = 1.0 / float(np.linalg.eigvalsh(H)[-1])
    u = np.clip(np.zeros(f.shape[0]), lo, hi)
    check_every = 1000
    target = tol
    for i in range(max_iter):
        u = np.clip(u - step * (H @ u + f), lo, hi)
        if (i + 1) % check_every == 0:
            g = H @ u + f
            proj = g.copy()
            proj[u <= lo] = np.minimum(g[u <= lo], 0.0)
            proj[u >= hi] = np.maximum(g[u >= hi], 0.0)
            if np.abs(proj).max(initial=0.0) <= target:
                return u
            # relax the goal slowly so pathological instances still return
            target *= 1.02
    return u


def oracle_solve(qp: CondensedQp, f_c: np.ndarray) -> OracleSolution:
    """Solve the box QP to the KKT tolerance ``1e-10 * (1 + ||f_c||)``."""
    f = np.asarray(f_c, dtype=float)
    if f.shape != (qp.dim,):
        raise ValueError(f"linear term must have dimension {qp.dim}")
    H = qp.H_c
    lo, hi = qp.u_min, qp.u_max
    n = qp.dim
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Hessian must be positive definite") from exc

    tol = KKT_RTOL * (1.0 + float(np.linalg.norm(f)))
    status = np.zeros(n, dtype=np.int8)          # -1 lower, 0 free, +1 upper
    seen: set[bytes] = set()
    fell_back = False

    for _ in range(3 * n + 20):
        key = status.tobytes()
        if key in seen:
            fell_back = True
            break
        seen.add(key)

        # solve on the free set with actively clamped values substituted
        u = np.where(status < 0, lo, np.where(status > 0, hi, 0.0))
        for _ in range(n + 1):
            free = status == 0
            if np.any(free):
                rhs = -(f[free] + H[np.ix_(free, ~free)] @ u[~free])
                u[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
            viol_lo = free & (u < lo)
            viol_hi = free & (u > hi)
            if not (np.any(viol_lo) or np.any(viol_hi)):
                break
            status[viol_lo] = -1
            status[viol_hi] = 1
            u[viol_lo] = lo[viol_lo]
            u[viol_hi] = hi[viol_hi]

        g = H @ u + f
        release_lo = (status < 0) & (g < -tol)   # lower bound needs g >= 0
        release_hi = (status > 0) & (g > tol)    # upper bound needs g <= 0
        if not (np.any(release_lo) or np.any(release_hi)):
            residual = kkt_check(qp, f, u)
            if residual <= tol:
                return OracleSolution(u_star=u, active_set=status.copy(),
                                      kkt_residual=residual)
            fell_back = True
            break
        status[release_lo | release_hi] = 0
    else:
        fell_back = True

    if fell_back:
        u = _projected_gradient_fallback(H, f, lo, hi, tol)
        status = np.zeros(n, dtype=np.int8)
        status[u <= lo] = -1
        status[u >= hi] = 1
        return OracleSolution(u_star=u, active_set=status,
                              kkt_residual=kkt_check(qp, f, u))
    raise AssertionError("unreachable")
