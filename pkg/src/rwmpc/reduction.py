"""Spectral decomposition and model order reduction for LTI systems.

All three operations (modal split, dominant-mode reduction, balanced
truncation) are built on the same primitive: an ordered real Schur form
followed by a Sylvester-equation decoupling, which block-diagonalizes the
dynamics into a "kept" and a "discarded" part and yields an exact additive
split of the transfer function.  This avoids raw eigenvector bases, whose
conditioning degrades badly for clustered or repeated eigenvalues.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur, solve_continuous_lyapunov, solve_sylvester

from .models import ContinuousModel

logger = logging.getLogger(__name__)

AXIS_TOL = 1e-9


class DecompositionError(ValueError):
    """Raised when a model's eigenstructure does not admit the requested split."""


def _split_spectrum(A: np.ndarray, threshold: float):
    """Block-diagonalize ``A`` by real-part threshold.

    Returns ``(T11, T22, V, V_inv, k)`` with ``A = V diag(T11, T22) V_inv``
    (to rounding), where T11 holds the ``k`` eigenvalues with real part
    above ``threshold``.
    """
    n = A.shape[0]
    T, Z, sdim = schur(A, output="real", sort=lambda re, im: re > threshold)
    k = int(sdim)
    if k == 0 or k == n:
        return T, None, Z, Z.T, k
    T11 = T[:k, :k]
    T12 = T[:k, k:]
    T22 = T[k:, k:]
    # T11 X - X T22 = -T12 removes the off-diagonal coupling block
    X = solve_sylvester(T11, -T22, -T12)
    V = Z.copy()
    V[:, k:] = Z[:, :k] @ X + Z[:, k:]
    V_inv = Z.T.copy()
    V_inv[:k, :] = Z[:, :k].T - X @ Z[:, k:].T
    return T11, T22, V, V_inv, k


def _standardize_rotation(block: np.ndarray, tol: float):
    """Reduce a 2x2 Schur block with a conjugate (or equal real) eigenvalue
    pair to the exact rotation-growth form ``[[g, w], [-w, g]]``.

    Returns ``(gamma, omega, scale)`` with ``scale`` the diagonal similarity
    applied on the right (`inv(scale) @ block @ scale` is the form above).
    """
    a, b = block[0, 0], block[0, 1]
    c, d = block[1, 0], block[1, 1]
    if abs(c) <= tol and abs(b) <= tol:
        # already diagonal: equal real pair
        if abs(a - d) > tol:
            raise DecompositionError(
                "two distinct real unstable eigenvalues cannot form a "
                "rotation block")
        return 0.5 * (a + d), 0.0, np.eye(2)
    if abs(c) <= tol or abs(b) <= tol:
        # triangular block: two real eigenvalues
        if abs(a - d) > tol or max(abs(b), abs(c)) > tol:
            raise DecompositionError(
                "defective eigenstructure beyond tolerance in the unstable block")
        return 0.5 * (a + d), 0.0, np.eye(2)
    if b * c >= 0.0:
        raise DecompositionError(
            "unstable 2x2 block has two distinct real eigenvalues; "
            "only a conjugate (or repeated real) pair is supported")
    gamma = 0.5 * (a + d)
    omega = float(np.sqrt(-b * c))
    scale = np.diag([1.0, omega / b])
    return gamma, omega, scale


@dataclass(frozen=True)
class ModalModel:
    """Real modal form with the unstable pair leading.

    The state is ``xi = T_M x``; the transformed dynamics are block diagonal
    with the exact rotation-growth block ``[[gamma, omega], [-omega, gamma]]``
    ahead of the stable block ``Lambda_s``.
    """

    gamma: float
    omega: float
    Lambda_s: np.ndarray
    B_u: np.ndarray
    B_s: np.ndarray
    C_u: np.ndarray
    C_s: np.ndarray
    T_M: np.ndarray
    T_M_inv: np.ndarray
    D: np.ndarray | None = None
    C_aux_u: np.ndarray | None = None
    C_aux_s: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and np.isfinite(self.omega)):
            raise ValueError("gamma and omega must be finite")
        stable_eigs = np.linalg.eigvals(self.Lambda_s)
        if np.any(stable_eigs.real >= 0.0):
            raise DecompositionError("stable block has a non-decaying eigenvalue")

    @property
    def unstable_block(self) -> np.ndarray:
        return np.array([[self.gamma, self.omega], [-self.omega, self.gamma]])

    @property
    def n_x(self) -> int:
        return 2 + self.Lambda_s.shape[0]


def modal_decompose(model: ContinuousModel) -> ModalModel:
    """Split a model with exactly one unstable conjugate pair into modal form."""
    eigs = np.linalg.eigvals(model.A)
    scale = 1.0 + float(np.abs(eigs.real).max(initial=0.0))
    if np.any(np.abs(eigs.real) < AXIS_TOL * scale):
        raise DecompositionError(
            "eigenvalue on the stability boundary within tolerance")
    n_unstable = int(np.sum(eigs.real > 0.0))
    if n_unstable < 2:
        raise DecompositionError("no unstable pair")
    if n_unstable > 2:
        raise DecompositionError("more unstable modes than supported")

    T11, T22, V, V_inv, k = _split_spectrum(model.A, 0.0)
    if k != 2:
        raise DecompositionError(
            f"Schur reordering selected {k} unstable states, expected 2")
    tol = AXIS_TOL * (1.0 + float(np.abs(T11).max()))
    gamma, omega, block_scale = _standardize_rotation(T11, tol)

    V = V.copy()
    V[:, :2] = V[:, :2] @ block_scale
    V_inv = V_inv.copy()
    V_inv[:2, :] = np.diag(1.0 / np.diag(block_scale)) @ V_inv[:2, :]

    B_mod = V_inv @ model.B
    C_mod = model.C @ V
    aux_u = aux_s = None
    if model.C_aux is not None:
        aux = model.C_aux @ V
        aux_u, aux_s = aux[:, :2], aux[:, 2:]
    return ModalModel(gamma=gamma, omega=omega, Lambda_s=T22,
                      B_u=B_mod[:2], B_s=B_mod[2:],
                      C_u=C_mod[:, :2], C_s=C_mod[:, 2:],
                      T_M=V_inv, T_M_inv=V, D=model.D,
                      C_aux_u=aux_u, C_aux_s=aux_s)


def reassemble(modal: ModalModel, gamma: float | None = None,
               omega: float | None = None) -> ContinuousModel:
    """Rebuild a state-space model from modal form, optionally substituting
    the growth rate and rotation frequency of the unstable pair.

    The original state basis is restored, so initial-condition conventions
    on the source model carry over unchanged.
    """
    g = modal.gamma if gamma is None else float(gamma)
    w = modal.omega if omega is None else float(omega)
    n_s = modal.Lambda_s.shape[0]
    A_mod = np.zeros((2 + n_s, 2 + n_s))
    A_mod[:2, :2] = [[g, w], [-w, g]]
    A_mod[2:, 2:] = modal.Lambda_s
    A = modal.T_M_inv @ A_mod @ modal.T_M
    B = modal.T_M_inv @ np.vstack([modal.B_u, modal.B_s])
    C = np.hstack([modal.C_u, modal.C_s]) @ modal.T_M
    C_aux = None
    if modal.C_aux_u is not None:
        C_aux = np.hstack([modal.C_aux_u, modal.C_aux_s]) @ modal.T_M
    return ContinuousModel(A=A, B=B, C=C, D=modal.D, C_aux=C_aux)


def davison_reduce(model: ContinuousModel, k: int,
                   dc_correction: bool = True) -> ContinuousModel:
    """Keep the ``k`` eigenvalues of largest real part.

    The discarded (fast, stable) part's static gain is folded into the
    feedthrough when ``dc_correction`` is set, so the DC gain of the full
    model is preserved exactly.  Unstable modes are never discarded.
    """
    n = model.n_x
    if k > n:
        raise ValueError(f"requested order {k} exceeds model order {n}")
    if k < 1:
        raise ValueError("requested order must be >= 1")
    eigs = np.linalg.eigvals(model.A)
    n_unstable = int(np.sum(eigs.real > 0.0))
    if k < n_unstable:
        raise ValueError(
            f"requested order {k} cannot retain all {n_unstable} unstable modes")
    if k == n:
        return ContinuousModel(A=model.A, B=model.B, C=model.C, D=model.D,
                               C_aux=model.C_aux)

    re_sorted = np.sort(eigs.real)[::-1]
    gap = re_sorted[k - 1] - re_sorted[k]
    if gap <= AXIS_TOL * (1.0 + abs(re_sorted[k - 1])):
        raise ValueError(
            f"order {k} splits an eigenvalue cluster (gap {gap:.3e}); "
            "choose an order at a spectral gap")
    threshold = 0.5 * (re_sorted[k - 1] + re_sorted[k])

    T11, T22, V, V_inv, sdim = _split_spectrum(model.A, threshold)
    if sdim != k:
        raise ValueError(
            f"Schur reordering kept {sdim} modes, expected {k}")
    B_t = V_inv @ model.B
    C_t = model.C @ V
    D_r = model.D
    if dc_correction:
        # static gain of the discarded subsystem: -C2 T22^{-1} B2
        D_r = model.D - C_t[:, k:] @ np.linalg.solve(T22, B_t[k:])
    C_aux_r = None
    if model.C_aux is not None:
        C_aux_r = (model.C_aux @ V)[:, :k]
    return ContinuousModel(A=T11, B=B_t[:k], C=C_t[:, :k], D=D_r,
                           C_aux=C_aux_r)


def _psd_factor(W: np.ndarray) -> np.ndarray:
    """Factor a (numerically) PSD gramian as ``W = L @ L.T``."""
    W = 0.5 * (W + W.T)
    try:
        return np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(W)
        vals = np.clip(vals, 0.0, None)
        return vecs * np.sqrt(vals)


def stable_hankel_singular_values(model: ContinuousModel) -> np.ndarray:
    """Hankel singular values of the stable part of a model."""
    _, _, _, hsv = _balanced_stable_transform(*_stable_part(model))
    return hsv


def _stable_part(model: ContinuousModel):
    eigs = np.linalg.eigvals(model.A)
    n_unstable = int(np.sum(eigs.real > 0.0))
    if n_unstable == 0:
        return model.A, model.B, model.C
    if n_unstable == model.n_x:
        return (np.zeros((0, 0)), np.zeros((0, model.n_u)),
                np.zeros((model.n_y, 0)))
    T11, T22, V, V_inv, k = _split_spectrum(model.A, 0.0)
    return T22, (V_inv @ model.B)[k:], (model.C @ V)[:, k:]


def _balanced_stable_transform(As, Bs, Cs):
    """Square-root balancing factors of a stable subsystem.

    Returns ``(Lc, Lo, (U, sv, Vh), hsv)`` where the gramians factor as
    ``Wc = Lc Lc'``, ``Wo = Lo Lo'`` and ``Lo' Lc = U diag(sv) Vh``.
    """
    n_s = As.shape[0]
    if n_s == 0:
        empty = np.zeros((0, 0))
        return empty, empty, (empty, np.zeros(0), empty), np.zeros(0)
    Wc = solve_continuous_lyapunov(As, -Bs @ Bs.T)
    Wo = solve_continuous_lyapunov(As.T, -Cs.T @ Cs)
    Lc = _psd_factor(Wc)
    Lo = _psd_factor(Wo)
    U, sv, Vh = np.linalg.svd(Lo.T @ Lc)
    return Lc, Lo, (U, sv, Vh), sv


def balanced_truncate(model: ContinuousModel, r: int) -> ContinuousModel:
    """Balanced truncation to order ``r`` with exact retention of unstable modes.

    The model is split additively into its unstable and stable parts; the
    unstable part (at most one standardized rotation-growth pair here) is kept
    verbatim and balanced truncation is applied only to the stable part.  The
    discarded Hankel singular values are logged.
    """
    n = model.n_x
    if r < 1 or r > n:
        raise ValueError(f"target order {r} out of range 1..{n}")
    eigs = np.linalg.eigvals(model.A)
    scale = 1.0 + float(np.abs(eigs.real).max(initial=0.0))
    if np.any(np.abs(eigs.real) < AXIS_TOL * scale):
        raise DecompositionError(
            "eigenvalue on the stability boundary; gramians are undefined")
    n_unstable = int(np.sum(eigs.real > 0.0))
    if r < n_unstable:
        raise ValueError(
            f"target order {r} cannot retain all {n_unstable} unstable modes")
    if n_unstable == n:
        return ContinuousModel(A=model.A, B=model.B, C=model.C, D=model.D,
                               C_aux=model.C_aux)

    if n_unstable == 0:
        A_u = np.zeros((0, 0))
        B_u = np.zeros((0, model.n_u))
        C_u = np.zeros((model.n_y, 0))
        As, Bs, Cs = model.A, model.B, model.C
        aux_u = None
        aux_s = model.C_aux
    else:
        T11, T22, V, V_inv, k = _split_spectrum(model.A, 0.0)
        if k != n_unstable:
            raise DecompositionError(
                f"Schur reordering kept {k} unstable states, expected {n_unstable}")
        if k == 2:
            tol = AXIS_TOL * (1.0 + float(np.abs(T11).max()))
            try:
                g, w, block_scale = _standardize_rotation(T11, tol)
                V = V.copy()
                V[:, :2] = V[:, :2] @ block_scale
                V_inv = V_inv.copy()
                V_inv[:2, :] = np.diag(1.0 / np.diag(block_scale)) @ V_inv[:2, :]
                T11 = np.array([[g, w], [-w, g]])
            except DecompositionError:
                pass  # keep the raw Schur block for unusual real pairs
        A_u = T11
        B_full = V_inv @ model.B
        C_full = model.C @ V
        B_u, Bs = B_full[:k], B_full[k:]
        C_u, Cs = C_full[:, :k], C_full[:, k:]
        As = T22
        aux_u = aux_s = None
        if model.C_aux is not None:
            aux = model.C_aux @ V
            aux_u, aux_s = aux[:, :k], aux[:, k:]

    r_s = r - n_unstable
    Lc, Lo, (U, sv, Vh), hsv = _balanced_stable_transform(As, Bs, Cs)
    if r_s > 0:
        floor = max(hsv[0], 1.0) * 1e-14
        if hsv[min(r_s, hsv.size) - 1] <= floor:
            raise ValueError(
                f"stable part has numerical rank below {r_s}; "
                "request a smaller target order")
    kept = sv[:r_s]
    discarded = sv[r_s:]
    logger.info("balanced truncation: kept %d stable states, "
                "discarded HSV sum %.3e", r_s, float(discarded.sum()))
    inv_sqrt = 1.0 / np.sqrt(kept)
    T_k = (Lc @ Vh[:r_s].T) * inv_sqrt
    Tinv_k = (inv_sqrt[:, None] * U[:, :r_s].T) @ Lo.T

    A_b = Tinv_k @ As @ T_k
    B_b = Tinv_k @ Bs
    C_b = Cs @ T_k

    m = A_u.shape[0]
    A_r = np.zeros((r, r))
    A_r[:m, :m] = A_u
    A_r[m:, m:] = A_b
    B_r = np.vstack([B_u, B_b])
    C_r = np.hstack([C_u, C_b])
    C_aux_r = None
    if model.C_aux is not None:
        if aux_u is None:
            C_aux_r = aux_s @ T_k
        else:
            C_aux_r = np.hstack([aux_u, aux_s @ T_k])
    return ContinuousModel(A=A_r, B=B_r, C=C_r, D=model.D, C_aux=C_aux_r)
