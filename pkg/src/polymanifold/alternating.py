"""Alternating minimization for polynomial manifolds.

Each cycle updates one block of unknowns with the others held fixed:

1. ``Omega = [V, Vbar]`` by an orthogonal Procrustes problem,
2. ``Xi`` by the same regularized regression as the POD-based fit,
3. the latent coordinates ``S_hat`` by per-sample nonlinear least squares.

Cycling stops when the retained energy ratio
``e = ||V S_hat + Vbar Xi W||_F^2 / ||S||_F^2`` changes by at most ``tol``
between consecutive cycles.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DegenerateProblemError, InputError
from .manifold import ManifoldModel, fit_pod_manifold, regularized_objective, solve_coefficients
from .polynomial import feature_matrix, poly_jacobian_diagonals
from .snapshots import SnapshotMatrix

__all__ = [
    "NlsSettings",
    "AmConfig",
    "AmTrace",
    "LatentSolve",
    "procrustes_step",
    "coefficient_step",
    "latent_step",
    "fit_am",
    "encode_am",
    "retained_energy",
]

log = logging.getLogger(__name__)

# Damping beyond which no representable step can lower the objective.
_MAX_DAMPING = 1e16


def _array(S):
    return S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=np.float64)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("POLYMANIFOLD_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class NlsSettings:
    """Levenberg-Marquardt settings for the latent solve."""

    max_iter: int = 100
    gtol: float = 1e-10
    damping: float = 1e-3

    def __post_init__(self):
        if self.max_iter < 0 or self.gtol < 0 or self.damping <= 0:
            raise InputError("need max_iter >= 0, gtol >= 0, damping > 0")


@dataclass(frozen=True)
class AmConfig:
    tol: float = 1e-3
    max_cycles: int = 100
    nls: NlsSettings = field(default_factory=NlsSettings)

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.max_cycles < 1:
            raise InputError("max_cycles must be >= 1")


@dataclass
class AmTrace:
    """Per-cycle history of a fit.

    ``energy[0]`` and ``objective[0]`` describe the initialization; entry
    ``l`` describes the state after cycle ``l``. ``step_objectives[l-1]``
    holds the objective after each of the three steps of cycle ``l``.
    """

    energy: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    step_objectives: list = field(default_factory=list)
    nls_iterations: list = field(default_factory=list)
    flagged_samples: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    converged: bool = False

    @property
    def cycles(self) -> int:
        return len(self.energy) - 1

    def rows(self):
        """``(cycle, e, objective)`` tuples, one per recorded state."""
        return [(i, e, J) for i, (e, J) in enumerate(zip(self.energy, self.objective))]


@dataclass
class LatentSolve:
    """Outcome of a batched latent solve; one entry per sample."""

    S_hat: np.ndarray
    objective: np.ndarray
    initial_objective: np.ndarray
    grad_norm: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    flagged: np.ndarray


# Step 1 ----------------------------------------------------------------------
def _procrustes(S, B):
    P = S @ B.T
    if not np.any(P):
        raise DegenerateProblemError("S [S_hat; Xi W]^T is identically zero; no informative rotation")
    U, sv, Vt = la.svd(P, full_matrices=False, lapack_driver="gesdd")
    rank_deficient = sv[-1] <= sv[0] * max(P.shape) * np.finfo(float).eps
    return U @ Vt, bool(rank_deficient)


def procrustes_step(S_centered, S_hat, Xi, p) -> np.ndarray:
    """Orthonormal ``Omega`` minimizing ``||S - Omega [S_hat; Xi W]||_F``.

    The minimizer is ``U_P V_P^T`` from the thin SVD
    ``U_P Sigma_P V_P^T = S [S_hat^T, (Xi W)^T]``. It is unique only if that
    product has full column rank; otherwise a minimizer is still returned
    and a :class:`RuntimeWarning` is issued.

    Raises
    ------
    DegenerateProblemError
        If the product matrix is identically zero.
    """
    S = _array(S_centered)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    B = np.vstack([S_hat, np.asarray(Xi) @ feature_matrix(S_hat, p)])
    if B.shape[1] != S.shape[1]:
        raise InputError("S and S_hat have different numbers of samples")
    Omega, deficient = _procrustes(S, B)
    if deficient:
        warnings.warn("Procrustes product is rank deficient; rotation is not unique", RuntimeWarning, 2)
    return Omega


# Step 2 ----------------------------------------------------------------------
def coefficient_step(S_centered, Omega, S_hat, p, gamma) -> np.ndarray:
    """Regression for ``Xi`` with ``V, Vbar`` read off the columns of ``Omega``."""
    S_hat = np.asarray(S_hat, dtype=np.float64)
    r = S_hat.shape[0]
    Omega = np.asarray(Omega, dtype=np.float64)
    return solve_coefficients(S_centered, Omega[:, :r], Omega[:, r:], S_hat, p, gamma)


# Step 3 ----------------------------------------------------------------------
def _lm_batch(A, B, Xi, p, S0, nls: NlsSettings):
    """Damped Gauss-Newton on every column at once.

    Minimizes ``||a_j - s||^2 + ||b_j - Xi g(s)||^2`` per column, where
    ``A = V^T S`` and ``B = Vbar^T S``. Only improving steps are taken.
    """
    r, k = S0.shape
    q = Xi.shape[0]
    blocks = [Xi[:, m * r : (m + 1) * r] for m in range(p - 1)]
    # gram[m][l] = Xi_m^T Xi_l, so J^T J = I + sum_{m,l} D_m gram[m][l] D_l
    gram = [[blocks[m].T @ blocks[l] for l in range(p - 1)] for m in range(p - 1)]
    eye = np.eye(r)

    def residual(S, cols=slice(None)):
        R2 = B[:, cols] - Xi @ feature_matrix(S, p) if q else np.zeros((0, S.shape[1]))
        return A[:, cols] - S, R2

    def objective(R1, R2):
        return np.einsum("ij,ij->j", R1, R1) + np.einsum("ij,ij->j", R2, R2)

    S = S0.copy()
    R1, R2 = residual(S)
    f = objective(R1, R2)
    f0 = f.copy()
    flagged = ~np.isfinite(f)
    lam = np.full(k, nls.damping)
    iters = np.zeros(k, dtype=int)
    gnorm = np.full(k, np.inf)
    active = ~flagged

    for _ in range(nls.max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s, r1, r2 = S[:, idx], R1[:, idx], R2[:, idx]
        D = poly_jacobian_diagonals(s, p)  # (p-1, r, m)
        # gradient of f/2: -(r1 + sum_m D_m * Xi_m^T r2)
        XtR = Xi.T @ r2 if q else np.zeros(((p - 1) * r, idx.size))
        g = -r1.copy()
        for m in range(p - 1):
            g -= D[m] * XtR[m * r : (m + 1) * r]
        gn = np.linalg.norm(g, axis=0)
        gnorm[idx] = gn
        done = (gn <= nls.gtol) | (iters[idx] >= nls.max_iter) | (lam[idx] > _MAX_DAMPING)
        active[idx[done]] = False
        keep = ~done
        if not keep.any():
            break
        idx, g, D = idx[keep], g[:, keep], D[:, :, keep]
        H = np.broadcast_to(eye, (idx.size, r, r)).copy()
        for m in range(p - 1):
            for l in range(p - 1):
                H += np.einsum("ik,ij,jk->kij", D[m], gram[m][l], D[l])
        H[:, np.arange(r), np.arange(r)] += lam[idx][:, None]
        step = np.linalg.solve(H, -g.T[:, :, None])[:, :, 0].T
        trial = S[:, idx] + step
        t1, t2 = residual(trial, idx)
        ft = objective(t1, t2)
        ok = np.isfinite(ft) & (ft < f[idx])
        acc = idx[ok]
        S[:, acc] = trial[:, ok]
        R1[:, acc] = t1[:, ok]
        R2[:, acc] = t2[:, ok]
        f[acc] = ft[ok]
        lam[acc] *= 0.1
        lam[idx[~ok]] *= 10.0
        iters[idx] += 1

    converged = gnorm <= nls.gtol
    return S, f, f0, gnorm, iters, converged, flagged


def latent_step(
    S_centered,
    Omega,
    Xi,
    p,
    S_hat_init,
    nls: NlsSettings | None = None,
    return_info: bool = False,
    workers: int | None = None,
):
    """Per-sample nonlinear least squares for the latent coordinates.

    For each column ``s_j`` minimizes ``||s_j - V s - Vbar Xi g(s)||^2``
    starting from ``S_hat_init[:, j]``, using the analytic Jacobian
    ``-(V + Vbar Xi dg(s))``. Iterates are accepted only when they lower the
    objective, so the returned value never exceeds the initial one. Samples
    whose initial objective is not finite are flagged and left unchanged.

    Since ``Omega = [V, Vbar]`` is orthonormal the solve runs in the
    ``(r+q)``-dimensional coordinates ``Omega^T s_j``; the discarded part
    ``||(I - Omega Omega^T) s_j||^2`` is a constant per sample.

    Returns
    -------
    S_hat : (r, k) ndarray
        or ``LatentSolve`` if ``return_info`` is set. Objectives in the
        info object are full-space squared residuals.
    """
    nls = nls or NlsSettings()
    S = _array(S_centered)
    Omega = np.asarray(Omega, dtype=np.float64)
    Xi = np.asarray(Xi, dtype=np.float64)
    S0 = np.array(S_hat_init, dtype=np.float64)
    if S0.ndim != 2 or S0.shape[1] != S.shape[1]:
        raise InputError("S_hat_init must have one column per snapshot")
    r = S0.shape[0]
    if Omega.shape[0] != S.shape[0] or Xi.shape != (Omega.shape[1] - r, (p - 1) * r):
        raise InputError("inconsistent shapes among S, Omega, Xi and S_hat_init")
    C = Omega.T @ S
    A, B = C[:r], C[r:]
    workers = workers or default_workers()
    k = S.shape[1]
    if workers > 1 and k >= 2 * workers:
        chunks = np.array_split(np.arange(k), workers)
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda c: _lm_batch(A[:, c], B[:, c], Xi, p, S0[:, c], nls), chunks))
        out = [np.concatenate([pt[i] for pt in parts], axis=-1) for i in range(7)]
    else:
        out = list(_lm_batch(A, B, Xi, p, S0, nls))
    S_hat = out[0]
    if not return_info:
        return S_hat
    outside = np.maximum(np.einsum("ij,ij->j", S, S) - np.einsum("ij,ij->j", C, C), 0.0)
    return LatentSolve(S_hat, out[1] + outside, out[2] + outside, *out[3:])


def retained_energy(S_hat, Xi, p, norm_S_sq) -> float:
    """``||Omega [S_hat; Xi W]||_F^2 / ||S||_F^2`` for orthonormal ``Omega``."""
    B = np.vstack([S_hat, Xi @ feature_matrix(S_hat, p)])
    return float(np.sum(B * B) / norm_S_sq)


def fit_am(
    S_centered,
    r,
    q,
    p,
    gamma,
    cfg: AmConfig | None = None,
    init=None,
    centering=None,
    workers: int | None = None,
):
    """Fit a polynomial manifold by alternating minimization.

    Parameters
    ----------
    S_centered : (n, k) SnapshotMatrix or ndarray
    r, q, p, gamma
        As for :func:`fit_pod_manifold`.
    cfg : AmConfig, optional
    init : (ManifoldModel, ndarray), optional
        Starting point; defaults to the POD-based fit with the same
        ``(r, q, p, gamma)``.
    centering : CenteringVector, optional
        Used only when ``init`` is not given.

    Returns
    -------
    model : ManifoldModel
    S_hat : (r, k) ndarray
    trace : AmTrace
        ``trace.converged`` is False if ``max_cycles`` ran out first.
    """
    cfg = cfg or AmConfig()
    S = _array(S_centered)
    if init is None:
        init = fit_pod_manifold(S, r, q, p, gamma, centering=centering)
    model0, S_hat = init
    if (model0.r, model0.q, model0.p, model0.gamma) != (r, q, p, gamma):
        raise InputError("initial model was fit with different (r, q, p, gamma)")
    S_hat = np.array(S_hat, dtype=np.float64)
    Omega = model0.Omega
    Xi = np.array(model0.Xi)
    norm_S_sq = float(np.sum(S * S))
    if norm_S_sq == 0:
        raise DegenerateProblemError("training matrix is identically zero")

    def J(Om, X, Sh):
        return regularized_objective(S, Om[:, :r], Om[:, r:], X, Sh, p, gamma)

    trace = AmTrace()
    trace.energy.append(retained_energy(S_hat, Xi, p, norm_S_sq))
    trace.objective.append(J(Omega, Xi, S_hat))

    for cycle in range(1, cfg.max_cycles + 1):
        B = np.vstack([S_hat, Xi @ feature_matrix(S_hat, p)])
        Omega, deficient = _procrustes(S, B)
        if deficient:
            trace.warnings.append(f"cycle {cycle}: Procrustes product rank deficient")
        J1 = J(Omega, Xi, S_hat)
        Xi = coefficient_step(S, Omega, S_hat, p, gamma)
        J2 = J(Omega, Xi, S_hat)
        info = latent_step(S, Omega, Xi, p, S_hat, cfg.nls, return_info=True, workers=workers)
        S_hat = info.S_hat
        J3 = J(Omega, Xi, S_hat)
        trace.step_objectives.append((J1, J2, J3))
        trace.objective.append(J3)
        trace.energy.append(retained_energy(S_hat, Xi, p, norm_S_sq))
        trace.nls_iterations.append(int(info.iterations.max(initial=0)))
        trace.flagged_samples.append(int(info.flagged.sum()))
        log.debug("cycle %d: e=%.6g J=%.6g", cycle, trace.energy[-1], J3)
        if abs(trace.energy[-1] - trace.energy[-2]) <= cfg.tol:
            trace.converged = True
            break

    model = ManifoldModel(
        Omega[:, :r], Omega[:, r:], Xi, int(p), float(gamma), model0.centering, "manifold_am"
    )
    return model, S_hat, trace


def encode_am(model: ManifoldModel, s, nls: NlsSettings | None = None, return_info=False, workers=None):
    """Nonlinear encoder: best latent vector for each state under ``model``.

    Starts from the linear projection ``V^T (s - c)`` and runs the same
    solver as :func:`latent_step`, so the reconstruction error never exceeds
    that of the linear encoder.
    """
    x = _array(s)
    vector = x.ndim == 1
    X = x[:, None] if vector else x
    if X.shape[0] != model.n:
        raise InputError(f"state dimension {X.shape[0]} does not match model n={model.n}")
    Xc = X - model.centering.mean[:, None]
    init = model.V.T @ Xc
    res = latent_step(Xc, model.Omega, model.Xi, model.p, init, nls, return_info=True, workers=workers)
    out = res.S_hat[:, 0] if vector else res.S_hat
    return (out, res) if return_info else out
