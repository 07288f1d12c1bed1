"""Polynomial manifold model and its closed-form, POD-based fit.

The decoder is

.. math::

   s \\approx c + V \\hat{s} + \\bar{V} \\Xi g(\\hat{s}),
   \\qquad [V, \\bar{V}]^\\top [V, \\bar{V}] = I_{r+q},

and training minimizes the regularized least-squares objective

.. math::

   \\tfrac12 \\sum_j \\| s_j - V \\hat{s}_j - \\bar{V} \\Xi g(\\hat{s}_j) \\|^2
   + \\tfrac{\\gamma}{2} \\|\\Xi\\|_F^2 .

With ``V`` and ``Vbar`` fixed to consecutive POD modes and
``s_hat_j = V^T s_j``, only ``Xi`` remains, and it has a closed form
(:func:`solve_coefficients`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import IllPosedError, InputError
from .pod import PodBasis, compute_pod
from .polynomial import feature_matrix, poly_features
from .snapshots import CenteringVector, SnapshotMatrix, read_container, write_container

__all__ = [
    "ManifoldModel",
    "solve_coefficients",
    "fit_pod_manifold",
    "decode",
    "encode_pod",
    "regularized_objective",
    "pod_model",
    "save_model",
    "load_model",
    "save_pod",
    "load_pod",
]

ORTHO_TOL = 1e-10


def _array(S):
    return S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=np.float64)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ManifoldModel:
    """Complete polynomial-manifold decoder.

    Attributes
    ----------
    V : (n, r) ndarray
        Linear basis.
    V_bar : (n, q) ndarray
        Basis carrying the polynomial correction, orthogonal to ``V``.
    Xi : (q, (p-1) r) ndarray
        Coefficients weighting the polynomial features.
    p : int
        Polynomial degree.
    gamma : float
        Regularization weight used when fitting ``Xi``.
    centering : CenteringVector
        Mean added back by :func:`decode`.
    method : str
        Provenance tag (``"manifold_pod"`` or ``"manifold_am"``).
    """

    V: np.ndarray
    V_bar: np.ndarray
    Xi: np.ndarray
    p: int
    gamma: float
    centering: CenteringVector
    method: str = "manifold_pod"

    def __post_init__(self):
        V, Vb, Xi = (_frozen(getattr(self, a)) for a in ("V", "V_bar", "Xi"))
        n, r = V.shape
        if Vb.ndim != 2 or Vb.shape[0] != n:
            raise InputError(f"V_bar must have {n} rows")
        if Xi.shape != (Vb.shape[1], (self.p - 1) * r):
            raise InputError(f"Xi must have shape {(Vb.shape[1], (self.p - 1) * r)}, got {Xi.shape}")
        if self.centering.n != n:
            raise InputError("centering vector length does not match V")
        if self.gamma < 0:
            raise InputError("gamma must be >= 0")
        Om = np.hstack([V, Vb])
        err = np.max(np.abs(Om.T @ Om - np.eye(Om.shape[1]))) if Om.size else 0.0
        if err > ORTHO_TOL:
            raise InputError(f"[V, V_bar] is not orthonormal (max deviation {err:.2e})")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "V_bar", Vb)
        object.__setattr__(self, "Xi", Xi)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return self.V.shape[1]

    @property
    def q(self) -> int:
        return self.V_bar.shape[1]

    @property
    def Omega(self) -> np.ndarray:
        return np.hstack([self.V, self.V_bar])


def solve_coefficients(S_centered, V, V_bar, S_hat, p, gamma) -> np.ndarray:
    """Regularized least-squares coefficients for fixed bases and latents.

    Computes ``Xi = Vbar^T (I - V V^T) S W^T (W W^T + gamma I)^{-1}`` with
    ``W = feature_matrix(S_hat, p)``. The symmetric system is equilibrated
    by its diagonal and solved with a Cholesky factorization.

    Raises
    ------
    IllPosedError
        If ``gamma == 0`` and ``W W^T`` is singular (always the case when
        ``k < (p-1) r``).
    """
    S = _array(S_centered)
    V = np.asarray(V, dtype=np.float64)
    Vb = np.asarray(V_bar, dtype=np.float64)
    if gamma < 0:
        raise InputError("gamma must be >= 0")
    W = feature_matrix(S_hat, p)
    nf, k = W.shape
    if gamma == 0 and k < nf:
        raise IllPosedError(f"W W^T is rank deficient (k={k} < {nf} features); use gamma > 0")
    # Vbar^T (I - V V^T) S without forming the n x n projector
    target = Vb.T @ S - (Vb.T @ V) @ (V.T @ S)
    rhs = target @ W.T
    A = W @ W.T
    A[np.diag_indices(nf)] += gamma
    d = np.sqrt(np.diag(A))
    if np.any(d == 0):
        raise IllPosedError("W W^T + gamma I has a zero diagonal entry; use gamma > 0")
    As = A / np.outer(d, d)
    try:
        cf = la.cho_factor(As, lower=False, check_finite=False)
        Xi = la.cho_solve(cf, (rhs / d).T, check_finite=False).T / d
    except la.LinAlgError as exc:
        if gamma == 0:
            raise IllPosedError("W W^T is singular; use gamma > 0") from exc
        Xi = la.solve(As, (rhs / d).T, assume_a="sym").T / d
    return Xi


def regularized_objective(S_centered, V, V_bar, Xi, S_hat, p, gamma) -> float:
    """Half squared residual plus ``gamma/2 * ||Xi||_F^2``."""
    S = _array(S_centered)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    R = S - V @ S_hat - V_bar @ (Xi @ feature_matrix(S_hat, p))
    return 0.5 * float(np.sum(R * R)) + 0.5 * gamma * float(np.sum(Xi * Xi))


def fit_pod_manifold(S_centered, r, q, p, gamma, centering=None, basis: PodBasis | None = None):
    """Fit the POD-based polynomial manifold.

    ``V`` holds the leading ``r`` POD modes and ``V_bar`` the next ``q``.
    Latent coordinates are the POD projections ``V^T S`` and ``Xi`` comes
    from :func:`solve_coefficients`.

    Parameters
    ----------
    S_centered : (n, k) SnapshotMatrix or ndarray
        Training snapshots with the mean already removed.
    r, q : int
        Latent dimension and size of the correction basis, ``r + q <= min(n, k)``.
    p : int
        Polynomial degree, ``p >= 2``.
    gamma : float
        Ridge weight on ``Xi``.
    centering : CenteringVector, optional
        Stored in the model so :func:`decode` returns uncentered states.
        Defaults to zeros.
    basis : PodBasis, optional
        Precomputed POD of ``S_centered`` with at least ``r + q`` modes.

    Returns
    -------
    model : ManifoldModel
    S_hat : (r, k) ndarray
    """
    S = _array(S_centered)
    n, k = S.shape
    if r < 1 or q < 0:
        raise InputError(f"need r >= 1 and q >= 0, got r={r}, q={q}")
    if r + q > min(n, k):
        raise InputError(f"r + q = {r + q} exceeds min(n, k) = {min(n, k)}")
    if basis is None:
        basis = compute_pod(S, r + q)
    elif basis.r_max < r + q or basis.n != n:
        raise InputError("supplied POD basis is too small for r + q")
    V = basis.modes[:, :r]
    Vb = basis.modes[:, r : r + q]
    S_hat = V.T @ S
    Xi = solve_coefficients(S, V, Vb, S_hat, p, gamma)
    if centering is None:
        centering = CenteringVector(np.zeros(n))
    model = ManifoldModel(V, Vb, Xi, int(p), float(gamma), centering, "manifold_pod")
    return model, S_hat


def pod_model(basis: PodBasis, r: int, centering=None) -> ManifoldModel:
    """Plain POD as a degenerate manifold model (``q = 0``, no correction)."""
    V = basis.leading(r)
    if centering is None:
        centering = CenteringVector(np.zeros(basis.n))
    return ManifoldModel(V, np.zeros((basis.n, 0)), np.zeros((0, r)), 2, 0.0, centering, "pod")


def decode(model: ManifoldModel, s_hat) -> np.ndarray:
    """Map latent vector(s) back to full, uncentered states."""
    s = np.asarray(s_hat, dtype=np.float64)
    if s.shape[0] != model.r:
        raise InputError(f"latent dimension {s.shape[0]} does not match model r={model.r}")
    c = model.centering.mean if s.ndim == 1 else model.centering.mean[:, None]
    return c + model.V @ s + model.V_bar @ (model.Xi @ poly_features(s, model.p))


def encode_pod(model: ManifoldModel, s) -> np.ndarray:
    """Linear encoder ``V^T (s - c)``; accepts a vector or a matrix of columns."""
    x = _array(s)
    if x.shape[0] != model.n:
        raise InputError(f"state dimension {x.shape[0]} does not match model n={model.n}")
    c = model.centering.mean if x.ndim == 1 else model.centering.mean[:, None]
    return model.V.T @ (x - c)


# Persistence -----------------------------------------------------------------
def save_model(model: ManifoldModel, path, extra: dict | None = None):
    """Write a model container (JSON metadata + binary matrices)."""
    meta = {
        "kind": "manifold",
        "method": model.method,
        "n": model.n,
        "r": model.r,
        "q": model.q,
        "p": model.p,
        "gamma": model.gamma,
    }
    if extra:
        meta["extra"] = extra
    write_container(
        path,
        meta,
        {"V": model.V, "V_bar": model.V_bar, "Xi": model.Xi, "centering": model.centering.mean},
    )


def load_model(path) -> ManifoldModel:
    meta, arrs = read_container(path)
    if meta.get("kind") != "manifold":
        raise InputError(f"{path}: container holds a {meta.get('kind')!r}, not a manifold model")
    n, r, q, p = meta["n"], meta["r"], meta["q"], meta["p"]
    return ManifoldModel(
        arrs["V"].reshape(n, r),
        arrs["V_bar"].reshape(n, q),
        arrs["Xi"].reshape(q, (p - 1) * r),
        p,
        meta["gamma"],
        CenteringVector(arrs["centering"]),
        meta.get("method", "manifold_pod"),
    )


def save_pod(basis: PodBasis, path, centering: CenteringVector | None = None, r: int | None = None):
    """Write a POD basis container, optionally truncated to ``r`` modes."""
    r = basis.r_max if r is None else r
    arrays = {"modes": basis.leading(r), "singular_values": basis.singular_values}
    if centering is not None:
        arrays["centering"] = centering.mean
    write_container(path, {"kind": "pod", "n": basis.n, "r": r}, arrays)


def load_pod(path):
    """Return ``(PodBasis, CenteringVector or None)``."""
    meta, arrs = read_container(path)
    if meta.get("kind") != "pod":
        raise InputError(f"{path}: container holds a {meta.get('kind')!r}, not a POD basis")
    modes = arrs["modes"].reshape(meta["n"], meta["r"])
    c = CenteringVector(arrs["centering"]) if "centering" in arrs else None
    return PodBasis(modes, arrs["singular_values"].reshape(-1)), c
