"""Elementwise polynomial feature map and its Jacobian.

For a latent vector ``s_hat`` of length ``r`` and degree ``p >= 2``::

    g(s_hat) = [s_hat**2, s_hat**3, ..., s_hat**p]

stacked power-major, so entry ``(m - 2) * r + i`` holds ``s_hat[i]**m``.
No cross terms between coordinates appear.
"""

import numpy as np

from .errors import InputError

__all__ = ["poly_features", "poly_jacobian", "feature_matrix", "n_features"]


def _check_degree(p):
    if int(p) != p or p < 2:
        raise InputError(f"polynomial degree must be an integer >= 2, got {p}")
    return int(p)


def n_features(r: int, p: int) -> int:
    return (_check_degree(p) - 1) * r


def poly_features(s_hat, p: int) -> np.ndarray:
    """Evaluate ``g``.

    Works column-wise on 2D input, so ``poly_features(S_hat, p)`` is the
    feature matrix ``W``.
    """
    p = _check_degree(p)
    s = np.asarray(s_hat, dtype=np.float64)
    if s.ndim not in (1, 2) or s.shape[0] < 1:
        raise InputError(f"latent input must be a nonempty vector or matrix, got shape {s.shape}")
    powers = [s * s]
    for _ in range(3, p + 1):
        powers.append(powers[-1] * s)
    return np.concatenate(powers, axis=0)


def poly_jacobian(s_hat, p: int) -> np.ndarray:
    """Jacobian of ``g`` at one point, shape ``((p-1) r, r)``.

    Block ``m - 2`` is ``diag(m * s_hat**(m-1))``.
    """
    p = _check_degree(p)
    s = np.asarray(s_hat, dtype=np.float64).reshape(-1)
    r = s.size
    diag = poly_jacobian_diagonals(s, p)
    J = np.zeros(((p - 1) * r, r))
    rows = np.arange((p - 1) * r)
    J[rows, np.tile(np.arange(r), p - 1)] = diag.reshape(-1)
    return J


def poly_jacobian_diagonals(S_hat, p: int) -> np.ndarray:
    """Diagonals of the Jacobian blocks, shape ``(p-1, r)`` or ``(p-1, r, k)``.

    Batched form used by the latent solver.
    """
    s = np.asarray(S_hat, dtype=np.float64)
    out = np.empty((p - 1,) + s.shape)
    power = np.ones_like(s)
    for m in range(2, p + 1):
        power = power * s
        out[m - 2] = m * power
    return out


def feature_matrix(S_hat, p: int) -> np.ndarray:
    """``W = [g(s_hat_1), ..., g(s_hat_k)]``, shape ``((p-1) r, k)``."""
    S = np.asarray(S_hat, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] < 1:
        raise InputError(f"latent matrix must be 2D with k >= 1, got shape {S.shape}")
    return poly_features(S, p)
