"""Proper orthogonal decomposition of centered snapshot matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import InputError
from .snapshots import SnapshotMatrix

__all__ = [
    "PodBasis",
    "compute_pod",
    "fix_signs",
    "truncation_error",
    "project",
    "reconstruct",
    "rank_for_tolerance",
]


def _array(S):
    return S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=np.float64)


def fix_signs(modes: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties go to the lowest row index (``argmax`` semantics).
    """
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    return modes * signs


@dataclass(frozen=True)
class PodBasis:
    """Leading left singular vectors and the full singular value list.

    Attributes
    ----------
    modes : (n, r_max) ndarray
        Orthonormal columns, ordered by decreasing singular value.
    singular_values : (min(n, k),) ndarray
        All singular values of the snapshot matrix, non-increasing.
    """

    modes: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        for name in ("modes", "singular_values"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def r_max(self) -> int:
        return self.modes.shape[1]

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    def leading(self, r: int) -> np.ndarray:
        if not 0 <= r <= self.r_max:
            raise InputError(f"r={r} outside [0, {self.r_max}]")
        return self.modes[:, :r]


def compute_pod(S_centered, r_max: int | None = None) -> PodBasis:
    """Thin SVD of the (centered) snapshot matrix.

    Parameters
    ----------
    S_centered : (n, k) SnapshotMatrix or ndarray
    r_max : int, optional
        Number of modes to keep; defaults to ``min(n, k)``.
    """
    X = _array(S_centered)
    m = min(X.shape)
    if r_max is None:
        r_max = m
    if not 0 <= r_max <= m:
        raise InputError(f"r_max={r_max} outside [0, {m}]")
    U, s, _ = la.svd(X, full_matrices=False, lapack_driver="gesdd")
    return PodBasis(fix_signs(U[:, :r_max]), s)


def truncation_error(basis: PodBasis, r: int) -> float:
    """Sum of squared singular values beyond the first ``r``."""
    s = basis.singular_values
    if not 0 <= r <= s.size:
        raise InputError(f"r={r} outside [0, {s.size}]")
    return float(np.sum(s[r:] ** 2))


def project(basis: PodBasis, r: int, S_centered) -> np.ndarray:
    """Reduced coordinates ``V^T S`` for the leading ``r`` modes."""
    X = _array(S_centered)
    V = basis.leading(r)
    if X.shape[0] != V.shape[0]:
        raise InputError(f"state dimension {X.shape[0]} does not match basis dimension {V.shape[0]}")
    return V.T @ X


def reconstruct(basis: PodBasis, r: int, S_hat) -> np.ndarray:
    """Linear reconstruction ``V S_hat``."""
    return basis.leading(r) @ np.asarray(S_hat, dtype=np.float64)


def rank_for_tolerance(basis: PodBasis, tol: float, mode: str = "relative") -> int:
    """Smallest basis size meeting a projection-error tolerance.

    ``mode="relative"`` requires ``truncation_error(r) / sum(sigma^2) < tol^2``,
    i.e. a relative Frobenius projection error below ``tol``.
    ``mode="absolute"`` requires ``sqrt(truncation_error(r)) < tol``.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    e = basis.singular_values**2
    # tails[r] = sum_{i >= r} e_i (0-based), i.e. the error left by r modes
    tails = np.concatenate([np.cumsum(e[::-1])[::-1], [0.0]])
    if mode == "relative":
        total = tails[0]
        if total == 0.0:
            return 0
        ok = tails / total < tol**2
    elif mode == "absolute":
        ok = np.sqrt(tails) < tol
    else:
        raise InputError(f"unknown mode {mode!r}")
    return int(np.argmax(ok))
