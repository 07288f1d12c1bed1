"""Test-set representation error and the (r, p) error sweep."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .alternating import AmConfig, default_workers, encode_am, fit_am
from .errors import InputError
from .manifold import ManifoldModel, decode, encode_pod, fit_pod_manifold, pod_model
from .pod import compute_pod
from .snapshots import DatasetCatalog, SnapshotMatrix, atomic_write_bytes, center

__all__ = [
    "ErrorSweepRecord",
    "SWEEP_FIELDS",
    "relative_errors",
    "mean_relative_error",
    "reconstruct",
    "representation_error",
    "run_sweep",
    "write_records_csv",
    "read_records_csv",
    "space_time_field",
    "write_space_time_csv",
]

log = logging.getLogger(__name__)

SWEEP_FIELDS = ("method", "r", "p", "q", "gamma", "test_error", "am_cycles", "converged")
METHODS = ("pod", "manifold_pod", "manifold_am")


@dataclass(frozen=True)
class ErrorSweepRecord:
    """One cell of the sweep. ``p`` and ``q`` are 0 for plain POD.

    A failed fit is kept as a record with ``test_error = nan`` and the
    exception text in ``message``.
    """

    method: str
    r: int
    p: int
    q: int
    gamma: float
    test_error: float
    am_cycles: int = 0
    converged: bool = True
    message: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}")
        if self.r < 1:
            raise InputError("r must be >= 1")
        if not (self.test_error >= 0 or math.isnan(self.test_error)):
            raise InputError("test_error must be non-negative")

    @property
    def failed(self) -> bool:
        return math.isnan(self.test_error)

    @property
    def key(self):
        return (METHODS.index(self.method), self.r, self.p)


def _arrays(sets):
    if isinstance(sets, DatasetCatalog):
        sets = [S for _, S in sets.test]
    out = [S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=np.float64) for S in sets]
    if not out:
        raise InputError("no test datasets given")
    return out


def relative_errors(references, reconstructions) -> np.ndarray:
    """``||S_i - S~_i||_F^2 / ||S_i||_F^2`` for each pair."""
    refs, recs = _arrays(references), _arrays(reconstructions)
    if len(refs) != len(recs):
        raise InputError("need one reconstruction per reference dataset")
    out = []
    for S, R in zip(refs, recs):
        if S.shape != R.shape:
            raise InputError(f"shape mismatch {S.shape} vs {R.shape}")
        out.append(np.sum((S - R) ** 2) / np.sum(S * S))
    return np.array(out)


def mean_relative_error(references, reconstructions) -> float:
    """Mean of :func:`relative_errors` over all datasets."""
    return float(np.mean(relative_errors(references, reconstructions)))


def reconstruct(model: ManifoldModel, S, encoder: str = "linear", nls=None, workers=None) -> np.ndarray:
    """Encode then decode raw (uncentered) snapshots.

    ``encoder="linear"`` uses ``V^T (s - c)``; ``"nonlinear"`` solves the
    per-sample least-squares problem (:func:`encode_am`).
    """
    X = S.data if isinstance(S, SnapshotMatrix) else np.asarray(S, dtype=np.float64)
    if encoder == "linear":
        S_hat = encode_pod(model, X)
    elif encoder == "nonlinear":
        S_hat = encode_am(model, X, nls, workers=workers)
    else:
        raise InputError(f"unknown encoder {encoder!r}")
    return decode(model, S_hat)


def representation_error(model: ManifoldModel, test_sets, encoder: str = "linear", nls=None, workers=None) -> float:
    """Mean relative squared reconstruction error over unseen datasets.

    ``test_sets`` is a :class:`DatasetCatalog` (its test split is used) or a
    list of raw snapshot matrices. Norms are taken on the raw states; the
    model's centering (the training mean) is added back by the decoder.
    """
    refs = _arrays(test_sets)
    recs = [reconstruct(model, S, encoder, nls, workers) for S in refs]
    return mean_relative_error(refs, recs)


# Sweep -----------------------------------------------------------------------
def run_sweep(
    catalog: DatasetCatalog,
    r_list=(2, 4, 6, 8, 10, 12, 14),
    p_list=(2, 3, 4),
    q_rule=None,
    gamma: float = 500.0,
    am_cfg: AmConfig | None = None,
    r_total: int = 82,
    am_encoder: str = "nonlinear",
    workers: int | None = None,
    traces: dict | None = None,
    models: dict | None = None,
):
    """Test errors of POD, POD-based manifold and AM manifold over a grid.

    For every ``r`` one ``pod`` record is produced, and for every ``p`` one
    ``manifold_pod`` and one ``manifold_am`` record, with
    ``q = q_rule(r)`` (default ``r_total - r``). The POD-based manifold uses
    the linear encoder, as in its training; the AM manifold uses
    ``am_encoder``. Fits that raise are recorded as failed cells.

    If ``traces`` is a dict it is filled with the AM trace of each
    ``(r, p)`` cell; ``models`` likewise receives every fitted model under
    ``(method, r, p)``.

    Returns
    -------
    list of ErrorSweepRecord, sorted by (method, r, p).
    """
    am_cfg = am_cfg or AmConfig()
    q_rule = q_rule or (lambda r: r_total - r)
    Sc, c = center(catalog.training_matrix())
    n, k = Sc.shape
    q_max = max(q_rule(r) + r for r in r_list)
    if q_max > min(n, k):
        raise InputError(f"r + q = {q_max} exceeds min(n, k) = {min(n, k)}")
    basis = compute_pod(Sc, q_max)
    tests = _arrays(catalog)
    workers = workers or default_workers()

    def pod_cell(r):
        model = pod_model(basis, r, c)
        if models is not None:
            models[("pod", r, 0)] = model
        err = representation_error(model, tests)
        return [ErrorSweepRecord("pod", r, 0, 0, 0.0, err)]

    def manifold_cell(r, p):
        q = q_rule(r)
        out = []
        try:
            init = fit_pod_manifold(Sc, r, q, p, gamma, centering=c, basis=basis)
            err = representation_error(init[0], tests, "linear")
            out.append(ErrorSweepRecord("manifold_pod", r, p, q, gamma, err))
            if models is not None:
                models[("manifold_pod", r, p)] = init[0]
        except Exception as exc:  # failed cells are reported, not fatal
            log.warning("manifold_pod r=%d p=%d failed: %s", r, p, exc)
            out.append(ErrorSweepRecord("manifold_pod", r, p, q, gamma, math.nan, 0, False, str(exc)))
            out.append(ErrorSweepRecord("manifold_am", r, p, q, gamma, math.nan, 0, False, "no initialization"))
            return out
        try:
            model, _, trace = fit_am(Sc, r, q, p, gamma, am_cfg, init=init)
            err = representation_error(model, tests, am_encoder, am_cfg.nls)
            out.append(ErrorSweepRecord("manifold_am", r, p, q, gamma, err, trace.cycles, trace.converged))
            if traces is not None:
                traces[(r, p)] = trace
            if models is not None:
                models[("manifold_am", r, p)] = model
        except Exception as exc:
            log.warning("manifold_am r=%d p=%d failed: %s", r, p, exc)
            out.append(ErrorSweepRecord("manifold_am", r, p, q, gamma, math.nan, 0, False, str(exc)))
        log.info("r=%d p=%d done: %s", r, p, [f"{x.method}={x.test_error:.3e}" for x in out])
        return out

    jobs = [(pod_cell, (r,)) for r in r_list] + [(manifold_cell, (r, p)) for r in r_list for p in p_list]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda j: j[0](*j[1]), jobs))
    else:
        results = [fn(*args) for fn, args in jobs]
    return sorted((rec for cell in results for rec in cell), key=lambda rec: rec.key)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def write_records_csv(records, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for rec in records:
        d = asdict(rec)
        w.writerow([_fmt(d[f]) for f in SWEEP_FIELDS])
    atomic_write_bytes(path, buf.getvalue().encode())


def read_records_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                ErrorSweepRecord(
                    row["method"],
                    int(row["r"]),
                    int(row["p"]),
                    int(row["q"]),
                    float(row["gamma"]),
                    float(row["test_error"]),
                    int(row["am_cycles"]),
                    row["converged"] == "true",
                )
            )
    return out


def space_time_field(x, t, reference, reconstructions: dict) -> np.ndarray:
    """Long-format table of a reference field and its reconstructions.

    Returns a structured array with fields ``x, t, reference`` and one field
    per key of ``reconstructions``, one row per (grid point, snapshot).
    """
    ref = reference.data if isinstance(reference, SnapshotMatrix) else np.asarray(reference)
    n, k = ref.shape
    names = ["x", "t", "reference", *reconstructions]
    out = np.empty(n * k, dtype=[(nm, "f8") for nm in names])
    X, T = np.meshgrid(np.asarray(x), np.asarray(t), indexing="ij")
    out["x"], out["t"], out["reference"] = X.ravel(), T.ravel(), ref.ravel()
    for name, R in reconstructions.items():
        R = np.asarray(R)
        if R.shape != ref.shape:
            raise InputError(f"reconstruction {name!r} has shape {R.shape}, expected {ref.shape}")
        out[name] = R.ravel()
    return out


def write_space_time_csv(table: np.ndarray, path):
    buf = io.StringIO()
    buf.write(",".join(table.dtype.names) + "\n")
    np.savetxt(buf, table.view((np.float64, len(table.dtype.names))), fmt="%.17g", delimiter=",")
    atomic_write_bytes(path, buf.getvalue().encode())
