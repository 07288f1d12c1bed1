"""Command-line driver: generate -> pod -> train -> evaluate -> sweep.

Every subcommand writes into ``--out DIR`` and records its resolved
configuration, inputs, outputs and timings in ``DIR/manifest.json``.
Option values resolve as: built-in defaults < ``--config FILE`` < flags.
A manifest is itself a valid ``--config`` file for the stage it records.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .alternating import AmConfig, NlsSettings, fit_am
from .errors import InputError, PolyManifoldError
from .evaluation import (
    reconstruct,
    relative_errors,
    run_sweep,
    space_time_field,
    write_records_csv,
    write_space_time_csv,
)
from .kdv import DEFAULT_TRAIN_MUS, KdvConfig, build_catalog, grid
from .manifold import fit_pod_manifold, load_model, load_pod, pod_model, save_model, save_pod
from .pod import compute_pod, rank_for_tolerance
from .snapshots import atomic_write_bytes, center, load_catalog, save_catalog

log = logging.getLogger("polymanifold")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def positive_int(v):
    v = int(v)
    if v < 1:
        raise ValueError
    return v


def nonneg_int(v):
    v = int(v)
    if v < 0:
        raise ValueError
    return v


def _float_list(v):
    return [float(x) for x in (v if isinstance(v, list) else [v])]


def _int_list(v):
    return [positive_int(x) for x in (v if isinstance(v, list) else [v])]


_ELEMENT_TYPES = {_float_list: float, _int_list: positive_int}

# (dest, flag, converter, default, help, argparse extras)
_NLS = [
    ("nls_max_iter", "--nls-max-iter", nonneg_int, 100, "LM iteration cap per sample", {}),
    ("nls_gtol", "--nls-gtol", float, 1e-10, "LM gradient-norm tolerance", {}),
    ("nls_damping", "--nls-damping", float, 1e-3, "initial LM damping", {}),
]
_AM = [
    ("tol", "--tol", float, 1e-3, "AM stopping tolerance on the retained-energy change", {}),
    ("max_cycles", "--max-cycles", positive_int, 100, "AM cycle cap", {}),
] + _NLS

OPTIONS = {
    "generate": [
        ("alpha", "--alpha", float, 8.0, "advection coefficient", {}),
        ("beta", "--beta", float, 1.0, "dispersion coefficient", {}),
        ("n_grid", "--n-grid", positive_int, 256, "grid points on [-pi, pi)", {}),
        ("t_end", "--t-end", float, 0.1, "final time", {}),
        ("save_dt", "--save-dt", float, 2e-4, "snapshot interval", {}),
        ("inner_dt", "--inner-dt", float, 5e-6, "integrator step", {}),
        ("train_mus", "--train-mus", _float_list, list(DEFAULT_TRAIN_MUS), "training soliton centers", {"nargs": "+"}),
        ("n_test", "--n-test", positive_int, 10, "number of random test centers", {}),
        ("mu_range", "--mu-range", _float_list, [0.0, 2.0], "test center range LO HI", {"nargs": 2}),
        ("seed", "--seed", int, 7, "RNG seed for the test centers", {}),
        ("literal_ic", "--literal-ic", bool, False, "sample the initial soliton without periodic wrapping",
         {"action": "store_true"}),
    ],
    "pod": [
        ("catalog", "--catalog", str, None, "catalog.json or its directory", {}),
        ("tol", "--tol", float, 1e-5, "projection-error tolerance for the rank report", {}),
        ("tol_mode", "--tol-mode", str, "relative", "relative or absolute", {"choices": ["relative", "absolute"]}),
    ],
    "train": [
        ("catalog", "--catalog", str, None, "catalog.json or its directory", {}),
        ("method", "--method", str, "manifold-am", "model family",
         {"choices": ["pod", "manifold-pod", "manifold-am"]}),
        ("r", "--r", positive_int, 6, "latent dimension", {}),
        ("q", "--q", nonneg_int, 76, "size of the correction basis", {}),
        ("p", "--p", int, 4, "polynomial degree (>= 2)", {}),
        ("gamma", "--gamma", float, 500.0, "ridge weight on Xi", {}),
    ] + _AM,
    "evaluate": [
        ("catalog", "--catalog", str, None, "catalog.json or its directory", {}),
        ("model", "--model", str, None, "model or POD container written by train", {}),
        ("encoder", "--encoder", str, "auto", "auto: nonlinear for AM models, linear otherwise",
         {"choices": ["auto", "linear", "nonlinear"]}),
        ("r", "--r", positive_int, None, "modes to use when --model is a POD container", {}),
    ] + _NLS,
    "sweep": [
        ("catalog", "--catalog", str, None, "catalog.json or its directory", {}),
        ("r_list", "--r-list", _int_list, [2, 4, 6, 8, 10, 12, 14], "latent dimensions", {"nargs": "+"}),
        ("p_list", "--p-list", _int_list, [2, 3, 4], "polynomial degrees", {"nargs": "+"}),
        ("r_total", "--r-total", positive_int, 82, "r + q held fixed", {}),
        ("gamma", "--gamma", float, 500.0, "ridge weight on Xi", {}),
        ("am_encoder", "--am-encoder", str, "nonlinear", "test-time encoder for AM models",
         {"choices": ["linear", "nonlinear"]}),
        ("field_r", "--field-r", positive_int, 6, "r of the space-time comparison field", {}),
        ("field_p", "--field-p", int, 4, "p of the space-time comparison field", {}),
        ("field_mu", "--field-mu", float, 1.9298, "test center closest to this value is exported", {}),
    ] + _AM,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="polymanifold", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--out", required=True, help="run directory")
        sp.add_argument("--config", help="JSON file of option values (flags override it)")
        for dest, flag, conv, default, help_, extra in opts:
            kw = dict(extra)
            if "action" not in kw:
                kw["type"] = _ELEMENT_TYPES.get(conv, conv)
            sp.add_argument(flag, dest=dest, default=argparse.SUPPRESS, help=f"{help_} (default: {default})", **kw)
    return parser


def _load_config(path, command):
    doc = json.loads(Path(path).read_text())
    if "stages" in doc:  # a manifest
        doc = doc["stages"].get(command, {}).get("config", {})
    elif command in doc and isinstance(doc[command], dict):
        doc = doc[command]
    return doc


def resolve(args) -> dict:
    """Merge defaults, config file and explicit flags for ``args.command``."""
    opts = OPTIONS[args.command]
    values = {dest: default for dest, _, _, default, _, _ in opts}
    known = set(values)
    if getattr(args, "config", None):
        for key, val in _load_config(args.config, args.command).items():
            key = key.replace("-", "_")
            if key in known:
                values[key] = val
    for dest in known:
        if hasattr(args, dest):
            values[dest] = getattr(args, dest)
    for dest, flag, conv, _, _, _ in opts:
        val = values[dest]
        if val is None:
            continue
        try:
            values[dest] = conv(val) if conv is not bool else bool(val)
        except (TypeError, ValueError):
            raise UsageError(f"invalid value for {flag}: {val!r}") from None
    return values


def _echo(v):
    """Manifest form of a value: floats as '%.17g' strings."""
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, (list, tuple)):
        return [_echo(x) for x in v]
    return v


def _write_manifest(out: Path, command, values, inputs, outputs, seeds, timings, extra=None):
    path = out / "manifest.json"
    doc = json.loads(path.read_text()) if path.exists() else {"tool": "polymanifold", "stages": {}}
    doc["version"] = __version__
    stage = {
        "config": {k: _echo(v) for k, v in values.items()},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seeds": seeds,
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    if extra:
        stage.update(extra)
    doc["stages"][command] = stage
    atomic_write_bytes(path, (json.dumps(doc, indent=2) + "\n").encode())
    return path


def _require(values, *names):
    for name in names:
        if values.get(name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _am_config(v):
    return AmConfig(v["tol"], v["max_cycles"], NlsSettings(v["nls_max_iter"], v["nls_gtol"], v["nls_damping"]))


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(("%.17g" % x) if isinstance(x, float) else str(x) for x in row))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


# Subcommands -----------------------------------------------------------------
def cmd_generate(v, out: Path):
    lo, hi = v["mu_range"]
    try:
        base = KdvConfig(v["alpha"], v["beta"], v["n_grid"], v["t_end"], v["save_dt"], 0.0, v["inner_dt"],
                         not v["literal_ic"])
    except InputError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    catalog = build_catalog(v["train_mus"], v["n_test"], (lo, hi), v["seed"], base)
    t1 = time.perf_counter()
    cat_path = save_catalog(catalog, out)
    outputs = [cat_path] + [out / f"{s}/{s}_{i:03d}.pmdr" for s in ("train", "test")
                            for i in range(len(getattr(catalog, s)))]
    log.info("generated %d train and %d test matrices", len(catalog.train), len(catalog.test))
    return [], outputs, {"test_mu_seed": v["seed"]}, {"simulate": t1 - t0}, {
        "test_mus": [_echo(mu) for mu, _ in catalog.test]}


def _training(v):
    _require(v, "catalog")
    catalog = load_catalog(v["catalog"])
    Sc, c = center(catalog.training_matrix())
    return catalog, Sc, c


def cmd_pod(v, out: Path):
    t0 = time.perf_counter()
    _, Sc, c = _training(v)
    basis = compute_pod(Sc)
    rank = rank_for_tolerance(basis, v["tol"], v["tol_mode"])
    t1 = time.perf_counter()
    s = basis.singular_values
    sv_path = out / "singular_values.csv"
    _write_csv(sv_path, ["index", "sigma", "sigma_normalized"],
               [(i + 1, float(x), float(x / s[0]) if s[0] else 0.0) for i, x in enumerate(s)])
    pod_path = out / "pod.pmdc"
    save_pod(basis, pod_path, c)
    print(f"rank for tol={v['tol']:g} ({v['tol_mode']}): {rank}")
    return [v["catalog"]], [sv_path, pod_path], {}, {"svd": t1 - t0}, {"rank_for_tolerance": rank}


def cmd_train(v, out: Path):
    if v["p"] < 2:
        raise UsageError("--p must be >= 2")
    if v["gamma"] < 0:
        raise UsageError("--gamma must be >= 0")
    t0 = time.perf_counter()
    _, Sc, c = _training(v)
    r, q, p, gamma = v["r"], v["q"], v["p"], v["gamma"]
    method = v["method"]
    bound = min(Sc.shape)
    if r + (q if method != "pod" else 0) > bound:
        raise UsageError(f"r + q = {r + q} exceeds the rank bound min(n, k) = {bound}")
    outputs, extra = [], {"method": method}
    if method == "pod":
        basis = compute_pod(Sc, r)
        path = out / "model.pmdc"
        save_pod(basis, path, c, r)
        outputs.append(path)
    else:
        init = fit_pod_manifold(Sc, r, q, p, gamma, centering=c)
        model = init[0]
        if method == "manifold-am":
            model, _, trace = fit_am(Sc, r, q, p, gamma, _am_config(v), init=init)
            trace_path = out / "trace.csv"
            _write_csv(trace_path, ["cycle", "e", "objective"], [(i, float(e), float(J)) for i, e, J in trace.rows()])
            outputs.append(trace_path)
            extra.update(am_cycles=trace.cycles, converged=trace.converged, warnings=trace.warnings)
            log.info("AM finished after %d cycles (converged=%s)", trace.cycles, trace.converged)
        path = out / "model.pmdc"
        save_model(model, path)
        outputs.insert(0, path)
    return [v["catalog"]], outputs, {}, {"train": time.perf_counter() - t0}, extra


def cmd_evaluate(v, out: Path):
    _require(v, "catalog", "model")
    t0 = time.perf_counter()
    catalog = load_catalog(v["catalog"])
    try:
        model = load_model(v["model"])
    except InputError:
        basis, c = load_pod(v["model"])
        model = pod_model(basis, v["r"] or basis.r_max, c)
    encoder = v["encoder"]
    if encoder == "auto":
        encoder = "nonlinear" if model.method == "manifold_am" else "linear"
    nls = NlsSettings(v["nls_max_iter"], v["nls_gtol"], v["nls_damping"])
    refs = [S for _, S in catalog.test]
    recs = [reconstruct(model, S, encoder, nls) for S in refs]
    errs = relative_errors(refs, recs)
    result = {
        "method": model.method,
        "encoder": encoder,
        "r": model.r,
        "q": model.q,
        "p": model.p if model.method != "pod" else 0,
        "test_error": _echo(float(errs.mean())),
        "per_dataset": [{"mu": _echo(mu), "error": _echo(float(e))} for (mu, _), e in zip(catalog.test, errs)],
    }
    path = out / "evaluation.json"
    atomic_write_bytes(path, (json.dumps(result, indent=2) + "\n").encode())
    print(f"{model.method} ({encoder} encoder): test error {errs.mean():.6e}")
    return [v["catalog"], v["model"]], [path], {}, {"evaluate": time.perf_counter() - t0}, {"encoder": encoder}


def cmd_sweep(v, out: Path):
    _require(v, "catalog")
    if any(p < 2 for p in v["p_list"]):
        raise UsageError("--p-list entries must be >= 2")
    t0 = time.perf_counter()
    catalog = load_catalog(v["catalog"])
    traces, models = {}, {}
    records = run_sweep(catalog, v["r_list"], v["p_list"], None, v["gamma"], _am_config(v), v["r_total"],
                        v["am_encoder"], traces=traces, models=models)
    t1 = time.perf_counter()
    sweep_path = out / "sweep.csv"
    write_records_csv(records, sweep_path)
    outputs = [sweep_path]

    # iteration counts, one row per p
    cyc = {(rec.r, rec.p): rec.am_cycles for rec in records if rec.method == "manifold_am"}
    cycles_path = out / "am_cycles.csv"
    _write_csv(cycles_path, ["p"] + [f"r={r}" for r in v["r_list"]],
               [[p] + [cyc.get((r, p), "") for r in v["r_list"]] for p in v["p_list"]])
    outputs.append(cycles_path)

    fr, fp = v["field_r"], v["field_p"]
    if ("pod", fr, 0) in models and ("manifold_am", fr, fp) in models:
        i = int(np.argmin([abs(mu - v["field_mu"]) for mu, _ in catalog.test]))
        mu, S = catalog.test[i]
        recon = {
            "pod": reconstruct(models[("pod", fr, 0)], S),
            "manifold_pod": reconstruct(models[("manifold_pod", fr, fp)], S),
            "manifold_am": reconstruct(models[("manifold_am", fr, fp)], S, v["am_encoder"], _am_config(v).nls),
        }
        cfg = catalog.config
        kcfg = KdvConfig(**{key: cfg[key] for key in ("alpha", "beta", "n_grid", "t_end", "save_dt", "inner_dt")
                            if key in cfg})
        t = np.arange(S.k) * kcfg.save_dt
        field_path = out / "field.csv"
        write_space_time_csv(space_time_field(grid(kcfg), t, S, recon), field_path)
        outputs.append(field_path)
        log.info("field for mu=%.4f written", mu)
    failed = sum(rec.failed for rec in records)
    if failed == len(records):
        raise RuntimeError("every sweep cell failed")
    extra = {"am_encoder": v["am_encoder"], "n_records": len(records), "failed_cells": failed}
    return [v["catalog"]], outputs, {}, {"sweep": t1 - t0, "exports": time.perf_counter() - t1}, extra


COMMANDS = {
    "generate": cmd_generate,
    "pod": cmd_pod,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        values = resolve(args)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        inputs, outputs, seeds, timings, extra = COMMANDS[args.command](values, out)
        timings["total"] = time.perf_counter() - t0
        _write_manifest(out, args.command, values, inputs, outputs, seeds, timings, extra)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"polymanifold {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PolyManifoldError, RuntimeError, OSError, ValueError, KeyError) as exc:
        print(f"polymanifold {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
