"""Command-line interface.

Subcommands
-----------
fit        fit a count network and report sandwich confidence intervals
simulate   write simulated datasets from a JSON config
coverage   run a Monte-Carlo coverage study and write a CSV table
check-eta  test a covariance vector against the parameter space

Exit codes: 0 success, 1 data or validation error, 2 estimation failure,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .covariance import EtaVector, check_parameter_space, min_eigenvalue
from .errors import DataError, EstimationError, ExchnetError
from .fit import FitOptions, fit_pml
from .inference import MODES, run_inference
from .links import get_link
from .relational import (
    DyadicCovariateSpec,
    _atomic_write,
    build_design,
    load_dataset,
    load_model_spec,
    write_edgelist,
    write_node_table,
)
from .simulation import (
    EQ6_SPEC,
    CoverageConfig,
    coverage_experiment,
    draw_eq6_covariates,
    eta_from_error_params,
    gen_weakly_exch_errors,
    make_rng,
    simulate_counts,
)

log = logging.getLogger("exchnet")

COVERAGE_COLUMNS = ("n", "method", "coefficient", "coverage", "mc_se", "failures", "x_realization")
LOG_COLUMNS = ("n", "x_realization", "replication", "method", "coefficient",
               "estimate", "se", "ci_lo", "ci_hi", "covered", "status")


class UsageError(DataError):
    """Malformed command line."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2, which is reserved for estimation failures
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _alpha(text: str) -> float:
    a = float(text)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="exchnet", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"exchnet {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a network and report confidence intervals")
    f.add_argument("--edges", required=True, help="edge-list CSV: sender,receiver,count[,offset],...")
    f.add_argument("--nodes", help="node CSV: node,<variables>")
    f.add_argument("--spec", required=True, help="model spec JSON")
    f.add_argument("--link", help="override the link named in the model file")
    f.add_argument("--alpha", type=_alpha, default=0.05)
    f.add_argument("--mode", choices=MODES, default="model")
    f.add_argument("--eta", type=_floats, help="true eta for --mode oracle")
    f.add_argument("--c", type=float, help="fix the k-shorth constant instead of cross-validating")
    f.add_argument("--seed", type=int, default=0, help="fold-assignment seed for tuning")
    f.add_argument("--zero-fill", action="store_true", help="treat missing dyads as zero counts")
    f.add_argument("--max-iter", type=int, default=100)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--out", help="report JSON path (default: stdout)")
    f.add_argument("--table", help="coefficient CSV path")

    s = sub.add_parser("simulate", help="write simulated datasets")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")

    c = sub.add_parser("coverage", help="Monte-Carlo coverage study")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True, help="coverage CSV path")
    c.add_argument("--log", help="per-replication CSV path")
    c.add_argument("--manifest", help="manifest JSON path (default: <out>.manifest.json)")
    c.add_argument("--seed", type=int, help="override the config seed")
    c.add_argument("--threads", type=int, help="worker threads (default: $EXCHNET_THREADS or 1)")
    c.add_argument("--deterministic", action="store_true",
                   help="single-threaded run; outputs are identical either way")

    e = sub.add_parser("check-eta", help="check a covariance vector")
    e.add_argument("--eta", required=True, type=_floats, help="eta1,...,eta5")
    e.add_argument("--n", required=True, type=int)
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=False) + "\n"


def _clean(obj):
    # JSON has no NaN or infinity
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _emit(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None


def _require_file(path) -> None:
    if path is not None and not Path(path).is_file():
        raise DataError(f"file not found: {path}")


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _manifest(config_doc, seed, wall, extra=None) -> dict:
    m = {
        "tool": "exchnet",
        "version": __version__,
        "backend": BACKEND,
        "config_sha256": _config_hash(config_doc),
        "seed": seed,
        "wall_time_seconds": wall,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    m.update(extra or {})
    return m


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    for path in (args.edges, args.nodes, args.spec):
        _require_file(path)
    spec = load_model_spec(args.spec)
    link = get_link(args.link or spec.link)
    data = load_dataset(args.edges, spec, args.nodes, zero_fill=args.zero_fill)
    fit = fit_pml(data, link, FitOptions(max_iterations=args.max_iter, gradient_tol=args.tol))
    if not fit.converged:
        raise EstimationError(f"fit did not converge after {fit.iterations} iterations: {fit.message}")
    if args.mode == "oracle" and args.eta is None:
        raise DataError("--mode oracle requires --eta")
    res = run_inference(data, fit, args.mode, args.alpha, eta_true=args.eta, cv_seed=args.seed, c=args.c)
    report = {
        "tool": "exchnet",
        "version": __version__,
        "input": {
            "edges": str(args.edges),
            "nodes": None if args.nodes is None else str(args.nodes),
            "n": data.n,
            "n_dyads": data.n_dyads,
            "link": link.short_name,
            "offset": spec.offset,
            "terms": list(data.names),
        },
        "fit": {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "objective": fit.objective,
            "gradient_norm": fit.gradient_norm,
            "message": fit.message,
        },
        "inference": res.to_report(),
    }
    _emit(args.out, _dumps(report))
    if args.table:
        rows = report["inference"]["coefficients"]
        _atomic_write(args.table, _csv_text(rows, ("name", "estimate", "se", "ci_lo", "ci_hi")))
    return 0


def cmd_simulate(args) -> int:
    doc = _read_json(args.config)
    allowed = {"n", "beta", "link", "setting", "seed", "datasets", "covariates"}
    unknown = set(doc) - allowed
    if unknown:
        raise DataError(f"unknown simulate config keys {sorted(unknown)}")
    try:
        cfg = CoverageConfig(
            n=doc.get("n", 50), beta=doc.get("beta", CoverageConfig.beta),
            link=doc.get("link", "exp"), setting=doc.get("setting", "ii"),
            seed=doc.get("seed", 0) if args.seed is None else args.seed,
            covariates=doc.get("covariates", "eq6"),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from None
    ndata = int(doc.get("datasets", 1))
    if ndata < 1:
        raise DataError("datasets must be >= 1")
    params = cfg.error_params()
    eta = eta_from_error_params(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    written = []
    for n in cfg.n:
        nodes, edges = draw_eq6_covariates(n, make_rng(cfg.seed, n, 0, 0))
        X, names = build_design(nodes, edges, EQ6_SPEC, n=n)
        for k in range(ndata):
            rng = make_rng(cfg.seed, n, 0, k + 1)
            e = gen_weakly_exch_errors(params, n, rng)
            data = simulate_counts(X, cfg.beta, e, cfg.link, rng, names=names)
            d = out / f"n{n}_rep{k:03d}"
            d.mkdir(exist_ok=True)
            ids = [str(i + 1) for i in range(n)]
            write_edgelist(d / "edges.csv", n, data.y, variables=edges, node_ids=ids)
            write_node_table(d / "nodes.csv", nodes, ids)
            spec = DyadicCovariateSpec(EQ6_SPEC.terms, cfg.link)
            _atomic_write(d / "model.json", _dumps(spec.to_dict()))
            written.append(d.name)
    truth = {"beta": list(cfg.beta), "names": list(EQ6_SPEC.names), "eta": eta.to_dict(),
             "error_params": params.to_dict()}
    _atomic_write(out / "truth.json", _dumps(truth))
    _atomic_write(out / "manifest.json", _dumps(_manifest(doc, cfg.seed, time.perf_counter() - t0,
                                                          {"datasets": written})))
    log.info("wrote %d datasets to %s", len(written), out)
    return 0


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("EXCHNET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DataError(f"EXCHNET_THREADS must be an integer, got {env!r}") from None
    return 1


def cmd_coverage(args) -> int:
    doc = _read_json(args.config)
    if args.seed is not None:
        doc = {**doc, "seed": args.seed}
    threads = 1 if args.deterministic else _threads(args.threads)
    try:
        cfg = CoverageConfig.from_dict({**doc, "threads": threads})
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid coverage config: {exc}") from None
    res = coverage_experiment(cfg)
    _atomic_write(args.out, _csv_text(res.table, COVERAGE_COLUMNS))
    if args.log:
        _atomic_write(args.log, _csv_text(res.replications, LOG_COLUMNS))
    failures = sum(r["failures"] for r in res.table)
    manifest = _manifest(cfg.to_dict() | {"threads": None}, cfg.seed, res.wall_time, {
        "config": cfg.to_dict(),
        "eta_true": res.eta_true.to_dict(),
        "failures": failures,
        "outputs": {"table": str(args.out), "log": args.log},
    })
    _atomic_write(args.manifest or f"{args.out}.manifest.json", _dumps(manifest))
    return 0


def cmd_check_eta(args) -> int:
    if len(args.eta) != 5:
        raise DataError(f"--eta needs 5 values, got {len(args.eta)}")
    if args.n < 4:
        raise DataError("--n must be >= 4")
    eta = EtaVector.of(args.eta)
    chk = check_parameter_space(eta, args.n)
    out = {
        "eta": eta.to_dict(),
        "n": args.n,
        "valid": chk.valid,
        "violations": chk.violations,
        "lambda_min": min_eigenvalue(eta, args.n),
    }
    sys.stdout.write(_dumps(out))
    if not chk.valid:
        for v in chk.violations:
            sys.stderr.write(f"violation: {v}\n")
        return 1
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "coverage": cmd_coverage, "check-eta": cmd_check_eta}


def _error(kind: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except ExchnetError as exc:
        return _error(type(exc).__name__, exc, exc.exit_code)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ExchnetError as exc:
        return _error(type(exc).__name__, exc, exc.exit_code)
    except (OSError, ValueError) as exc:
        # bad paths and malformed values in user input
        return _error(type(exc).__name__, exc, 1)
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _error("InternalError", exc, 3)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
