"""Command-line front end: analyze, norm, simulate, sweep.

Reports print to stdout as canonical JSON (sorted keys, two-space
indent, no timestamp, no thread count — identical flag sets give
byte-identical stdout).  With --output-dir the same report lands in
report.json next to manifest.json (which carries the UTC timestamp) and
CSV mirrors of the tabular blocks; every written file names the
manifest that produced it.

Exit codes: 0 = report computed (whatever the verdict); 2 = input error
(parse, dimensions, domain, bad flags); 3 = numerical failure (unstable
at the requested alpha where a closed form is required, no convergence,
singular operator) or an overflow-dominated ensemble (> 1% of paths
aborted).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    InternalInconsistencyError,
    NotStableError,
    ParseError,
    SingularOperatorError,
)
from .model import PSD_TOL, SymMatrix, as_weight, load_model
from .norms import (
    counter_discount_bound,
    norm_report,
    power_norm,
    v_bar_bound,
    vanishing_discount_sweep,
)
from .ops import op_varpi, spectral_radius
from .sim import (
    NOISE_KINDS,
    SimConfig,
    check_decay,
    estimate_abel_energy,
    estimate_cesaro_power,
    simulate_paths,
    validate_representation,
)
from .solver import critical_alpha, radius_below_one, solve_lyapunov
from .stability import check_detectability_with_G, check_stability, search_detectability

#: Fraction of aborted paths above which a simulate run exits 3.
ABORT_FRACTION_LIMIT = 0.01

_INPUT_ERRORS = (
    ParseError,
    DimensionError,
    DomainError,
    ValueError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
)
_NUMERICAL_ERRORS = (
    NotStableError,
    ConvergenceError,
    SingularOperatorError,
    InternalInconsistencyError,
    np.linalg.LinAlgError,
)

SWEEP_COLUMNS = [
    "alpha",
    "status",
    "spectral_radius",
    "varpi_L",
    "h2_discounted",
    "abel_gap",
    "dist_to_L1",
]
DECAY_COLUMNS = ["k", "energy", "std_error", "level", "bound", "violated"]


def _jsonable(value):
    """Recursively convert report values to JSON-safe types.

    Non-finite floats become None: the canonical reports must be valid
    strict JSON.
    """
    if isinstance(value, SymMatrix):
        return _jsonable(value.entries)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if np.isfinite(f) else None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            f.name: _jsonable(getattr(value, f.name))
            for f in dataclasses.fields(value)
        }
    return value


def _parse_vector(text, n, what="x0"):
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"{what} must be a comma-separated list of numbers") from None
    if not values:
        raise ValueError(f"{what} must be a comma-separated list of numbers")
    if len(values) == 1 and n > 1:
        return np.full(n, values[0])
    if len(values) != n:
        raise DimensionError(f"{what} must have {n} entries, got {len(values)}")
    return np.asarray(values)


def _parse_alpha_list(text):
    try:
        alphas = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError("alpha list must be comma-separated numbers") from None
    if not alphas:
        raise ValueError("alpha list must be comma-separated numbers")
    if any(a <= 0 for a in alphas):
        raise ValueError("alpha must be positive")
    return alphas


def _load_weight(path, n):
    """Load a weight matrix Q from a JSON file and require PSD."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from None
    Q = as_weight(np.asarray(data, dtype=float), n)
    if not SymMatrix(Q).is_psd(PSD_TOL):
        raise ValueError("Q must be positive semidefinite")
    return Q


def _load_gain(path, n, p):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from None
    G = np.atleast_2d(np.asarray(data, dtype=float))
    if G.shape != (n, p):
        raise DimensionError(f"G must have shape ({n}, {p}), got {G.shape}")
    return G


def _positive_alpha(text):
    try:
        alpha = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid alpha: {text!r}") from None
    if alpha <= 0:
        raise argparse.ArgumentTypeError("alpha must be positive")
    return alpha


def _resolve_threads(args):
    env = os.environ.get("CSVIU_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"CSVIU_THREADS must be an integer, got {env!r}") from None
    if args.threads is not None:
        if args.threads < 1:
            raise ValueError("threads must be a positive integer")
        return args.threads
    return os.cpu_count() or 1


def _manifest(command, args, config):
    return {
        "command": command,
        "model_path": args.model,
        "config": _jsonable(config),
        "tool_version": __version__,
    }


def _write_csv(path, manifest_name, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest: {manifest_name}\n")
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in columns})


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _dump_trajectories(path, manifest_name, ensemble):
    X = ensemble.X
    Y = ensemble.outputs()
    n, p = X.shape[2], Y.shape[2]
    columns = (
        ["path", "k"]
        + [f"x{i}" for i in range(n)]
        + [f"y{i}" for i in range(p)]
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest: {manifest_name}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for j in range(X.shape[0]):
            for k in range(X.shape[1]):
                writer.writerow(
                    [j, k]
                    + [repr(float(v)) for v in X[j, k]]
                    + [repr(float(v)) for v in Y[j, k]]
                )


def _emit(report, args, tables=None, ensemble=None):
    """Print the canonical report; mirror it to --output-dir when given."""
    out_dir = getattr(args, "output_dir", None)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        manifest_name = "manifest.json"
        manifest = dict(report["manifest"])
        manifest["output_dir"] = out_dir
        manifest["timestamp"] = datetime.now(timezone.utc).isoformat()
        with open(os.path.join(out_dir, manifest_name), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        filed = dict(report)
        filed["manifest_file"] = manifest_name
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(filed, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, (columns, rows) in (tables or {}).items():
            _write_csv(os.path.join(out_dir, name), manifest_name, columns, rows)
        if ensemble is not None:
            _dump_trajectories(
                os.path.join(out_dir, "trajectories.csv"), manifest_name, ensemble
            )
    print(json.dumps(report, indent=2, sort_keys=True))


def cmd_analyze(args):
    model = load_model(args.model)
    if args.alpha <= 0:
        raise ValueError("alpha must be positive")
    Q = _load_weight(args.Q, model.n) if args.Q else None

    stability = check_stability(model, args.alpha)
    if args.G:
        G = _load_gain(args.G, model.n, model.p)
        detect = check_detectability_with_G(model, args.alpha, G)
    else:
        detect = search_detectability(model, args.alpha, budget=args.budget)

    lyapunov = None
    if stability.verdict != "not_stable":
        Qm = Q if Q is not None else model.C.T @ model.C
        solution = solve_lyapunov(model, args.alpha, Qm)
        lyapunov = {
            "L": solution.L,
            "method": solution.method,
            "residual": solution.residual,
            "varpi_L": op_varpi(model, solution.L.entries),
        }

    report = _jsonable(
        {
            "command": "analyze",
            "manifest": _manifest(
                "analyze",
                args,
                {"alpha": args.alpha, "Q": Q if Q is not None else "C^T C"},
            ),
            "stability": stability,
            "detectability": detect,
            "alpha_bar": critical_alpha(model),
            "lyapunov": lyapunov,
        }
    )
    _emit(report, args)
    return 0


def cmd_norm(args):
    model = load_model(args.model)
    Q = _load_weight(args.Q, model.n) if args.Q else None

    if args.sweep is not None:
        alphas = _parse_alpha_list(args.sweep) if args.sweep != "" else None
        rows = vanishing_discount_sweep(model, Q, alphas)
        report = _jsonable(
            {
                "command": "norm",
                "manifest": _manifest(
                    "norm",
                    args,
                    {
                        "sweep": [r["alpha"] for r in rows],
                        "Q": Q if Q is not None else "C^T C",
                    },
                ),
                "sweep": rows,
            }
        )
        _emit(report, args, tables={"sweep.csv": (SWEEP_COLUMNS, report["sweep"])})
        return 0

    if args.power:
        value = power_norm(model, Q)
        report = _jsonable(
            {
                "command": "norm",
                "manifest": _manifest(
                    "norm", args, {"power": True, "Q": Q if Q is not None else "C^T C"}
                ),
                "power_norm": value,
            }
        )
        _emit(report, args)
        return 0

    rep = norm_report(model, args.alpha, Q)
    body = _jsonable(rep)
    if (
        args.alpha >= 1.0
        and args.kappa is not None
        and radius_below_one(args.alpha * spectral_radius(model.A))
    ):
        x0 = (
            _parse_vector(args.x0, model.n)
            if args.x0
            else np.zeros(model.n)
        )
        body["counter_bound_value"] = _jsonable(
            counter_discount_bound(model, args.alpha, Q, x0, args.kappa)
        )
    report = {
        "command": "norm",
        "manifest": _jsonable(
            _manifest(
                "norm",
                args,
                {
                    "alpha": args.alpha,
                    "Q": Q if Q is not None else "C^T C",
                    "x0": args.x0,
                    "kappa": args.kappa,
                },
            )
        ),
        "norms": body,
    }
    _emit(report, args)
    return 0


def cmd_simulate(args):
    model = load_model(args.model)
    Q = _load_weight(args.Q, model.n) if args.Q else None
    Qm = as_weight(Q, model.n) if Q is not None else model.C.T @ model.C
    x0 = _parse_vector(args.x0, model.n) if args.x0 else np.zeros(model.n)
    threads = _resolve_threads(args)

    cfg = SimConfig(
        n_paths=args.paths,
        horizon=args.horizon,
        seed=args.seed,
        noise_kind=args.noise,
        x0=x0,
    )
    ensemble = simulate_paths(model, cfg, threads=threads)
    abort_fraction = len(ensemble.aborted) / cfg.n_paths

    abel = estimate_abel_energy(ensemble, Qm, args.alpha)
    abel_block = _jsonable(abel)
    if args.alpha < 1.0 and not np.any(x0):
        try:
            closed = float(args.alpha / (1.0 - args.alpha)) * op_varpi(
                model, solve_lyapunov(model, args.alpha, Qm).L.entries
            )
            abel_block["closed_form"] = closed
            abel_block["z_score"] = (
                (abel.value - closed) / abel.std_error if abel.std_error > 0 else None
            )
        except NotStableError:
            pass
    estimates = {"abel": abel_block}

    if args.alpha == 1.0:
        ces = estimate_cesaro_power(ensemble, Qm)
        ces_block = _jsonable(ces)
        try:
            closed = power_norm(model, Qm)
            ces_block["closed_form"] = closed
            ces_block["z_score"] = (
                (ces.value - closed) / ces.std_error if ces.std_error > 0 else None
            )
        except NotStableError:
            pass
        estimates["cesaro"] = ces_block

    report = {
        "command": "simulate",
        "manifest": _jsonable(
            _manifest(
                "simulate",
                args,
                {
                    "alpha": args.alpha,
                    "paths": cfg.n_paths,
                    "horizon": cfg.horizon,
                    "seed": cfg.seed,
                    "noise_kind": cfg.noise_kind,
                    "x0": cfg.x0,
                    "Q": Q if Q is not None else "C^T C",
                },
            )
        ),
        "estimates": estimates,
        "aborted_paths": len(ensemble.aborted),
        "abort_fraction": abort_fraction,
    }

    tables = {}
    if args.validate_representation:
        report["representation"] = _jsonable(
            validate_representation(model, cfg, args.alpha, Qm)
        )
    if args.check_decay:
        rows = check_decay(model, cfg, args.alpha, Qm)
        report["decay"] = _jsonable(rows)
        tables["decay.csv"] = (DECAY_COLUMNS, report["decay"])

    if args.dump and not args.output_dir:
        raise ValueError("--dump requires --output-dir")
    _emit(report, args, tables=tables, ensemble=ensemble if args.dump else None)
    if abort_fraction > ABORT_FRACTION_LIMIT:
        print(
            f"error: {len(ensemble.aborted)} of {cfg.n_paths} paths aborted "
            f"({100.0 * abort_fraction:.2f}% > {100.0 * ABORT_FRACTION_LIMIT:.0f}%)",
            file=sys.stderr,
        )
        return 3
    return 0


def cmd_sweep(args):
    args.sweep = args.alphas if args.alphas is not None else ""
    args.power = False
    args.alpha = None
    args.x0 = None
    args.kappa = None
    return cmd_norm(args)


def _add_common(sub):
    sub.add_argument("model", help="path to a model JSON file")
    sub.add_argument("--Q", help="path to a JSON weight matrix (default: C^T C)")
    sub.add_argument(
        "--output-dir", help="directory for report.json, manifest.json, CSV mirrors"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csviu",
        description=(
            "Stability verdicts, discounted/long-run quadratic norms, and "
            "seeded Monte Carlo validation for CSVIU stochastic systems."
        ),
    )
    parser.add_argument("--version", action="version", version=f"csviu {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    p_analyze = subparsers.add_parser(
        "analyze", help="stability criteria, verdict, and detectability"
    )
    _add_common(p_analyze)
    p_analyze.add_argument("--alpha", type=float, required=True)
    p_analyze.add_argument("--G", help="path to a JSON output-injection gain (n x p)")
    p_analyze.add_argument(
        "--budget", type=int, default=100, help="random candidates for the G search"
    )
    p_analyze.set_defaults(func=cmd_analyze)

    p_norm = subparsers.add_parser(
        "norm", help="closed-form norm quantities at one alpha, or a sweep"
    )
    _add_common(p_norm)
    mode = p_norm.add_mutually_exclusive_group(required=True)
    mode.add_argument("--alpha", type=_positive_alpha)
    mode.add_argument("--power", action="store_true", help="long-run power norm")
    mode.add_argument(
        "--sweep",
        nargs="?",
        const="",
        metavar="ALPHAS",
        help="vanishing-discount table over a comma-separated alpha list",
    )
    p_norm.add_argument("--x0", help="comma-separated initial state (counter bound)")
    p_norm.add_argument(
        "--kappa", type=int, help="horizon for the counter-discount bound"
    )
    p_norm.set_defaults(func=cmd_norm)

    p_sim = subparsers.add_parser(
        "simulate", help="seeded Monte Carlo estimates with closed-form comparators"
    )
    _add_common(p_sim)
    p_sim.add_argument("--paths", type=int, required=True)
    p_sim.add_argument("--horizon", type=int, required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--alpha", type=_positive_alpha, required=True)
    p_sim.add_argument("--x0", help="comma-separated initial state (default: 0)")
    p_sim.add_argument("--noise", choices=NOISE_KINDS, default="gaussian")
    p_sim.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: all cores; CSVIU_THREADS overrides)",
    )
    p_sim.add_argument(
        "--validate-representation",
        action="store_true",
        help="Monte Carlo check of the backward-recursion identity",
    )
    p_sim.add_argument(
        "--check-decay",
        action="store_true",
        help="per-stage second-moment decay table",
    )
    p_sim.add_argument(
        "--dump",
        action="store_true",
        help="write trajectories.csv (requires --output-dir)",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = subparsers.add_parser("sweep", help="alias of norm --sweep")
    _add_common(p_sweep)
    p_sweep.add_argument(
        "--alphas", help="comma-separated alpha grid (default: built-in grid)"
    )
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
