"""Command-line interface: ``qsslab <subcommand> [options]``.

Subcommands: simulate, reduce, diagnose, sweep-scaling, gen-data, fit.
Series are written as CSV, structured results as JSON. Failures print a JSON
object ``{"error": kind, "message": ...}`` on stderr and exit with 2 (usage)
or 3 (numerical failure). Set ``QSSLAB_LOG=DEBUG`` (or INFO, WARNING, ...)
for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import recommend, scaling_sweep
from .errors import PreconditionViolated, QSSLabError, UsageError
from .estimation import (
    dataset_to_csv,
    fit_reduced,
    gen_synthetic,
    identifiability_report,
    read_dataset,
    sidecar_path,
)
from .model import config_to_dict, load_config, simulate
from .reductions import ReducedModel, parse_kind

log = logging.getLogger("qsslab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# output helpers -------------------------------------------------------------------

def _clean(obj):
    """Make ``obj`` strict-JSON serialisable (non-finite floats become null)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename; ``-`` means stdout."""
    if str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    if not directory.is_dir():
        raise UsageError(f"output directory does not exist: {directory}")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_with_sidecar(out, text: str, meta: dict) -> None:
    write_atomic(out, text)
    if str(out) != "-":
        write_atomic(sidecar_path(out), _dumps(meta))


# subcommands -------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    params, ics = load_config(args.config)
    traj = simulate(params, ics, args.t_end, coords=args.coords, rel_tol=args.tol, abs_tol=args.abs_tol)
    write_atomic(args.out, traj.to_csv(header=("z", "c", "e", "w"), t_inf=args.t_inf))
    log.info("simulate: %d steps to t=%g", len(traj.t) - 1, args.t_end)
    return 0


def cmd_reduce(args) -> int:
    params, ics = load_config(args.config)
    model = ReducedModel.build(parse_kind(args.model), params, ics, pslow_ic=args.pslow_ic)
    t = np.linspace(0.0, args.t_end, args.points)
    x = np.asarray(model.solve(t), dtype=float)
    lines = [f"t,{model.var}"] + [f"{a!r},{b!r}" for a, b in zip(t.tolist(), x.tolist())]
    meta = {"kind": model.kind.value, "var": model.var, "slow_ic": model.slow_ic,
            "params": config_to_dict(params, ics)}
    _write_with_sidecar(args.out, "\n".join(lines) + "\n", meta)
    return 0


def cmd_diagnose(args) -> int:
    params, ics = load_config(args.config)
    report = recommend(params, ics, args.tol)
    doc = report.to_dict()
    doc["config"] = config_to_dict(params, ics)
    write_atomic(args.out, _dumps(doc))
    return 0


def cmd_sweep_scaling(args) -> int:
    values = args.eps_hat
    if values is None:
        lo, hi, n = args.range
        values = np.logspace(math.log10(lo), math.log10(hi), int(n)).tolist()
    sweep = scaling_sweep(values, sigma=args.sigma, theta=args.theta)
    lines = ["eps_hat,min_distance"] + [
        f"{e!r},{d!r}" for e, d in zip(sweep.eps_hat.tolist(), sweep.min_distance.tolist())]
    meta = {"slope": sweep.slope, "slope_stderr": sweep.slope_stderr, "intercept": sweep.intercept,
            "sigma": args.sigma, "theta": args.theta, "eps_hat": sweep.eps_hat,
            "min_distance": sweep.min_distance, "min_time": sweep.min_time}
    _write_with_sidecar(args.out, "\n".join(lines) + "\n", meta)
    return 0


def cmd_gen_data(args) -> int:
    params, ics = load_config(args.config)
    t = np.linspace(0.0, args.t_end, args.points)
    ds = gen_synthetic(params, ics, args.observable, t, args.noise_sd, args.seed)
    if args.out == "-":
        raise UsageError("gen-data needs a file path for --out (a JSON sidecar is written next to it)")
    _write_with_sidecar(args.out, dataset_to_csv(ds), ds.meta())
    return 0


def _parse_fixed(items):
    out = {}
    for item in items or ():
        name, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--fixed expects name=value, got {item!r}")
        try:
            out[name] = float(val)
        except ValueError:
            raise UsageError(f"--fixed value for {name} is not a number") from None
    return out


def cmd_fit(args) -> int:
    ds = read_dataset(args.data)
    kind = parse_kind(args.model)
    if ds.observable != kind.var:
        raise PreconditionViolated(
            f"model {kind.value} predicts {kind.var!r} but the data observe {ds.observable!r}")
    res = fit_reduced(kind, ds, free=args.free, fixed=_parse_fixed(args.fixed), pslow_ic=args.pslow_ic)
    doc = res.to_dict()
    doc["identifiable"] = identifiability_report(kind)
    if ds.params is not None:
        doc["generating_params"] = asdict(ds.params)
    write_atomic(args.out, _dumps(doc))
    return 0


# parser ----------------------------------------------------------------------------------

def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _nonneg(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


def _count(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 2:
        raise argparse.ArgumentTypeError("need at least 2 points")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsslab", description="Zymogen activation kinetics: simulation, "
                "quasi-steady-state reductions, validity diagnostics and fitting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="integrate the full mass-action model")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--t-end", type=_positive, required=True)
    s.add_argument("--coords", choices=("zc", "wc", "full"), default="full")
    s.add_argument("--tol", type=_positive, default=1e-9, help="relative tolerance")
    s.add_argument("--abs-tol", type=_positive, default=1e-12)
    s.add_argument("--t-inf", action="store_true", help="append the t_inf = 1 - 1/ln(t+e) column")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reduce", help="solve a reduced model")
    s.add_argument("--config", required=True)
    s.add_argument("--model", required=True,
                   help="ClassicalZ, ClassicalW, StandardZ (sqssa), PSlowZ (pqssa), TotalW (tqssa), ReverseW (rqssa)")
    s.add_argument("--out", default="-")
    s.add_argument("--t-end", type=_positive, required=True)
    s.add_argument("--points", type=_count, default=201)
    s.add_argument("--pslow-ic", choices=("apex", "layer"), default="apex")
    s.set_defaults(func=cmd_reduce)

    s = sub.add_parser("diagnose", help="validity parameters and recommended reduction")
    s.add_argument("--config", required=True)
    s.add_argument("--tol", type=_positive, default=0.05, help="qualifier tolerance")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("sweep-scaling", help="bifurcation-distance scaling law")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--eps-hat", type=_positive, nargs="+")
    g.add_argument("--range", type=_positive, nargs=3, metavar=("LO", "HI", "N"))
    s.add_argument("--sigma", type=_positive, default=1.0)
    s.add_argument("--theta", type=_positive, default=1.0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_sweep_scaling)

    s = sub.add_parser("gen-data", help="synthetic time course from the full model")
    s.add_argument("--config", required=True)
    s.add_argument("--observable", choices=("z", "w", "c"), default="w")
    s.add_argument("--t-end", type=_positive, required=True)
    s.add_argument("--points", type=_count, default=50)
    s.add_argument("--noise-sd", type=_nonneg, default=0.0)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("fit", help="fit a reduced model to a dataset")
    s.add_argument("--data", required=True, help="CSV written by gen-data (sidecar alongside)")
    s.add_argument("--model", required=True)
    s.add_argument("--free", nargs="+", help="parameters to estimate (default: all identifiable)")
    s.add_argument("--fixed", nargs="+", metavar="NAME=VALUE")
    s.add_argument("--pslow-ic", choices=("apex", "layer"), default="layer")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_fit)
    return p


def _setup_logging():
    level = os.environ.get("QSSLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _report(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except QSSLabError as exc:
        return _report(exc.kind, str(exc), exc.exit_code)
    except ValueError as exc:
        return _report("UsageError", str(exc), 2)
    except OSError as exc:
        return _report("IOError", str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
