"""Command-line front end: ``shapelim <command> [options] [out]``.

Every command that writes files leaves a single ``manifest.json`` in its
output directory.  Exit codes: 0 success, 2 invalid input, 3 a certificate
or acceptance check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .envelope import EnvelopeError, EnvelopeFunctionalTable, default_halfwidth, envelope_table
from .estimators import evaluate_fit, mode_of_fit
from .experiments.identities import identity_suite
from .experiments.montecarlo import MCError, MCRun, compare_to_limit, mc_mode, mc_pointwise
from .experiments.sampling import SamplingError, sample_model
from .limits import (
    absolute_minimax_constant,
    constants_table,
    minimax_mode_bound,
    peakedness_poly_root,
)
from .mle import fit_log_concave, verify_characterization
from .model import FAMILIES, ModelError, SampleError, load_sample, make_density_model

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3

# keys that steer the CLI itself rather than the computation
_META_KEYS = {"command", "config", "dump_config", "handler"}


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    def __init__(self, message: str, outputs: dict | None = None):
        super().__init__(message)
        self.outputs = outputs or {}


# ---------------------------------------------------------------------------
# argument helpers


def _json_obj(text: str) -> dict:
    try:
        val = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON ({exc.msg} at column {exc.colno})") from None
    if not isinstance(val, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return val


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_common(p: argparse.ArgumentParser, *, out_required: bool = True) -> None:
    p.add_argument("out", nargs="?", default=None,
                   help="output directory" + ("" if out_required else " (optional)"))
    p.add_argument("--config", help="JSON file of option values; explicit flags take precedence")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved parameter record as JSON and exit")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help="worker processes (default: $SHAPELIM_WORKERS or 1)")


def _add_model(p: argparse.ArgumentParser, *, x0: bool = True) -> None:
    p.add_argument("--family", choices=FAMILIES, default=None)
    p.add_argument("--params", type=_json_obj, default=None, help='family parameters as JSON, e.g. {"shape": 2}')
    if x0:
        p.add_argument("--x0", type=float, default=None, help="evaluation point (default: the mode)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapelim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"shapelim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="log-concave MLE of a sample with its certificate")
    _add_common(p, out_required=False)
    p.add_argument("--input", help="text file, one observation per line")
    _add_model(p, x0=False)
    p.add_argument("--n", type=_positive_int, default=None, help="sample size when drawing from --family")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--emit-curves", default=None, metavar="DIR",
                   help="write curves.csv and knots.csv (plot-ready) to DIR")
    p.add_argument("--grid", type=_positive_int, default=401, help="curve grid size")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("envelope", help="tabulate lower-envelope functionals")
    _add_common(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--K", type=float, default=None, help="half-width (default 3 for k=2, 2.2 otherwise)")
    p.add_argument("--h", type=float, default=0.005)
    p.add_argument("--reps", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_envelope)

    for name, help_, handler in (("mc", "pointwise Monte Carlo", cmd_mc),
                                 ("mode-mc", "Monte Carlo for the mode estimator", cmd_mode_mc)):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_model(p, x0=name == "mc")
        p.add_argument("--n", type=_int_list, default=None, help="comma-separated sample sizes")
        p.add_argument("--reps", type=_positive_int, default=200)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(handler=handler)

    p = sub.add_parser("compare", help="compare a Monte Carlo run with an envelope table")
    _add_common(p)
    p.add_argument("--mc", default=None, metavar="DIR", help="output directory of `mc` or `mode-mc`")
    p.add_argument("--limit-table", default=None, help="envelope CSV (its JSON sidecar is read if present)")
    p.add_argument("--n", type=int, default=None, help="sample size to compare (default: largest)")
    p.add_argument("--ks-max", type=float, default=None, help="fail (exit 3) if a non-mode row exceeds this KS")
    p.add_argument("--mode-ks-max", type=float, default=None, help="fail (exit 3) if the mode row exceeds this KS")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("minimax", help="minimax lower bound for the mode")
    _add_common(p)
    _add_model(p, x0=False)
    p.add_argument("--k-max", type=int, default=8, help="tabulate polynomial roots for even k up to this")
    p.set_defaults(handler=cmd_minimax)

    p = sub.add_parser("identities", help="closed-form identities against quadrature")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--intervals", type=_positive_int, default=20)
    p.add_argument("--j-max", type=int, default=6)
    p.set_defaults(handler=cmd_identities)

    p = sub.add_parser("table", help="limit constants for a model")
    _add_common(p)
    _add_model(p)
    p.add_argument("--printed-gammas", action="store_true",
                   help="also report the alternative gamma expressions")
    p.set_defaults(handler=cmd_table)
    return parser


# ---------------------------------------------------------------------------
# config, manifest and output helpers


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}:1: config must be a JSON object")
    return cfg


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        if cfg.get("command", args.command) != args.command:
            raise UsageError(f"{args.config}: config is for {cfg['command']!r}, not {args.command!r}")
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions} - _META_KEYS  # noqa: SLF001
        extra = sorted(set(cfg) - known - {"command"})
        if extra:
            raise UsageError(f"{args.config}: unknown keys {', '.join(extra)}")
        sp.set_defaults(**{k: v for k, v in cfg.items() if k != "command"})
        args = parser.parse_args(argv)
    return args


def param_record(args: argparse.Namespace) -> dict:
    rec = {k: v for k, v in vars(args).items() if k not in _META_KEYS}
    return {"command": args.command, **dict(sorted(rec.items()))}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _write_manifest(out: Path, args, started: str, inputs: list, outputs: list) -> None:
    _write_json(out / "manifest.json", {
        "command": args.command,
        "parameters": param_record(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": started,
        "finished": _now(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(p.name) for p in outputs),
    })


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command}: an output directory is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command}: --seed is required")
    return int(args.seed)


def _model(args):
    if not args.family:
        raise UsageError(f"{args.command}: --family is required")
    return make_density_model(args.family, args.params or {}, getattr(args, "x0", None))


def _write_csv(path: Path, header: list[str], cols: list[np.ndarray]) -> None:
    # adding 0.0 turns -0.0 into 0.0 so the files diff cleanly
    arr = np.column_stack([np.asarray(c, dtype=float) for c in cols]) + 0.0
    np.savetxt(path, arr, delimiter=",", header=",".join(header), comments="", fmt="%.17g",
               encoding="utf-8")


# ---------------------------------------------------------------------------
# commands; each returns (outputs, inputs, out_dir or None)


def cmd_fit(args):
    model = None
    inputs = []
    if args.input and args.family:
        raise UsageError("fit: give either --input or --family, not both")
    if args.input:
        if not os.path.exists(args.input):
            raise UsageError(f"fit: input file {args.input} not found")
        s = load_sample(args.input)
        inputs.append(Path(args.input))
    elif args.family:
        if args.n is None:
            raise UsageError("fit: --n is required with --family")
        model = make_density_model(args.family, args.params or {})
        s = sample_model(model, args.n, _need_seed(args))
    else:
        raise UsageError("fit: --input or --family is required")
    fit = fit_log_concave(s, tol=args.tol)
    rep = verify_characterization(fit)
    record = fit.to_dict(rep.summary())
    record["mode"] = mode_of_fit(fit)
    out_dir = args.out or args.emit_curves
    outputs = []
    if out_dir is None:
        print(json.dumps(record, indent=2))
    else:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "fit.json", record)
        outputs.append(out / "fit.json")
    if args.emit_curves:
        cd = Path(args.emit_curves)
        cd.mkdir(parents=True, exist_ok=True)
        lo, hi = s.span
        x = np.unique(np.concatenate((np.linspace(lo, hi, args.grid), fit.knots)))
        ev = evaluate_fit(fit, x)
        hz = np.where(ev.hazard_defined, ev.hazard, np.nan)
        header = ["x", "f_hat", "phi_hat", "F_hat", "hazard_hat"]
        cols = [x, ev.f, ev.phi, ev.F, hz]
        if model is not None:
            f0 = model.density(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                h0 = f0 / (1.0 - model.cdf(x))
            header += ["f0", "phi0", "F0", "hazard0"]
            cols += [f0, model.log_density(x), model.cdf(x), h0]
        _write_csv(cd / "curves.csv", header, cols)
        _write_csv(cd / "knots.csv", ["knot", "phi_hat"], [fit.knots, fit.values])
        outputs += [cd / "curves.csv", cd / "knots.csv"]
    if not (fit.converged and rep.passed):
        raise CheckFailed(f"fit certificate failed: {json.dumps(rep.summary())}",
                          {"out": out_dir, "outputs": outputs, "inputs": inputs})
    return outputs, inputs, Path(out_dir) if out_dir else None


def cmd_envelope(args):
    seed = _need_seed(args)
    out = _out_dir(args)
    K = default_halfwidth(args.k) if args.K is None else args.K
    try:
        table = envelope_table(args.k, K, args.h, args.reps, seed, workers=args.workers)
    except EnvelopeError as exc:
        raise CheckFailed(str(exc)) from None
    table.write(out / "envelope.csv", out / "envelope.json")
    return [out / "envelope.csv", out / "envelope.json"], [], out


def _run_mc(args, runner, stem):
    seed = _need_seed(args)
    if not args.n:
        raise UsageError(f"{args.command}: --n is required")
    m = _model(args)
    out = _out_dir(args)
    try:
        run = runner(m, args.n, args.reps, seed, workers=args.workers)
    except MCError as exc:
        raise CheckFailed(str(exc)) from None
    run.write(out / f"{stem}.csv", out / f"{stem}.json")
    return [out / f"{stem}.csv", out / f"{stem}.json"], [], out


def cmd_mc(args):
    return _run_mc(args, mc_pointwise, "mc")


def cmd_mode_mc(args):
    return _run_mc(args, lambda m, n, R, seed, workers: mc_mode(m, n, R, seed, workers=workers), "mode_mc")


def _find_mc(path: Path) -> tuple[Path, Path]:
    for stem in ("mc", "mode_mc"):
        c, j = path / f"{stem}.csv", path / f"{stem}.json"
        if c.exists() and j.exists():
            return c, j
    raise UsageError(f"compare: no mc.csv/mc.json or mode_mc.csv/mode_mc.json in {path}")


def cmd_compare(args):
    if not args.mc or not args.limit_table:
        raise UsageError("compare: --mc and --limit-table are required")
    mc_csv, mc_json = _find_mc(Path(args.mc))
    tab = Path(args.limit_table)
    if not tab.exists():
        raise UsageError(f"compare: limit table {tab} not found")
    side = tab.with_suffix(".json")
    inputs = [mc_csv, mc_json, tab] + ([side] if side.exists() else [])
    out = _out_dir(args)
    run = MCRun.read(mc_csv, mc_json)
    table = EnvelopeFunctionalTable.read(tab, side if side.exists() else None)
    try:
        report = compare_to_limit(run, table, args.n)
    except ValueError as exc:
        raise UsageError(f"compare: {exc}") from None
    bad = []
    for e, row in report["rows"].items():
        limit = args.mode_ks_max if e == "mode" else args.ks_max
        row["ks_max"] = limit
        if limit is not None and row["ks"] > limit:
            bad.append(f"{e}: KS {row['ks']:.4f} > {limit}")
    report["pass"] = not bad
    _write_json(out / "compare.json", report)
    if bad:
        raise CheckFailed("; ".join(bad), {"outputs": [out / "compare.json"], "inputs": inputs, "out": out})
    return [out / "compare.json"], inputs, out


def cmd_minimax(args):
    m = _model(args)
    out = _out_dir(args)
    m = m.with_x0(m.mode) if not m.at_mode else m
    report = {
        "model": m.spec(),
        "bound": minimax_mode_bound(m).as_dict(),
        "absolute_constant": absolute_minimax_constant(),
        "poly_roots": {str(k): peakedness_poly_root(k) for k in range(2, args.k_max + 1, 2)},
    }
    _write_json(out / "minimax.json", report)
    return [out / "minimax.json"], [], out


def cmd_identities(args):
    out = _out_dir(args)
    rep = identity_suite(seed=args.seed, n_intervals=args.intervals, j_max=args.j_max)
    _write_json(out / "identities.json", rep.as_dict())
    outputs = [out / "identities.json"]
    if not rep.passed():
        raise CheckFailed(f"identity check failed: moment error {rep.max_moment_err:.3g}, "
                          f"derivative error {rep.max_derivative_rel_err:.3g}",
                          {"outputs": outputs, "out": out})
    return outputs, [], out


def cmd_table(args):
    m = _model(args)
    out = _out_dir(args)
    _write_json(out / "constants.json", constants_table(m, printed=args.printed_gammas))
    return [out / "constants.json"], [], out


# ---------------------------------------------------------------------------


def run(argv=None) -> int:
    started = _now()
    try:
        args = parse(argv)
    except UsageError as exc:
        print(f"shapelim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.dump_config:
        print(json.dumps(param_record(args), indent=2))
        return EXIT_OK
    if args.config:
        extra_inputs = [Path(args.config)]
    else:
        extra_inputs = []
    try:
        outputs, inputs, out = args.handler(args)
    except (UsageError, ModelError, SampleError, ValueError) as exc:
        print(f"shapelim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckFailed, SamplingError) as exc:
        print(f"shapelim: check failed: {exc}", file=sys.stderr)
        info = getattr(exc, "outputs", {})
        if info.get("out") is not None:
            _write_manifest(Path(info["out"]), args, started, extra_inputs + info.get("inputs", []),
                            info.get("outputs", []))
        return EXIT_FAILED
    if out is not None:
        _write_manifest(out, args, started, extra_inputs + inputs, outputs)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
