"""Command-line entry point: ``nsqn {run,sweep,theory,recurrence,pwl-bench}``.

Exit status is 0 on success, 1 for a configuration error and 2 when an
internal invariant check fails.  Every invocation writes a JSON manifest
(with all defaults spelled out) to the output directory, which defaults to
``$NSQN_OUTPUT_DIR`` or ``./nsqn_out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from decimal import Decimal, InvalidOperation

from . import __version__
from . import experiments as ex
from . import theory
from .linesearch import LineSearchParams
from .objectives import PaperAbs, SkewAbs, spec_to_dict
from .optimizer import RunParams, parse_method

OUTPUT_ENV = "NSQN_OUTPUT_DIR"
DEFAULT_OUTPUT = "nsqn_out"

log = logging.getLogger("nsqn")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_grid(text: str) -> list:
    """``lo:step:hi`` (inclusive, exact decimal steps) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"range must be lo:step:hi, got {text!r}")
            lo, step, hi = (Decimal(p) for p in parts)
            if step <= 0 or hi < lo:
                raise ConfigError(f"range needs step > 0 and hi >= lo, got {text!r}")
            count = int((hi - lo) / step)
            values = [lo + i * step for i in range(count + 1)]
            return [float(v) for v in values]
        return [float(Decimal(p)) for p in text.split(",") if p.strip()]
    except InvalidOperation:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def parse_int_grid(text: str) -> list:
    vals = parse_grid(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be finite and positive, got {text}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _add_common(p: argparse.ArgumentParser, *, search: bool = True) -> None:
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    if search:
        p.add_argument("--c1", type=float, default=0.01, help="Armijo parameter (default 0.01)")
        p.add_argument("--c2", type=float, default=0.5, help="Wolfe parameter (default 0.5)")
        p.add_argument("--max-iters", type=_positive_int, default=100_000, help="iteration limit (default 100000)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nsqn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="run methods from one shared start and export traces")
    p.add_argument("--objective", choices=("paper_abs", "skew_abs", "max_affine"), default="paper_abs")
    p.add_argument("--a", type=_positive_float, default=3.0)
    p.add_argument("--n", type=_positive_int, default=2)
    p.add_argument("--p", type=_positive_int, default=50, help="pieces, max_affine only")
    p.add_argument("--instance-seed", type=_nonneg_int, default=1, help="skew_abs vectors or max_affine instance")
    p.add_argument("--construction", choices=("vertex", "cone"), default="vertex")
    p.add_argument("--method", action="append", help="gradient | bfgs | lbfgs:<m>:<scaled|unscaled>; repeatable")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    _add_common(p)

    p = sub.add_parser("sweep", help="failure-rate sweep over a grid of a")
    p.add_argument("--objective", choices=("paper_abs", "skew_abs"), default="paper_abs")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--a", required=True, help="lo:step:hi or comma list")
    p.add_argument("--method", action="append", help="repeatable; default lbfgs:1:scaled")
    p.add_argument("--m", default=None, help="shorthand for lbfgs:<m>:scaled over a grid, e.g. 1:1:10")
    p.add_argument("--trials", type=_positive_int, default=200)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--skew-seed", type=_nonneg_int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    _add_common(p)

    p = sub.add_parser("theory", help="closed-form quantities and failure predicates")
    p.add_argument("--a", required=True, help="value, lo:step:hi or comma list")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--c1", type=float, default=0.01)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", default=None)

    p = sub.add_parser("recurrence", help="print the b_k sequence")
    p.add_argument("--a", type=_positive_float, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k", type=_nonneg_int, default=100)
    p.add_argument("--out", default=None)

    p = sub.add_parser("pwl-bench", help="median accuracy of L-BFGS-m on a max-affine instance")
    p.add_argument("--n", type=_positive_int, default=10)
    p.add_argument("--p", type=_positive_int, default=50)
    p.add_argument("--m", default="1:1:10")
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--instance-seed", type=_nonneg_int, default=1)
    p.add_argument("--construction", choices=("vertex", "cone"), default="vertex")
    p.add_argument("--workers", type=_positive_int, default=1)
    _add_common(p)
    return parser


def _run_params(args) -> RunParams:
    try:
        ls = LineSearchParams(c1=args.c1, c2=args.c2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunParams(linesearch=ls, max_iters=args.max_iters)


def _methods(texts, default) -> list:
    out = []
    for t in texts or [default]:
        try:
            out.append(parse_method(t))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return out


def _out_dir(args) -> str:
    d = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    os.makedirs(d, exist_ok=True)
    return d


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _manifest(out_dir: str, name: str, argv, doc: dict) -> None:
    doc = {"command": name, "argv": list(argv), "version": __version__, **doc}
    _write(os.path.join(out_dir, f"{name}_manifest.json"), json.dumps(doc, indent=2, default=str) + "\n")


def _params_doc(params: RunParams) -> dict:
    return {
        "c1": params.linesearch.c1,
        "c2": params.linesearch.c2,
        "max_expansions": params.linesearch.max_expansions,
        "max_bisections": params.linesearch.max_bisections,
        "max_iters": params.max_iters,
        "f_divergence_threshold": params.f_divergence_threshold,
        "step_stagnation_floor": params.step_stagnation_floor,
        "cycle_window": params.cycle_window,
    }


def cmd_run(args, argv) -> int:
    params = _run_params(args)
    methods = _methods(args.method, "lbfgs:1:scaled")
    if args.objective == "paper_abs":
        spec = PaperAbs(args.a, args.n)
    elif args.objective == "skew_abs":
        spec = SkewAbs.random(args.a, args.n, ex.trial_rng(args.instance_seed, 0))
    else:
        if args.p < args.n + 1 and args.construction == "vertex":
            raise ConfigError(f"vertex construction needs p >= n + 1, got p={args.p}, n={args.n}")
        spec, _ = ex.accuracy_instance(args.n, args.p, args.instance_seed, args.construction)
    out = _out_dir(args)
    traces = ex.trace_export(spec, methods, args.seed, params, out_dir=out, stem="trace")
    for desc, tr in traces.items():
        print(f"{desc}: {tr.termination.value} after {tr.iterations} steps, f = {tr.f_final!r}")
    _manifest(out, "run", argv, {
        "objective": spec_to_dict(spec),
        "methods": [m.describe() for m in methods],
        "seed": args.seed,
        "run_params": _params_doc(params),
        "terminations": {d: t.termination.value for d, t in traces.items()},
    })
    return 0


def cmd_sweep(args, argv) -> int:
    params = _run_params(args)
    a_values = parse_grid(args.a)
    if not a_values:
        raise ConfigError("empty a grid")
    methods = _methods(args.method, "lbfgs:1:scaled") if args.m is None or args.method else []
    if args.m is not None:
        methods += _methods([f"lbfgs:{m}:scaled" for m in parse_int_grid(args.m)], None)
    try:
        config = ex.SweepConfig(
            ex.ObjectiveTemplate(args.objective, args.n, args.skew_seed),
            a_values, methods, args.trials, args.seed, params,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = ex.failure_rate_sweep(config, workers=args.workers)
    text = ex.sweep_csv(rows)
    out = _out_dir(args)
    _write(os.path.join(out, "sweep.csv"), text)
    sys.stdout.write(text)
    doc = ex.sweep_manifest(config, rows, args.workers)
    doc["run_params"] = _params_doc(params)
    _manifest(out, "sweep", argv, doc)
    return 0


_THEORY_FIELDS = (
    "a", "n", "c1", "eps", "b", "theta", "phi", "psi_eps", "delta_eps",
    "sqrt_nm1", "sqrt_3nm1", "two_sqrt_nm1",
    "memoryless_fail_any_ls", "memoryless_fail_alg2", "gradient_fail",
)


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def cmd_theory(args, argv) -> int:
    a_values = parse_grid(args.a)
    try:
        rows = [theory.theory_table(a, args.n, args.c1, args.eps) for a in a_values]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_THEORY_FIELDS)
    for r in rows:
        w.writerow([_fmt_cell(r[k]) for k in _THEORY_FIELDS])
    if args.format == "csv":
        sys.stdout.write(buf.getvalue())
    else:
        for i, r in enumerate(rows):
            if i:
                print()
            _print_theory_text(r)
    out = _out_dir(args)
    _write(os.path.join(out, "theory.csv"), buf.getvalue())
    _manifest(out, "theory", argv, {"n": args.n, "c1": args.c1, "eps": args.eps, "a_values": a_values})
    return 0


def _print_theory_text(r: dict) -> None:
    def show(v):
        return "undefined" if v is None else _fmt_cell(v)

    print(f"a = {show(r['a'])}, n = {r['n']}, c1 = {show(r['c1'])}, eps = {show(r['eps'])}")
    print(f"thresholds: sqrt(n-1) = {show(r['sqrt_nm1'])}, sqrt(3(n-1)) = {show(r['sqrt_3nm1'])}, "
          f"2 sqrt(n-1) = {show(r['two_sqrt_nm1'])}")
    print(f"b = {show(r['b'])}")
    print(f"theta = {show(r['theta'])}")
    print(f"phi = {show(r['phi'])}")
    print(f"psi_eps = {show(r['psi_eps'])}")
    print(f"delta_eps = {show(r['delta_eps'])}")
    print(f"memoryless-fail (any Armijo-Wolfe search) = {show(r['memoryless_fail_any_ls'])}")
    print(f"memoryless-fail (bracketing search) = {show(r['memoryless_fail_alg2'])}")
    print(f"gradient-fail = {show(r['gradient_fail'])}")


def cmd_recurrence(args, argv) -> int:
    try:
        beta = theory.beta_sequence(args.a, args.n, args.k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("k", "b_k", "beta_k"))
    for k, bk in enumerate(beta):
        w.writerow((k, repr(float(bk if k % 2 == 0 else -bk)), repr(float(bk))))
    sys.stdout.write(buf.getvalue())
    out = _out_dir(args)
    _write(os.path.join(out, "recurrence.csv"), buf.getvalue())
    limit = theory.limit_b(args.a, args.n) if args.a * args.a >= 3 * (args.n - 1) else None
    _manifest(out, "recurrence", argv, {"a": args.a, "n": args.n, "k": args.k, "limit_b": limit})
    return 0


def cmd_pwl(args, argv) -> int:
    params = _run_params(args)
    m_values = parse_int_grid(args.m)
    if not m_values or min(m_values) < 1:
        raise ConfigError("m values must be >= 1")
    if args.construction == "vertex" and args.p < args.n + 1:
        raise ConfigError(f"vertex construction needs p >= n + 1, got p={args.p}, n={args.n}")
    if args.p < 2:
        raise ConfigError("need p >= 2")
    rows = ex.pwl_accuracy_experiment(
        args.n, args.p, m_values, args.trials, args.seed, args.instance_seed, args.construction, params, args.workers
    )
    text = ex.accuracy_csv(rows)
    out = _out_dir(args)
    _write(os.path.join(out, "pwl_accuracy.csv"), text)
    sys.stdout.write(text)
    _manifest(out, "pwl-bench", argv, {
        "n": args.n, "p": args.p, "m_values": m_values, "trials": args.trials, "seed": args.seed,
        "instance_seed": args.instance_seed, "construction": args.construction,
        "run_params": _params_doc(params),
        "rows": [{"m": r.m, "scaled": r.scaled, "median_error": r.median_error, "counts": r.counts} for r in rows],
    })
    return 0


_COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "theory": cmd_theory,
    "recurrence": cmd_recurrence,
    "pwl-bench": cmd_pwl,
}


def dispatch(argv) -> int:
    argv = list(argv)
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args, argv)
    except (ConfigError, ValueError) as exc:
        print(f"nsqn: configuration error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"nsqn: invariant violated: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
