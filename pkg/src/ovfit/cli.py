"""Command-line front end.

Subcommands:

``fit``                 estimate a model from a CSV/JSON dataset
``generate``            write a synthetic dataset (modal or grey-box) plus its true model
``bench-conditioning``  print least-squares condition numbers for basis/domain choices

Exit codes: 0 success, 1 bad input or flags, 2 estimation failure, 3 infeasible
constraints.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BASES, DOMAINS, conditioning_table, format_table
from .constraints import DEN, ConstraintSet, num_key
from .core import FrequencyResponseData, eval_model, nrmse_fit
from .datagen import (ModalModelSpec, NoiseSpec, fixed_model_4_2, log_frequencies, modal_model,
                      sample_with_noise)
from .errors import InfeasibleConstraints, OvfitError, RankDeficient
from .io import atomic_write, bode_csv, read_dataset, read_weights, write_dataset, write_model
from .solver import IV_STARTS, NORMALIZATIONS, EstimationOptions, estimate

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_CONSTRAINTS = 0, 1, 2, 3

log = logging.getLogger("ovfit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; this tool reserves 2 for estimation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


_SPEC = re.compile(r"^(?:y(\d+)u(\d+):)?(\d+)=(.+)$")


def _parse_coef(text: str, kind: str):
    """``[yIuJ:]IDX=VAL`` or ``[yIuJ:]IDX=LO,HI``; returns (channel or None, index, value(s))."""
    mt = _SPEC.match(text.strip())
    if not mt:
        raise UsageError(f"cannot parse {kind} spec {text!r} (expected [yIuJ:]IDX=VALUE)")
    ch = None
    if mt.group(1):
        ch = (int(mt.group(1)) - 1, int(mt.group(2)) - 1)
        if min(ch) < 0:
            raise UsageError(f"channel indices are 1-based in {text!r}")
    idx = int(mt.group(3))
    rhs = mt.group(4)
    try:
        if kind == "bound":
            lo, hi = (float(x) if x.strip() else np.nan for x in rhs.split(","))
            lo = -np.inf if np.isnan(lo) else lo
            hi = np.inf if np.isnan(hi) else hi
            return ch, idx, (lo, hi)
        return ch, idx, float(rhs)
    except ValueError:
        raise UsageError(f"bad value in {text!r}") from None


def build_constraints(args, p: int, m: int) -> ConstraintSet:
    cs = ConstraintSet()
    channels = [(i, j) for i in range(p) for j in range(m)]

    def targets(ch):
        if ch is None:
            return channels
        if ch not in channels:
            raise UsageError(f"channel y{ch[0] + 1}u{ch[1] + 1} not in the dataset")
        return [ch]

    for spec in args.fix_num or []:
        ch, idx, val = _parse_coef(spec, "fix")
        for c in targets(ch):
            cs = cs.fix(num_key(*c), idx, val)
    for spec in args.fix_den or []:
        ch, idx, val = _parse_coef(spec, "fix")
        if ch is not None:
            raise UsageError("--fix-den takes no channel prefix")
        cs = cs.fix(DEN, idx, val)
    for spec in args.bound_num or []:
        ch, idx, (lo, hi) = _parse_coef(spec, "bound")
        for c in targets(ch):
            try:
                cs = cs.bound(num_key(*c), idx, lo, hi)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
    for spec in args.bound_den or []:
        ch, idx, (lo, hi) = _parse_coef(spec, "bound")
        try:
            cs = cs.bound(DEN, idx, lo, hi)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return cs


# --- fit -----------------------------------------------------------------------

def cmd_fit(args) -> int:
    path = Path(args.dataset)
    if not path.is_file():
        raise UsageError(f"dataset file not found: {path}")
    try:
        data = read_dataset(path, args.freq_unit)
    except (ValueError, OSError) as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from None
    if args.weight_file:
        try:
            w = read_weights(args.weight_file)
            data = FrequencyResponseData(data.frequencies, data.responses, w)
        except (ValueError, OSError) as exc:
            raise UsageError(f"cannot use weight file {args.weight_file}: {exc}") from None
    cs = build_constraints(args, data.p, data.m)
    try:
        opts = EstimationOptions(
            den_order=args.den_order, num_order=args.num_order, max_sk=args.max_sk,
            max_iv=args.max_iv, alpha=args.alpha, use_iv=not args.no_iv, seed=args.seed,
            constraints=None if cs.empty else cs, column_scaling=args.column_scaling,
            normalization=args.normalization, iv_start=args.iv_start)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    try:
        res = estimate(data, opts)
    except (InfeasibleConstraints, RankDeficient) as exc:
        print(f"constraint error ({getattr(exc, 'stage', 'setup')}): {exc}", file=sys.stderr)
        return EXIT_CONSTRAINTS
    except (OvfitError, np.linalg.LinAlgError) as exc:
        print(f"estimation failed ({getattr(exc, 'stage', 'estimation')}): {exc}", file=sys.stderr)
        return EXIT_ESTIMATION

    model, rep = res.model, res.report
    try:
        fitted = eval_model(model, data.s)
    except OvfitError as exc:
        print(f"estimation failed (model evaluation): {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    fit = nrmse_fit(fitted, data.responses)
    final_cost = float(np.sum(data.weight_vector() ** 2
                              * np.sum(np.abs(fitted - data.responses) ** 2, axis=(1, 2))))
    metrics = {
        "nrmse_fit_percent": fit,
        "final_cost": final_cost,
        "best_stage": rep.best_stage,
        "best_cost": rep.best_cost,
        "iterations": dict(rep.iterations),
        "converged": dict(rep.converged),
        "worst_condition": rep.worst_condition,
        "alpha": rep.alpha,
    }
    if args.diagnostics:
        metrics["report"] = rep.to_dict()
    if args.out:
        write_model(args.out, model, metrics=metrics, constraints=cs.to_dict(),
                    orders={"numerator": opts.numerator_order, "denominator": opts.den_order},
                    tool={"name": "ovfit", "version": __version__})
    if args.bode_out:
        atomic_write(args.bode_out, bode_csv(data.frequencies, data.responses, fitted))

    print(f"fit: {fit:.2f} %  cost: {final_cost:.6g}  best stage: {rep.best_stage}")
    print(f"iterations: sk={rep.iterations['sk']} iv={rep.iterations['iv']}  "
          f"converged: sk={rep.converged['sk']} iv={rep.converged['iv']}")
    print(f"worst condition number: {rep.worst_condition:.3e}  alpha: {rep.alpha:.6g}")
    if args.diagnostics:
        for stage in ("initial", "sk", "iv"):
            for k, c in enumerate(rep.costs[stage]):
                print(f"  {stage:<7} {k:>3}  cost {c:.6e}")
        for msg in rep.messages:
            print(f"  note: {msg}")
    return EXIT_OK


# --- generate ------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.experiment == "modal":
        points = args.points or 700
        fmin, fmax = args.fmin or 0.1, args.fmax or 1e6
        model = modal_model(ModalModelSpec(modes=args.modes, seed=args.seed))
    else:
        points = args.points or 300
        fmin, fmax = args.fmin or 1.0, args.fmax or 1e4
        model = fixed_model_4_2()
    try:
        w = log_frequencies(fmin, fmax, points)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    noise = None if np.isinf(args.snr_db) else NoiseSpec.from_snr_db(args.snr_db, args.seed)
    data = sample_with_noise(model, w, noise)
    out = Path(args.out)
    write_dataset(out, data)
    model_out = Path(args.model_out) if args.model_out else out.with_name(out.stem + ".model.json")
    write_model(model_out, model, generator={
        "experiment": args.experiment, "seed": args.seed, "snr_db": args.snr_db,
        "points": points, "fmin": fmin, "fmax": fmax,
        "modes": args.modes if args.experiment == "modal" else None})
    print(f"wrote {data.l} samples to {out} and the true model to {model_out}")
    return EXIT_OK


# --- bench ---------------------------------------------------------------------

def cmd_bench_conditioning(args) -> int:
    cs = {"off": (False,), "on": (True,), "both": (False, True)}[args.column_scaling]
    rows = conditioning_table(seed=args.seed, modes=args.modes, points=args.points,
                              bases=args.basis or BASES, domains=args.domain or DOMAINS,
                              column_scaling=cs, scale_measurements=args.scale_measurements)
    if args.json:
        print(json.dumps([r.to_dict() for r in rows], indent=1))
    else:
        print(format_table(rows))
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ovfit", description="Rational transfer function estimation from frequency response data.")
    ap.add_argument("--version", action="version", version=f"ovfit {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="estimate a model from a dataset")
    f.add_argument("dataset", help="CSV or JSON dataset")
    f.add_argument("--freq-unit", choices=["rad/s", "Hz"], default=None,
                   help="override the frequency unit declared by the dataset")
    f.add_argument("--den-order", type=_nonneg_int, required=True)
    f.add_argument("--num-order", type=_nonneg_int, default=None,
                   help="numerator order (default: denominator order)")
    f.add_argument("--fix-num", action="append", metavar="[yIuJ:]IDX=VAL",
                   help="fix numerator coefficient of s^IDX (all channels unless prefixed)")
    f.add_argument("--fix-den", action="append", metavar="IDX=VAL")
    f.add_argument("--bound-num", action="append", metavar="[yIuJ:]IDX=LO,HI")
    f.add_argument("--bound-den", action="append", metavar="IDX=LO,HI")
    f.add_argument("--weight-file", default=None, help="one nonnegative weight per frequency")
    f.add_argument("--max-sk", type=_nonneg_int, default=20)
    f.add_argument("--max-iv", type=_nonneg_int, default=20)
    f.add_argument("--no-iv", action="store_true")
    f.add_argument("--alpha", type=float, default=None)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--column-scaling", action="store_true")
    f.add_argument("--normalization", choices=NORMALIZATIONS, default="auto")
    f.add_argument("--iv-start", choices=IV_STARTS, default="initial")
    f.add_argument("--out", default=None, help="model JSON file")
    f.add_argument("--bode-out", default=None, help="magnitude/phase CSV for plotting")
    f.add_argument("--diagnostics", action="store_true")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--experiment", choices=["modal", "greybox"], required=True)
    g.add_argument("--modes", type=int, default=10)
    g.add_argument("--points", type=int, default=None)
    g.add_argument("--fmin", type=float, default=None)
    g.add_argument("--fmax", type=float, default=None)
    g.add_argument("--snr-db", type=float, default=20.0, help="use inf for noise-free samples")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--model-out", default=None)
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bench-conditioning", help="condition numbers of one SK step")
    b.add_argument("--basis", action="append", choices=BASES)
    b.add_argument("--domain", action="append", choices=DOMAINS)
    b.add_argument("--column-scaling", choices=["on", "off", "both"], default="both")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--modes", type=int, default=10)
    b.add_argument("--points", type=int, default=700)
    b.add_argument("--scale-measurements", action="store_true")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bench_conditioning)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
