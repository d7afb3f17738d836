"""``gaussi run|check|casestudy|bench``.

Exit codes: 0 success, 1 parse or validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import KINDS, run_bench
from .casestudy import CaseStudyConfig, DatasetError, run_case_study
from .errors import GaussiError, ParseError, ValidationError
from .interpreter import run_program
from .lang import parse_file, validate
from .metrics import density_curve, interval_probability, mutual_information
from .report import PosteriorReport, fmt

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _density(spec: str):
    try:
        var, lo, hi, n = spec.rsplit(":", 3)
        return var, float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected VAR:LO:HI:N, got {spec!r}") from None


def _interval(spec: str):
    try:
        var, lo, hi = spec.rsplit(":", 2)
        return var, float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected VAR:LO:HI, got {spec!r}") from None


def _pair(spec: str):
    parts = spec.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected A,B, got {spec!r}")
    return tuple(parts)


def _sizes(spec: str):
    try:
        sizes = [int(s) for s in spec.split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated sizes, got {spec!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaussi", description="Exact inference for linear Gaussian programs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output_flags(sp):
        sp.add_argument("--out", type=Path, help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("text", "json", "csv"), default="text")

    run = sub.add_parser("run", help="run a program and report the posterior")
    run.add_argument("file", type=Path)
    output_flags(run)
    run.add_argument("--density", type=_density, action="append", default=[],
                     metavar="VAR:LO:HI:N", help="add a density curve of VAR")
    run.add_argument("--prob", type=_interval, action="append", default=[],
                     metavar="VAR:LO:HI", help="add P(LO <= VAR <= HI)")
    run.add_argument("--mi", type=_pair, action="append", default=[], metavar="A,B",
                     help="add the mutual information of two returned variables")

    check = sub.add_parser("check", help="parse and validate a program")
    check.add_argument("file", type=Path)

    cs = sub.add_parser("casestudy", help="income-statistics attack on the bundled dataset")
    output_flags(cs)
    cs.add_argument("--case", type=int, choices=(1, 2, 3), default=1)
    cs.add_argument("--dp", action="store_true", help="release statistics through the Gaussian mechanism")
    cs.add_argument("--epsilon", type=float, default=0.9)
    cs.add_argument("--delta", type=float, help="default 1/size**2")
    cs.add_argument("--sensitivity", type=float, help="default (max - min)/size")
    cs.add_argument("--dp-scope", choices=("group", "database"), default="group")
    cs.add_argument("--dataset", type=Path, help="incomes CSV (default: bundled data)")
    cs.add_argument("--priors", type=Path, help="CSV overriding the prior columns")
    cs.add_argument("--victim", help="individual under attack, e.g. male_21_30[0]")
    cs.add_argument("--emit-program", type=Path, metavar="PATH",
                    help="also write the generated program to PATH")

    b = sub.add_parser("bench", help="time the sum benchmark")
    b.add_argument("--kind", choices=KINDS, default="sum")
    b.add_argument("--sizes", type=_sizes, default=[100, 1000])
    b.add_argument("--repetitions", type=int, default=3)
    b.add_argument("--parallel", action="store_true", help="run repetitions in worker processes")
    b.add_argument("--out", type=Path)
    return p


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def cmd_run(args) -> PosteriorReport:
    program = parse_file(args.file)
    result = run_program(program)
    metrics = {}
    for a, b in args.mi:
        metrics[f"mutual_information[{a};{b}]"] = mutual_information(result.state, a, b)
    probs = tuple((v, lo, hi, interval_probability(result.state, v, lo, hi)) for v, lo, hi in args.prob)
    dens = tuple((v, tuple(density_curve(result.state, v, lo, hi, n))) for v, lo, hi, n in args.density)
    report = PosteriorReport.from_result(args.file, result, metrics=metrics,
                                         probabilities=probs, densities=dens)
    _emit(report.render(args.format), args.out)
    return report


def cmd_check(args) -> list:
    diags = validate(parse_file(args.file))
    for d in diags:
        print(f"{args.file}:{d}", file=sys.stderr)
    return diags


def cmd_casestudy(args) -> PosteriorReport:
    config = CaseStudyConfig(
        dataset=args.dataset, priors=args.priors, case=args.case, dp=args.dp,
        epsilon=args.epsilon, delta=args.delta, sensitivity=args.sensitivity,
        dp_scope=args.dp_scope, victim=args.victim)
    r = run_case_study(config)
    if args.emit_program is not None:
        args.emit_program.write_text(r.program, encoding="utf-8")
    metrics = {"kl_divergence_paper": r.leakage.kl_prior_posterior,
               "kl_divergence_nats": r.leakage.kl_prior_posterior_nats,
               "mutual_information": r.leakage.mutual_information}
    for out, v in r.mi_by_statistic.items():
        metrics[f"mutual_information[{r.victim};{out}]"] = v
    details = {"case": r.config.case, "dp": r.config.dp, "victim": r.victim,
               "prior_mean": r.prior_mean, "prior_variance": r.prior_variance,
               "true_income": r.true_income}
    details.update({f"observed[{k}]": v for k, v in r.observations.items()})
    details.update({f"noise_variance[{k}]": v for k, v in r.noise_variances.items()})
    label = f"casestudy:case{r.config.case}{'-dp' if r.config.dp else ''}"
    report = PosteriorReport.from_result(label, r.posterior, metrics=metrics, details=details)
    _emit(report.render(args.format), args.out)
    return report


def cmd_bench(args) -> list:
    rows = run_bench(args.kind, args.sizes, args.repetitions, parallel=args.parallel)
    text = "n,mean_seconds,stddev\n" + "".join(
        f"{r.n},{fmt(r.mean_seconds)},{fmt(r.stddev)}\n" for r in rows)
    _emit(text, args.out)
    return rows


COMMANDS = {"run": cmd_run, "check": cmd_check, "casestudy": cmd_casestudy, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        result = COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"{getattr(args, 'file', '')}:{exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        for d in exc.diagnostics:
            print(f"{getattr(args, 'file', '')}:{d}", file=sys.stderr)
        return EXIT_INVALID
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (GaussiError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        # bad option values, e.g. an unknown victim or delta outside (0, 1)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "check" and result:
        return EXIT_INVALID
    return EXIT_OK
