"""Command-line entry point: ``wavelet-ica {table,sweep,demix,validate}``.

Exit codes: 0 success, 1 usage error, 2 numeric or validation failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .experiments import (REPLICATE_COLUMNS, SWEEP_COLUMNS, TABLE_COLUMNS, TRACE_COLUMNS, CsvSink,
                          ExperimentConfig, cmd_demix, cmd_sweep, cmd_table, cmd_validate,
                          format_summary, open_output)

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# flag -> config field; every flag defaults to None so that unset flags leave
# config-file values alone
_FLAGS = [
    ("--dim", int, "dimension d"),
    ("--nobs", int, "number of observations n"),
    ("--j", str, "resolution, or 'auto' for the smoothness rule"),
    ("--j-min", int, "first resolution of a table"),
    ("--j-max", int, "last resolution of a table"),
    ("--smoothness", float, "smoothness s for --j auto ('inf' allowed)"),
    ("--besov-p", float, "Besov p for --j auto"),
    ("--wavelet", str, "D2, D4, D6 or D8"),
    ("--precision", int, "dyadic precision L"),
    ("--density", str, "source density, or a comma list with one per coordinate"),
    ("--density-params", str, "density parameters, e.g. 'df=5'"),
    ("--mix", str, "identity | random | rotation:<deg>[:a,b] | file:<path>"),
    ("--seed", int, "master seed"),
    ("--runs", int, "number of replicates"),
    ("--out", str, "output CSV (default stdout)"),
    ("--trace", str, "demix: per-iteration trace CSV"),
    ("--input", str, "demix: external n x d CSV sample"),
    ("--margin", float, "cube margin in [0, 0.5)"),
    ("--rescale", str, "once | per-step"),
    ("--whitening", str, "pca | symmetric"),
    ("--method", str, "demix: gradient | sweep (d = 2)"),
    ("--angles", int, "angle grid size for sweeps"),
    ("--max-iter", int, "optimizer iteration cap"),
    ("--tol-contrast", float, "stop on entry below this contrast"),
    ("--tol-grad", float, "stop below this gradient norm"),
    ("--fd-step", float, "finite-difference step"),
    ("--cell-budget", int, "largest joint coefficient array allowed"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wavelet-ica", description="Wavelet-contrast ICA experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"table": "contrast of independent vs mixed data per resolution",
             "sweep": "contrast and Amari error over rotation angles (d = 2)",
             "demix": "recover demixing matrices over replicates",
             "validate": "invariant, oracle and slope checks"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="key = value file; flags override it")
        for flag, kind, help_text in _FLAGS:
            p.add_argument(flag, type=kind, default=None, help=help_text)
        if name == "validate":
            p.add_argument("--inject", default=None, help=argparse.SUPPRESS)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _run(cfg: ExperimentConfig) -> int:
    if cfg.command == "validate":
        out = open_output(cfg.out)
        checks = cmd_validate(cfg, report=lambda c: print(
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}", file=out, flush=True))
        failed = [c.name for c in checks if not c.passed]
        print(f"{len(checks) - len(failed)}/{len(checks)} checks passed", file=out, flush=True)
        return EXIT_FAILURE if failed else EXIT_OK

    out = open_output(cfg.out)
    try:
        if cfg.command == "table":
            cmd_table(cfg, CsvSink(out, "table", TABLE_COLUMNS))
        elif cfg.command == "sweep":
            cmd_sweep(cfg, CsvSink(out, "sweep", SWEEP_COLUMNS))
        else:
            trace_fh = open_output(cfg.trace) if cfg.trace else None
            try:
                report = cmd_demix(cfg, CsvSink(out, "demix", REPLICATE_COLUMNS),
                                   CsvSink(trace_fh, "trace", TRACE_COLUMNS) if trace_fh else None)
            finally:
                if trace_fh is not None:
                    trace_fh.close()
            sys.stderr.write(format_summary(cfg, report))
            if report.summary()["failed"]:
                return EXIT_FAILURE
    finally:
        if cfg.out and cfg.out != "-":
            out.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        cfg.validate()
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, OSError) as exc:
        print(f"wavelet-ica: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _run(cfg)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"wavelet-ica: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
