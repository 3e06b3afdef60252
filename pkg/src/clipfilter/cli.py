"""Command-line interface.

Subcommands: run, train, sweep-iters, validate, synthesize.  Exit codes:
0 success, 1 usage error, 2 fixture validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline, plots, report as reporting
from .engine import ContractError, ShapeError
from .fixtures import FixtureError, load_fixture, save_fixture, synthesize
from .losses import LossWeights
from .pipeline import NumericalError, RunConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FIXTURE = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fixture", required=True, help="fixture file path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=5, help="filter iterations N")
    p.add_argument("--fusion", choices=["learned", "average"], default="learned")
    p.add_argument("--init", choices=["identity", "random"], default="random")
    p.add_argument("--lambda-qv", type=float, default=0.3)
    p.add_argument("--lambda-qc", type=float, default=0.5)
    p.add_argument("--lambda-cc", type=float, default=1.5)
    p.add_argument("--out", default=None, help="report output path")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering next to --out")


def build_parser() -> _Parser:
    parser = _Parser(prog="clipfilter",
                     description="Important-word-aware clip filtering pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="forward pipeline over a fixture")
    _add_common_flags(p_run)

    p_train = sub.add_parser("train", help="toy gradient-descent training")
    _add_common_flags(p_train)
    p_train.add_argument("--steps", type=int, default=500)
    p_train.add_argument("--lr", type=float, default=0.2)
    p_train.add_argument("--freeze-inputs", action="store_true",
                         help="descend on model parameters only")

    p_sweep = sub.add_parser("sweep-iters", help="run once per filter depth")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--n-values", default="0,1,3,5,7",
                         help="comma-separated iteration counts")

    p_val = sub.add_parser("validate", help="check a fixture against the schema")
    p_val.add_argument("--fixture", required=True)

    p_syn = sub.add_parser("synthesize", help="write a synthetic fixture")
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--batch", type=int, default=4)
    p_syn.add_argument("--words", type=int, default=4)
    p_syn.add_argument("--clips", type=int, default=6)
    p_syn.add_argument("--caption-len", type=int, default=2)
    p_syn.add_argument("--dim", type=int, default=8)
    p_syn.add_argument("--alignment", type=float, default=0.9)
    p_syn.add_argument("--out", required=True)

    return parser


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        fixture=args.fixture,
        seed=args.seed,
        iters=args.iters,
        fusion=args.fusion,
        weights=LossWeights(args.lambda_qv, args.lambda_qc, args.lambda_cc),
        init=args.init,
        steps=getattr(args, "steps", 0),
        lr=getattr(args, "lr", 0.2),
        out=args.out,
        figures=not args.no_figures,
        train_inputs=not getattr(args, "freeze_inputs", False),
    )


def _emit_report(report_dict: dict, out: str | None, figures: bool) -> None:
    data = reporting.report_to_bytes(report_dict)
    if out is None:
        sys.stdout.write(data.decode())
        return
    Path(out).write_bytes(data)
    if figures:
        for p in plots.render_run_figures(reporting.round_floats(report_dict), out):
            print(f"figure: {p}", file=sys.stderr)


def cmd_run(args) -> int:
    config = _config_from_args(args)
    batch = load_fixture(config.fixture)
    result = pipeline.run_batch(batch, config)
    _emit_report(result.report, config.out, config.figures)
    print(f"run completed in {result.wall_time:.3f}s "
          f"(l_ma={result.loss_report.l_ma:.6f})", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from_args(args)
    batch = load_fixture(config.fixture)
    result = pipeline.train(batch, config)
    series = reporting.loss_series_rows(result.loss_series)
    first, last = result.loss_series[0].l_ma, result.loss_series[-1].l_ma
    if config.steps > 0 and config.lr > 0 and last >= first:
        result.final_run.report["warnings"].append(
            f"training did not reduce l_ma ({first:.6f} -> {last:.6f})")
    _emit_report(result.final_run.report, config.out, config.figures)
    if config.out is not None:
        csv_path = Path(config.out).with_name(Path(config.out).stem + "_loss.csv")
        reporting.write_table(series, csv_path)
        print(f"loss series: {csv_path}", file=sys.stderr)
        if config.figures:
            fig = plots.render_loss_curve(series, config.out)
            print(f"figure: {fig}", file=sys.stderr)
    print(f"train: l_ma {first:.6f} -> {last:.6f}; matched-top "
          f"{result.matched_top_counts[-1]}/{len(batch.samples)}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep_iters(args) -> int:
    config = _config_from_args(args)
    try:
        n_values = [int(v) for v in args.n_values.split(",") if v.strip() != ""]
    except ValueError:
        raise _UsageError(f"--n-values must be comma-separated integers, "
                          f"got {args.n_values!r}")
    if not n_values or any(n < 0 for n in n_values):
        raise _UsageError("--n-values must list nonnegative integers")
    batch = load_fixture(config.fixture)
    result = pipeline.sweep_iters(batch, config, n_values)
    rows = [reporting.round_floats(r) for r in result.rows]
    if config.out is None:
        for row in rows:
            print(",".join(str(v) for v in row.values()))
    else:
        reporting.write_table(result.rows, config.out)
        if config.figures:
            fig = plots.render_sweep(rows, Path(config.out))
            print(f"figure: {fig}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    batch = load_fixture(args.fixture)
    print(f"fixture ok: {len(batch)} samples, d={batch.d}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    batch = synthesize(seed=args.seed, b=args.batch, l_q=args.words,
                       l_v=args.clips, l_c=args.caption_len, d=args.dim,
                       alignment=args.alignment)
    save_fixture(batch, args.out)
    print(f"wrote {args.out}: B={args.batch}, L_q={args.words}, L_v={args.clips}, "
          f"L_c={args.caption_len}, d={args.dim}")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "train": cmd_train,
    "sweep-iters": cmd_sweep_iters,
    "validate": cmd_validate,
    "synthesize": cmd_synthesize,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FixtureError as e:
        print(f"fixture error: {e}", file=sys.stderr)
        return EXIT_FIXTURE
    except (NumericalError,) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ContractError, ShapeError) as e:
        print(f"numerical contract violated: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
