"""Command-line benchmark harness.

    penbar run --problem convex_qp_3 --format json
    penbar run --problem all --tol 1e-8 --format csv --out results.csv
    penbar bench --sizes 5 20 80

Exit codes: 0 if every run converged, 1 if a solve failed or the output
could not be written, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import io
import json
import sys
from typing import Iterable, List, Optional, Sequence

from .driver import SolveReport, SolverConfig, solve
from .globalization import LineSearchParams
from .problem import PenaltyParams
from .registry import DEFAULT_SEED, UnknownProblemError, available_problems, registry_get

EXIT_OK = 0
EXIT_SOLVE_FAILURE = 1
EXIT_USAGE = 2

CSV_COLUMNS = (
    "problem",
    "n",
    "m",
    "status",
    "outer_iters",
    "inner_iters_total",
    "time_per_iter_ms",
    "grad_phi_inf",
    "phi_final",
)
FORMATS = ("human", "json", "csv")


class UsageError(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class RunSpec:
    problems: tuple
    params: PenaltyParams
    watchdog: bool = True
    polish: bool = True
    force_psd: bool = False
    fmt: str = "human"
    out: Optional[str] = None
    seed: int = DEFAULT_SEED
    verbose: int = 0
    workers: int = 1
    timing: bool = True

    def config(self) -> SolverConfig:
        return SolverConfig(
            params=self.params,
            line_search=LineSearchParams(),
            watchdog_enabled=self.watchdog,
            newton_polish_enabled=self.polish,
            hessian="projection" if self.force_psd else "auto",
        )


def _summary_row(report: SolveReport, timing: bool) -> dict:
    return {
        "problem": report.problem,
        "n": report.n,
        "m": report.m,
        "status": report.status,
        "outer_iters": report.outer_iterations,
        "inner_iters_total": report.total_inner_iterations,
        "time_per_iter_ms": report.time_per_iter_ms if timing else 0.0,
        "grad_phi_inf": report.grad_phi_inf,
        "phi_final": report.phi_final,
    }


def report_to_dict(report: SolveReport, timing: bool = True) -> dict:
    """JSON-ready mirror of a :class:`SolveReport`."""
    return {
        "problem": report.problem,
        "n": report.n,
        "m": report.m,
        "status": report.status,
        "outer_iterations": report.outer_iterations,
        "total_inner_iterations": report.total_inner_iterations,
        "time_per_iter_ms": report.time_per_iter_ms if timing else 0.0,
        "wall_time": report.wall_time if timing else 0.0,
        "grad_phi_inf": report.grad_phi_inf,
        "grad_phi_norm2": report.grad_phi_norm2,
        "phi_final": report.phi_final,
        "x_final": [float(v) for v in report.x_final],
        "lambda_final": [float(v) for v in report.lambda_final],
        "message": report.message,
        "records": [dataclasses.asdict(r) for r in report.records],
    }


def _fmt_float(v: float) -> str:
    return f"{v:.6e}"


def _human_table(rows: List[dict]) -> str:
    header = list(CSV_COLUMNS)
    cells = [[_fmt_float(r[c]) if isinstance(r[c], float) else str(r[c]) for c in header] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) if cells else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.rjust(w) if i > 0 else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def _trace_table(report: SolveReport) -> str:
    out = [f"# {report.problem}: {report.status}"]
    out.append(f"{'k':>5} {'phi':>22} {'|grad|_2':>12} {'|grad|_inf':>12} {'alpha':>10} "
               f"{'exact':>5} {'polish':>6} {'mode':>8} {'inner':>5}")
    for r in report.records:
        out.append(f"{r.k:5d} {r.phi:22.14e} {r.grad_norm2:12.4e} {r.grad_inf:12.4e} {r.alpha:10.3e} "
                   f"{int(r.used_exact):5d} {int(r.polish_accepted):6d} {r.mode:>8} {r.inner_iterations:5d}")
    return "\n".join(out) + "\n"


def emit_reports(reports: Sequence[SolveReport], fmt: str, sink, timing: bool = True, verbose: int = 0,
                 trace_sink=None) -> None:
    """Write all reports to ``sink`` in one of :data:`FORMATS`.

    CSV gets exactly one header line. Per-iteration traces (``verbose``)
    are inlined for the human format and sent to ``trace_sink`` for CSV.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == "json":
        json.dump({"runs": [report_to_dict(r, timing) for r in reports]}, sink, indent=2)
        sink.write("\n")
        return
    rows = [_summary_row(r, timing) for r in reports]
    if fmt == "csv":
        writer = csv.DictWriter(sink, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        if verbose and trace_sink is not None:
            for r in reports:
                trace_sink.write(_trace_table(r))
        return
    if verbose:
        for r in reports:
            sink.write(_trace_table(r))
            sink.write("\n")
    sink.write(_human_table(rows))


def emit_report(report: SolveReport, fmt: str, sink, timing: bool = True, verbose: int = 0) -> None:
    emit_reports([report], fmt, sink, timing=timing, verbose=verbose)


def _select(names: Iterable[str]) -> tuple:
    selected: List[str] = []
    for item in names:
        for name in item.split(","):
            name = name.strip()
            if not name:
                continue
            if name == "all":
                selected.extend(available_problems())
            else:
                selected.append(name)
    if not selected:
        raise UsageError("no problem selected")
    return tuple(dict.fromkeys(selected))


def run(spec: RunSpec, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        problems = [registry_get(name, seed=spec.seed) for name in spec.problems]
    except UnknownProblemError as exc:
        stderr.write(f"penbar: {exc}\n")
        return EXIT_USAGE
    cfg = spec.config()
    with concurrent.futures.ThreadPoolExecutor(max_workers=spec.workers) as pool:
        reports = list(pool.map(lambda p: solve(p, cfg=cfg), problems))

    buffer = io.StringIO()
    emit_reports(reports, spec.fmt, buffer, timing=spec.timing, verbose=spec.verbose, trace_sink=stderr)
    try:
        if spec.out:
            with open(spec.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buffer.getvalue())
        else:
            stdout.write(buffer.getvalue())
    except OSError as exc:
        stderr.write(f"penbar: cannot write output: {exc}\n")
        return EXIT_SOLVE_FAILURE
    return EXIT_OK if all(r.converged for r in reports) else EXIT_SOLVE_FAILURE


def bench(sizes: Sequence[int], repeats: int, seed: int, stdout=None) -> int:
    """Time the predictor-corrector kernels on random subproblems."""
    from .benchmark import compare_backends

    stdout = sys.stdout if stdout is None else stdout
    rows = compare_backends(sizes, repeats=repeats, seed=seed)
    stdout.write(f"{'n':>5} {'backend':>9} {'iters':>6} {'ms/solve':>10} {'speedup':>8}\n")
    for row in rows:
        speed = f"{row['speedup']:8.2f}" if row["speedup"] is not None else f"{'-':>8}"
        stdout.write(f"{row['n']:5d} {row['backend']:>9} {row['iterations']:6d} {row['ms']:10.3f} {speed}\n")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    defaults = PenaltyParams()
    parser = _Parser(prog="penbar", description="Penalty-barrier NLP solver benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="solve registry problems and print a summary")
    r.add_argument("--problem", action="append", required=True,
                   help="problem name, comma list, or 'all' (repeatable)")
    r.add_argument("--rho", type=float, default=defaults.rho)
    r.add_argument("--omega", type=float, default=defaults.omega)
    r.add_argument("--tau", type=float, default=defaults.tau)
    r.add_argument("--tol", type=float, default=defaults.tol)
    r.add_argument("--max-iter", type=int, default=defaults.max_outer_iter)
    r.add_argument("--no-watchdog", action="store_true")
    r.add_argument("--no-polish", action="store_true")
    r.add_argument("--force-psd", action="store_true", help="ignore user PSD hooks, always project")
    r.add_argument("--format", choices=FORMATS, default="human")
    r.add_argument("--out", help="output file (default: stdout)")
    r.add_argument("--seed", type=int, default=DEFAULT_SEED)
    r.add_argument("--verbose", "-v", action="count", default=0)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--no-timing", action="store_true", help="report zero times for reproducible output")

    b = sub.add_parser("bench", help="compare the compiled and pure-Python kernels")
    b.add_argument("--sizes", type=int, nargs="+", default=[5, 20, 80])
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    return parser


def _spec_from_args(args) -> RunSpec:
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    try:
        params = PenaltyParams(rho=args.rho, omega=args.omega, tau=args.tau, tol=args.tol,
                               max_outer_iter=args.max_iter)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunSpec(
        problems=_select(args.problem),
        params=params,
        watchdog=not args.no_watchdog,
        polish=not args.no_polish,
        force_psd=args.force_psd,
        fmt=args.format,
        out=args.out,
        seed=args.seed,
        verbose=args.verbose,
        workers=args.workers,
        timing=not args.no_timing,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        if any(n < 1 for n in args.sizes) or args.repeats < 1:
            sys.stderr.write("penbar: sizes and repeats must be positive\n")
            return EXIT_USAGE
        return bench(args.sizes, args.repeats, args.seed)
    try:
        spec = _spec_from_args(args)
    except UsageError as exc:
        sys.stderr.write(f"penbar: {exc}\n")
        return EXIT_USAGE
    return run(spec)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
