"""Command-line interface: simulate, corrupt, extract, test, window, figures.

Exit codes: 0 success, 1 usage or invalid parameters, 2 data error,
3 non-convergence. A TOML (or JSON) config file, given with ``--config`` or
the ``BELLSTRINGS_CONFIG`` environment variable, may set any option: top
level keys apply to all commands, a ``[<command>]`` table to one command and
a ``[wqm]`` table to the WQM engine. Command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

from . import figures
from .config import default_config_path, load_mapping
from .core import (
    BellStringsError,
    DataFormatError,
    ExperimentParams,
    InsufficientDataError,
    NonConvergenceError,
    ParameterError,
    dumps_series,
    read_series,
)
from .imperfections import NoiseParams, corrupt
from .ingest import (
    pair_coincidences,
    parse_duration,
    parse_timetags,
    synthesize_timetags,
    write_timetags,
)
from .predict import (
    angle_deg_from_phi,
    coincidence_probabilities,
    epsilon_from_s,
    expected_strings,
    expected_total_strings,
    k_max,
    phi_from_angle_deg,
)
from .simulate import (
    DEFAULT_CALIBRATION_GRID,
    MemoryInit,
    VProcess,
    WqmConfig,
    generate_iid,
    wqm_calibrate,
    wqm_generate,
)
from .stats import estimate_phi_high, gof_against_nk, gof_two_sample
from .strings import extract_strings
from .window import DEFAULT_SAFETY_FACTOR, PhiHighTable, build_table, compute_window, live_source

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _count(text: str) -> int:
    """Positive integer that also accepts ``1e6`` style input."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v) or v != int(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(v)


def _duration(text: str) -> float:
    try:
        return parse_duration(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _emit_json(obj: Any, out: str | None = None) -> None:
    _emit(json.dumps(obj, sort_keys=True, indent=2) + "\n", out)


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _phi_from_args(args: argparse.Namespace) -> float:
    if (args.phi is None) == (args.angle is None):
        raise UsageError("give exactly one of --phi or --angle")
    if args.phi is not None:
        if not 0.0 <= args.phi <= 1.0:
            raise ParameterError(f"phi must be in [0, 1], got {args.phi}")
        return float(args.phi)
    return phi_from_angle_deg(args.angle)


def _wqm_config(args: argparse.Namespace) -> WqmConfig:
    data = dict(getattr(args, "_wqm_section", {}) or {})
    for key, dest in (("threshold_u", "threshold_u"), ("projection_exponent", "projection_exponent"),
                      ("v_process", "v_process"), ("walk_step", "walk_step"),
                      ("memory_init", "memory_init"), ("max_steps_per_pair", "max_steps")):
        value = getattr(args, dest, None)
        if value is not None:
            data[key] = value
    if getattr(args, "keep_partner_on_discard", False):
        data["collapse_on_discard"] = False
    return WqmConfig.from_mapping(data)


def _series_text(series) -> str:
    return dumps_series(series).decode("ascii")


# -- commands -------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    _require(args, "m")
    phi = _phi_from_args(args)
    if args.generator == "iid":
        series = generate_iid(args.m, phi, args.seed)
    else:
        series = wqm_generate(args.m, 0.0, math.asin(math.sqrt(phi)), _wqm_config(args), args.eta, args.seed)
    _emit(_series_text(series), args.out)
    print(f"m={series.m} odd_fraction={series.odd_fraction!r}", file=sys.stderr)
    return EXIT_OK


def cmd_corrupt(args: argparse.Namespace) -> int:
    _require(args, "series")
    if args.s_real is not None and args.epsilon is not None:
        raise UsageError("give at most one of --s-real or --epsilon")
    eps = epsilon_from_s(args.s_real) if args.s_real is not None else (args.epsilon or 0.0)
    noise = NoiseParams(r_dark=args.r_dark, t_w=args.t_w, r_coinc=args.r_coinc, epsilon=eps)
    out = corrupt(read_series(args.series), noise, args.seed)
    _emit(_series_text(out), args.out)
    return EXIT_OK


def cmd_strings(args: argparse.Namespace) -> int:
    _require(args, "series")
    dist = extract_strings(read_series(args.series), args.convention)
    if args.json:
        _emit_json({**dist.meta(), "counts": dist.counts.tolist()}, args.out)
    else:
        _emit(dist.to_csv(), args.out)
    return EXIT_OK


def cmd_gof(args: argparse.Namespace) -> int:
    _require(args, "series")
    dist = extract_strings(read_series(args.series), args.convention)
    if args.against is not None:
        other = extract_strings(read_series(args.against), dist.convention)
        res = gof_two_sample(dist, other, args.significance)
    else:
        if args.phi is None and not args.fit_phi:
            raise UsageError("give --phi, --fit-phi or --against")
        res = gof_against_nk(dist, None, args.phi, args.significance, args.fit_phi)
    if args.json:
        _emit(res.to_json(), args.out)
    else:
        _emit(f"chi2={res.statistic:.6g} dof={res.dof} p={res.p_value:.6g} "
              f"bins={res.pooled_bins} verdict={res.verdict.value}\n", args.out)
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    _require(args, "m")
    phi = _phi_from_args(args)
    out: dict[str, Any] = {
        "m": args.m, "phi": phi, "angle_deg": angle_deg_from_phi(phi),
        "probabilities": coincidence_probabilities(0.0, math.asin(math.sqrt(phi))).as_dict(),
        "expected_strings": expected_total_strings(args.m, phi),
    }
    try:
        out["k_max"] = k_max(args.m, phi)
    except ParameterError:
        out["k_max"] = None
    if args.csv:
        _emit(expected_strings(args.m, phi).to_csv(), args.csv)
    _emit_json(out, args.out)
    return EXIT_OK


def cmd_window(args: argparse.Namespace) -> int:
    _require(args, "s", "eta")
    params = ExperimentParams(alpha=0.0, beta=0.0, eta=args.eta, s_real=args.s, r_dark=args.r_dark,
                              r_coinc=args.r_coinc, t_w=args.t_w, m=args.m)
    if args.live:
        source = live_source(seed=args.seed, trials=args.trials, jobs=args.jobs)
    elif args.table:
        source = PhiHighTable.load(args.table)
    else:
        source = None
    win = compute_window(params, args.safety, source)
    if args.json:
        _emit_json(win.to_dict(), args.out)
    else:
        low, high = win.phi_low, win.phi_high
        state = "exists" if win.exists else "does not exist"
        _emit(f"window {state}: phi in ({low:.6g}, {high if high is None else f'{high:.6g}'}] "
              f"limited by {win.limiting_low.value}\n", args.out)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    _require(args, "timetags", "tw")
    series, report = pair_coincidences(parse_timetags(args.timetags), args.tw, args.dark_rate)
    _emit(_series_text(series), args.out)
    if args.json:
        _emit_json(report.to_dict(), args.report)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "series")
    streams = synthesize_timetags(read_series(args.series), args.pair_rate, args.tw, args.jitter,
                                  args.seed, args.dark_rate)
    if args.out in (None, "-"):
        raise UsageError("synth-timetags needs --out FILE")
    write_timetags(streams, args.out)
    return EXIT_OK


def cmd_figure(args: argparse.Namespace) -> int:
    m = args.m
    if args.paper_scale:
        warnings.warn(f"full scale m={figures.FULL_SCALE_M:g}: expect long runtimes", RuntimeWarning, stacklevel=1)
        m = figures.FULL_SCALE_M
    m = m or figures.DESK_M
    config = _wqm_config(args)
    if args.figure == 4:
        if args.data is None:
            raise UsageError("figure 4 needs --data SERIES (e.g. from ingest)")
        panels = [figures.compute_figure4(read_series(args.data), args.phi or figures.FIGURE4["phi"],
                                          args.eta or figures.FIGURE4["eta"],
                                          args.s_real or figures.FIGURE4["s_real"], args.seed, config)]
    else:
        panels = figures.compute_figure(args.figure, m, args.seed, args.panel, config, args.jobs)
    csv_path, svg_path = figures.write_figure(args.figure, panels, args.out_dir)
    print(f"{csv_path}\n{svg_path}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    grid = args.angles or list(DEFAULT_CALIBRATION_GRID)
    report = wqm_calibrate(_wqm_config(args), grid, args.m, args.seed, args.eta)
    if args.json:
        _emit_json(report.to_dict(), args.out)
    else:
        lines = [f"{r.angle_deg:8.3f} deg expected={r.expected:.6f} observed={r.observed:.6f} "
                 f"z={r.z:+.2f} {'ok' if r.passed else 'FAIL'}" for r in report.rows]
        lines.append("calibration " + ("passed" if report.passed else "FAILED"))
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_DATA


def cmd_phi_high(args: argparse.Namespace) -> int:
    config = _wqm_config(args)
    kw = dict(wqm_config=config, significance=args.significance, power=args.power,
              trials=args.trials, jobs=args.jobs)
    if args.build_table:
        table, _ = build_table(seed=args.seed, progress=lambda s: print(s, file=sys.stderr), **kw)
        _emit_json(table.to_dict(), args.build_table)
        return EXIT_OK
    _require(args, "eta", "m")
    res = estimate_phi_high(args.eta, args.m, seed=args.seed, **kw)
    if args.sweep_csv:
        _emit(res.sweep_csv(), args.sweep_csv)
    _emit_json(res.to_dict(), args.out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _add_phi(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", type=float, help="odd-outcome probability sin^2(alpha - beta)")
    p.add_argument("--angle", type=float, help="|alpha - beta| in degrees")


def _add_wqm(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("WQM engine")
    g.add_argument("--threshold-u", type=float)
    g.add_argument("--projection-exponent", type=float)
    g.add_argument("--v-process", choices=[v.value for v in VProcess])
    g.add_argument("--walk-step", type=float)
    g.add_argument("--memory-init", choices=[v.value for v in MemoryInit])
    g.add_argument("--max-steps", type=_count)
    g.add_argument("--keep-partner-on-discard", action="store_true",
                   help="partner is not collapsed when the source detection is discarded")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bellstrings", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML/JSON config file (default: $BELLSTRINGS_CONFIG)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="generate a coincidence series")
    p.add_argument("generator", choices=["wqm", "iid"])
    p.add_argument("--m", type=_count, help="number of recorded coincidences (1e6 accepted)")
    _add_phi(p)
    p.add_argument("--eta", type=float, default=1.0, help="detector efficiency (WQM only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", default="-")
    _add_wqm(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("corrupt", help="add entanglement background and dark accidentals")
    p.add_argument("--series")
    p.add_argument("--s-real", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--r-dark", type=float, default=0.0)
    p.add_argument("--r-coinc", type=float, default=5.0e4)
    p.add_argument("--t-w", type=_duration, default=10e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("strings", help="string-length histogram (CSV)")
    p.add_argument("--series")
    p.add_argument("--convention", choices=["auto", "even_runs", "odd_runs"], default="auto")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_strings)

    p = sub.add_parser("gof", help="chi-square test against n(k) or another series")
    p.add_argument("--series")
    p.add_argument("--phi", type=float)
    p.add_argument("--fit-phi", action="store_true")
    p.add_argument("--against", help="second series for a two-sample test")
    p.add_argument("--convention", choices=["auto", "even_runs", "odd_runs"], default="auto")
    p.add_argument("--significance", type=float, default=0.01)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("predict", help="i.i.d. expectations (JSON)")
    p.add_argument("--m", type=_count)
    _add_phi(p)
    p.add_argument("--csv", help="also write expected n(k) as CSV")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is JSON")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("window", help="feasibility window for a setup")
    p.add_argument("--s", type=float, help="measured S_real")
    p.add_argument("--eta", type=float)
    p.add_argument("--m", type=_count, default=1_000_000)
    p.add_argument("--r-dark", type=float, default=100.0)
    p.add_argument("--r-coinc", type=float, default=5.0e4)
    p.add_argument("--t-w", type=_duration, default=10e-9)
    p.add_argument("--safety", type=float, default=DEFAULT_SAFETY_FACTOR)
    p.add_argument("--table", help="phi_high table (JSON); default is the bundled one")
    p.add_argument("--live", action="store_true", help="estimate phi_high by simulation")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("ingest", help="pair time tags into a coincidence series")
    p.add_argument("--timetags")
    p.add_argument("--tw", type=_duration, help="coincidence window, e.g. 2ns")
    p.add_argument("--dark-rate", type=float)
    p.add_argument("--json", action="store_true", help="write the rates report")
    p.add_argument("--report", default="-", help="where the --json report goes")
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth-timetags", help="time tags that reproduce a series")
    p.add_argument("--series")
    p.add_argument("--pair-rate", type=float, default=5.0e4)
    p.add_argument("--tw", type=_duration, default=2e-9)
    p.add_argument("--jitter", type=_duration)
    p.add_argument("--dark-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("figure", help="regenerate a figure as SVG + CSV")
    p.add_argument("figure", type=int, choices=[1, 2, 3, 4])
    p.add_argument("--panel", nargs="+", choices=["a", "b", "c", "d"])
    p.add_argument("--m", type=_count)
    p.add_argument("--paper-scale", action="store_true", help="m = 1e8")
    p.add_argument("--data", help="measured series for figure 4")
    p.add_argument("--phi", type=float, help="figure 4 phi")
    p.add_argument("--eta", type=float, help="figure 4 eta")
    p.add_argument("--s-real", type=float, help="figure 4 S_real")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    _add_wqm(p)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("calibrate", help="WQM odd fraction against sin^2 per angle")
    p.add_argument("--m", type=_count, default=1_000_000)
    p.add_argument("--angles", type=float, nargs="+")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", "-o", default="-")
    _add_wqm(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("phi-high", help="efficiency-limited upper phi by simulation")
    p.add_argument("--eta", type=float)
    p.add_argument("--m", type=_count)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--significance", type=float, default=0.01)
    p.add_argument("--power", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--sweep-csv")
    p.add_argument("--build-table", metavar="OUT_JSON", help="regenerate the full phi_high table")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is JSON")
    p.add_argument("--out", "-o", default="-")
    _add_wqm(p)
    p.set_defaults(func=cmd_phi_high)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> tuple[argparse.Namespace, dict]:
    """Parse with config-file values installed as defaults so flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    path = known.config or default_config_path()
    if path is None:
        return parser.parse_args(argv), {}
    data = load_mapping(path)
    first = parser.parse_args(argv)
    section = {k: v for k, v in data.items() if not isinstance(v, dict)}
    section.update(data.get(first.command, {}))
    subparser = parser._subparsers._group_actions[0].choices[first.command]  # noqa: SLF001
    dests = {a.dest for a in subparser._actions}  # noqa: SLF001
    unknown = sorted(k for k in (k.replace("-", "_") for k in section) if k not in dests)
    if unknown:
        raise UsageError(f"unknown config key(s) for {first.command}: {', '.join(unknown)}")
    subparser.set_defaults(**{k.replace("-", "_"): v for k, v in section.items()})
    return parser.parse_args(argv), data.get("wqm", {})


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, wqm_section = _apply_config(parser, argv)
        args._wqm_section = wqm_section
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"bellstrings: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"bellstrings: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as exc:
        print(f"bellstrings: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DataFormatError, InsufficientDataError, BellStringsError, OSError) as exc:
        print(f"bellstrings: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
