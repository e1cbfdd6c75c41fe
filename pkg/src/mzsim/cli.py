"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 reference-
propagator acceptance failure (``oracle`` subcommand only).
"""

from __future__ import annotations

import argparse
import json
import sys

from .elements import SplitterMode
from .engines import run_at, run_ct, run_st
from .harness import compare_modes, run_ensemble
from .packets import ConfigurationError, GaussianPacket, GridSpec, PreconditionError
from .render import (
    DEFAULT_GRID,
    record_to_json,
    render_frames,
    save_frames,
    stats_to_csv,
    stats_to_text,
)
from .rng import run_stream
from .scenarios import resolve_scenario

ORACLE_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_run_args(p: argparse.ArgumentParser, with_n=False):
    p.add_argument("--scenario", default="be", help="builtin name (be/me/ce/abe/ame/ace) or a scenario .json path")
    p.add_argument("--theory", choices=("ct", "at", "st"), default="ct")
    p.add_argument(
        "--mode",
        choices=tuple(m.value for m in SplitterMode),
        default=SplitterMode.ALWAYS_SPLIT.value,
    )
    p.add_argument("--seed", type=int, default=0)
    if with_n:
        p.add_argument("--n", type=int, default=1000, help="number of runs")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)


def _single_record(args):
    scenario = resolve_scenario(args.scenario)
    mode = SplitterMode(args.mode)
    if args.theory == "st":
        if not (args.source and args.detector):
            raise ConfigurationError("two-boundary runs need --source and --detector")
        return run_st(scenario, args.source, args.detector, mode)
    rng = run_stream(args.seed, args.run_index)
    if args.theory == "ct":
        return run_ct(scenario, mode, rng, source_id=args.source)
    return run_at(scenario, mode, rng, detector_id=args.detector)


def _cmd_simulate(args) -> int:
    record = _single_record(args)
    _emit(json.dumps(record_to_json(record), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_ensemble(args) -> int:
    scenario = resolve_scenario(args.scenario)
    stats = run_ensemble(
        scenario,
        theory=args.theory,
        mode=SplitterMode(args.mode),
        n=args.n,
        seed=args.seed,
    )
    if args.format == "json":
        _emit(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    elif args.format == "csv":
        _emit(stats_to_csv(stats), args.out)
    else:
        _emit(stats_to_text(stats), args.out)
    return 0


def _cmd_frames(args) -> int:
    record = _single_record(args)
    times = None
    if args.times:
        times = tuple(float(x) for x in args.times.split(","))
    spec = DEFAULT_GRID
    if args.grid:
        nx, ny = (int(x) for x in args.grid.split(","))
        spec = GridSpec(
            x_min=DEFAULT_GRID.x_min,
            x_max=DEFAULT_GRID.x_max,
            y_min=DEFAULT_GRID.y_min,
            y_max=DEFAULT_GRID.y_max,
            nx=nx,
            ny=ny,
        )
    seq = render_frames(record, times=times, spec=spec)
    formats = tuple(args.formats.split(","))
    paths = save_frames(seq, args.out, formats=formats)
    for p in paths:
        print(p)
    return 0


def _cmd_compare(args) -> int:
    scenario = resolve_scenario(args.scenario)
    cmp = compare_modes(scenario, theory=args.theory, n=args.n, seed=args.seed)
    if args.format == "text":
        lines = [f"{cmp.scenario_name} ({cmp.theory}), n={cmp.n}:"]
        for (s, d), pa, pc in zip(cmp.pairs, cmp.always_split, cmp.collapse):
            lines.append(f"  ({s},{d})  split {pa:.5f}  collapse {pc:.5f}")
        lines.append(f"  max delta {cmp.max_delta:.5f} (3-sigma band {cmp.threshold:.5f})")
        lines.append(f"  verdict: {cmp.verdict}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(json.dumps(cmp.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_oracle(args) -> int:
    import numpy as np

    from .oracle import compare_closed_form, gaussian_profile_1d, spectral_evolve, spot_check_2d

    packet = GaussianPacket(
        amplitude=1.0, birth_time=0.0, origin=(0.0, 0.0), direction=(1.0, 0.0)
    )
    worst = 0.0
    lines = []
    for dt in (500.0, 1000.0, 2000.0, 8000.0):
        rep = compare_closed_form(packet, dt)
        worst = max(worst, rep.max_abs_error, rep.norm_drift, rep.wraparound)
        lines.append(
            f"dt={dt:<7g} max|err|={rep.max_abs_error:.3e} "
            f"norm drift={rep.norm_drift:.3e} wrap={rep.wraparound:.3e}"
        )
    wf = gaussian_profile_1d(50.0, 0.4)
    back = spectral_evolve(spectral_evolve(wf, 3000.0), -3000.0)
    round_err = float(np.abs(back.values - wf.values).max())
    worst = max(worst, round_err)
    lines.append(f"advanced/retarded roundtrip max|err|={round_err:.3e}")
    if args.full:
        import math

        oblique = GaussianPacket(
            amplitude=1.0,
            birth_time=0.0,
            origin=(0.0, 0.0),
            direction=(1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)),
        )
        err2d = spot_check_2d(oblique, 1000.0)
        worst = max(worst, err2d)
        lines.append(f"2d oblique spot check max|err|={err2d:.3e}")
    ok = worst <= ORACLE_TOL
    lines.append(f"{'PASS' if ok else 'FAIL'} (worst {worst:.3e}, tolerance {ORACLE_TOL:g})")
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if ok else 3


def _cmd_serve(args) -> int:
    from .server import main as serve_main

    serve_main(host=args.host, port=args.port)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mzsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="one run, record as JSON")
    _add_run_args(p)
    p.add_argument("--source", default=None, help="fix the emitting source (ct/st)")
    p.add_argument("--detector", default=None, help="fix the detector (at/st)")
    p.add_argument("--run-index", type=int, default=0, help="rng stream index")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("ensemble", help="many runs, ensemble statistics")
    _add_run_args(p, with_n=True)
    p.set_defaults(fn=_cmd_ensemble)

    p = sub.add_parser("frames", help="density panels as PGM/CSV")
    _add_run_args(p)
    p.add_argument("--source", default=None)
    p.add_argument("--detector", default=None)
    p.add_argument("--run-index", type=int, default=0)
    p.add_argument("--times", default=None, help="comma-separated frame times")
    p.add_argument("--formats", default="pgm,csv")
    p.add_argument("--grid", default=None, help="nx,ny override")
    p.set_defaults(fn=_cmd_frames)
    # frames writes a directory; --out is required there
    p.set_defaults(out_required=True)

    p = sub.add_parser("compare", help="always-split vs collapse ensembles")
    _add_run_args(p, with_n=True)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("oracle", help="check the closed form against the spectral propagator")
    p.add_argument("--full", action="store_true", help="include the heavier 2D check")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("serve", help="run the live session HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "out_required", False) and not args.out:
        parser.error("frames needs --out DIRECTORY")
    try:
        return args.fn(args)
    except (ConfigurationError, PreconditionError, FileNotFoundError, KeyError) as e:
        print(f"mzsim: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
