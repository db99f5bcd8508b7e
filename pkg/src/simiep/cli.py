"""Command-line entry point.

Exit codes: 0 success, 1 usage or I/O error, 2 invalid configuration,
3 numerical abort, 4 check-suite failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aspa import AoParams, rom_ao
from .checks import run_checks
from .config import ConfigError, ScenarioConfig, load_config
from .evaluation import RunResult, constellation, draw_frame, heatmap_for, sweep
from .geometry import Scenario
from .io import write_csv, write_json, write_manifest
from .manifold import NumericalAbort
from .rom import RomParams, rom

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scenario file (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--out-dir", type=Path, help="override out_dir")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes; changes speed only, never results")

    parser = _Parser(prog="simiep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="one frame of joint selection, phases and power")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--no-as", action="store_true", help="keep the first K antennas")
    p.add_argument("--no-pa", action="store_true", help="keep uniform power")

    sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep from the config's sweep block")

    p = sub.add_parser("trace", parents=[common], help="phase optimizer convergence traces")
    p.add_argument("--frame", type=int, default=0)

    for name, helptext in (("heatmap", "stream-to-user gain map"),
                           ("constellation", "noise-free received samples")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--frame", type=int, default=0)
        p.add_argument("--strategy", default="rom")

    p = sub.add_parser("check", parents=[common], help="oracle and invariant suite")
    p.add_argument("--full", action="store_true", help="trend suite at acceptance scale")
    return parser


def resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.out_dir is not None:
        updates["out_dir"] = str(args.out_dir)
    if updates:
        try:
            cfg = cfg.replace(**updates)
        except ValueError as err:
            raise ConfigError(str(err)) from None
    return cfg


def cmd_run(cfg: ScenarioConfig, args, out: Path) -> int:
    scen = Scenario(cfg)
    draw = draw_frame(scen, cfg.master_seed, args.frame)
    params = AoParams.from_config(cfg.optimizer, use_as=not args.no_as, use_pa=not args.no_pa)
    state, phases, power, hist = rom_ao(draw.channels, draw.frame, params, draw.phases0)
    ref = float(np.sqrt(draw.ref_power))
    rows = [{"outer_iter": t, "block": b, "min_margin": m / ref, "wall_ms": hist.wall_ms[t - 1]}
            for t, b, m in hist.blocks]
    hist_path = write_csv(out / "run_history.csv", cfg, ["outer_iter", "block", "min_margin", "wall_ms"], rows)
    summary = {
        "frame": args.frame,
        "realization": draw.realization_hash(),
        "selected_antennas": [i + 1 for i in state.chosen],
        "power_fraction": (power**2).tolist(),
        "initial_min_margin": hist.initial_margin / ref,
        "final_min_margin": state.margin_best / ref,
        "outer_iterations": len(hist.wall_ms),
        "phases_rad": np.angle(phases.thetas).tolist(),
        "margin_unit": "sqrt of the unoptimized reference received power",
    }
    summary_path = write_json(out / "run_summary.json", summary)
    write_manifest(out, "run", cfg, {"history": hist_path, "summary": summary_path})
    print(f"selected antennas {summary['selected_antennas']}, power "
          f"{np.round(summary['power_fraction'], 4).tolist()}, min margin "
          f"{summary['initial_min_margin']:+.4f} -> {summary['final_min_margin']:+.4f}")
    return EXIT_OK


def cmd_sweep(cfg: ScenarioConfig, args, out: Path) -> int:
    result: RunResult = sweep(cfg, workers=args.threads)
    path = write_csv(out / "sweep.csv", cfg, RunResult.COLUMNS, result.rows)
    frame_rows = []
    for value, frames in result.frames.items():
        for fr in frames:
            for s in fr.min_margin:
                frame_rows.append({"axis_value": value, "frame": fr.index, "realization": fr.realization,
                                   "strategy": s, "min_margin": fr.min_margin[s]})
    frames_path = write_csv(out / "sweep_frames.csv", cfg,
                            ["axis_value", "frame", "realization", "strategy", "min_margin"], frame_rows)
    write_manifest(out, "sweep", cfg, {"sweep": path, "frames": frames_path}, {"axis": result.axis})
    for row in result.rows:
        print(f"{result.axis}={row['axis_value']:<6g} {row['strategy']:<13} ser={row['ser']:.4f} "
              f"(+-{row['ser_stderr']:.4f}) rate={row['sum_rate']:.3f} margin={row['min_margin']:+.4f}")
    return EXIT_OK


def cmd_trace(cfg: ScenarioConfig, args, out: Path) -> int:
    scen = Scenario(cfg)
    draw = draw_frame(scen, cfg.master_seed, args.frame)
    _, hist = rom(draw.channels, draw.frame, RomParams.from_config(cfg.optimizer), draw.phases0,
                  keep_traces=True)
    ref = float(np.sqrt(draw.ref_power))
    rows = [{"outer_iter": 0, "min_margin": hist.initial_margin / ref, "wall_ms": 0.0}]
    rows += [{"outer_iter": t + 1, "min_margin": m / ref, "wall_ms": w}
             for t, (m, w) in enumerate(zip(hist.min_margin, hist.wall_ms))]
    outer = write_csv(out / "trace.csv", cfg, ["outer_iter", "min_margin", "wall_ms"], rows)
    inner_rows = []
    for j, (layer, tr) in enumerate(hist.layer_traces):
        for it, obj, step, gnorm in tr.rows():
            inner_rows.append({"outer_iter": j // cfg.L + 1, "layer": layer, "iteration": it,
                               "objective": obj, "step": step, "grad_norm": gnorm})
    inner = write_csv(out / "trace_layers.csv", cfg,
                      ["outer_iter", "layer", "iteration", "objective", "step", "grad_norm"], inner_rows)
    write_manifest(out, "trace", cfg, {"trace": outer, "layers": inner})
    print(f"{hist.iterations} outer iterations, min margin {rows[0]['min_margin']:+.4f} -> "
          f"{rows[-1]['min_margin']:+.4f}")
    return EXIT_OK


def cmd_heatmap(cfg: ScenarioConfig, args, out: Path) -> int:
    db, stats = heatmap_for(cfg, args.strategy, args.frame)
    rows = [{"user": k + 1, "stream": i + 1, "gain_db": float(db[k, i])}
            for k in range(db.shape[0]) for i in range(db.shape[1])]
    path = write_csv(out / "heatmap.csv", cfg, ["user", "stream", "gain_db"], rows)
    write_manifest(out, "heatmap", cfg, {"heatmap": path}, {"strategy": args.strategy, **stats})
    print(f"{args.strategy}: diagonal-off-diagonal gap {stats['gap_db']:.2f} dB, "
          f"diagonal variance {stats['diag_var_db']:.2f} dB^2")
    return EXIT_OK


def cmd_constellation(cfg: ScenarioConfig, args, out: Path) -> int:
    rows = constellation(cfg, args.strategy, args.frame)
    path = write_csv(out / "constellation.csv", cfg,
                     ["slot", "user", "ideal_re", "ideal_im", "rx_re", "rx_im", "margin"], rows)
    write_manifest(out, "constellation", cfg, {"constellation": path}, {"strategy": args.strategy})
    print(f"{len(rows)} samples, min margin {min(r['margin'] for r in rows):+.4f}")
    return EXIT_OK


def cmd_check(cfg: ScenarioConfig, args, out: Path) -> int:
    t0 = time.perf_counter()
    results = run_checks(cfg.master_seed, full=args.full, workers=args.threads)
    for r in results:
        print(r.line())
    rows = [{"criterion": r.criterion, "name": r.name, "passed": r.passed, "detail": r.detail,
             "seconds": round(r.seconds, 3)} for r in results]
    path = write_csv(out / "check.csv", cfg, ["criterion", "name", "passed", "detail", "seconds"], rows)
    failed = sum(not r.passed for r in results)
    write_manifest(out, "check", cfg, {"check": path}, {"full": args.full, "failed": failed})
    print(f"{len(results) - failed} passed, {failed} failed in {time.perf_counter() - t0:.1f} s")
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "trace": cmd_trace, "heatmap": cmd_heatmap,
            "constellation": cmd_constellation, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("simiep: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except ConfigError as err:
        print(f"simiep: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as err:
        print(f"simiep: numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"simiep: invalid input: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"simiep: I/O error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
