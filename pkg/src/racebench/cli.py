"""The `bench` command line: plan, run, sweep, train, reward-study, pf-report,
stats, plot. All outputs land under --out with a manifest of artifacts.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

import argparse
import os
import sys

import numpy as np

from . import harness
from .dynamics import VehicleParams
from .errors import ConfigError, RacebenchError
from .harness import (
    Manifest,
    RunConfig,
    TrackBundle,
    friction_sweep,
    load_and_check_summary,
    localisation_report,
    reward_study,
    run_benchmark,
    stats_rows,
    train_agent,
    write_csv,
)
from .raceline import build_raceline, save_raceline
from .rl import REWARD_KINDS


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x]


def _parse_strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser():
    ap = argparse.ArgumentParser(prog="bench",
                                 description="desk-scale autonomous-racing benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="bench_out", help="output directory")
    common.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plan", parents=[common],
                       help="optimise a raceline for a track")
    p.add_argument("--map", required=True)
    p.add_argument("--friction", type=float, default=0.9)
    p.add_argument("--margin", type=float, default=harness.PP_MARGIN)

    p = sub.add_parser("run", parents=[common], help="seeded lap batch")
    p.add_argument("--planner", default="pp", choices=harness.PLANNER_IDS)
    p.add_argument("--map", required=True)
    p.add_argument("--laps", type=int, default=10)
    p.add_argument("--friction", type=float, default=0.9)
    p.add_argument("--control-hz", type=int, default=25)
    p.add_argument("--pose", default="true", choices=harness.POSE_SOURCES)
    p.add_argument("--particles", type=int, default=1000)
    p.add_argument("--checkpoint", default="")
    p.add_argument("--vehicle-config", default="",
                   help="key=value file of vehicle parameters")
    p.add_argument("--dump-horizons", action="store_true",
                   help="mpcc: write every solve's horizon to CSV")

    p = sub.add_parser("sweep", parents=[common],
                       help="friction / control-frequency / pose sweep")
    p.add_argument("--planner", default="pp,mpcc")
    p.add_argument("--map", required=True)
    p.add_argument("--friction", default="0.5,0.7,0.9")
    p.add_argument("--control-hz", default="25")
    p.add_argument("--pose", default="true,pf")
    p.add_argument("--laps", type=int, default=10)
    p.add_argument("--particles", type=int, default=1000)

    p = sub.add_parser("train", parents=[common], help="train one TD3 agent")
    p.add_argument("--map", required=True)
    p.add_argument("--reward", default="tal", choices=REWARD_KINDS)
    p.add_argument("--steps", type=int, default=30000)

    p = sub.add_parser("reward-study", parents=[common],
                       help="rewards x seeds x maps training study")
    p.add_argument("--map", default="oval", help="comma-separated training maps")
    p.add_argument("--test-map", default="", help="test maps (default: same)")
    p.add_argument("--reward", default="tal,cth,progress")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--steps", type=int, default=30000)

    p = sub.add_parser("pf-report", parents=[common],
                       help="localisation error vs particle count")
    p.add_argument("--map", default="oval")
    p.add_argument("--particles", default="50,100,200,500,1000")

    p = sub.add_parser("stats", parents=[common],
                       help="track characteristic table")
    p.add_argument("--map", required=True, help="comma-separated tracks")

    p = sub.add_parser("plot", parents=[common],
                       help="plot-ready data from a prior run directory")
    p.add_argument("--run-dir", required=True)
    return ap


def cmd_plan(args, manifest):
    bundle = TrackBundle.load(args.map)
    vehicle = VehicleParams(mu=args.friction)
    plan_p = harness.plan_vehicle(vehicle, args.friction)
    line, report = build_raceline(bundle.track, vehicle, margin=args.margin,
                                  mu=args.friction * harness.PP_MU_SCALE,
                                  v_max=plan_p.v_max)
    path = os.path.join(args.out, f"raceline_{bundle.name}.csv")
    save_raceline(line, path)
    manifest.add(path)
    print(f"raceline: {path}")
    print(f"objective {report.objective_before:.4f} -> {report.objective_after:.4f} "
          f"in {report.outer_iterations} iterations "
          f"(converged={report.converged})")
    return 0


def cmd_run(args, manifest):
    dump = os.path.join(args.out, "mpcc_horizons.csv") \
        if (args.dump_horizons and args.planner == "mpcc") else ""
    cfg = RunConfig(planner=args.planner, track=args.map, n_laps=args.laps,
                    seed=args.seed, mu=args.friction, control_hz=args.control_hz,
                    pose_source=args.pose, particles=args.particles,
                    checkpoint=args.checkpoint, vehicle_config=args.vehicle_config,
                    horizon_dump=dump)
    summary, records = run_benchmark(cfg, keep_records=True)
    detail_path = os.path.join(args.out, "laps_detail.csv")
    rows = [dict(planner=summary.planner, track=summary.track, mu=summary.mu,
                 pose_source=summary.pose_source, control_hz=summary.control_hz,
                 **r) for r in summary.detail_rows()]
    write_csv(detail_path, rows)
    summary_path = os.path.join(args.out, "summary.csv")
    write_csv(summary_path, [summary.summary_row()])
    for i, rec in enumerate(records):
        ep_path = os.path.join(args.out, f"episode_{i:03d}.csv")
        rec.to_csv(ep_path)
        manifest.add(ep_path)
    manifest.add(detail_path)
    manifest.add(summary_path)
    if cfg.horizon_dump and os.path.exists(cfg.horizon_dump):
        manifest.add(cfg.horizon_dump)
    row = summary.summary_row()
    print(f"{row['planner']} on {row['track']}: completion "
          f"{row['completion_rate_pct']:.0f}%, mean lap "
          f"{row['mean_lap_time_s']:.2f} s, mean progress "
          f"{row['mean_progress_pct']:.1f}%")
    return 0


def cmd_sweep(args, manifest):
    summaries = friction_sweep(
        _parse_strs(args.planner), args.map, _parse_floats(args.friction),
        _parse_strs(args.pose), control_hzs=[int(x) for x in _parse_strs(args.control_hz)],
        n_laps=args.laps, seed=args.seed, particles=args.particles,
    )
    path = os.path.join(args.out, "sweep.csv")
    write_csv(path, [s.summary_row() for s in summaries])
    manifest.add(path)
    from .plots import emit_sweep_table
    data = emit_sweep_table(summaries, os.path.join(args.out, "sweep_plot"))
    manifest.add(data)
    manifest.add(os.path.join(args.out, "sweep_plot.gp"))
    for s in summaries:
        row = s.summary_row()
        print(f"{row['planner']:>5} mu={row['mu']:.2f} hz={row['control_hz']} "
              f"pose={row['pose_source']:>4}: completion "
              f"{row['completion_rate_pct']:5.1f}% lap {row['mean_lap_time_s']:.2f} s")
    return 0


def cmd_train(args, manifest):
    ckpt = os.path.join(args.out, f"agent_{args.map}_{args.reward}_s{args.seed}.ckpt")
    agent, curve = train_agent(args.map, args.reward, args.steps, args.seed, ckpt,
                               progress_cb=lambda s, row: print(
                                   f"step {s}: mean progress {row[1]*100:.1f}%"))
    curve_path = os.path.join(args.out, "learning_curve.csv")
    write_csv(curve_path, [dict(step=s, mean_progress=m, min_progress=lo,
                                max_progress=hi) for s, m, lo, hi in curve])
    manifest.add(ckpt)
    manifest.add(curve_path)
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_reward_study(args, manifest):
    test_maps = _parse_strs(args.test_map) or None
    results, curves = reward_study(
        _parse_strs(args.map), _parse_strs(args.reward),
        [int(s) for s in _parse_strs(args.seeds)], args.steps,
        test_tracks=test_maps, out_dir=args.out,
    )
    path = os.path.join(args.out, "reward_matrix.csv")
    write_csv(path, results)
    manifest.add(path)
    from .plots import emit_learning_curves
    data = emit_learning_curves(curves, os.path.join(args.out, "learning_curves"))
    manifest.add(data)
    for row in results:
        print(f"{row['reward']:>8} s{row['seed']} {row['train_track']}->"
              f"{row['test_track']}: completion {row['completion_rate_pct']:.0f}% "
              f"progress {row['mean_progress_pct']:.1f}%")
    return 0


def cmd_pf_report(args, manifest):
    counts = [int(x) for x in _parse_strs(args.particles)]
    rows, logs = localisation_report(args.map, counts, seed=args.seed)
    path = os.path.join(args.out, "pf_report.csv")
    write_csv(path, rows)
    # wall-clock timing column makes this artifact non-deterministic
    manifest.add(path, hashed=False)
    for count, log in logs.items():
        lp = os.path.join(args.out, f"pf_errors_{count}.csv")
        write_csv(lp, [dict(x_true=a, y_true=b, theta_true=c, x_est=d, y_est=e,
                            theta_est=f, pos_error_m=g) for a, b, c, d, e, f, g in log])
        manifest.add(lp)
    for row in rows:
        print(f"{row['particles']:>5} particles: mean error "
              f"{row['mean_error_m']*100:.1f} cm, {row['mean_update_ms']:.1f} ms/update")
    return 0


def cmd_stats(args, manifest):
    rows = stats_rows(_parse_strs(args.map))
    path = os.path.join(args.out, "track_stats.csv")
    write_csv(path, rows)
    manifest.add(path)
    print("track,length_m,straight_pct,corner_count")
    for row in rows:
        print(f"{row['track']},{row['length_m']:.2f},{row['straight_pct']:.2f},"
              f"{row['corner_count']}")
    return 0


def cmd_plot(args, manifest):
    summary_csv = os.path.join(args.run_dir, "summary.csv")
    detail_csv = os.path.join(args.run_dir, "laps_detail.csv")
    if os.path.exists(summary_csv) and os.path.exists(detail_csv):
        load_and_check_summary(summary_csv, detail_csv)
        print("summary re-derived from detail rows: consistent")
    from .plots import emit_speed_profile  # noqa: F401  (data files below)
    import csv
    made = 0
    for name in sorted(os.listdir(args.run_dir)):
        if not (name.startswith("episode_") and name.endswith(".csv")):
            continue
        src = os.path.join(args.run_dir, name)
        base = os.path.join(args.out, name[:-4] + "_speed")
        with open(src) as fh:
            rows = [r for r in csv.DictReader(fh) if not r["step"].startswith("#")]
        data = base + ".dat"
        with open(data, "w") as fh:
            fh.write("# s_m v_mps\n")
            for r in rows:
                fh.write(f"{float(r['progress_m']):.10g} {float(r['speed_mps']):.10g}\n")
        manifest.add(data)
        made += 1
    print(f"wrote {made} speed-profile data files")
    return 0


COMMANDS = {
    "plan": cmd_plan,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "train": cmd_train,
    "reward-study": cmd_reward_study,
    "pf-report": cmd_pf_report,
    "stats": cmd_stats,
    "plot": cmd_plot,
}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        manifest = Manifest(args.out, run_config=vars(args))
        code = COMMANDS[args.command](args, manifest)
        manifest.write()
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RacebenchError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
