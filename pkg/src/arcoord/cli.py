"""Command-line entry points.

Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.
The bind address comes from --bind or the ARCOORD_BIND environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, occlusion
from .coordination import SessionMode
from .server import DEFAULT_BIND, CoordinationServer
from .simclient import (
    ClientReport,
    load_scenario,
    make_tabletop_scenario,
    run_session,
)


def _parse_bind(text: str) -> tuple:
    host, _, port = text.rpartition(":")
    if not host or not port:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


def _default_bind() -> str:
    return os.environ.get("ARCOORD_BIND", f"{DEFAULT_BIND[0]}:{DEFAULT_BIND[1]}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcoord",
        description="Multi-user AR coordination core: server, simulated sessions, "
        "trajectory evaluation, occlusion compositing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the coordination server until interrupted")
    serve.add_argument("--bind", type=_parse_bind, default=None, help="host:port (or ARCOORD_BIND)")
    serve.add_argument(
        "--mode",
        choices=[m.value for m in SessionMode],
        default=None,
        help="pin the session mode (default: adopt the first client's)",
    )

    sim = sub.add_parser("simulate", help="run simulated clients against a server")
    sim.add_argument("--scenario", required=True, help="scenario JSON file")
    sim.add_argument("--clients", type=int, default=2)
    sim.add_argument("--mode", choices=[m.value for m in SessionMode], default="classroom")
    sim.add_argument("--server", type=_parse_bind, default=None, help="host:port; omit to self-host")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario's rng seed")
    sim.add_argument("--out-dir", default="reports", help="directory for client report files")

    ev = sub.add_parser("eval", help="relative pose error report from client reports")
    ev.add_argument("reports", nargs="+", help="client report JSON files")
    ev.add_argument("--out-dir", default="eval_out")
    ev.add_argument("--delta", type=int, default=1, help="RPE step in frames")

    occ = sub.add_parser("occlude", help="depth-compare compositing from files")
    occ.add_argument("--real", required=True, help="real-scene depth map")
    occ.add_argument("--virtual", required=True, help="virtual-scene depth map")
    occ.add_argument("--background", required=True, help="background image")
    occ.add_argument("--colors", required=True, help="virtual color image")
    occ.add_argument("--out", required=True, help="composited output image")

    sub.add_parser("selftest", help="quick end-to-end smoke check")
    return parser


def _cmd_serve(args) -> int:
    bind = args.bind or _parse_bind(_default_bind())
    mode = SessionMode.parse(args.mode) if args.mode else None
    server = CoordinationServer(bind, mode=mode)
    server.serve_forever()
    return 0


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    mode = SessionMode.parse(args.mode)
    reports = run_session(scenario, mode, args.clients, server_address=args.server)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for report in reports:
        path = out_dir / f"client_{report.client_index}.json"
        report.save(path)
        print(f"wrote {path}")
    return 0


def _cmd_eval(args) -> int:
    reports = [ClientReport.load(p) for p in args.reports]
    by_user = {r.user_id: r for r in reports}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    all_t: list = []
    all_r: list = []
    error_csvs = []
    trajectory_csvs = []
    for report in reports:
        own = evaluation.Trajectory.from_pairs(report.own_track)
        traj_csv = out_dir / f"trajectory_user{report.user_id}.csv"
        evaluation.write_trajectory_csv(traj_csv, own)
        trajectory_csvs.append(traj_csv.name)
        for peer_id, track in sorted(report.peer_tracks.items()):
            peer_report = by_user.get(peer_id)
            if peer_report is None or not track:
                continue
            estimate = evaluation.Trajectory.from_pairs(track)
            reference = evaluation.Trajectory.from_pairs(peer_report.ground_truth_track)
            t_err, r_err = evaluation.rpe(estimate, reference, delta=args.delta)
            all_t.extend(t_err)
            all_r.extend(r_err)
            curve = out_dir / f"rpe_user{report.user_id}_sees_{peer_id}.csv"
            evaluation.write_error_curve_csv(curve, "translational_m", t_err)
            error_csvs.append(curve.name)
    if not all_t:
        print("no peer trajectories to evaluate", file=sys.stderr)
        return 1
    summaries = {
        "translational_m": evaluation.summarize(all_t),
        "rotational_deg": evaluation.summarize(all_r),
    }
    evaluation.write_summary_csv(out_dir / "summary.csv", summaries)
    evaluation.write_gnuplot_script(out_dir / "plot.gp", trajectory_csvs, error_csvs)
    for metric, summary in summaries.items():
        for stat, value in summary.as_rows():
            print(f"{metric} {stat} {value:.6g}")
    print(f"wrote {out_dir / 'summary.csv'}")
    return 0


def _cmd_occlude(args) -> int:
    real = occlusion.read_depth(args.real)
    virtual = occlusion.read_depth(args.virtual)
    background = occlusion.read_image(args.background)
    colors = occlusion.read_image(args.colors)
    mask = occlusion.occlusion_mask(real, virtual)
    out = occlusion.composite(background, colors, mask)
    occlusion.write_image(args.out, out)
    visible = int(mask.bits.sum())
    print(f"wrote {args.out} ({visible} of {mask.width * mask.height} pixels virtual)")
    return 0


def _cmd_selftest(args) -> int:
    from . import protocol

    checks = []

    msg = protocol.PoseUpdate(user_id=0, seq=1, pose=protocol.PoseWire.identity())
    checks.append(("protocol round trip", protocol.decode(protocol.encode(msg)) == msg))

    scenario = make_tabletop_scenario(n_frames=40)
    reports = run_session(scenario, SessionMode.CLASSROOM, 2)
    ok = True
    for report in reports:
        peer = next(iter(report.peer_tracks))
        peer_report = next(r for r in reports if r.user_id == peer)
        est = evaluation.Trajectory.from_pairs(report.peer_tracks[peer])
        ref = evaluation.Trajectory.from_pairs(peer_report.ground_truth_track)
        t_err, r_err = evaluation.rpe(est, ref)
        ok = ok and max(t_err) < 1e-6 and max(r_err) < 1e-5
    checks.append(("noiseless two-client session", ok))
    checks.append(
        ("scale recovery", all(abs(r.recovered_scale - 1.0) < 1e-9 for r in reports))
    )

    failed = False
    for name, passed in checks:
        print(f"selftest {name}: {'PASS' if passed else 'FAIL'}")
        failed = failed or not passed
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "simulate": _cmd_simulate,
        "eval": _cmd_eval,
        "occlude": _cmd_occlude,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"arcoord {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
