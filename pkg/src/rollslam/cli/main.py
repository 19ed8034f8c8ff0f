"""Command-line tools: simulate scenes, run the filters, score the results.

Every run command drops a ``manifest.json`` next to its outputs recording
the command, the fully resolved configuration, the seed, input-file hashes,
and library versions — enough to reproduce the outputs bit for bit.  No
output embeds wall-clock time or host identity, so a rerun with the same
inputs produces byte-identical files.

Exit status: 0 on success, 2 on any diagnosed input problem (bad config,
malformed CSV, mismatched files); the diagnostic goes to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from rollslam import __version__
from rollslam.core import DegenerateSequenceError, InvalidInputError
from rollslam.sim import generate_truth, synthesize_imu
from rollslam.wheel_ins import AlignmentError, NumericalError
from rollslam.cli import io
from rollslam.cli.metrics import evaluate_trajectory, improvement_percent, quartiles
from rollslam.cli.run import (
    compare_seed,
    run_wheel_ins,
    run_wheel_slam,
    simulate_scene,
)

__all__ = ["main", "build_parser"]

_USER_ERRORS = (
    InvalidInputError,
    DegenerateSequenceError,
    AlignmentError,
    NumericalError,
)


def _versions() -> dict:
    import platform

    return {
        "rollslam": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_config(args) -> io.RunConfig:
    if getattr(args, "config", None):
        cfg = io.RunConfig.from_file(args.config)
    else:
        cfg = io.RunConfig()
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        n_particles=getattr(args, "particles", None),
        loop_closure=False if getattr(args, "no_loop_closure", False) else None,
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, cfg, inputs: dict, outputs: list) -> None:
    manifest = cfg.manifest(command, _versions())
    manifest["inputs"] = {
        name: {"path": str(path), "sha256": _sha256(path)}
        for name, path in inputs.items()
    }
    manifest["outputs"] = sorted(outputs)
    io.write_manifest(out / "manifest.json", manifest)


# --------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    truth, noisy = simulate_scene(cfg)
    io.write_truth_csv(out / "truth.csv", truth)
    io.write_imu_csv(out / "imu.csv", noisy)
    _write_manifest(out, "simulate", cfg, {}, ["truth.csv", "imu.csv"])
    print(
        f"simulated {truth.arc_len[-1]:.1f} m over {truth.t[-1]:.1f} s "
        f"({len(truth.t)} samples) -> {out}"
    )
    return 0


def cmd_run_ins(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    stream = io.read_imu_csv(args.imu)
    truth = io.read_truth_csv(args.truth)
    result = run_wheel_ins(stream, truth, cfg.ins_config())
    io.write_trajectory_csv(out / "ins_trajectory.csv", result.trajectory)
    _write_manifest(
        out,
        "run-ins",
        cfg,
        {"imu": args.imu, "truth": args.truth},
        ["ins_trajectory.csv"],
    )
    print(
        f"dead reckoning: {result.trajectory.t.size} poses, "
        f"{result.updates_applied} EKF updates ({result.updates_gated} gated) "
        f"-> {out / 'ins_trajectory.csv'}"
    )
    return 0


def _run_full(args):
    """Shared INS -> SLAM pipeline behind run-slam and export-map."""
    cfg = _load_config(args)
    stream = io.read_imu_csv(args.imu)
    truth = io.read_truth_csv(args.truth)
    ins = run_wheel_ins(stream, truth, cfg.ins_config())
    slam = run_wheel_slam(ins.increments, ins.start_pose, cfg.slam_config())
    return cfg, ins, slam


def cmd_run_slam(args) -> int:
    out = _out_dir(args)
    cfg, ins, slam = _run_full(args)
    io.write_trajectory_csv(out / "slam_trajectory.csv", slam.trajectory)
    io.write_trajectory_csv(out / "ins_trajectory.csv", ins.trajectory)
    _write_manifest(
        out,
        "run-slam",
        cfg,
        {"imu": args.imu, "truth": args.truth},
        ["slam_trajectory.csv", "ins_trajectory.csv"],
    )
    print(
        f"slam: {slam.trajectory.t.size} poses, "
        f"{len(slam.events)} loop-closure events, "
        f"{slam.resample_count} resamples, "
        f"map of {len(slam.grid.cells)} cells -> {out / 'slam_trajectory.csv'}"
    )
    return 0


def cmd_export_map(args) -> int:
    out = _out_dir(args)
    cfg, _, slam = _run_full(args)
    io.write_map_csv(out / "map.csv", slam.grid)
    _write_manifest(
        out,
        "export-map",
        cfg,
        {"imu": args.imu, "truth": args.truth},
        ["map.csv"],
    )
    print(f"map: {len(slam.grid.cells)} cells -> {out / 'map.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    estimate = io.read_trajectory_csv(args.estimate)
    truth = io.read_truth_csv(args.truth)
    result = evaluate_trajectory(estimate, truth).as_dict()
    if args.baseline:
        base = evaluate_trajectory(io.read_trajectory_csv(args.baseline), truth)
        result["baseline"] = base.as_dict()
        result["improvement_pos_pct"] = improvement_percent(
            base.rmse_pos_m, result["rmse_pos_m"]
        )
        result["improvement_heading_pct"] = improvement_percent(
            base.rmse_heading_deg, result["rmse_heading_deg"]
        )
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out:
        io.atomic_write_text(args.out, text + "\n")
    return 0


def _parse_seeds(spec: str) -> list[int]:
    """Expand ``1-20`` / ``1,3,9`` / mixes of both into a seed list."""
    seeds = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        lo, sep, hi = chunk.partition("-")
        try:
            if sep:
                lo_i, hi_i = int(lo), int(hi)
                if hi_i < lo_i:
                    raise ValueError
                seeds.extend(range(lo_i, hi_i + 1))
            else:
                seeds.append(int(chunk))
        except ValueError:
            raise InvalidInputError(f"bad seed range {chunk!r}") from None
    if not seeds:
        raise InvalidInputError(f"no seeds in {spec!r}")
    if len(set(seeds)) != len(seeds):
        raise InvalidInputError(f"duplicate seeds in {spec!r}")
    return seeds


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    seeds = _parse_seeds(args.seeds)

    # Scene synthesis is seed-independent; do it once and ship it to the
    # workers, which then only pay for corruption and filtering.
    terrain, spec = cfg.scene()
    truth = generate_truth(spec, terrain)
    lever = cfg.ins_config().lever_arm
    clean = synthesize_imu(truth, lever_arm=lever if any(lever) else None)

    jobs = [(dict(cfg.overrides), seed, truth, clean) for seed in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_compare_star, jobs))
    else:
        rows = [_compare_star(job) for job in jobs]

    pos_imp = [r["improvement_pos_pct"] for r in rows]
    head_imp = [r["improvement_heading_pct"] for r in rows]
    wins = sum(r["slam"]["rmse_pos_m"] < r["ins"]["rmse_pos_m"] for r in rows)
    q_pos = quartiles(pos_imp)
    q_head = quartiles(head_imp)
    report = {
        "seeds": seeds,
        "runs": rows,
        "summary": {
            "n_seeds": len(seeds),
            "wins_pos": wins,
            "improvement_pos_pct": {
                "q1": q_pos[0], "median": q_pos[1], "q3": q_pos[2],
            },
            "improvement_heading_pct": {
                "q1": q_head[0], "median": q_head[1], "q3": q_head[2],
            },
            "slam_rmse_pos_m_median": quartiles(
                r["slam"]["rmse_pos_m"] for r in rows
            )[1],
            "ins_rmse_pos_m_median": quartiles(
                r["ins"]["rmse_pos_m"] for r in rows
            )[1],
        },
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    io.atomic_write_text(out / "compare.json", text + "\n")
    _write_manifest(out, "compare", cfg, {}, ["compare.json"])
    for r in rows:
        print(
            f"seed {r['seed']:3d}: pos {r['ins']['rmse_pos_m']:6.2f} -> "
            f"{r['slam']['rmse_pos_m']:6.2f} m ({r['improvement_pos_pct']:+6.1f}%)  "
            f"heading {r['ins']['rmse_heading_deg']:5.2f} -> "
            f"{r['slam']['rmse_heading_deg']:5.2f} deg "
            f"({r['improvement_heading_pct']:+6.1f}%)"
        )
    print(
        f"median improvement: pos {q_pos[1]:.1f}%, heading {q_head[1]:.1f}%; "
        f"slam beats dead reckoning on {wins}/{len(seeds)} seeds "
        f"-> {out / 'compare.json'}"
    )
    return 0


def _compare_star(job) -> dict:
    overrides, seed, truth, clean = job
    return compare_seed(overrides, seed, truth, clean)


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rollslam",
        description=(
            "Dead reckoning and terrain-profile SLAM with a single "
            "wheel-mounted IMU."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, *, seed=True):
        p.add_argument("--config", help="key = value config file")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")

    def io_paths(p):
        p.add_argument("--imu", required=True, help="IMU CSV (from simulate)")
        p.add_argument("--truth", required=True, help="reference track CSV")

    def slam_flags(p):
        p.add_argument(
            "--particles", type=int, help="override the particle count"
        )
        p.add_argument(
            "--no-loop-closure",
            action="store_true",
            help="disable map matching (pure motion model)",
        )

    p = sub.add_parser(
        "simulate", help="synthesize ground truth and an IMU log"
    )
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run-ins", help="dead-reckon an IMU log")
    common(p)
    io_paths(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run_ins)

    p = sub.add_parser(
        "run-slam", help="dead-reckon, then fuse with the particle filter"
    )
    common(p)
    io_paths(p)
    slam_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run_slam)

    p = sub.add_parser(
        "export-map", help="run the full pipeline and export the terrain map"
    )
    common(p)
    io_paths(p)
    slam_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_export_map)

    p = sub.add_parser(
        "evaluate", help="score an estimated trajectory against a reference"
    )
    p.add_argument("--estimate", required=True, help="trajectory CSV to score")
    p.add_argument("--truth", required=True, help="reference track CSV")
    p.add_argument(
        "--baseline",
        help="second trajectory CSV; adds improvement percentages",
    )
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "compare",
        help="multi-seed SLAM vs dead-reckoning benchmark on one scene",
    )
    common(p, seed=False)
    slam_flags(p)
    p.add_argument(
        "--seeds", default="1-20", help="seed list, e.g. 1-20 or 1,3,9"
    )
    p.add_argument(
        "--workers",
        type=int,
        default=1,
        help="worker processes (does not affect the results)",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
