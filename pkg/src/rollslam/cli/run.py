"""End-to-end pipelines shared by the command-line tools and benchmarks.

The building blocks (`sim`, `wheel_ins`, `wheel_slam`) know nothing about
each other's setup; this module wires them together the same way for every
command: synthesize or load an IMU log, align the dead reckoning on the
initial standstill, place it at the reference start pose, then either track
the pipeline alone or feed its odometry increments to the particle filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from rollslam.core import InvalidInputError, wrap_angle
from rollslam.sim import (
    GroundTruth,
    ImuStream,
    corrupt,
    generate_truth,
    synthesize_imu,
)
from rollslam.wheel_ins import (
    ImuSample,
    OdometryIncrement,
    WheelInsConfig,
    WheelInsPipeline,
)
from rollslam.wheel_slam import (
    Pose2D,
    SlamConfig,
    TerrainGrid,
    WheelSlamFilter,
)
from rollslam.cli.io import RunConfig, Trajectory
from rollslam.cli.metrics import evaluate_trajectory, improvement_percent

__all__ = [
    "InsRun",
    "SlamRun",
    "simulate_scene",
    "imu_samples",
    "alignment_split",
    "pose_at",
    "run_wheel_ins",
    "run_wheel_slam",
    "compare_seed",
]


@dataclass
class InsRun:
    """Dead-reckoning output: poses and odometry at the emission epochs."""

    trajectory: Trajectory
    increments: list = field(repr=False)
    start_pose: Pose2D
    aligned_samples: int
    updates_applied: int
    updates_gated: int
    updates_forced: int


@dataclass
class SlamRun:
    """Particle-filter output: fused poses plus the best particle's map."""

    trajectory: Trajectory
    grid: TerrainGrid = field(repr=False)
    events: list = field(repr=False)
    resample_count: int


def simulate_scene(config: RunConfig) -> tuple[GroundTruth, ImuStream]:
    """Ground truth and the corrupted IMU stream for a configured scene.

    The IMU is synthesized at the lever arm the dead-reckoning model is
    configured with, so simulation and estimation agree on the sensor
    geometry by construction.
    """
    terrain, spec = config.scene()
    truth = generate_truth(spec, terrain)
    lever = config.ins_config().lever_arm
    clean = synthesize_imu(truth, lever_arm=lever if any(lever) else None)
    noisy = corrupt(clean, config.error_spec(), seed=config.seed)
    return truth, noisy


def imu_samples(stream: ImuStream) -> list[ImuSample]:
    """View an IMU stream as the per-sample tuples the pipeline consumes."""
    return [
        ImuSample(float(stream.t[i]), stream.gyro[i], stream.accel[i])
        for i in range(len(stream))
    ]


def alignment_split(stream_t: np.ndarray, truth) -> int:
    """Number of leading IMU samples that fall inside the initial standstill.

    The reference track tells us when the vehicle first moves; every sample
    up to the last epoch at rest is usable for static alignment.
    """
    speed = np.asarray(truth.speed, dtype=float)
    moving = np.flatnonzero(speed > 0.0)
    if moving.size == 0:
        raise InvalidInputError("reference track never moves; nothing to estimate")
    if moving[0] == 0:
        raise InvalidInputError(
            "reference track has no initial standstill; "
            "dead reckoning needs a static window to align"
        )
    t_still = float(np.asarray(truth.t, dtype=float)[moving[0] - 1])
    n = int(np.searchsorted(np.asarray(stream_t, dtype=float), t_still, side="right"))
    if n == 0:
        raise InvalidInputError("no IMU samples inside the initial standstill")
    return n


def pose_at(truth, t: float) -> Pose2D:
    """Reference pose interpolated at time ``t`` (heading via unwrapping)."""
    tr = np.asarray(truth.t, dtype=float)
    x = float(np.interp(t, tr, np.asarray(truth.x, dtype=float)))
    y = float(np.interp(t, tr, np.asarray(truth.y, dtype=float)))
    h = float(np.interp(t, tr, np.unwrap(np.asarray(truth.heading, dtype=float))))
    return Pose2D(x, y, wrap_angle(h))


def run_wheel_ins(
    stream: ImuStream, truth, config: Optional[WheelInsConfig] = None
) -> InsRun:
    """Align on the standstill, start at the reference pose, dead-reckon.

    Trajectory rows are recorded at the odometry emission epochs (every
    ``roll_sample_distance_m`` of wheel travel), which is also exactly the
    input stream a downstream particle filter sees.
    """
    config = config if config is not None else WheelInsConfig()
    samples = imu_samples(stream)
    n_align = alignment_split(stream.t, truth)
    pipe = WheelInsPipeline(config)
    pipe.align(samples[:n_align])
    start = pose_at(truth, samples[n_align - 1].t)
    pipe.set_pose(start.x, start.y, start.heading)

    ts, xs, ys, hs = [], [], [], []
    increments: list[OdometryIncrement] = []
    for sample in samples[n_align:]:
        inc = pipe.step(sample)
        if inc is not None:
            increments.append(inc)
            ts.append(inc.t)
            xs.append(float(pipe.state.pos[0]))
            ys.append(float(pipe.state.pos[1]))
            hs.append(pipe.heading)
    if not increments:
        raise InvalidInputError(
            "dead reckoning produced no odometry increments; "
            "the IMU log ends before the wheel travels far enough"
        )
    trajectory = Trajectory(
        t=np.array(ts), x=np.array(xs), y=np.array(ys), heading=np.array(hs)
    )
    return InsRun(
        trajectory=trajectory,
        increments=increments,
        start_pose=start,
        aligned_samples=n_align,
        updates_applied=pipe.updates_applied,
        updates_gated=pipe.updates_gated,
        updates_forced=pipe.updates_forced,
    )


def run_wheel_slam(
    increments: Sequence[OdometryIncrement],
    start_pose: Pose2D,
    config: Optional[SlamConfig] = None,
) -> SlamRun:
    """Feed odometry increments through the particle filter."""
    if not increments:
        raise InvalidInputError("no odometry increments to filter")
    config = config if config is not None else SlamConfig()
    filt = WheelSlamFilter(config, start_pose)
    ts, xs, ys, hs = [], [], [], []
    for inc in increments:
        pose = filt.slam_step(inc)
        ts.append(inc.t)
        xs.append(pose.x)
        ys.append(pose.y)
        hs.append(pose.heading)
    trajectory = Trajectory(
        t=np.array(ts), x=np.array(xs), y=np.array(ys), heading=np.array(hs)
    )
    best = filt.best_particle()
    return SlamRun(
        trajectory=trajectory,
        grid=best.grid,
        events=list(filt.events),
        resample_count=filt.resample_count,
    )


def compare_seed(overrides: dict, seed: int, truth, clean: ImuStream) -> dict:
    """One seed of the SLAM-vs-dead-reckoning comparison.

    Takes the precomputed truth and clean IMU (identical across seeds) and
    applies the seed-specific sensor errors, so multi-seed sweeps pay for
    trajectory synthesis once.  Top-level function on purpose: worker
    processes must be able to import it.
    """
    cfg = RunConfig(dict(overrides)).with_overrides(seed=seed)
    noisy = corrupt(clean, cfg.error_spec(), seed=seed)
    ins = run_wheel_ins(noisy, truth, cfg.ins_config())
    slam = run_wheel_slam(ins.increments, ins.start_pose, cfg.slam_config())
    m_ins = evaluate_trajectory(ins.trajectory, truth)
    m_slam = evaluate_trajectory(slam.trajectory, truth)
    return {
        "seed": seed,
        "ins": m_ins.as_dict(),
        "slam": m_slam.as_dict(),
        "improvement_pos_pct": improvement_percent(
            m_ins.rmse_pos_m, m_slam.rmse_pos_m
        ),
        "improvement_heading_pct": improvement_percent(
            m_ins.rmse_heading_deg, m_slam.rmse_heading_deg
        ),
        "loop_closure_events": len(slam.events),
        "resamples": slam.resample_count,
    }
