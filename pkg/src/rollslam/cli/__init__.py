"""Command-line layer: file formats, metrics, pipelines, and the CLI.

Import order matters here: :mod:`rollslam.cli.main` pulls in the sibling
modules through the package, so they must be bound first.
"""

from rollslam.cli import io, metrics, run
from rollslam.cli.io import (
    IMU_HEADER,
    MAP_HEADER,
    TRAJECTORY_HEADER,
    TRUTH_HEADER,
    RunConfig,
    Trajectory,
    TruthTrack,
    read_imu_csv,
    read_map_csv,
    read_trajectory_csv,
    read_truth_csv,
    write_imu_csv,
    write_map_csv,
    write_trajectory_csv,
    write_truth_csv,
)
from rollslam.cli.metrics import Metrics, evaluate_trajectory
from rollslam.cli.run import (
    InsRun,
    SlamRun,
    run_wheel_ins,
    run_wheel_slam,
    simulate_scene,
)
from rollslam.cli.main import build_parser, main

__all__ = [
    "IMU_HEADER",
    "MAP_HEADER",
    "TRAJECTORY_HEADER",
    "TRUTH_HEADER",
    "RunConfig",
    "Trajectory",
    "TruthTrack",
    "Metrics",
    "InsRun",
    "SlamRun",
    "io",
    "metrics",
    "run",
    "read_imu_csv",
    "read_map_csv",
    "read_trajectory_csv",
    "read_truth_csv",
    "write_imu_csv",
    "write_map_csv",
    "write_trajectory_csv",
    "write_truth_csv",
    "evaluate_trajectory",
    "simulate_scene",
    "run_wheel_ins",
    "run_wheel_slam",
    "build_parser",
    "main",
]
