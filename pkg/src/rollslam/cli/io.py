"""File formats for the command-line tools: CSV schemas and run configs.

All on-disk formats are plain comma-separated text with a fixed header row.
Floats are written with ``repr``, which emits the shortest decimal string
that parses back to the identical IEEE-754 double, so file -> value -> file
is byte-stable and value -> file -> value is exact.

Angles are stored in degrees on disk (the human-facing unit) and converted
to radians at the read/write boundary; everything in memory stays radians.

Run configuration is a flat ``key = value`` file with ``#`` comments.  Every
key maps directly onto a field of one of the component configs
(:class:`~rollslam.wheel_slam.SlamConfig`,
:class:`~rollslam.wheel_ins.WheelInsConfig`,
:class:`~rollslam.sim.SensorErrorSpec`, :class:`~rollslam.sim.TrajectorySpec`),
so component defaults stay the single source of truth; a config file stores
only the keys it overrides.  Exceptions: the sensor-noise keys default to the
benchmark error budget (:func:`~rollslam.sim.benchmark_errors`) rather than
the zero-noise ``SensorErrorSpec`` defaults, so a bare ``simulate`` produces
data worth filtering.

Keys shared by several components (``wheel_radius``, ``imu_rate``,
``roll_sample_distance_m``, ``arw_deg_sqrt_h``, ``vrw_ms_sqrt_h``, ``seed``)
are specified once and fed to every consumer, which keeps the simulated
sensor, the dead-reckoning model, and the particle filter mutually
consistent by construction.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from rollslam.core import InvalidInputError
from rollslam.sim import (
    ImuStream,
    SensorErrorSpec,
    TrajectorySpec,
    benchmark_errors,
    benchmark_scene,
)
from rollslam.wheel_ins import WheelInsConfig
from rollslam.wheel_slam import SlamConfig, TerrainCell, TerrainGrid

__all__ = [
    "IMU_HEADER",
    "TRAJECTORY_HEADER",
    "TRUTH_HEADER",
    "MAP_HEADER",
    "Trajectory",
    "TruthTrack",
    "RunConfig",
    "atomic_write_text",
    "write_manifest",
    "read_imu_csv",
    "write_imu_csv",
    "read_trajectory_csv",
    "write_trajectory_csv",
    "read_truth_csv",
    "write_truth_csv",
    "read_map_csv",
    "write_map_csv",
]

PathLike = Union[str, os.PathLike]

IMU_HEADER = "t_s,gx_rads,gy_rads,gz_rads,ax_ms2,ay_ms2,az_ms2"
TRAJECTORY_HEADER = "t_s,x_m,y_m,heading_deg"
TRUTH_HEADER = "t_s,x_m,y_m,heading_deg,bank_deg,speed_ms"
MAP_HEADER = "ix,iy,center_x,center_y,bank_deg,count"


class Trajectory(NamedTuple):
    """Timestamped planar poses; ``heading`` in radians."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray


class TruthTrack(NamedTuple):
    """Reference trajectory plus the signals needed to drive the filters."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    bank: np.ndarray
    speed: np.ndarray


# --------------------------------------------------------------------------
# Low-level text I/O


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a sibling temp file and rename.

    Readers never observe a partially written file, and an interrupted run
    leaves the previous version in place.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_manifest(path: PathLike, manifest: dict) -> None:
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _fmt(value: float) -> str:
    return repr(float(value))


def _read_table(path: PathLike, header: str) -> list[list[str]]:
    """Read a CSV with an exact header; return rows split on commas."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != header:
        got = lines[0].strip() if lines else "<empty file>"
        raise InvalidInputError(
            f"{path}:1: expected header {header!r}, got {got!r}"
        )
    ncols = header.count(",") + 1
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise InvalidInputError(
                f"{path}:{lineno}: expected {ncols} comma-separated values, got {len(parts)}"
            )
        parts.append(str(lineno))  # keep provenance for error messages
        rows.append(parts)
    return rows


def _columns(
    path: PathLike, rows: list[list[str]], ncols: int
) -> tuple[np.ndarray, ...]:
    """Parse string rows into float columns, rejecting non-finite values."""
    out = np.empty((len(rows), ncols))
    for i, parts in enumerate(rows):
        lineno = parts[-1]
        for j in range(ncols):
            try:
                v = float(parts[j])
            except ValueError as exc:
                raise InvalidInputError(
                    f"{path}:{lineno}: column {j + 1}: {exc}"
                ) from exc
            if not math.isfinite(v):
                raise InvalidInputError(
                    f"{path}:{lineno}: column {j + 1}: non-finite value {parts[j]!r}"
                )
            out[i, j] = v
    return tuple(np.ascontiguousarray(out[:, j]) for j in range(ncols))


def _check_monotonic_time(path: PathLike, rows: list[list[str]], t: np.ndarray) -> None:
    if t.size < 2:
        return
    bad = np.flatnonzero(np.diff(t) <= 0.0)
    if bad.size:
        lineno = rows[int(bad[0]) + 1][-1]
        raise InvalidInputError(
            f"{path}:{lineno}: timestamps must be strictly increasing"
        )


# --------------------------------------------------------------------------
# IMU streams


def read_imu_csv(path: PathLike) -> ImuStream:
    """Load an IMU log: time, body rates (rad/s), specific force (m/s^2)."""
    rows = _read_table(path, IMU_HEADER)
    cols = _columns(path, rows, 7)
    _check_monotonic_time(path, rows, cols[0])
    return ImuStream(
        t=cols[0],
        gyro=np.column_stack(cols[1:4]),
        accel=np.column_stack(cols[4:7]),
    )


def write_imu_csv(path: PathLike, stream: ImuStream) -> None:
    lines = [IMU_HEADER]
    gyro, accel = stream.gyro, stream.accel
    for i, t in enumerate(stream.t):
        lines.append(
            ",".join(
                (
                    _fmt(t),
                    _fmt(gyro[i, 0]),
                    _fmt(gyro[i, 1]),
                    _fmt(gyro[i, 2]),
                    _fmt(accel[i, 0]),
                    _fmt(accel[i, 1]),
                    _fmt(accel[i, 2]),
                )
            )
        )
    lines.append("")
    atomic_write_text(path, "\n".join(lines))


# --------------------------------------------------------------------------
# Trajectories and ground truth


def read_trajectory_csv(path: PathLike) -> Trajectory:
    rows = _read_table(path, TRAJECTORY_HEADER)
    t, x, y, heading_deg = _columns(path, rows, 4)
    _check_monotonic_time(path, rows, t)
    return Trajectory(t=t, x=x, y=y, heading=np.radians(heading_deg))


def write_trajectory_csv(path: PathLike, traj: Trajectory) -> None:
    lines = [TRAJECTORY_HEADER]
    for i, t in enumerate(traj.t):
        lines.append(
            ",".join(
                (
                    _fmt(t),
                    _fmt(traj.x[i]),
                    _fmt(traj.y[i]),
                    _fmt(math.degrees(traj.heading[i])),
                )
            )
        )
    lines.append("")
    atomic_write_text(path, "\n".join(lines))


def read_truth_csv(path: PathLike) -> TruthTrack:
    rows = _read_table(path, TRUTH_HEADER)
    t, x, y, heading_deg, bank_deg, speed = _columns(path, rows, 6)
    _check_monotonic_time(path, rows, t)
    return TruthTrack(
        t=t,
        x=x,
        y=y,
        heading=np.radians(heading_deg),
        bank=np.radians(bank_deg),
        speed=speed,
    )


def write_truth_csv(path: PathLike, truth) -> None:
    """Write a reference track; accepts anything with t/x/y/heading/bank/speed."""
    lines = [TRUTH_HEADER]
    for i, t in enumerate(truth.t):
        lines.append(
            ",".join(
                (
                    _fmt(t),
                    _fmt(truth.x[i]),
                    _fmt(truth.y[i]),
                    _fmt(math.degrees(truth.heading[i])),
                    _fmt(math.degrees(truth.bank[i])),
                    _fmt(truth.speed[i]),
                )
            )
        )
    lines.append("")
    atomic_write_text(path, "\n".join(lines))


# --------------------------------------------------------------------------
# Terrain maps


def write_map_csv(path: PathLike, grid: TerrainGrid) -> None:
    """Export a terrain grid, one row per visited cell, sorted by (ix, iy).

    ``center_x``/``center_y`` are the cell-center coordinates
    ``(index + 0.5) * cell_size`` so the file is plottable without knowing
    the grid geometry.  Refuses to write an empty grid: that always means
    the producing run went wrong, and silently writing a header-only file
    would hide it.
    """
    if not grid.cells:
        raise InvalidInputError("refusing to export an empty terrain grid")
    cell = grid.cell_size
    lines = [MAP_HEADER]
    for (ix, iy) in sorted(grid.cells):
        c = grid.cells[(ix, iy)]
        lines.append(
            ",".join(
                (
                    str(ix),
                    str(iy),
                    _fmt((ix + 0.5) * cell),
                    _fmt((iy + 0.5) * cell),
                    _fmt(math.degrees(c.bank)),
                    str(c.count),
                )
            )
        )
    lines.append("")
    atomic_write_text(path, "\n".join(lines))


def read_map_csv(path: PathLike) -> TerrainGrid:
    """Load a terrain grid previously written by :func:`write_map_csv`.

    The cell size is recovered from the center coordinates; every row is
    cross-checked against it.  Visit bookkeeping (which only matters while
    a filter is actively mapping) is not stored in the file: imported cells
    get ``last_visit = -inf``, i.e. they are old knowledge that any later
    pass may use as a reference.
    """
    rows = _read_table(path, MAP_HEADER)
    if not rows:
        raise InvalidInputError(f"{path}: map file has no cells")
    cells: dict[tuple[int, int], TerrainCell] = {}
    cell_size = None
    for parts in rows:
        lineno = parts[-1]
        try:
            ix, iy = int(parts[0]), int(parts[1])
            cx, cy = float(parts[2]), float(parts[3])
            bank_deg = float(parts[4])
            count = int(parts[5])
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
        if not (math.isfinite(cx) and math.isfinite(cy) and math.isfinite(bank_deg)):
            raise InvalidInputError(f"{path}:{lineno}: non-finite value")
        if count < 1:
            raise InvalidInputError(f"{path}:{lineno}: count must be >= 1")
        if cell_size is None:
            cell_size = cx / (ix + 0.5)
            if not math.isfinite(cell_size) or cell_size <= 0.0:
                raise InvalidInputError(
                    f"{path}:{lineno}: cannot infer a positive cell size"
                )
        for idx, center in ((ix, cx), (iy, cy)):
            if abs(center - (idx + 0.5) * cell_size) > 1e-9 * cell_size:
                raise InvalidInputError(
                    f"{path}:{lineno}: cell center inconsistent with "
                    f"cell size {cell_size!r}"
                )
        if (ix, iy) in cells:
            raise InvalidInputError(f"{path}:{lineno}: duplicate cell ({ix}, {iy})")
        cells[(ix, iy)] = TerrainCell(
            bank=math.radians(bank_deg),
            count=count,
            last_visit=-math.inf,
        )
    return TerrainGrid(cell_size=cell_size, cells=cells)


# --------------------------------------------------------------------------
# Run configuration


def _parse_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"must be finite, got {text!r}")
    return v


def _parse_int(text: str) -> int:
    return int(text)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text: str) -> Optional[float]:
    if text.lower() in ("none", ""):
        return None
    return _parse_float(text)


def _parse_optional_int(text: str) -> Optional[int]:
    if text.lower() in ("none", ""):
        return None
    return int(text)


def _parse_exponent(text: str) -> str:
    if text not in ("match", "mismatch"):
        raise ValueError(f"expected 'match' or 'mismatch', got {text!r}")
    return text


def _parse_waypoints(text: str) -> tuple[tuple[float, float], ...]:
    """Parse ``x,y; x,y; ...`` into waypoint pairs."""
    points = []
    for chunk in text.split(";"):
        coords = [c for c in chunk.split(",") if c.strip()]
        if len(coords) != 2:
            raise ValueError(f"waypoint {chunk.strip()!r} is not an x,y pair")
        points.append((_parse_float(coords[0]), _parse_float(coords[1])))
    if len(points) < 2:
        raise ValueError("need at least two waypoints")
    return tuple(points)


def _parse_lever_arm(text: str) -> tuple[float, float, float]:
    coords = text.split(",")
    if len(coords) != 3:
        raise ValueError(f"expected three comma-separated values, got {text!r}")
    return (_parse_float(coords[0]), _parse_float(coords[1]), _parse_float(coords[2]))


# Every recognized config key and how to parse its value.  Grouped by the
# component that consumes it; keys listed under more than one component are
# shared on purpose (see module docstring).
_CONFIG_KEYS: dict[str, Callable[[str], object]] = {
    # scene / trajectory (sim.benchmark_scene, sim.TrajectorySpec)
    "waypoints": _parse_waypoints,
    "corner_radius": _parse_float,
    "speed": _parse_float,
    "laps": _parse_int,
    "imu_rate": _parse_float,
    "wheel_radius": _parse_float,
    "static_duration": _parse_float,
    "ramp_duration": _parse_float,
    "initial_spin": _parse_float,
    "scene_seed": _parse_int,
    "n_bumps": _parse_int,
    # sensor error budget (sim.SensorErrorSpec; defaults from benchmark_errors)
    "gyro_bias_deg_h": _parse_float,
    "arw_deg_sqrt_h": _parse_float,
    "accel_bias_ms2": _parse_float,
    "vrw_ms_sqrt_h": _parse_float,
    "gyro_scale_ppm": _parse_float,
    "accel_scale_ppm": _parse_float,
    # dead reckoning (wheel_ins.WheelInsConfig)
    "lever_arm": _parse_lever_arm,
    "gyro_bias_std_deg_h": _parse_float,
    "accel_bias_std_ms2": _parse_float,
    "gyro_bias_walk_deg_h_sqrt_s": _parse_float,
    "accel_bias_walk_ms2_sqrt_s": _parse_float,
    "scale_std_ppm": _parse_float,
    "vel_noise_ms": _parse_float,
    "nhc_noise_ms": _parse_float,
    "update_interval_s": _parse_optional_float,
    "update_max_interval_s": _parse_float,
    "gate_prob": _parse_float,
    "gate_max_rejections": _parse_optional_int,
    "init_pos_std_m": _parse_float,
    "init_vel_std_ms": _parse_float,
    "init_tilt_std_deg": _parse_float,
    "init_heading_std_deg": _parse_float,
    "align_min_duration_s": _parse_float,
    "align_max_gyro_rad_s": _parse_float,
    "roll_sample_distance_m": _parse_float,
    # particle filter (wheel_slam.SlamConfig)
    "n_particles": _parse_int,
    "cell_size_m": _parse_float,
    "distance_noise_m": _parse_float,
    "heading_noise_deg": _parse_float,
    "matching_length_m": _parse_float,
    "corr_threshold": _parse_float,
    "evidence_window": _parse_int,
    "evidence_min_count": _parse_optional_int,
    "resample_threshold": _parse_float,
    "exclusion_distance_m": _parse_optional_float,
    "min_sequence_std_deg": _parse_float,
    "weight_exponent": _parse_exponent,
    "loop_closure": _parse_bool,
    # shared by every stochastic component
    "seed": _parse_int,
}

_SCENE_KEYS = (
    "scene_seed",
    "laps",
    "speed",
    "imu_rate",
    "wheel_radius",
    "n_bumps",
    "static_duration",
    "ramp_duration",
    "waypoints",
    "corner_radius",
)

_NOISE_KEYS = tuple(f.name for f in dataclasses.fields(SensorErrorSpec))
_INS_KEYS = tuple(f.name for f in dataclasses.fields(WheelInsConfig))
_SLAM_KEYS = tuple(f.name for f in dataclasses.fields(SlamConfig))


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse flat ``key = value`` config text into typed overrides.

    Unknown keys, duplicate keys, and unparseable values are hard errors
    with the offending line number; a typo must never silently fall back to
    a default.
    """
    overrides: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidInputError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise InvalidInputError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in overrides:
            raise InvalidInputError(f"{source}:{lineno}: duplicate config key {key!r}")
        try:
            overrides[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise InvalidInputError(
                f"{source}:{lineno}: invalid value for {key!r}: {exc}"
            ) from exc
    return overrides


@dataclass
class RunConfig:
    """Effective configuration for one CLI run.

    Stores only explicit overrides; the ``*_config`` builders apply them on
    top of the component defaults, so a :class:`RunConfig` built from an
    empty file reproduces the library defaults exactly.
    """

    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: PathLike) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_config_text(text, source=str(path)))

    def with_overrides(self, **kwargs) -> "RunConfig":
        """Return a copy with non-``None`` kwargs layered on top (CLI flags)."""
        merged = dict(self.overrides)
        for key, value in kwargs.items():
            if value is None:
                continue
            if key not in _CONFIG_KEYS:
                raise InvalidInputError(f"unknown config key {key!r}")
            merged[key] = value
        return RunConfig(merged)

    @property
    def seed(self) -> int:
        return self.overrides.get("seed", 0)

    def _subset(self, keys) -> dict:
        return {k: self.overrides[k] for k in keys if k in self.overrides}

    def error_spec(self) -> SensorErrorSpec:
        return dataclasses.replace(benchmark_errors(), **self._subset(_NOISE_KEYS))

    def ins_config(self) -> WheelInsConfig:
        return WheelInsConfig(**self._subset(_INS_KEYS))

    def slam_config(self) -> SlamConfig:
        return SlamConfig(**self._subset(_SLAM_KEYS))

    def scene(self):
        """Terrain model and trajectory spec for the configured scene."""
        kwargs = self._subset(_SCENE_KEYS)
        terrain, spec = benchmark_scene(**kwargs)
        if "initial_spin" in self.overrides:
            spec = dataclasses.replace(
                spec, initial_spin=self.overrides["initial_spin"]
            )
        return terrain, spec

    def manifest(self, command: str, versions: dict) -> dict:
        """Everything needed to reproduce this run bit for bit."""
        _, spec = self.scene()
        return {
            "command": command,
            "seed": self.seed,
            "overrides": _json_safe(self.overrides),
            "resolved": {
                "trajectory": _json_safe(dataclasses.asdict(spec)),
                "scene_seed": self.overrides.get("scene_seed", 7),
                "n_bumps": self.overrides.get("n_bumps", 22),
                "sensor_errors": dataclasses.asdict(self.error_spec()),
                "wheel_ins": _json_safe(dataclasses.asdict(self.ins_config())),
                "wheel_slam": dataclasses.asdict(self.slam_config()),
            },
            "versions": dict(versions),
        }


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value
