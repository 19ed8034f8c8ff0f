"""Physics-consistent scenario generator.

The world model is deliberately simple but exactly self-consistent:

* The vehicle drives on the z = 0 plane along a waypoint circuit whose
  corners are replaced by circular fillets, so heading is continuous and
  curvature is piecewise constant.
* Road bank is a smooth scalar field (a sum of Gaussian bumps).  Bank tilts
  the vehicle about its forward axis but does not lift it off the plane;
  positive bank leans the vehicle to the right.
* The IMU sits on the right rear wheel with its x-axis along the axle
  (pointing to the vehicle's left), so forward driving produces a positive
  x gyro reading of ``speed / wheel_radius`` plus attitude coupling terms.

Body rates and specific force are evaluated analytically from the attitude
chain ``C_nb = Rz(heading) Rx(bank) Rz(pi/2) Rx(spin)``, which makes the
synthesized IMU exact for the strapdown equations rather than a finite
difference of a sampled trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from rollslam.core import GRAVITY, InvalidInputError, wrap_angle

__all__ = [
    "TerrainBump",
    "TerrainModel",
    "TrajectorySpec",
    "GroundTruth",
    "ImuStream",
    "SensorErrorSpec",
    "generate_truth",
    "synthesize_imu",
    "corrupt",
    "benchmark_scene",
]

DEG = math.pi / 180.0

# Philox stream labels, kept distinct so every consumer of a seed draws from
# an independent counter-based stream.
_KEY_BIAS = 1
_KEY_WHITE = 2
_KEY_SCENE = 3


@dataclass(frozen=True)
class TerrainBump:
    """One Gaussian bank-angle bump: ``amp * exp(-d^2 / (2 scale^2))``."""

    x: float
    y: float
    amplitude_rad: float
    length_scale_m: float


@dataclass(frozen=True)
class TerrainModel:
    """Road bank angle as a smooth field over the driving plane."""

    bumps: tuple[TerrainBump, ...] = ()

    def bank(self, x, y) -> np.ndarray:
        """Bank angle (rad) at one or more (x, y) positions."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros(np.broadcast(x, y).shape)
        for b in self.bumps:
            d2 = (x - b.x) ** 2 + (y - b.y) ** 2
            total += b.amplitude_rad * np.exp(-d2 / (2.0 * b.length_scale_m**2))
        return total

    def bank_gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Analytic spatial gradient of :meth:`bank`."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = np.zeros(np.broadcast(x, y).shape)
        gy = np.zeros_like(gx)
        for b in self.bumps:
            dx = x - b.x
            dy = y - b.y
            w = b.amplitude_rad * np.exp(
                -(dx**2 + dy**2) / (2.0 * b.length_scale_m**2)
            ) / b.length_scale_m**2
            gx -= w * dx
            gy -= w * dy
        return gx, gy


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoint circuit plus motion and sensor-geometry parameters.

    ``static_duration`` seconds of standstill are emitted first (for filter
    alignment), then speed ramps linearly to ``speed`` over ``ramp_duration``
    seconds and stays constant until the path ends.
    """

    waypoints: tuple[tuple[float, float], ...]
    speed: float = 5.0
    laps: int = 1
    corner_radius: float = 8.0
    imu_rate: float = 200.0
    wheel_radius: float = 0.30
    static_duration: float = 0.0
    ramp_duration: float = 0.0
    initial_spin: float = 0.0

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise InvalidInputError("need at least two waypoints")
        if self.speed <= 0.0 or self.imu_rate <= 0.0 or self.wheel_radius <= 0.0:
            raise InvalidInputError("speed, imu_rate and wheel_radius must be positive")
        if self.laps < 1:
            raise InvalidInputError("laps must be >= 1")
        if self.static_duration < 0.0 or self.ramp_duration < 0.0:
            raise InvalidInputError("phase durations must be non-negative")


@dataclass
class GroundTruth:
    """Dense trajectory truth sampled at the IMU rate.

    All arrays share the same length.  ``bank_rate``, ``accel``, ``curvature``
    and ``arc_len`` are carried so that IMU synthesis can be exact.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    bank: np.ndarray
    bank_rate: np.ndarray
    spin: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    curvature: np.ndarray
    arc_len: np.ndarray
    wheel_radius: float
    imu_rate: float

    def __len__(self) -> int:
        return self.t.size


@dataclass
class ImuStream:
    """Raw IMU samples: angular rate (rad/s) and specific force (m/s^2)."""

    t: np.ndarray
    gyro: np.ndarray  # (N, 3)
    accel: np.ndarray  # (N, 3)

    def __len__(self) -> int:
        return self.t.size


# --------------------------------------------------------------------------
# Path construction


def _fillet_path(points: Sequence[tuple[float, float]], radius: float):
    """Turn a polyline into straight/arc segments with circular fillets.

    Returns a list of segment dicts with a common ``length`` key.  Raises if
    a fillet would not fit on its adjacent edges.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    for i in range(len(pts) - 1):
        if np.linalg.norm(pts[i + 1] - pts[i]) < 1e-9:
            raise InvalidInputError(f"repeated waypoint at index {i}")

    # Tangent trim length claimed by the fillet at each interior vertex.
    trims = [0.0] * len(pts)
    sweeps = [0.0] * len(pts)
    for i in range(1, len(pts) - 1):
        u1 = pts[i] - pts[i - 1]
        u1 /= np.linalg.norm(u1)
        u2 = pts[i + 1] - pts[i]
        u2 /= np.linalg.norm(u2)
        sweep = math.atan2(u1[0] * u2[1] - u1[1] * u2[0], float(np.dot(u1, u2)))
        if abs(sweep) < 1e-12:
            continue
        if abs(abs(sweep) - math.pi) < 1e-9:
            raise InvalidInputError(f"U-turn at waypoint {i} cannot be filleted")
        if radius <= 0.0:
            raise InvalidInputError(
                "corner_radius must be positive when the path changes direction"
            )
        sweeps[i] = sweep
        trims[i] = radius * math.tan(abs(sweep) / 2.0)

    for i in range(len(pts) - 1):
        edge = float(np.linalg.norm(pts[i + 1] - pts[i]))
        if trims[i] + trims[i + 1] > edge + 1e-9:
            raise InvalidInputError(
                f"corner_radius {radius} too large for edge {i} (length {edge:.2f})"
            )

    segments = []
    cursor = pts[0].copy()
    for i in range(1, len(pts)):
        u = pts[i] - pts[i - 1]
        edge_len = float(np.linalg.norm(u))
        u /= edge_len
        heading = math.atan2(u[1], u[0])
        straight_len = edge_len - trims[i - 1] - trims[i]
        if straight_len > 1e-9:
            segments.append(
                {
                    "kind": "straight",
                    "start": cursor.copy(),
                    "dir": u.copy(),
                    "heading": heading,
                    "length": straight_len,
                }
            )
        cursor = cursor + u * straight_len
        if i < len(pts) - 1 and sweeps[i] != 0.0:
            sweep = sweeps[i]
            sign = 1.0 if sweep > 0.0 else -1.0
            normal = np.array([-math.sin(heading), math.cos(heading)])
            center = cursor + sign * radius * normal
            segments.append(
                {
                    "kind": "arc",
                    "center": center,
                    "radius": radius,
                    "heading0": heading,
                    "sign": sign,
                    "length": radius * abs(sweep),
                }
            )
            end_heading = heading + sweep
            normal_end = np.array([-math.sin(end_heading), math.cos(end_heading)])
            cursor = center - sign * radius * normal_end
    return segments


def _eval_path(segments, s: np.ndarray):
    """Position, heading and curvature at arc lengths ``s`` along the path."""
    lengths = np.array([seg["length"] for seg in segments])
    bounds = np.concatenate([[0.0], np.cumsum(lengths)])
    total = bounds[-1]
    s = np.clip(s, 0.0, total)
    idx = np.clip(np.searchsorted(bounds, s, side="right") - 1, 0, len(segments) - 1)

    x = np.empty_like(s)
    y = np.empty_like(s)
    heading = np.empty_like(s)
    curvature = np.empty_like(s)
    for k, seg in enumerate(segments):
        mask = idx == k
        if not np.any(mask):
            continue
        u = s[mask] - bounds[k]
        if seg["kind"] == "straight":
            x[mask] = seg["start"][0] + seg["dir"][0] * u
            y[mask] = seg["start"][1] + seg["dir"][1] * u
            heading[mask] = seg["heading"]
            curvature[mask] = 0.0
        else:
            sign = seg["sign"]
            r = seg["radius"]
            h = seg["heading0"] + sign * u / r
            x[mask] = seg["center"][0] + sign * r * np.sin(h)
            y[mask] = seg["center"][1] - sign * r * np.cos(h)
            heading[mask] = h
            curvature[mask] = sign / r
    return x, y, heading, curvature, total


def generate_truth(spec: TrajectorySpec, terrain: TerrainModel) -> GroundTruth:
    """Sample the true vehicle state at the IMU rate.

    A spec with two waypoints 100 m apart at 5 m/s and 200 Hz (no static or
    ramp phase) yields exactly 4000 samples.
    """
    tour = list(spec.waypoints) * spec.laps
    if spec.laps > 1:
        tour.append(spec.waypoints[0])
    segments = _fillet_path(tour, spec.corner_radius)
    total_len = sum(seg["length"] for seg in segments)

    dt = 1.0 / spec.imu_rate
    t_move = spec.static_duration
    t_cruise = t_move + spec.ramp_duration
    ramp_dist = 0.5 * spec.speed * spec.ramp_duration
    if ramp_dist >= total_len:
        raise InvalidInputError("ramp_duration longer than the whole path")
    t_end = t_cruise + (total_len - ramp_dist) / spec.speed
    n = int(round(t_end * spec.imu_rate))
    t = np.arange(n) * dt

    speed = np.zeros(n)
    accel = np.zeros(n)
    s = np.zeros(n)
    if spec.ramp_duration > 0.0:
        a = spec.speed / spec.ramp_duration
        ramping = (t >= t_move) & (t < t_cruise)
        speed[ramping] = a * (t[ramping] - t_move)
        accel[ramping] = a
        s[ramping] = 0.5 * a * (t[ramping] - t_move) ** 2
    cruising = t >= t_cruise
    speed[cruising] = spec.speed
    s[cruising] = ramp_dist + spec.speed * (t[cruising] - t_cruise)
    s = np.minimum(s, total_len)

    x, y, heading, curvature, _ = _eval_path(segments, s)
    bank = terrain.bank(x, y)
    gx, gy = terrain.bank_gradient(x, y)
    bank_rate = speed * (gx * np.cos(heading) + gy * np.sin(heading))
    spin = spec.initial_spin + s / spec.wheel_radius
    heading = np.array([wrap_angle(h) for h in heading])

    return GroundTruth(
        t=t,
        x=x,
        y=y,
        heading=heading,
        bank=bank,
        bank_rate=bank_rate,
        spin=spin,
        speed=speed,
        accel=accel,
        curvature=curvature,
        arc_len=s,
        wheel_radius=spec.wheel_radius,
        imu_rate=spec.imu_rate,
    )


# --------------------------------------------------------------------------
# IMU synthesis


def _attitude_matrices(heading, bank, spin) -> np.ndarray:
    """Stacked body-to-navigation matrices Rz(psi) Rx(phi) Rz(pi/2) Rx(theta)."""
    n = heading.size
    cpsi, spsi = np.cos(heading), np.sin(heading)
    cphi, sphi = np.cos(bank), np.sin(bank)
    cth, sth = np.cos(spin), np.sin(spin)

    rz = np.zeros((n, 3, 3))
    rz[:, 0, 0] = cpsi
    rz[:, 0, 1] = -spsi
    rz[:, 1, 0] = spsi
    rz[:, 1, 1] = cpsi
    rz[:, 2, 2] = 1.0

    rx = np.zeros((n, 3, 3))
    rx[:, 0, 0] = 1.0
    rx[:, 1, 1] = cphi
    rx[:, 1, 2] = -sphi
    rx[:, 2, 1] = sphi
    rx[:, 2, 2] = cphi

    # Rz(pi/2) Rx(theta), written out to avoid another batched matmul.
    mount = np.zeros((n, 3, 3))
    mount[:, 0, 1] = -cth
    mount[:, 0, 2] = sth
    mount[:, 1, 0] = 1.0
    mount[:, 2, 1] = sth
    mount[:, 2, 2] = cth

    return rz @ rx @ mount


def synthesize_imu(truth: GroundTruth, lever_arm=None) -> ImuStream:
    """Exact IMU readings for a ground-truth trajectory.

    Body angular rate comes from the analytic attitude chain and specific
    force from planar kinematics, so feeding the result into the strapdown
    equations reproduces the truth to integration accuracy.  A non-zero
    ``lever_arm`` (offset of the IMU from the wheel center, body frame)
    adds the rotational acceleration terms; its angular-acceleration part is
    approximated with a central difference of the body rate.
    """
    psi_dot = truth.speed * truth.curvature
    theta_dot = truth.speed / truth.wheel_radius
    phi, theta = truth.bank, truth.spin
    phi_dot = truth.bank_rate

    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    gyro = np.empty((len(truth), 3))
    gyro[:, 0] = theta_dot + psi_dot * sphi
    gyro[:, 1] = psi_dot * cphi * sth - phi_dot * cth
    gyro[:, 2] = psi_dot * cphi * cth + phi_dot * sth

    # Specific force in navigation frame: planar acceleration minus gravity
    # (gravity points down, so -g_n contributes +g on the up axis).
    cpsi, spsi = np.cos(truth.heading), np.sin(truth.heading)
    f_n = np.empty((len(truth), 3))
    f_n[:, 0] = truth.accel * cpsi - truth.speed * psi_dot * spsi
    f_n[:, 1] = truth.accel * spsi + truth.speed * psi_dot * cpsi
    f_n[:, 2] = GRAVITY

    c_nb = _attitude_matrices(truth.heading, phi, theta)
    accel = np.einsum("nji,nj->ni", c_nb, f_n)

    if lever_arm is not None:
        lever = np.asarray(lever_arm, dtype=float)
        if lever.shape != (3,):
            raise InvalidInputError("lever_arm must be a 3-vector")
        if np.any(lever != 0.0):
            dt = 1.0 / truth.imu_rate
            omega_dot = np.gradient(gyro, dt, axis=0)
            accel = (
                accel
                + np.cross(omega_dot, lever)
                + np.cross(gyro, np.cross(gyro, lever))
            )

    return ImuStream(t=truth.t.copy(), gyro=gyro, accel=accel)


# --------------------------------------------------------------------------
# Sensor corruption


@dataclass(frozen=True)
class SensorErrorSpec:
    """Consumer-grade MEMS error budget (ICM20602-like defaults).

    Bias and scale-factor values are magnitudes: each axis receives the full
    stated value with a seed-determined random sign, constant over the run.
    White noise uses the angular/velocity random walk densities.  Scale
    factor errors are off by default; datasheet-grade parts carry initial
    scale tolerances of several thousand ppm, which matter here because a
    spinning IMU modulates away constant biases but not scale errors.
    """

    gyro_bias_deg_h: float = 200.0
    arw_deg_sqrt_h: float = 0.24
    accel_bias_ms2: float = 0.01
    vrw_ms_sqrt_h: float = 3.0
    gyro_scale_ppm: float = 0.0
    accel_scale_ppm: float = 0.0

    @property
    def gyro_bias_rad_s(self) -> float:
        return self.gyro_bias_deg_h * DEG / 3600.0

    @property
    def arw_rad_sqrt_s(self) -> float:
        return self.arw_deg_sqrt_h * DEG / 60.0

    @property
    def vrw_ms_sqrt_s(self) -> float:
        return self.vrw_ms_sqrt_h / 60.0


def corrupt(stream: ImuStream, errors: SensorErrorSpec, seed: int) -> ImuStream:
    """Apply scale factor, constant bias and white noise to a clean stream.

    Deterministic for a given (errors, seed): sign draws and white noise come
    from independent counter-based Philox streams keyed by the seed.
    """
    n = len(stream)
    fs = 1.0 / float(np.median(np.diff(stream.t))) if n > 1 else 1.0

    bias_rng = np.random.Generator(
        np.random.Philox(key=np.array([seed, _KEY_BIAS], dtype=np.uint64))
    )
    signs = bias_rng.integers(0, 2, size=6) * 2.0 - 1.0
    gyro_bias = signs[0:3] * errors.gyro_bias_rad_s
    # Scale error is a fixed property of the simulated part, not re-drawn per
    # run: biases average out under wheel rotation, scale errors do not, so a
    # sign lottery here would make dead-reckoning quality flip seed to seed.
    accel_bias = signs[3:6] * errors.accel_bias_ms2
    gyro_scale = errors.gyro_scale_ppm * 1e-6
    accel_scale = errors.accel_scale_ppm * 1e-6

    white_rng = np.random.Generator(
        np.random.Philox(key=np.array([seed, _KEY_WHITE], dtype=np.uint64))
    )
    gyro_sigma = errors.arw_rad_sqrt_s * math.sqrt(fs)
    accel_sigma = errors.vrw_ms_sqrt_s * math.sqrt(fs)
    noise = white_rng.normal(size=(n, 6))

    gyro = stream.gyro * (1.0 + gyro_scale) + gyro_bias + gyro_sigma * noise[:, 0:3]
    accel = (
        stream.accel * (1.0 + accel_scale) + accel_bias + accel_sigma * noise[:, 3:6]
    )
    return ImuStream(t=stream.t.copy(), gyro=gyro, accel=accel)


# --------------------------------------------------------------------------
# Benchmark scene


def benchmark_scene(
    scene_seed: int = 7,
    laps: int = 2,
    speed: float = 5.0,
    imu_rate: float = 200.0,
    wheel_radius: float = 0.30,
    n_bumps: int = 22,
    static_duration: float = 2.0,
    ramp_duration: float = 2.0,
    waypoints: Optional[Sequence[tuple[float, float]]] = None,
    corner_radius: float = 10.0,
) -> tuple[TerrainModel, TrajectorySpec]:
    """Rounded-rectangle circuit (~400 m per lap) over a bumpy bank field.

    The terrain is placed along the circuit so the wheel actually rides over
    the bumps; bump centers, amplitudes (1-5 degrees, both signs) and length
    scales are drawn from a Philox stream keyed by ``scene_seed``, which is
    independent of any sensor-noise seed.

    Pass ``waypoints`` to lay the same kind of scene over a custom closed
    circuit instead of the default 130 m x 70 m rectangle.
    """
    if waypoints is None:
        corners = ((0.0, 0.0), (130.0, 0.0), (130.0, 70.0), (0.0, 70.0))
    else:
        corners = tuple((float(x), float(y)) for x, y in waypoints)
    # Corner radius snapped so each corner arc spans an exact number of
    # samples at the requested speed/rate; curvature steps at corner entry
    # and exit then land at the same intra-sample phase and their trapezoidal
    # integration errors cancel pairwise.
    arc_quantum = speed / imu_rate
    quarter_arc = round(corner_radius * (math.pi / 2.0) / arc_quantum) * arc_quantum
    spec = TrajectorySpec(
        waypoints=corners,
        speed=speed,
        laps=laps,
        corner_radius=quarter_arc / (math.pi / 2.0),
        imu_rate=imu_rate,
        wheel_radius=wheel_radius,
        static_duration=static_duration,
        ramp_duration=ramp_duration,
    )

    rng = np.random.Generator(
        np.random.Philox(key=np.array([scene_seed, _KEY_SCENE], dtype=np.uint64))
    )
    # Walk the rectangle perimeter to drop bumps near the driving line.
    pts = np.array(corners + (corners[0],))
    edge_vecs = np.diff(pts, axis=0)
    edge_lens = np.linalg.norm(edge_vecs, axis=1)
    perimeter = float(edge_lens.sum())
    bounds = np.concatenate([[0.0], np.cumsum(edge_lens)])

    bumps = []
    for _ in range(n_bumps):
        s = rng.uniform(0.0, perimeter)
        k = int(np.searchsorted(bounds, s, side="right") - 1)
        k = min(k, len(edge_vecs) - 1)
        u = edge_vecs[k] / edge_lens[k]
        base = pts[k] + u * (s - bounds[k])
        lateral = rng.uniform(-3.0, 3.0)
        normal = np.array([-u[1], u[0]])
        cx, cy = base + normal * lateral
        amp = rng.uniform(1.0, 5.0) * DEG * (1.0 if rng.random() < 0.5 else -1.0)
        scale = rng.uniform(8.0, 25.0)
        bumps.append(TerrainBump(float(cx), float(cy), float(amp), float(scale)))

    return TerrainModel(bumps=tuple(bumps)), spec


def benchmark_errors() -> SensorErrorSpec:
    """Sensor error budget used by the benchmark runs.

    Consumer-IMU noise densities and bias levels, plus percent-level initial
    scale-factor tolerance.  The scale terms are what give wheel-mounted
    dead reckoning its realistic slow drift: constant biases are averaged
    out by the wheel rotation, but a scale error on the axes that sense the
    turn rate accumulates into heading error at every corner.
    """
    return SensorErrorSpec(gyro_scale_ppm=5000.0, accel_scale_ppm=1000.0)
