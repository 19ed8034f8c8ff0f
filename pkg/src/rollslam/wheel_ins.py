"""Dead reckoning with a single wheel-mounted IMU.

The IMU rides on a wheel with its x-axis along the axle (pointing to the
vehicle's left), so it spins with the wheel and the x gyro measures the
rolling rate: forward speed is ``omega_x * wheel_radius``.  A strapdown
mechanization integrates the spinning body attitude, velocity and position
in a local-level z-up frame, and a 21-state error-state Kalman filter
(position, velocity, attitude, gyro/accel bias, gyro/accel scale) fuses the
gyro-derived wheel velocity with non-holonomic constraints (no lateral or
vertical velocity at the wheel center).

Error-state conventions: estimated minus true for position/velocity, true
minus estimated for sensor biases and scales, and a navigation-frame
misalignment ``phi`` with ``C_est = (I + [phi]x) C_true``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import chi2

from rollslam.core import (
    GRAVITY,
    Attitude,
    InvalidInputError,
    skew,
    wrap_angle,
)

__all__ = [
    "POS",
    "VEL",
    "ATT",
    "BG",
    "BA",
    "SG",
    "SA",
    "N_STATES",
    "ImuSample",
    "InsState",
    "SensorEstimates",
    "ErrorState",
    "OdometryIncrement",
    "WheelInsConfig",
    "AlignmentError",
    "NumericalError",
    "static_align",
    "wheel_velocity",
    "vehicle_frame",
    "vehicle_roll",
    "mechanize",
    "ekf_predict",
    "ekf_update_velocity",
    "feedback",
    "WheelInsPipeline",
]

DEG = math.pi / 180.0
_G_N = np.array([0.0, 0.0, -GRAVITY])

# Error-state layout.
POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
SG = slice(15, 18)
SA = slice(18, 21)
N_STATES = 21


class AlignmentError(RuntimeError):
    """Static alignment could not be performed on the given samples."""


class NumericalError(RuntimeError):
    """The filter reached a numerically invalid configuration."""


class ImuSample(NamedTuple):
    t: float
    gyro: np.ndarray
    accel: np.ndarray


class OdometryIncrement(NamedTuple):
    """Distance/heading increment with a roll observation, for the SLAM layer."""

    t: float
    ds: float
    dheading: float
    roll: float


@dataclass
class InsState:
    """Navigation solution for the IMU: position/velocity in the local
    z-up frame and body-to-navigation attitude."""

    pos: np.ndarray
    vel: np.ndarray
    att: Attitude
    t: float


@dataclass
class SensorEstimates:
    """Current IMU compensation terms maintained by the filter."""

    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_scale: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_scale: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def correct(self, sample: ImuSample) -> tuple[np.ndarray, np.ndarray]:
        gyro = (sample.gyro - self.gyro_bias) / (1.0 + self.gyro_scale)
        accel = (sample.accel - self.accel_bias) / (1.0 + self.accel_scale)
        return gyro, accel


def _phi_template() -> np.ndarray:
    """Identity-diagonal transition-matrix buffer for :func:`ekf_predict`.

    Only the fixed sparsity pattern of ``I + F dt`` is ever written, so the
    buffer can be reused across samples without re-zeroing.
    """
    phi = np.zeros((N_STATES, N_STATES))
    phi.flat[:: N_STATES + 1] = 1.0
    return phi


@dataclass
class ErrorState:
    """Error estimate and covariance of the 21-state filter."""

    dx: np.ndarray = field(default_factory=lambda: np.zeros(N_STATES))
    P: np.ndarray = field(default_factory=lambda: np.zeros((N_STATES, N_STATES)))
    # Scratch for the per-sample covariance propagation (not filter state).
    _phi: np.ndarray = field(
        default_factory=_phi_template, repr=False, compare=False
    )
    _work: np.ndarray = field(
        default_factory=lambda: np.empty((N_STATES, N_STATES)),
        repr=False,
        compare=False,
    )
    _work2: np.ndarray = field(
        default_factory=lambda: np.empty((N_STATES, N_STATES)),
        repr=False,
        compare=False,
    )


@dataclass
class WheelInsConfig:
    """Sensor geometry, stochastic model and tuning of the wheel-INS filter.

    Noise defaults correspond to a consumer MEMS IMU (ICM20602 class).
    ``update_interval_s = None`` times velocity/NHC updates to one wheel
    revolution (capped by ``update_max_interval_s``) so that bias effects
    average out over the spin cycle.
    """

    wheel_radius: float = 0.30
    lever_arm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    imu_rate: float = 200.0

    # Stochastic model (filter side).
    arw_deg_sqrt_h: float = 0.24
    vrw_ms_sqrt_h: float = 3.0
    gyro_bias_std_deg_h: float = 200.0
    accel_bias_std_ms2: float = 0.01
    gyro_bias_walk_deg_h_sqrt_s: float = 1.0
    accel_bias_walk_ms2_sqrt_s: float = 5.0e-5
    scale_std_ppm: float = 1000.0

    # Observation noise and timing.
    vel_noise_ms: float = 0.05
    nhc_noise_ms: float = 0.05
    update_interval_s: Optional[float] = None
    update_max_interval_s: float = 1.0
    gate_prob: float = 0.999
    # The chi-square gate protects against transient outliers, but the wheel
    # velocity is the only aiding source: rejecting it indefinitely lets the
    # spin-phase error (spin rate x gyro scale error) compound until the
    # solution diverges.  After this many consecutive rejections the next
    # update is applied unconditionally.  None never overrides the gate.
    gate_max_rejections: Optional[int] = 4

    # Initial uncertainty (position/heading are externally initialized).
    init_pos_std_m: float = 0.01
    init_vel_std_ms: float = 0.05
    init_tilt_std_deg: float = 0.5
    init_heading_std_deg: float = 0.5

    # Alignment.
    align_min_duration_s: float = 0.5
    align_max_gyro_rad_s: float = 0.2

    # Distance between emitted odometry increments.
    roll_sample_distance_m: float = 0.5

    def __post_init__(self):
        if self.wheel_radius <= 0.0:
            raise InvalidInputError("wheel_radius must be positive")
        if self.imu_rate <= 0.0:
            raise InvalidInputError("imu_rate must be positive")
        if not 0.0 < self.gate_prob < 1.0:
            raise InvalidInputError("gate_prob must be in (0, 1)")
        if self.gate_max_rejections is not None and self.gate_max_rejections < 1:
            raise InvalidInputError("gate_max_rejections must be at least 1")
        if self.vel_noise_ms <= 0.0 or self.nhc_noise_ms <= 0.0:
            raise InvalidInputError("observation noise must be positive")
        if self.roll_sample_distance_m <= 0.0:
            raise InvalidInputError("roll_sample_distance_m must be positive")

    @property
    def arw_rad_sqrt_s(self) -> float:
        return self.arw_deg_sqrt_h * DEG / 60.0

    @property
    def vrw_ms_sqrt_s(self) -> float:
        return self.vrw_ms_sqrt_h / 60.0

    @property
    def gyro_bias_std_rad_s(self) -> float:
        return self.gyro_bias_std_deg_h * DEG / 3600.0

    @property
    def gyro_bias_walk_rad_s_sqrt_s(self) -> float:
        return self.gyro_bias_walk_deg_h_sqrt_s * DEG / 3600.0

    def process_noise_diag(self) -> np.ndarray:
        """Continuous-time process noise PSD mapped onto the state diagonal.

        White sensor noise enters through the body-to-nav rotation; since the
        per-axis densities are equal the rotated covariance stays isotropic
        and the full G Q G^T collapses to a diagonal.
        """
        q = np.zeros(N_STATES)
        q[VEL] = self.vrw_ms_sqrt_s**2
        q[ATT] = self.arw_rad_sqrt_s**2
        q[BG] = self.gyro_bias_walk_rad_s_sqrt_s**2
        q[BA] = self.accel_bias_walk_ms2_sqrt_s**2
        return q

    def initial_covariance(self) -> np.ndarray:
        p = np.zeros(N_STATES)
        p[POS] = self.init_pos_std_m**2
        p[VEL] = self.init_vel_std_ms**2
        tilt = self.init_tilt_std_deg * DEG
        p[ATT] = [tilt**2, tilt**2, (self.init_heading_std_deg * DEG) ** 2]
        p[BG] = self.gyro_bias_std_rad_s**2
        p[BA] = self.accel_bias_std_ms2**2
        p[SG] = (self.scale_std_ppm * 1e-6) ** 2
        p[SA] = (self.scale_std_ppm * 1e-6) ** 2
        return np.diag(p)


# --------------------------------------------------------------------------
# Elementary operations


def wheel_velocity(omega_x: float, wheel_radius: float) -> float:
    """Forward speed of the wheel center from the axle gyro rate."""
    if wheel_radius <= 0.0:
        raise InvalidInputError("wheel_radius must be positive")
    return float(omega_x) * wheel_radius


def static_align(samples: Sequence[ImuSample], config: WheelInsConfig):
    """Level the attitude and estimate gyro biases from standstill data.

    Returns ``(attitude, gyro_bias)``.  The attitude has roll/pitch from the
    averaged gravity direction and zero yaw; heading is unobservable at
    standstill and must be set externally.  Raises :class:`AlignmentError`
    if the span is too short or the data shows rotation.
    """
    if len(samples) < 2:
        raise AlignmentError("need at least two samples to align")
    t = np.array([s.t for s in samples])
    span = float(t[-1] - t[0])
    if span < config.align_min_duration_s:
        raise AlignmentError(
            f"alignment span {span:.2f}s below minimum "
            f"{config.align_min_duration_s:.2f}s"
        )
    gyro = np.array([s.gyro for s in samples])
    accel = np.array([s.accel for s in samples])
    mean_rate = float(np.linalg.norm(gyro.mean(axis=0)))
    if mean_rate > config.align_max_gyro_rad_s:
        raise AlignmentError(
            f"mean angular rate {mean_rate:.3f} rad/s indicates motion"
        )
    f = accel.mean(axis=0)
    norm = float(np.linalg.norm(f))
    if not 0.5 * GRAVITY < norm < 1.5 * GRAVITY:
        raise AlignmentError(f"mean specific force {norm:.2f} m/s^2 is not gravity")
    roll = math.atan2(f[1], f[2])
    pitch = math.asin(max(-1.0, min(1.0, -f[0] / norm)))
    att = Attitude.from_euler(roll, pitch, 0.0)
    gyro_bias = gyro.mean(axis=0)
    return att, gyro_bias


def vehicle_frame(att: Attitude) -> tuple[np.ndarray, float]:
    """Vehicle-frame axes derived from the spinning body attitude.

    The body x-axis is the axle; forward is its horizontal perpendicular.
    Returns ``(C_vn, heading)`` where ``C_vn`` rotates navigation vectors
    into the vehicle frame (x forward, y along axle/left, z up-ish).
    """
    c = att.as_matrix()
    ax, ay, az = c[0, 0], c[1, 0], c[2, 0]
    horiz = math.hypot(ax, ay)
    if horiz < 1e-6:
        raise NumericalError("axle is vertical; vehicle frame undefined")
    fx, fy = ay / horiz, -ax / horiz
    heading = math.atan2(fy, fx)
    # Rows: forward, axle, forward x axle.
    return (
        np.array(
            [
                [fx, fy, 0.0],
                [ax, ay, az],
                [fy * az, -fx * az, fx * ay - fy * ax],
            ]
        ),
        heading,
    )


def vehicle_roll(state: InsState) -> float:
    """Bank angle of the vehicle: tilt of the axle out of the horizontal.

    Positive when the vehicle leans to the right (axle's left end up).
    Invariant to wheel spin because the axle is the spin axis.
    """
    c = state.att.as_matrix()
    return math.asin(max(-1.0, min(1.0, c[2, 0])))


def mechanize(state: InsState, prev: ImuSample, cur: ImuSample) -> InsState:
    """One strapdown step between two bias/scale-compensated samples.

    The body spins fast (the wheel), so naive body-frame averaging of the
    rapidly rotating rate and force vectors systematically shortens them.
    The attitude increment therefore carries the standard second-order
    coning term, and specific force is trapezoid-integrated in the
    navigation frame with each endpoint rotated by its own attitude.
    """
    dt = float(cur.t - prev.t)
    if dt <= 0.0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    g0, g1 = prev.gyro, cur.gyro
    g0x, g0y, g0z = float(g0[0]), float(g0[1]), float(g0[2])
    g1x, g1y, g1z = float(g1[0]), float(g1[1]), float(g1[2])

    ax = 0.5 * (g0x + g1x) * dt
    # Transverse rate content co-rotates with the wheel at the x (spin) rate,
    # so the trapezoid shortens it by cos(spin/2) where the true integral
    # attenuates by sinc(spin/2); rescale by tan(x)/x to compensate.  Without
    # this the heading drifts by ~psi_dot * (spin_per_sample)^2 / 12 per
    # second while turning.
    half_spin = min(abs(0.5 * ax), 0.6)
    if half_spin > 1e-6:
        scale = math.tan(half_spin) / half_spin
    else:
        scale = 1.0 + half_spin * half_spin / 3.0
    coning = dt * dt / 12.0
    ay = 0.5 * (g0y + g1y) * dt * scale + coning * (g0z * g1x - g0x * g1z)
    az = 0.5 * (g0z + g1z) * dt * scale + coning * (g0x * g1y - g0y * g1x)
    ax += coning * (g0y * g1z - g0z * g1y)

    att = state.att
    att_new = att.compose(Attitude.from_rotvec_xyz(ax, ay, az))

    f0 = att.rotate(prev.accel)
    f1 = att_new.rotate(cur.accel)
    vel = state.vel
    vx = float(vel[0]) + 0.5 * (f0[0] + f1[0]) * dt
    vy = float(vel[1]) + 0.5 * (f0[1] + f1[1]) * dt
    vz = float(vel[2]) + (0.5 * (f0[2] + f1[2]) - GRAVITY) * dt
    pos = state.pos
    px = float(pos[0]) + 0.5 * (float(vel[0]) + vx) * dt
    py = float(pos[1]) + 0.5 * (float(vel[1]) + vy) * dt
    pz = float(pos[2]) + 0.5 * (float(vel[2]) + vz) * dt
    return InsState(
        pos=np.array([px, py, pz]),
        vel=np.array([vx, vy, vz]),
        att=att_new,
        t=state.t + dt,
    )


def ekf_predict(
    err: ErrorState,
    state: InsState,
    gyro: np.ndarray,
    accel: np.ndarray,
    dt: float,
    process_noise_diag: np.ndarray,
) -> ErrorState:
    """Propagate the error estimate and covariance over one IMU interval.

    ``gyro``/``accel`` are the compensated body rates used by the matching
    mechanization step; the transition matrix is the first-order expansion
    ``I + F dt`` of the continuous-time error dynamics.
    """
    c = state.att.as_matrix()
    # phi = I + F dt; only the fixed sparsity pattern of the preallocated
    # buffer is touched, and every pattern entry is rewritten each call.
    phi = err._phi
    phi[0, 3] = phi[1, 4] = phi[2, 5] = dt
    fn = c @ accel
    f0, f1, f2 = fn[0] * dt, fn[1] * dt, fn[2] * dt
    phi[3, 7] = f2
    phi[3, 8] = -f1
    phi[4, 6] = -f2
    phi[4, 8] = f0
    phi[5, 6] = f1
    phi[5, 7] = -f0
    cdt = c * dt
    phi[VEL, BA] = cdt
    phi[VEL, SA] = cdt * accel
    phi[ATT, BG] = cdt
    phi[ATT, SG] = cdt * gyro
    work, p = err._work, err._work2
    np.matmul(phi, err.P, out=work)
    np.matmul(work, phi.T, out=p)
    p.flat[:: N_STATES + 1] += process_noise_diag * dt
    np.add(p, p.T, out=err.P)
    err.P *= 0.5
    err.dx = phi @ err.dx
    return err


def ekf_update_velocity(
    err: ErrorState,
    state: InsState,
    v_wheel: float,
    gyro: np.ndarray,
    config: WheelInsConfig,
    gate_threshold: Optional[float] = None,
) -> bool:
    """Fuse the wheel velocity plus non-holonomic constraints.

    The observation is the wheel-center velocity in the vehicle frame:
    ``(v_wheel, 0, 0)``.  Because ``v_wheel`` is derived from the x gyro,
    its error includes the x gyro bias and scale, which appear in the
    observation matrix with opposite sign.  Returns False when the
    innovation fails the chi-square gate (the state is left untouched).
    """
    c_vn, _ = vehicle_frame(state.att)
    c = state.att.as_matrix()
    lever = np.asarray(config.lever_arm, dtype=float)

    vel = state.vel
    h = np.zeros((3, N_STATES))
    h[:, VEL] = c_vn
    if np.any(lever != 0.0):
        vel = vel - c @ np.cross(gyro, lever)
        lever_jac = c_vn @ c @ skew(lever)
        h[:, BG] = lever_jac
        h[:, SG] = lever_jac * gyro[np.newaxis, :]
    h[:, ATT] = c_vn @ skew(vel)
    h[0, BG.start] += -config.wheel_radius
    h[0, SG.start] += -config.wheel_radius * gyro[0]

    z_pred = c_vn @ vel
    y = z_pred - np.array([v_wheel, 0.0, 0.0])

    r_diag = np.array(
        [config.vel_noise_ms**2, config.nhc_noise_ms**2, config.nhc_noise_ms**2]
    )
    ph_t = err.P @ h.T
    s = h @ ph_t
    s.flat[::4] += r_diag

    if gate_threshold is None:
        gate_threshold = float(chi2.ppf(config.gate_prob, df=3))
    try:
        s_inv_y = np.linalg.solve(s, y)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular innovation covariance: {exc}") from exc
    if float(y @ s_inv_y) > gate_threshold:
        return False

    k = np.linalg.solve(s, ph_t.T).T
    err.dx = err.dx + k @ (y - h @ err.dx)
    ikh = np.eye(N_STATES) - k @ h
    p = ikh @ err.P @ ikh.T + (k * r_diag[np.newaxis, :]) @ k.T
    err.P = 0.5 * (p + p.T)
    return True


def feedback(
    state: InsState, err: ErrorState, sensors: Optional[SensorEstimates] = None
) -> InsState:
    """Fold the estimated errors back into the navigation and sensor states.

    Position/velocity are corrected additively, attitude by a small
    navigation-frame rotation; bias/scale estimates absorb their error
    states when ``sensors`` is given.  The error estimate is zeroed, the
    covariance kept.
    """
    dx = err.dx
    state_new = InsState(
        pos=state.pos - dx[POS],
        vel=state.vel - dx[VEL],
        att=Attitude.from_rotvec(-dx[ATT]).compose(state.att),
        t=state.t,
    )
    if sensors is not None:
        sensors.gyro_bias = sensors.gyro_bias + dx[BG]
        sensors.accel_bias = sensors.accel_bias + dx[BA]
        sensors.gyro_scale = sensors.gyro_scale + dx[SG]
        sensors.accel_scale = sensors.accel_scale + dx[SA]
    err.dx = np.zeros(N_STATES)
    return state_new


# --------------------------------------------------------------------------
# Pipeline


class WheelInsPipeline:
    """Feeds raw IMU samples through alignment, mechanization and the EKF,
    and emits odometry increments every ``roll_sample_distance_m`` of travel.

    Typical use::

        pipe = WheelInsPipeline(config)
        pipe.align(static_samples)
        pipe.set_pose(x0, y0, heading0)
        for sample in moving_samples:
            inc = pipe.step(sample)
            if inc is not None:
                ...  # hand to the SLAM layer
    """

    def __init__(self, config: WheelInsConfig):
        self.config = config
        self.state: Optional[InsState] = None
        self.error = ErrorState()
        self.sensors = SensorEstimates()
        self.updates_applied = 0
        self.updates_gated = 0
        self.updates_forced = 0
        self._qd = config.process_noise_diag()
        self._gate = float(chi2.ppf(config.gate_prob, df=3))
        self._gate_streak = 0
        self._prev_raw: Optional[ImuSample] = None
        self._prev_comp: Optional[ImuSample] = None
        self._since_update = 0.0
        self._dist = 0.0
        self._emit_dist = 0.0
        self._emit_heading = 0.0

    # -- setup ------------------------------------------------------------

    def align(self, samples: Sequence[ImuSample]) -> None:
        att, gyro_bias = static_align(samples, self.config)
        self.sensors = SensorEstimates(gyro_bias=gyro_bias.copy())
        self.state = InsState(
            pos=np.zeros(3),
            vel=np.zeros(3),
            att=att,
            t=float(samples[-1].t),
        )
        self.error = ErrorState(P=self.config.initial_covariance())
        self._prev_raw = samples[-1]
        self._prev_comp = None
        _, self._emit_heading = vehicle_frame(att)

    def set_pose(self, x: float, y: float, heading: float) -> None:
        """Place the solution in an external frame (heading is the vehicle's,
        not the spinning body's)."""
        if self.state is None:
            raise AlignmentError("align before setting the pose")
        _, current = vehicle_frame(self.state.att)
        spin = Attitude.from_rotvec([0.0, 0.0, wrap_angle(heading - current)])
        self.state.att = spin.compose(self.state.att)
        self.state.pos = np.array([x, y, 0.0])
        self._emit_heading = heading

    # -- introspection ----------------------------------------------------

    @property
    def heading(self) -> float:
        _, psi = vehicle_frame(self.state.att)
        return psi

    @property
    def roll(self) -> float:
        return vehicle_roll(self.state)

    @property
    def distance(self) -> float:
        return self._dist

    # -- main loop ---------------------------------------------------------

    def step(self, sample: ImuSample) -> Optional[OdometryIncrement]:
        """Process one IMU sample; returns an odometry increment when the
        travelled distance crosses the emission spacing."""
        if self.state is None or self._prev_raw is None:
            raise AlignmentError("align before stepping")
        dt = float(sample.t - self.state.t)
        if dt <= 0.0:
            raise InvalidInputError(
                f"non-increasing timestamp {sample.t} after {self.state.t}"
            )

        gyro_now, accel_now = self.sensors.correct(sample)
        prev = self._prev_comp
        if prev is None:
            prev_g, prev_a = self.sensors.correct(self._prev_raw)
            prev = ImuSample(float(self._prev_raw.t), prev_g, prev_a)
        comp = ImuSample(float(sample.t), gyro_now, accel_now)
        self.state = mechanize(self.state, prev, comp)
        ekf_predict(
            self.error,
            self.state,
            0.5 * (prev.gyro + gyro_now),
            0.5 * (prev.accel + accel_now),
            dt,
            self._qd,
        )
        self._prev_raw = sample
        self._prev_comp = comp

        self._dist += dt * math.hypot(self.state.vel[0], self.state.vel[1])
        self._since_update += dt

        v_wheel = wheel_velocity(gyro_now[0], self.config.wheel_radius)
        if self._since_update >= self._update_interval(v_wheel):
            limit = self.config.gate_max_rejections
            forced = limit is not None and self._gate_streak >= limit
            threshold = math.inf if forced else self._gate
            if ekf_update_velocity(
                self.error, self.state, v_wheel, gyro_now, self.config, threshold
            ):
                self.state = feedback(self.state, self.error, self.sensors)
                self.state.pos[2] = 0.0
                self.updates_applied += 1
                self.updates_forced += int(forced)
                self._gate_streak = 0
                # Bias/scale estimates changed; recompensate the held sample.
                self._prev_comp = None
            else:
                self.updates_gated += 1
                self._gate_streak += 1
            self._since_update = 0.0

        if self._dist - self._emit_dist >= self.config.roll_sample_distance_m:
            _, heading = vehicle_frame(self.state.att)
            inc = OdometryIncrement(
                t=self.state.t,
                ds=self._dist - self._emit_dist,
                dheading=wrap_angle(heading - self._emit_heading),
                roll=vehicle_roll(self.state),
            )
            self._emit_dist = self._dist
            self._emit_heading = heading
            return inc
        return None

    def _update_interval(self, v_wheel: float) -> float:
        if self.config.update_interval_s is not None:
            return self.config.update_interval_s
        speed = max(abs(v_wheel), 0.2)
        revolution = 2.0 * math.pi * self.config.wheel_radius / speed
        return min(self.config.update_max_interval_s, revolution)
