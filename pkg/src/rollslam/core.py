"""Shared math primitives for the wheel-IMU navigation stack.

Conventions used across the package:

* 3-vectors are ``numpy`` arrays of shape ``(3,)``, float64.
* The navigation frame is a local-level frame with x/y horizontal and z up,
  so gravity is ``(0, 0, -g)`` and a resting accelerometer reads ``+g`` on
  its up axis.
* An :class:`Attitude` is a unit quaternion rotating body-frame vectors into
  the navigation frame.
* Angles are radians unless the name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: Standard gravity (m/s^2); the navigation frame is z-up, so the gravity
#: vector is (0, 0, -GRAVITY).
GRAVITY = 9.80665

__all__ = [
    "TWO_PI",
    "GRAVITY",
    "InvalidInputError",
    "DegenerateSequenceError",
    "vec3",
    "skew",
    "wrap_angle",
    "angle_difference",
    "Attitude",
    "integrate_attitude",
    "pearson_correlation",
    "rms",
    "circular_mean",
]


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateSequenceError(ValueError):
    """A statistic is undefined for the given data (e.g. zero variance)."""


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def _as_vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise InvalidInputError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite, got {arr}")
    return arr


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == cross(a, b)``."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def wrap_angle(angle: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi].

    ``pi`` maps to ``pi`` and ``-pi`` maps to ``pi``, so the output is unique
    for every input equivalence class.
    """
    a = float(angle)
    if not math.isfinite(a):
        raise InvalidInputError(f"angle must be finite, got {angle!r}")
    w = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
    # Guard against rounding right at the boundary of the interval.
    if w > math.pi:
        w -= TWO_PI
    elif w <= -math.pi:
        w += TWO_PI
    return w


def angle_difference(a: float, b: float) -> float:
    """Signed smallest rotation from ``b`` to ``a``, in (-pi, pi]."""
    return wrap_angle(float(a) - float(b))


@dataclass(frozen=True)
class Attitude:
    """Unit quaternion (scalar-first) rotating body vectors into navigation."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Attitude":
        return Attitude(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_rotvec(rotvec) -> "Attitude":
        """Quaternion for a rotation-vector (axis * angle) input."""
        r = _as_vec3(rotvec, "rotvec")
        return Attitude.from_rotvec_xyz(r[0], r[1], r[2])

    @staticmethod
    def from_rotvec_xyz(x: float, y: float, z: float) -> "Attitude":
        """Unvalidated scalar-component variant of :meth:`from_rotvec`
        (hot-path helper for per-sample integration loops)."""
        angle = math.sqrt(x * x + y * y + z * z)
        half = 0.5 * angle
        if angle < 1e-12:
            # Second-order series keeps the result exact to double precision.
            k = 0.5 - angle * angle / 48.0
            return Attitude(1.0 - half * half / 2.0, x * k, y * k, z * k)
        s = math.sin(half) / angle
        return Attitude(math.cos(half), x * s, y * s, z * s)

    @staticmethod
    def from_euler(roll: float, pitch: float, yaw: float) -> "Attitude":
        """Build from intrinsic z-y-x (yaw, pitch, roll) Euler angles."""
        hr, hp, hy = 0.5 * roll, 0.5 * pitch, 0.5 * yaw
        cr, sr = math.cos(hr), math.sin(hr)
        cp, sp = math.cos(hp), math.sin(hp)
        cy, sy = math.cos(hy), math.sin(hy)
        return Attitude(
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        )

    def compose(self, other: "Attitude") -> "Attitude":
        """Hamilton product ``self * other`` (apply ``other`` first)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        q = Attitude(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
        return q.normalized()

    def __matmul__(self, other: "Attitude") -> "Attitude":
        return self.compose(other)

    def inverse(self) -> "Attitude":
        return Attitude(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Attitude":
        n = self.norm()
        if n < 1e-12:
            raise InvalidInputError("cannot normalize a zero quaternion")
        if abs(n - 1.0) < 1e-14:
            return self
        inv = 1.0 / n
        return Attitude(self.w * inv, self.x * inv, self.y * inv, self.z * inv)

    def as_matrix(self) -> np.ndarray:
        """3x3 rotation matrix taking body vectors into the navigation frame."""
        w, x, y, z = self.w, self.x, self.y, self.z
        xx, yy, zz = x * x, y * y, z * z
        wx, wy, wz = w * x, w * y, w * z
        xy, xz, yz = x * y, x * z, y * z
        return np.array(
            [
                [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
                [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
                [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
            ]
        )

    def rotate(self, v) -> np.ndarray:
        """Rotate a body-frame vector into the navigation frame."""
        vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
        w, x, y, z = self.w, self.x, self.y, self.z
        # t = 2 q_vec x v ; v' = v + w t + q_vec x t
        tx = 2.0 * (y * vz - z * vy)
        ty = 2.0 * (z * vx - x * vz)
        tz = 2.0 * (x * vy - y * vx)
        return np.array(
            [
                vx + w * tx + y * tz - z * ty,
                vy + w * ty + z * tx - x * tz,
                vz + w * tz + x * ty - y * tx,
            ]
        )

    def rotate_back(self, v) -> np.ndarray:
        """Rotate a navigation-frame vector into the body frame."""
        return self.inverse().rotate(v)

    def as_rotvec(self) -> np.ndarray:
        q = self if self.w >= 0.0 else Attitude(-self.w, -self.x, -self.y, -self.z)
        vec_norm = math.sqrt(q.x**2 + q.y**2 + q.z**2)
        if vec_norm < 1e-12:
            return np.array([2.0 * q.x, 2.0 * q.y, 2.0 * q.z])
        angle = 2.0 * math.atan2(vec_norm, q.w)
        k = angle / vec_norm
        return np.array([q.x * k, q.y * k, q.z * k])

    def as_euler(self) -> tuple[float, float, float]:
        """Return (roll, pitch, yaw) for the z-y-x convention."""
        m = self.as_matrix()
        pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
        roll = math.atan2(m[2, 1], m[2, 2])
        yaw = math.atan2(m[1, 0], m[0, 0])
        return roll, pitch, yaw


def integrate_attitude(att: Attitude, omega, dt: float) -> Attitude:
    """Advance an attitude by a constant body rate over ``dt`` seconds.

    Exact for constant ``omega``; the caller is responsible for choosing a
    representative rate over the interval (e.g. a midpoint average).
    """
    if not (math.isfinite(dt) and dt > 0.0):
        raise InvalidInputError(f"dt must be positive and finite, got {dt!r}")
    w = _as_vec3(omega, "omega")
    return att.compose(Attitude.from_rotvec(w * dt))


def pearson_correlation(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation coefficient of two equal-length sequences.

    Raises :class:`DegenerateSequenceError` when either sequence has zero
    variance, and :class:`InvalidInputError` for length/shape problems.
    The result is clamped to [-1, 1] to absorb floating-point overshoot.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise InvalidInputError("inputs must be one-dimensional sequences")
    if x.size != y.size:
        raise InvalidInputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InvalidInputError("need at least two samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("inputs must be finite")
    # A constant sequence whose mean is not exactly representable (e.g. all
    # 0.1) leaves cancellation residue in the centered sum of squares, so the
    # zero-variance case must be caught on the raw values.
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateSequenceError("correlation undefined for constant input")
    xd = x - x.mean()
    yd = y - y.mean()
    # Normalizing the residuals keeps the dot products O(1) regardless of the
    # data's magnitude; the plain sum of squares under- or overflows for
    # spreads outside roughly 1e-154..1e154.
    mx = float(np.max(np.abs(xd)))
    my = float(np.max(np.abs(yd)))
    if mx == 0.0 or my == 0.0:
        raise DegenerateSequenceError("correlation undefined for constant input")
    xd /= mx
    yd /= my
    sxx = float(np.dot(xd, xd))
    syy = float(np.dot(yd, yd))
    r = float(np.dot(xd, yd)) / (math.sqrt(sxx) * math.sqrt(syy))
    return max(-1.0, min(1.0, r))


def rms(values: Iterable[float]) -> float:
    """Root mean square of a non-empty sequence."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=float)
    if arr.size == 0:
        raise InvalidInputError("rms of an empty sequence is undefined")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("inputs must be finite")
    return float(np.sqrt(np.mean(np.square(arr))))


def circular_mean(angles: Sequence[float], weights: Sequence[float] | None = None) -> float:
    """Weighted mean of angles, computed on the unit circle.

    Raises :class:`DegenerateSequenceError` when the resultant vector is too
    short to define a direction (e.g. two opposite angles with equal weight).
    """
    a = np.asarray(angles, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InvalidInputError("angles must be a non-empty 1-d sequence")
    if weights is None:
        w = np.full(a.size, 1.0 / a.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != a.shape:
            raise InvalidInputError("weights must match angles in shape")
        total = float(w.sum())
        if total <= 0.0:
            raise InvalidInputError("weights must have a positive sum")
        w = w / total
    c = float(np.dot(w, np.cos(a)))
    s = float(np.dot(w, np.sin(a)))
    if math.hypot(c, s) < 1e-12:
        raise DegenerateSequenceError("circular mean undefined: zero resultant")
    return math.atan2(s, c)
