"""Trajectory accuracy metrics.

Estimates and references rarely share epochs (the dead-reckoning output is
distance-triggered, the truth is time-sampled), so the reference is linearly
interpolated onto the estimate's timestamps.  Position errors are planar
Euclidean distances; heading errors are wrapped differences so a crossing of
the +/-180 degree seam never counts as a full turn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rollslam.core import TWO_PI, InvalidInputError
from rollslam.cli.io import Trajectory

__all__ = ["Metrics", "evaluate_trajectory", "improvement_percent", "quartiles"]


@dataclass
class Metrics:
    """Accuracy summary of one estimated trajectory against a reference."""

    rmse_pos_m: float
    rmse_heading_deg: float
    final_pos_error_m: float
    max_pos_error_m: float
    n_epochs: int
    pos_errors_m: np.ndarray = field(repr=False, compare=False)
    heading_errors_deg: np.ndarray = field(repr=False, compare=False)

    def as_dict(self) -> dict:
        """Scalar summary, e.g. for JSON output."""
        return {
            "rmse_pos_m": self.rmse_pos_m,
            "rmse_heading_deg": self.rmse_heading_deg,
            "final_pos_error_m": self.final_pos_error_m,
            "max_pos_error_m": self.max_pos_error_m,
            "n_epochs": self.n_epochs,
        }


def evaluate_trajectory(estimate: Trajectory, truth) -> Metrics:
    """Compare an estimate against a reference track.

    ``truth`` may be any object exposing ``t``/``x``/``y``/``heading``
    arrays (a :class:`~rollslam.cli.io.TruthTrack`, a simulator
    :class:`~rollslam.sim.GroundTruth`, or another trajectory).  Every
    estimate epoch must lie inside the reference's time span; refusing to
    extrapolate keeps a clock mismatch from masquerading as drift.
    """
    t = np.asarray(estimate.t, dtype=float)
    if t.size == 0:
        raise InvalidInputError("estimate trajectory is empty")
    tr = np.asarray(truth.t, dtype=float)
    if tr.size < 2:
        raise InvalidInputError("reference track needs at least two epochs")
    if t[0] < tr[0] or t[-1] > tr[-1]:
        raise InvalidInputError(
            f"estimate epochs [{t[0]:.3f}, {t[-1]:.3f}] s fall outside the "
            f"reference span [{tr[0]:.3f}, {tr[-1]:.3f}] s"
        )

    x_ref = np.interp(t, tr, np.asarray(truth.x, dtype=float))
    y_ref = np.interp(t, tr, np.asarray(truth.y, dtype=float))
    # Interpolate heading on the unwrapped signal: linear interpolation
    # straight across the angle seam would sweep through every heading in
    # between.
    h_ref = np.interp(t, tr, np.unwrap(np.asarray(truth.heading, dtype=float)))

    pos_err = np.hypot(estimate.x - x_ref, estimate.y - y_ref)
    d = np.asarray(estimate.heading, dtype=float) - h_ref
    d -= TWO_PI * np.ceil((d - np.pi) / TWO_PI)
    d[d > np.pi] -= TWO_PI
    d[d <= -np.pi] += TWO_PI
    h_err = np.degrees(d)

    return Metrics(
        rmse_pos_m=float(np.sqrt(np.mean(pos_err**2))),
        rmse_heading_deg=float(np.sqrt(np.mean(h_err**2))),
        final_pos_error_m=float(pos_err[-1]),
        max_pos_error_m=float(pos_err.max()),
        n_epochs=int(t.size),
        pos_errors_m=pos_err,
        heading_errors_deg=h_err,
    )


def improvement_percent(baseline: float, value: float) -> float:
    """Relative reduction of ``value`` versus ``baseline``, in percent."""
    if baseline <= 0.0:
        raise InvalidInputError("baseline must be positive")
    return 100.0 * (baseline - value) / baseline


def quartiles(values) -> tuple[float, float, float]:
    """(q1, median, q3) of a sample, for multi-seed summaries."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise InvalidInputError("no values to summarise")
    q1, q2, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return float(q1), float(q2), float(q3)
