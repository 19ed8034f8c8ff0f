"""Dead reckoning and terrain-profile SLAM with a single wheel-mounted IMU.

The package is organised as:

* :mod:`rollslam.core` -- quaternions, angle wrapping, small statistics.
* :mod:`rollslam.wheel_ins` -- strapdown mechanization plus a 21-state
  error-state Kalman filter aided by wheel velocity derived from the gyro.
* :mod:`rollslam.wheel_slam` -- Rao-Blackwellized particle filter that maps
  road bank angle on a 2-D grid and closes loops by correlating roll
  sequences.
* :mod:`rollslam.sim` -- physics-consistent scenario generator (terrain,
  trajectory, exact IMU synthesis, sensor corruption).
* :mod:`rollslam.cli` -- file formats (:mod:`rollslam.cli.io`), accuracy
  metrics (:mod:`rollslam.cli.metrics`), and the command-line tools.
"""

from rollslam.core import (
    Attitude,
    DegenerateSequenceError,
    InvalidInputError,
    circular_mean,
    pearson_correlation,
    rms,
    wrap_angle,
)

__version__ = "0.1.0"

__all__ = [
    "Attitude",
    "DegenerateSequenceError",
    "InvalidInputError",
    "circular_mean",
    "pearson_correlation",
    "rms",
    "wrap_angle",
    "__version__",
]
