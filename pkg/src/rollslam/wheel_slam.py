"""Terrain-aided particle-filter SLAM on top of wheel-IMU dead reckoning.

The dead-reckoning front end (:mod:`rollslam.wheel_ins`) emits odometry
increments — travelled distance, heading change, and the vehicle roll angle
at fixed distance spacing.  On a banked road the roll angle mirrors the
local road bank, which makes it a position-dependent signature that can be
recognised when the vehicle returns to a previously travelled stretch.

This module exploits that signature with a Rao-Blackwellized particle
filter.  Each particle carries a hypothesis of the vehicle pose plus its own
sparse grid map of road bank angle, built from the roll observations along
that particle's trajectory.  Loop closure is detected by correlating the
recent roll sequence against the bank values stored in the map where the
particle currently believes it is driving.  Particles whose maps line up
with what the wheel measures get their weights boosted; systematic
resampling then concentrates the particle set on consistent trajectories.

Matching is deliberately conservative.  A weight update fires only when

1. the particle has been continuously inside previously mapped cells for a
   full evidence window,
2. enough of the windowed correlation coefficients clear the threshold, and
3. the most recent coefficient itself clears the threshold.

A particle's own fresh trail never counts as a revisit: a mapped cell is
usable for loop closure only once the vehicle has travelled a configurable
exclusion distance past the moment the cell was last touched.  The stored
bank of a cell is captured when a roll sample enters the matching window,
before the same pass writes to the map, so a window never correlates
against values it wrote itself.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    InvalidInputError,
    TWO_PI,
    circular_mean,
    DegenerateSequenceError,
    rms,
    wrap_angle,
)
from .wheel_ins import OdometryIncrement

__all__ = [
    "Pose2D",
    "RollSample",
    "TerrainCell",
    "TerrainGrid",
    "Particle",
    "SlamConfig",
    "LoopClosureEvidence",
    "LoopClosureEvent",
    "WheelSlamFilter",
    "propagate",
    "update_map",
    "detect_revisit",
    "reference_bank",
    "match_sequence",
    "check_criteria",
    "update_weight",
    "normalize",
    "effective_sample_ratio",
    "resample",
    "estimate",
]

logger = logging.getLogger(__name__)

_NAN = float("nan")

# Philox purpose keys; disjoint from the simulator's (see sim.py) because the
# step index is packed into the low 48 bits of the second key word.
_KEY_MOTION = 0x11
_KEY_RESAMPLE = 0x12
_MASK64 = (1 << 64) - 1


def _stream(seed: int, purpose: int, step: int) -> np.random.Generator:
    """Counter-based RNG stream for one filter step.

    Keyed on (seed, purpose, step) so draws are reproducible regardless of
    evaluation order or how particles are scheduled across workers.
    """
    word = ((purpose << 48) | step) & _MASK64
    key = np.array([seed & _MASK64, word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in metres, heading wrapped to (-pi, pi]."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


class RollSample(NamedTuple):
    """One roll observation: where it was taken and the measured bank."""

    x: float
    y: float
    bank: float
    distance: float  # cumulative travelled distance at the sample, m

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


class TerrainCell(NamedTuple):
    """Immutable per-cell record; grids copy cheaply because of this.

    Writes are grouped into visitation *episodes*: a write arriving more
    than the episode gap after the previous one starts a new episode and
    archives the pre-existing mean in ``prev_bank``/``prev_visit``.  Loop
    closure can then test and match against the state the cell had before
    the current pass started touching it — otherwise a vehicle sitting on
    its old trail would keep refreshing ``last_visit`` and disqualify the
    very cells it is revisiting.
    """

    bank: float  # running-mean road bank, rad
    count: int  # number of observations folded into the mean
    last_visit: float  # cumulative distance at the most recent write, m
    prev_bank: float = _NAN  # mean bank before the current episode began
    prev_visit: float = _NAN  # last write of the previous episode, m


class TerrainGrid:
    """Sparse 2D grid of road bank angle keyed by integer cell index."""

    __slots__ = ("cell_size", "cells")

    def __init__(self, cell_size: float, cells: Optional[dict] = None):
        if cell_size <= 0.0:
            raise InvalidInputError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self.cells: dict[tuple[int, int], TerrainCell] = cells if cells is not None else {}

    def index(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor(x / self.cell_size), math.floor(y / self.cell_size))

    def at(self, x: float, y: float) -> Optional[TerrainCell]:
        return self.cells.get(self.index(x, y))

    def observe(
        self,
        x: float,
        y: float,
        bank: float,
        distance: float,
        episode_gap: float = math.inf,
    ) -> None:
        """Fold one bank observation into the cell under (x, y).

        Repeated observations of a cell average rather than overwrite, so a
        noisy second pass refines the map instead of erasing the first.
        ``episode_gap`` controls when a write counts as a fresh visit rather
        than a continuation of the current pass.
        """
        if not (math.isfinite(bank) and abs(bank) < math.pi / 2.0):
            raise InvalidInputError(f"bank angle {bank!r} is not a plausible road bank")
        key = self.index(x, y)
        cell = self.cells.get(key)
        if cell is None:
            self.cells[key] = TerrainCell(bank, 1, distance)
            return
        if distance - cell.last_visit > episode_gap:
            prev_bank, prev_visit = cell.bank, cell.last_visit
        else:
            prev_bank, prev_visit = cell.prev_bank, cell.prev_visit
        n = cell.count + 1
        self.cells[key] = TerrainCell(
            cell.bank + (bank - cell.bank) / n, n, distance, prev_bank, prev_visit
        )

    def copy(self) -> "TerrainGrid":
        # Cells are immutable tuples, so a shallow dict copy is a deep copy.
        return TerrainGrid(self.cell_size, dict(self.cells))

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[tuple[tuple[int, int], TerrainCell]]:
        return iter(self.cells.items())


@dataclass
class SlamConfig:
    """Particle filter tuning.

    The matching window is expressed in metres and converted to a sample
    count via the roll sampling distance, which must match the increment
    spacing of the dead-reckoning front end.
    """

    n_particles: int = 100
    cell_size_m: float = 1.5
    distance_noise_m: float = 0.025  # 1-sigma noise added per distance increment
    heading_noise_deg: float = 0.05  # 1-sigma noise added per heading increment
    roll_sample_distance_m: float = 0.5
    matching_length_m: float = 25.0  # roll-sequence length used for correlation
    corr_threshold: float = 0.4
    evidence_window: int = 50  # epochs over which matches are accumulated
    evidence_min_count: Optional[int] = None  # default: ceil(0.8 * window)
    resample_threshold: float = 0.75  # on N_eff / N_p
    exclusion_distance_m: Optional[float] = None  # default: 3 * matching length
    min_sequence_std_deg: float = 0.05  # flatter sequences carry no signature
    weight_exponent: str = "match"  # "match": rms(V); "mismatch": rms(1 - V)
    loop_closure: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise InvalidInputError("need at least two particles")
        if not 0.0 < self.corr_threshold < 1.0:
            raise InvalidInputError("corr_threshold must lie in (0, 1)")
        for name in ("cell_size_m", "roll_sample_distance_m", "matching_length_m"):
            if getattr(self, name) <= 0.0:
                raise InvalidInputError(f"{name} must be positive")
        if self.distance_noise_m < 0.0 or self.heading_noise_deg < 0.0:
            raise InvalidInputError("motion noise must be non-negative")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise InvalidInputError("resample_threshold must lie in (0, 1]")
        if self.evidence_window < 1:
            raise InvalidInputError("evidence_window must be positive")
        if self.min_evidence_count > self.evidence_window:
            raise InvalidInputError("evidence_min_count cannot exceed the window")
        if self.sequence_samples < 2:
            raise InvalidInputError("matching window shorter than two samples")
        if self.weight_exponent not in ("match", "mismatch"):
            raise InvalidInputError("weight_exponent must be 'match' or 'mismatch'")

    @property
    def sequence_samples(self) -> int:
        """Number of roll samples in the correlated sequence."""
        return int(round(self.matching_length_m / self.roll_sample_distance_m))

    @property
    def min_evidence_count(self) -> int:
        if self.evidence_min_count is not None:
            return self.evidence_min_count
        return math.ceil(0.8 * self.evidence_window)

    @property
    def exclusion_m(self) -> float:
        if self.exclusion_distance_m is not None:
            return self.exclusion_distance_m
        return 3.0 * self.matching_length_m

    @property
    def heading_noise_rad(self) -> float:
        return math.radians(self.heading_noise_deg)

    @property
    def min_sequence_std_rad(self) -> float:
        return math.radians(self.min_sequence_std_deg)


class LoopClosureEvidence(NamedTuple):
    """Qualifying correlation coefficients from one evidence window."""

    coefficients: tuple  # every windowed coefficient above the threshold
    count: int  # == len(coefficients)
    current: float  # coefficient at the current position


class LoopClosureEvent(NamedTuple):
    """Log record written whenever a particle's weight is updated."""

    step: int
    distance: float
    particle: int
    count: int
    current: float
    exponent: float
    weight_before: float
    weight_after: float


class Particle:
    """One pose/map hypothesis.

    Besides pose, weight, and map, a particle keeps three ring buffers that
    make sequence matching cheap:

    * ``window_banks`` — the last L measured roll angles;
    * ``stored_banks`` — for each of those samples, the bank the map held at
      the moment the sample was taken (NaN when the cell was unmapped or too
      recently written to qualify as a revisit);
    * ``coeffs`` — the last ``evidence_window`` correlation coefficients
      (NaN when matching was not possible).

    The two bank buffers share slot indices, and the correlation treats each
    slot as one paired observation, so the rings never need unrolling.
    """

    __slots__ = (
        "x",
        "y",
        "heading",
        "weight",
        "grid",
        "roll_window",
        "window_banks",
        "stored_banks",
        "coeffs",
        "last_coeff",
        "revisit_streak",
        "_slot",
        "_n_missing",
        "_coeff_slot",
    )

    def __init__(
        self,
        pose: Pose2D,
        weight: float,
        grid: TerrainGrid,
        sequence_samples: int,
        evidence_window: int,
    ):
        self.x = float(pose.x)
        self.y = float(pose.y)
        self.heading = float(pose.heading)
        self.weight = float(weight)
        self.grid = grid
        self.roll_window: deque = deque(maxlen=sequence_samples)
        self.window_banks = np.full(sequence_samples, _NAN)
        self.stored_banks = np.full(sequence_samples, _NAN)
        self.coeffs = np.full(evidence_window, _NAN)
        self.last_coeff = _NAN
        self.revisit_streak = 0
        self._slot = 0
        self._n_missing = sequence_samples
        self._coeff_slot = 0

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.x, self.y, self.heading)

    def push_window(self, sample: RollSample, stored_bank: float) -> None:
        """Admit a roll sample, caching the pre-write map bank (or NaN)."""
        slot = self._slot
        was_missing = math.isnan(self.stored_banks[slot])
        now_missing = math.isnan(stored_bank)
        self._n_missing += now_missing - was_missing
        self.stored_banks[slot] = stored_bank
        self.window_banks[slot] = sample.bank
        self.roll_window.append(sample)
        self._slot = (slot + 1) % self.window_banks.size

    def push_coeff(self, coeff: Optional[float]) -> None:
        value = _NAN if coeff is None else float(coeff)
        self.coeffs[self._coeff_slot] = value
        self.last_coeff = value
        self._coeff_slot = (self._coeff_slot + 1) % self.coeffs.size

    def clone(self) -> "Particle":
        """Deep copy; the twin shares no mutable state with the original."""
        twin = Particle.__new__(Particle)
        twin.x = self.x
        twin.y = self.y
        twin.heading = self.heading
        twin.weight = self.weight
        twin.grid = self.grid.copy()
        twin.roll_window = deque(self.roll_window, maxlen=self.roll_window.maxlen)
        twin.window_banks = self.window_banks.copy()
        twin.stored_banks = self.stored_banks.copy()
        twin.coeffs = self.coeffs.copy()
        twin.last_coeff = self.last_coeff
        twin.revisit_streak = self.revisit_streak
        twin._slot = self._slot
        twin._n_missing = self._n_missing
        twin._coeff_slot = self._coeff_slot
        return twin


def propagate(
    particle: Particle,
    inc: OdometryIncrement,
    config: SlamConfig,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[tuple] = None,
) -> Particle:
    """Advance a particle by one odometry increment plus motion noise.

    The pose moves along the current heading by the perturbed distance, then
    the heading turns by the perturbed increment.  ``noise`` supplies the
    pair of standard-normal draws directly (the filter pre-draws them in a
    batch); otherwise they come from ``rng``.
    """
    if noise is None:
        noise = (rng.standard_normal(), rng.standard_normal()) if rng is not None else (0.0, 0.0)
    ds = inc.ds + config.distance_noise_m * noise[0]
    dpsi = inc.dheading + config.heading_noise_rad * noise[1]
    heading = particle.heading
    particle.x += ds * math.cos(heading)
    particle.y += ds * math.sin(heading)
    particle.heading = wrap_angle(heading + dpsi)
    return particle


def update_map(particle: Particle, sample: RollSample, episode_gap: float = math.inf) -> None:
    """Write the sample's bank into the particle's map (running mean)."""
    particle.grid.observe(sample.x, sample.y, sample.bank, sample.distance, episode_gap)


def reference_bank(cell: Optional[TerrainCell], distance: float, exclusion_m: float) -> float:
    """Mapped bank usable for loop closure at travelled ``distance``.

    Ignores anything the current pass wrote itself: if the cell's newest
    write is recent, fall back to the previous episode's mean.  NaN when the
    cell is missing or has no history older than the exclusion distance.
    """
    if cell is None:
        return _NAN
    if distance - cell.last_visit > exclusion_m:
        return cell.bank
    if distance - cell.prev_visit > exclusion_m:  # False when prev is NaN
        return cell.prev_bank
    return _NAN


def detect_revisit(particle: Particle, sample: RollSample, exclusion_m: float) -> bool:
    """Check whether the sample lands on an old mapped cell.

    A cell only counts when it holds bank history from more than
    ``exclusion_m`` of travel ago — otherwise every particle would "revisit"
    its own fresh trail continuously.  Maintains the consecutive-revisit
    streak.
    """
    cell = particle.grid.at(sample.x, sample.y)
    if math.isnan(reference_bank(cell, sample.distance, exclusion_m)):
        particle.revisit_streak = 0
        return False
    particle.revisit_streak += 1
    return True


def match_sequence(particle: Particle, min_std_rad: float = 0.0) -> Optional[float]:
    """Pearson correlation between measured and mapped bank sequences.

    Pairs each windowed roll measurement with the map bank cached when that
    sample entered the window.  Returns ``None`` when any cached cell was
    missing, or when either sequence is too flat to carry a terrain
    signature (correlating noise against noise is meaningless).
    """
    if particle._n_missing:
        return None
    w = particle.window_banks
    s = particle.stored_banks
    n = w.size
    sum_w = float(w.sum())
    sum_s = float(s.sum())
    sq_w = n * float(np.dot(w, w))
    sq_s = n * float(np.dot(s, s))
    var_w = sq_w - sum_w * sum_w
    var_s = sq_s - sum_s * sum_s
    floor = (n * min_std_rad) ** 2  # n^2 * var >= (n * std)^2
    # The raw-moment form cancels catastrophically on near-constant input,
    # leaving round-off residue instead of zero, so the flatness gate also
    # carries a term relative to the sequence magnitude.
    if var_w <= floor + 1e-12 * sq_w or var_s <= floor + 1e-12 * sq_s:
        return None
    cov = n * float(np.dot(w, s)) - sum_w * sum_s
    coeff = cov / math.sqrt(var_w * var_s)
    return max(-1.0, min(1.0, coeff))


def check_criteria(particle: Particle, config: SlamConfig) -> Optional[LoopClosureEvidence]:
    """Gate a weight update behind three loop-closure criteria.

    Evidence is produced only when (1) the revisit streak spans the whole
    evidence window, (2) at least ``min_evidence_count`` windowed
    coefficients exceed the threshold, and (3) the newest coefficient itself
    exceeds the threshold.
    """
    if particle.revisit_streak < config.evidence_window:
        return None
    current = particle.last_coeff
    if math.isnan(current) or current <= config.corr_threshold:
        return None
    values = particle.coeffs
    qualifying = values[values > config.corr_threshold]  # NaN compares False
    if qualifying.size < config.min_evidence_count:
        return None
    return LoopClosureEvidence(tuple(qualifying), qualifying.size, current)


def update_weight(particle: Particle, evidence: LoopClosureEvidence, config: SlamConfig) -> float:
    """Boost a particle's weight by its loop-closure evidence.

    The multiplier is (count / window) * exp(strength), where strength is
    the RMS of the qualifying coefficients ("match" mode) or of their
    distance from perfect correlation ("mismatch" mode).  Returns the
    exponent for logging.
    """
    values = np.asarray(evidence.coefficients)
    if config.weight_exponent == "match":
        exponent = rms(values)
    else:
        exponent = rms(1.0 - values)
    particle.weight *= (evidence.count / config.evidence_window) * math.exp(exponent)
    return exponent


def normalize(particles: Sequence[Particle]) -> None:
    """Scale weights to sum to one; reset to uniform if they collapsed."""
    total = math.fsum(p.weight for p in particles)
    if not math.isfinite(total) or total <= 0.0:
        logger.warning("particle weights degenerate (sum=%r); resetting to uniform", total)
        uniform = 1.0 / len(particles)
        for p in particles:
            p.weight = uniform
        return
    for p in particles:
        p.weight /= total


def effective_sample_ratio(weights: Sequence[float], n_particles: Optional[int] = None) -> float:
    """Effective sample size 1/sum(w^2), as a fraction of the particle count."""
    w = np.asarray(weights, dtype=float)
    n = int(n_particles) if n_particles is not None else w.size
    return 1.0 / float(np.dot(w, w)) / n


def resample(particles: Sequence[Particle], rng: np.random.Generator) -> list:
    """Systematic (low-variance) resampling.

    One uniform draw places a comb of equally spaced points over the
    cumulative weights; particle i survives once per comb point in its
    weight span, giving expected copy count N_p * w_i with minimal variance.
    Survivors are deep copies and weights reset to uniform.
    """
    n = len(particles)
    weights = np.fromiter((p.weight for p in particles), dtype=float, count=n)
    points = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against round-off excluding the last span
    chosen = np.searchsorted(cumulative, points)
    uniform = 1.0 / n
    survivors = []
    for idx in chosen:
        twin = particles[idx].clone()
        twin.weight = uniform
        survivors.append(twin)
    return survivors


def estimate(particles: Sequence[Particle]) -> Pose2D:
    """Weighted mean position and weighted circular-mean heading."""
    n = len(particles)
    w = np.fromiter((p.weight for p in particles), dtype=float, count=n)
    xs = np.fromiter((p.x for p in particles), dtype=float, count=n)
    ys = np.fromiter((p.y for p in particles), dtype=float, count=n)
    headings = np.fromiter((p.heading for p in particles), dtype=float, count=n)
    try:
        heading = circular_mean(headings, w)
    except DegenerateSequenceError:
        # Antipodal heading cloud: no meaningful mean, fall back to the mode.
        best = int(np.argmax(w))
        heading = particles[best].heading
        logger.warning("heading resultant vanished; using highest-weight particle")
    return Pose2D(float(w @ xs), float(w @ ys), heading)


class WheelSlamFilter:
    """Particle filter consuming odometry increments from the wheel INS.

    Semantically each step runs, for every particle, exactly what the free
    functions in this module define: :func:`propagate`, revisit detection
    against the pre-write map, window bookkeeping, :func:`match_sequence`,
    :func:`update_map`, :func:`check_criteria` + :func:`update_weight`, then
    :func:`normalize` and N_eff-gated :func:`resample`.  The implementation
    holds the per-particle state in arrays and vectorises the arithmetic
    across particles, which keeps thousand-particle clouds affordable; the
    measured-roll ring is shared because every particle ingests the same
    increment.  ``particles`` materialises :class:`Particle` views on demand.

    All randomness comes from counter-based streams keyed on (seed, purpose,
    counter), so a run is bit-reproducible for a given config and input
    stream regardless of scheduling; motion noise is generated in blocks of
    ``_DRAW_BLOCK`` steps purely to amortise stream construction.
    """

    _DRAW_BLOCK = 64  # steps of motion noise per stream invocation

    def __init__(self, config: SlamConfig, initial_pose: Pose2D):
        self.config = config
        n = config.n_particles
        seq = config.sequence_samples
        window = config.evidence_window
        self._xs = np.full(n, float(initial_pose.x))
        self._ys = np.full(n, float(initial_pose.y))
        self._headings = np.full(n, float(initial_pose.heading))
        self._weights = np.full(n, 1.0 / n)
        self._grids: list[dict] = [{} for _ in range(n)]
        self._bank_ring = np.full(seq, _NAN)  # measured roll, common input
        self._dist_ring = np.full(seq, _NAN)
        self._x_ring = np.full((n, seq), _NAN)
        self._y_ring = np.full((n, seq), _NAN)
        self._stored = np.full((n, seq), _NAN)
        self._coeffs = np.full((n, window), _NAN)
        self._last_coeff = np.full(n, _NAN)
        self._streaks = np.zeros(n, dtype=np.int64)
        self._missing = np.full(n, seq, dtype=np.int64)
        self._slot = 0
        self._coeff_slot = 0
        self._pushes = 0
        self.step_count = 0
        self.distance = 0.0
        self.events: list[LoopClosureEvent] = []
        self.resample_count = 0
        self._block_id = -1
        self._block: Optional[np.ndarray] = None

    @property
    def weights(self) -> np.ndarray:
        """Current particle weights (read-only view of filter state)."""
        return self._weights

    @property
    def particles(self) -> list:
        """Particle views of the filter state, for inspection and export.

        The views share terrain-grid storage with the filter; treat them as
        read-only snapshots.
        """
        return [self._materialize(i) for i in range(self.config.n_particles)]

    def best_particle(self) -> Particle:
        return self._materialize(int(np.argmax(self._weights)))

    def _materialize(self, i: int) -> Particle:
        cfg = self.config
        p = Particle(
            Pose2D(float(self._xs[i]), float(self._ys[i]), float(self._headings[i])),
            float(self._weights[i]),
            TerrainGrid(cfg.cell_size_m, self._grids[i]),
            cfg.sequence_samples,
            cfg.evidence_window,
        )
        np.copyto(p.window_banks, self._bank_ring)
        np.copyto(p.stored_banks, self._stored[i])
        np.copyto(p.coeffs, self._coeffs[i])
        p.last_coeff = float(self._last_coeff[i])
        p.revisit_streak = int(self._streaks[i])
        p._slot = self._slot
        p._n_missing = int(self._missing[i])
        p._coeff_slot = self._coeff_slot
        seq = cfg.sequence_samples
        if self._pushes >= seq:
            order = [(self._slot + k) % seq for k in range(seq)]
        else:
            order = list(range(self._pushes))
        for s in order:  # rebuild the sample ring oldest-first
            p.roll_window.append(
                RollSample(
                    float(self._x_ring[i, s]),
                    float(self._y_ring[i, s]),
                    float(self._bank_ring[s]),
                    float(self._dist_ring[s]),
                )
            )
        return p

    def _motion_noise(self, step: int) -> np.ndarray:
        block, offset = divmod(step, self._DRAW_BLOCK)
        if block != self._block_id:
            gen = _stream(self.config.seed, _KEY_MOTION, block)
            self._block = gen.standard_normal(
                (self._DRAW_BLOCK, self.config.n_particles, 2)
            )
            self._block_id = block
        return self._block[offset]

    def slam_step(self, inc: OdometryIncrement) -> Pose2D:
        """Process one odometry increment and return the fused pose."""
        cfg = self.config
        n = cfg.n_particles
        step = self.step_count
        self.step_count = step + 1
        self.distance += inc.ds
        distance = self.distance
        bank = float(inc.roll)
        if not (math.isfinite(bank) and abs(bank) < math.pi / 2.0):
            raise InvalidInputError(f"bank angle {bank!r} is not a plausible road bank")

        draws = self._motion_noise(step)
        headings = self._headings
        ds = inc.ds + cfg.distance_noise_m * draws[:, 0]
        self._xs += ds * np.cos(headings)
        self._ys += ds * np.sin(headings)
        headings = headings + (inc.dheading + cfg.heading_noise_rad * draws[:, 1])
        # Same wrap construction as core.wrap_angle, elementwise.
        headings -= TWO_PI * np.ceil((headings - math.pi) / TWO_PI)
        headings[headings > math.pi] -= TWO_PI
        headings[headings <= -math.pi] += TWO_PI
        self._headings = headings

        cell_size = cfg.cell_size_m
        ix_list = np.floor(self._xs / cell_size).astype(int).tolist()
        iy_list = np.floor(self._ys / cell_size).astype(int).tolist()
        exclusion = cfg.exclusion_m
        closing = cfg.loop_closure
        grids = self._grids
        refs = [_NAN] * n
        cell_type = TerrainCell
        for i in range(n):
            grid = grids[i]
            key = (ix_list[i], iy_list[i])
            cell = grid.get(key)
            if cell is None:
                grid[key] = cell_type(bank, 1, distance)
                continue
            # reference_bank() and the observe() episode branch share the
            # same staleness test, so compute it once per particle.
            stale = distance - cell.last_visit > exclusion
            if stale:
                refs[i] = cell.bank
                prev_bank, prev_visit = cell.bank, cell.last_visit
            else:
                if distance - cell.prev_visit > exclusion:  # False when NaN
                    refs[i] = cell.prev_bank
                prev_bank, prev_visit = cell.prev_bank, cell.prev_visit
            count = cell.count + 1
            grid[key] = cell_type(
                cell.bank + (bank - cell.bank) / count,
                count,
                distance,
                prev_bank,
                prev_visit,
            )

        if closing:
            refs_arr = np.array(refs)
            slot = self._slot
            missing_now = np.isnan(refs_arr)
            self._missing += missing_now.astype(np.int64)
            self._missing -= np.isnan(self._stored[:, slot]).astype(np.int64)
            self._stored[:, slot] = refs_arr
            self._bank_ring[slot] = bank
            self._dist_ring[slot] = distance
            self._x_ring[:, slot] = self._xs
            self._y_ring[:, slot] = self._ys
            self._slot = (slot + 1) % cfg.sequence_samples
            self._pushes += 1
            self._streaks = np.where(missing_now, 0, self._streaks + 1)
            coeff_col = self._match_all()
            self._coeffs[:, self._coeff_slot] = coeff_col
            self._coeff_slot = (self._coeff_slot + 1) % cfg.evidence_window
            self._last_coeff = coeff_col
            self._apply_evidence(coeff_col, step, distance)

        weights = self._weights
        total = float(weights.sum())
        if not math.isfinite(total) or total <= 0.0:
            logger.warning(
                "particle weights degenerate (sum=%r); resetting to uniform", total
            )
            weights.fill(1.0 / n)
        else:
            weights /= total
        ratio = 1.0 / float(weights @ weights) / n
        if ratio < cfg.resample_threshold:
            self._resample_state(step)
            self.resample_count += 1
        return self._estimate()

    def _match_all(self) -> np.ndarray:
        """Pearson coefficient per particle, NaN where matching is impossible.

        Same moment formulas and flatness gates as :func:`match_sequence`;
        the measured-roll moments are scalars because the ring is shared.
        """
        cfg = self.config
        n = cfg.n_particles
        seq = cfg.sequence_samples
        coeff_col = np.full(n, _NAN)
        if self._pushes < seq:
            return coeff_col
        full = self._missing == 0
        if not np.any(full):
            return coeff_col
        w = self._bank_ring
        sum_w = float(w.sum())
        sq_w = seq * float(np.dot(w, w))
        var_w = sq_w - sum_w * sum_w
        min_std = cfg.min_sequence_std_rad
        floor = (seq * min_std) ** 2
        if var_w <= floor + 1e-12 * sq_w:
            return coeff_col
        stored = self._stored
        sum_s = stored.sum(axis=1)
        sq_s = seq * np.einsum("ij,ij->i", stored, stored)
        var_s = sq_s - sum_s * sum_s
        cov = seq * (stored @ w) - sum_w * sum_s
        with np.errstate(invalid="ignore"):
            ok = full & (var_s > floor + 1e-12 * sq_s)
            coeff = cov / np.sqrt(var_w * var_s)
            np.clip(coeff, -1.0, 1.0, out=coeff)
        coeff_col[ok] = coeff[ok]
        return coeff_col

    def _apply_evidence(self, coeff_col: np.ndarray, step: int, distance: float) -> None:
        """Vectorised check_criteria + update_weight over all particles."""
        cfg = self.config
        window = cfg.evidence_window
        thr = cfg.corr_threshold
        with np.errstate(invalid="ignore"):
            qualify = self._coeffs > thr  # NaN epochs never qualify
            counts = qualify.sum(axis=1)
            fired_mask = (
                (self._streaks >= window)
                & (coeff_col > thr)
                & (counts >= cfg.min_evidence_count)
            )
        fired = np.nonzero(fired_mask)[0]
        if fired.size == 0:
            return
        coeffs = self._coeffs[fired]
        if cfg.weight_exponent == "mismatch":
            coeffs = 1.0 - coeffs
        vals = np.where(qualify[fired], coeffs, 0.0)
        exps = np.sqrt(np.einsum("ij,ij->i", vals, vals) / counts[fired])
        mult = (counts[fired] / window) * np.exp(exps)
        before = self._weights[fired].copy()
        self._weights[fired] = before * mult
        after = self._weights[fired]
        events = self.events
        for j, i in enumerate(fired.tolist()):
            events.append(
                LoopClosureEvent(
                    step,
                    distance,
                    i,
                    int(counts[i]),
                    float(coeff_col[i]),
                    float(exps[j]),
                    float(before[j]),
                    float(after[j]),
                )
            )

    def _resample_state(self, step: int) -> None:
        """Systematic resampling over the array state (see :func:`resample`)."""
        n = self.config.n_particles
        rng = _stream(self.config.seed, _KEY_RESAMPLE, step)
        points = (rng.random() + np.arange(n)) / n
        cumulative = np.cumsum(self._weights)
        cumulative[-1] = 1.0
        idx = np.searchsorted(cumulative, points)
        self._xs = self._xs[idx]
        self._ys = self._ys[idx]
        self._headings = self._headings[idx]
        self._x_ring = self._x_ring[idx]
        self._y_ring = self._y_ring[idx]
        self._stored = self._stored[idx]
        self._coeffs = self._coeffs[idx]
        self._last_coeff = self._last_coeff[idx]
        self._streaks = self._streaks[idx]
        self._missing = self._missing[idx]
        grids = self._grids
        self._grids = [dict(grids[i]) for i in idx.tolist()]
        self._weights = np.full(n, 1.0 / n)

    def _estimate(self) -> Pose2D:
        """Weighted mean pose; same semantics as :func:`estimate`."""
        w = self._weights
        cos_sum = float(w @ np.cos(self._headings))
        sin_sum = float(w @ np.sin(self._headings))
        if math.hypot(cos_sum, sin_sum) < 1e-12:
            heading = float(self._headings[int(np.argmax(w))])
            logger.warning("heading resultant vanished; using highest-weight particle")
        else:
            heading = math.atan2(sin_sum, cos_sum)
        return Pose2D(float(w @ self._xs), float(w @ self._ys), heading)
