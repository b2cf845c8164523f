"""Station-to-satellite range tables and the two-way light-time solution.

Epochs are integer picoseconds since the pass reference; ranges are float
meters. Queries may carry a float sub-picosecond offset on top of an integer
base epoch so that millisecond light times never lose precision against
multi-minute epochs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .rng import make_rng

SPEED_OF_LIGHT = 299_792_458.0  # m/s
C_M_PER_PS = SPEED_OF_LIGHT * 1e-12
GM_EARTH = 3.986004418e14  # m^3/s^2
PS_PER_S = 1_000_000_000_000

DEFAULT_ORDER = 8


class EphemerisError(ValueError):
    pass


class OutOfRangeError(EphemerisError):
    """Query outside the interpolable span (no extrapolation)."""


class ConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RangeSample:
    epoch: int  # ps
    range: float  # m


@dataclass(frozen=True, eq=False)
class EphemerisTable:
    """Uniformly sampled range table, immutable after construction."""

    epochs: np.ndarray
    ranges: np.ndarray
    interpolation_order: int = DEFAULT_ORDER

    def __post_init__(self) -> None:
        epochs = np.array(self.epochs, dtype=np.int64)
        ranges = np.array(self.ranges, dtype=np.float64)
        if epochs.ndim != 1 or epochs.shape != ranges.shape:
            raise EphemerisError("epochs and ranges must be 1-D arrays of equal length")
        order = int(self.interpolation_order)
        if order < 1:
            raise EphemerisError("interpolation_order must be >= 1")
        if len(epochs) < order + 1:
            raise EphemerisError(f"need at least {order + 1} samples for order {order}")
        steps = np.diff(epochs)
        if np.any(steps <= 0):
            raise EphemerisError("epochs must be strictly increasing")
        nominal = (epochs[-1] - epochs[0]) / (len(epochs) - 1)
        if np.max(np.abs(steps - nominal)) > 1e-6 * nominal:
            raise EphemerisError("samples are not uniformly spaced within 1 ppm")
        if not np.all(np.isfinite(ranges)) or np.any(ranges <= 0.0):
            raise EphemerisError("ranges must be finite and positive")
        epochs.setflags(write=False)
        ranges.setflags(write=False)
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "interpolation_order", order)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EphemerisTable):
            return NotImplemented
        return (self.interpolation_order == other.interpolation_order
                and np.array_equal(self.epochs, other.epochs)
                and np.array_equal(self.ranges, other.ranges))

    def __len__(self) -> int:
        return len(self.epochs)

    @classmethod
    def from_samples(cls, samples, interpolation_order: int = DEFAULT_ORDER) -> "EphemerisTable":
        samples = list(samples)
        return cls(np.array([s.epoch for s in samples], dtype=np.int64),
                   np.array([s.range for s in samples], dtype=np.float64),
                   interpolation_order)

    @property
    def samples(self) -> list[RangeSample]:
        return [RangeSample(int(e), float(r)) for e, r in zip(self.epochs, self.ranges)]

    @property
    def step_ps(self) -> float:
        return float(self.epochs[-1] - self.epochs[0]) / (len(self.epochs) - 1)

    @property
    def sample_interval(self) -> float:
        """Sample spacing in seconds."""
        return self.step_ps / PS_PER_S

    @property
    def _stencil_offset(self) -> int:
        return self.interpolation_order // 2

    @property
    def valid_span(self) -> tuple[int, int]:
        """Inclusive epoch interval where a full centered stencil is available."""
        h = self._stencil_offset
        n = len(self.epochs)
        return int(self.epochs[h]), int(self.epochs[n - 1 - self.interpolation_order + h])

    # -- interpolation core --------------------------------------------------

    def _stencil(self, base: np.ndarray, offset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (start index, node positions relative to the query in steps)."""
        lo, hi = self.valid_span
        approx = base + np.floor(offset).astype(np.int64)
        exact = base.astype(np.float64) + offset
        bad = (approx < lo) | (approx > hi) | ((approx == hi) & (exact > hi))
        if np.any(bad):
            t = float(exact[bad][0])
            raise OutOfRangeError(f"epoch {t:.0f} ps outside interpolable span [{lo}, {hi}] ps")
        i = np.searchsorted(self.epochs, approx, side="right") - 1
        start = np.minimum(i - self._stencil_offset, len(self.epochs) - 1 - self.interpolation_order)
        idx = start[:, None] + np.arange(self.interpolation_order + 1)[None, :]
        rel = ((self.epochs[idx] - base[:, None]).astype(np.float64) - offset[:, None]) / self.step_ps
        return idx, rel

    def _evaluate(self, base, offset=0.0, derivative: bool = False):
        base_arr = np.atleast_1d(np.asarray(base, dtype=np.int64))
        off_arr = np.broadcast_to(np.asarray(offset, dtype=np.float64), base_arr.shape)
        idx, p = self._stencil(base_arr, off_arr)
        k = self.interpolation_order + 1
        values = self.ranges[idx]
        out = np.zeros(len(base_arr))
        for j in range(k):
            others = [m for m in range(k) if m != j]
            if not derivative:
                w = np.ones(len(base_arr))
                for m in others:
                    w *= -p[:, m] / (p[:, j] - p[:, m])
            else:
                w = np.zeros(len(base_arr))
                for i in others:
                    term = 1.0 / (p[:, j] - p[:, i])
                    for m in others:
                        if m != i:
                            term = term * (-p[:, m] / (p[:, j] - p[:, m]))
                    w += term
            out += w * values[:, j]
        if derivative:
            out *= PS_PER_S / self.step_ps  # per step -> per second
        if np.ndim(base) == 0 and np.ndim(offset) == 0:
            return float(out[0])
        return out


def interpolate_range(table: EphemerisTable, t, offset=0.0):
    """Range in meters at epoch ``t`` (+ ``offset``) picoseconds."""
    return table._evaluate(t, offset)


def range_rate(table: EphemerisTable, t, offset=0.0):
    """Derivative of the interpolating polynomial, in m/s."""
    return table._evaluate(t, offset, derivative=True)


def expected_return_time(table: EphemerisTable, t_fire, *, tolerance_ps: float = 1.0,
                         max_iterations: int = 20, return_iterations: bool = False):
    """Expected detection epoch (integer ps) for shots fired at ``t_fire``.

    Solves ``t_hit = t_fire + R(t_hit)/c`` by fixed-point iteration and
    returns ``t_hit + R(t_hit)/c``. The station is taken as stationary over
    the round trip.
    """
    scalar = np.ndim(t_fire) == 0
    t = np.atleast_1d(np.asarray(t_fire, dtype=np.int64))
    uplink = table._evaluate(t) / C_M_PER_PS
    iterations = 0
    while True:
        if iterations >= max_iterations:
            raise ConvergenceError(f"light-time iteration did not converge in {max_iterations} steps")
        iterations += 1
        new = table._evaluate(t, uplink) / C_M_PER_PS
        delta = np.max(np.abs(2.0 * (new - uplink))) if len(t) else 0.0
        uplink = new
        if delta < tolerance_ps:
            break
    t_exp = t + np.rint(2.0 * uplink).astype(np.int64)
    result = int(t_exp[0]) if scalar else t_exp
    return (result, iterations) if return_iterations else result


# --- synthetic passes ------------------------------------------------------


@dataclass(frozen=True)
class SyntheticOrbit:
    """Circular orbit over a spherical, non-rotating Earth."""

    altitude: float  # m
    max_elevation: float  # deg
    pass_duration: float  # s
    earth_radius: float = 6_371e3

    def __post_init__(self) -> None:
        if not self.altitude > 0:
            raise EphemerisError("altitude must be positive")
        if not (0.0 < self.max_elevation <= 90.0):
            raise EphemerisError("max_elevation must lie in (0, 90] degrees")
        if not self.pass_duration > 0:
            raise EphemerisError("pass_duration must be positive")

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def angular_rate(self) -> float:
        return math.sqrt(GM_EARTH / self.orbit_radius**3)

    @property
    def closest_approach_angle(self) -> float:
        """Earth-central angle between station and the track at closest approach."""
        el = math.radians(self.max_elevation)
        return math.acos(self.earth_radius * math.cos(el) / self.orbit_radius) - el

    def range_at(self, t_from_mid):
        """Closed-form slant range at ``t_from_mid`` seconds from closest approach."""
        theta = self.angular_rate * np.asarray(t_from_mid, dtype=np.float64)
        cos_gamma = math.cos(self.closest_approach_angle) * np.cos(theta)
        re, r = self.earth_radius, self.orbit_radius
        return np.sqrt(re * re + r * r - 2.0 * re * r * cos_gamma)


def synthesize_pass(orbit: SyntheticOrbit, step: float = 1.0,
                    interpolation_order: int = DEFAULT_ORDER) -> EphemerisTable:
    """Sample a symmetric overflight every ``step`` seconds, closest approach at mid-pass."""
    if not step > 0:
        raise EphemerisError("step must be positive")
    n = int(math.floor(orbit.pass_duration / step + 1e-9)) + 1
    if n < interpolation_order + 1:
        raise EphemerisError(
            f"pass of {orbit.pass_duration} s at {step} s steps gives {n} samples, "
            f"need {interpolation_order + 1}")
    half = orbit.pass_duration / 2.0
    horizon_angle = math.acos(orbit.earth_radius / orbit.orbit_radius)
    edge = math.acos(math.cos(orbit.closest_approach_angle) * math.cos(orbit.angular_rate * half))
    if edge > horizon_angle:
        raise EphemerisError(
            f"pass of {orbit.pass_duration} s with max elevation {orbit.max_elevation} deg "
            f"at altitude {orbit.altitude:.0f} m drops below the horizon")
    step_ps = int(round(step * PS_PER_S))
    epochs = np.arange(n, dtype=np.int64) * step_ps
    t_mid = orbit.pass_duration / 2.0
    ranges = orbit.range_at(epochs / PS_PER_S - t_mid)
    return EphemerisTable(epochs, ranges, interpolation_order)


# --- perturbations ---------------------------------------------------------


@dataclass(frozen=True)
class PerturbationModel:
    amplitude: float  # ns of one-way light time
    correlation_time: float  # s
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise EphemerisError("perturbation amplitude must be non-negative")
        if not self.correlation_time > 0:
            raise EphemerisError("correlation_time must be positive")

    @property
    def amplitude_m(self) -> float:
        return self.amplitude * 1e-9 * SPEED_OF_LIGHT


def apply_perturbation(table: EphemerisTable, model: PerturbationModel) -> EphemerisTable:
    """Add smooth, zero-mean, seeded range noise whose peak equals the amplitude."""
    if model.amplitude == 0.0:
        return table
    rng = make_rng(model.seed, "perturbation")
    n = len(table)
    white = rng.standard_normal(n)
    smooth = gaussian_filter1d(white, sigma=model.correlation_time / table.sample_interval, mode="reflect")
    smooth -= smooth.mean()
    peak = _interpolated_peak(table, smooth)
    if peak == 0.0:
        return table
    noise = smooth * (model.amplitude_m / peak)
    return EphemerisTable(table.epochs, table.ranges + noise, table.interpolation_order)


def _interpolated_peak(table: EphemerisTable, values: np.ndarray, oversample: int = 16) -> float:
    """Peak of |values| including the interpolant between samples, which can
    overshoot the largest sample."""
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        return 0.0
    lifted = EphemerisTable(table.epochs, values + 4.0 * peak, table.interpolation_order)
    lo, hi = lifted.valid_span
    q = np.linspace(lo, hi, oversample * (len(table) - 1) + 1).astype(np.int64)
    between = np.abs(lifted._evaluate(q) - 4.0 * peak)
    return max(peak, float(np.max(between)))


# --- file I/O ----------------------------------------------------------------

EPHEMERIS_HEADER = ("epoch_ps", "range_m")


def write_ephemeris(table: EphemerisTable, destination) -> None:
    with open(destination, "w", newline="") as fh:
        fh.write(",".join(EPHEMERIS_HEADER) + "\n")
        for e, r in zip(table.epochs.tolist(), table.ranges.tolist()):
            fh.write(f"{e},{r!r}\n")


def read_ephemeris(source, interpolation_order: int = DEFAULT_ORDER) -> EphemerisTable:
    path = Path(source)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EPHEMERIS_HEADER:
            raise EphemerisError(f"{path}: expected header {','.join(EPHEMERIS_HEADER)}")
        epochs, ranges = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise EphemerisError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                epochs.append(int(row[0]))
                ranges.append(float(row[1]))
            except ValueError:
                raise EphemerisError(f"{path}:{lineno}: malformed record {row!r}") from None
            if len(epochs) > 1 and epochs[-1] <= epochs[-2]:
                raise EphemerisError(f"{path}:{lineno}: epochs must be strictly increasing")
    return EphemerisTable(np.array(epochs, dtype=np.int64), np.array(ranges), interpolation_order)
