"""Monte-Carlo generation of the time-tag record of a satellite pass.

A pass is generated in fixed-length arcs (one second by default). Each arc
draws from its own Philox streams keyed by ``(master_seed, stream, arc)``, so
arcs can be produced in any order or in parallel and concatenate to the same
stream. Dead time is applied once, on the merged detection record.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ephemeris import C_M_PER_PS, PS_PER_S, EphemerisTable, expected_return_time
from .link_budget import LaserParams, LinkParameters, per_shot_detection_probability
from .rng import make_rng
from .timetags import Channel, TimeTagError, TimeTagStream, combine

log = logging.getLogger(__name__)

PS_PER_NS = 1000


@dataclass(frozen=True)
class JitterModel:
    """Gaussian timing errors in ns, combined root-sum-square."""

    laser_emission_sigma: float = 0.5
    detector_sigma: float = 0.6
    timestamp_sigma: float = 0.2
    clock_sigma: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("laser_emission_sigma", "detector_sigma", "timestamp_sigma", "clock_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def instrument_sigma(self) -> float:
        return math.sqrt(self.detector_sigma**2 + self.timestamp_sigma**2 + self.clock_sigma**2)

    @property
    def total_sigma(self) -> float:
        return math.hypot(self.laser_emission_sigma, self.instrument_sigma)

    @classmethod
    def none(cls, seed: int = 0) -> "JitterModel":
        return cls(0.0, 0.0, 0.0, 0.0, seed)


@dataclass(frozen=True)
class GateConfig:
    gate_half_width: float = 500.0  # ns around the expected return
    dead_time: float = 50.0  # ns

    def __post_init__(self) -> None:
        if not self.gate_half_width > 0:
            raise ValueError("gate_half_width must be positive")
        if self.dead_time < 0:
            raise ValueError("dead_time must be non-negative")


@dataclass(frozen=True)
class BackgroundModel:
    """Background counts accepted by the detector gates.

    ``reference="gate"`` reads ``rate_in_gate`` as counts/s summed over all
    gate windows. ``reference="bin"`` reads it as counts/s falling in one
    histogram bin of ``reference_bin_width`` ns; the in-gate rate then scales
    by the number of such bins per gate.
    """

    rate_in_gate: float = 0.4  # counts/s
    rms_fraction: float = 0.25  # 0.1 cps rms on 0.4 cps
    seed: int = 0
    reference: str = "gate"
    reference_bin_width: float = 5.0  # ns

    def __post_init__(self) -> None:
        if self.rate_in_gate < 0:
            raise ValueError("background rate must be non-negative")
        if not (0.0 <= self.rms_fraction < 1.0):
            raise ValueError("rms_fraction must lie in [0, 1)")
        if self.reference not in ("gate", "bin"):
            raise ValueError("reference must be 'gate' or 'bin'")
        if not self.reference_bin_width > 0:
            raise ValueError("reference_bin_width must be positive")

    def gate_rate(self, gate: GateConfig) -> float:
        if self.reference == "gate":
            return self.rate_in_gate
        return self.rate_in_gate * (2.0 * gate.gate_half_width) / self.reference_bin_width


@dataclass(frozen=True)
class PassSimConfig:
    link: LinkParameters
    ephemeris: EphemerisTable
    jitter: JitterModel = field(default_factory=JitterModel)
    background: BackgroundModel = field(default_factory=BackgroundModel)
    gate: GateConfig = field(default_factory=GateConfig)
    duration: float = 60.0  # s
    master_seed: int = 0
    start: float = 0.0  # s, acquisition start on the ephemeris time axis
    p_det: float | None = None  # overrides the link-budget value
    arc_length: float = 1.0  # s, generation block and background modulation period

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.arc_length > 0:
            raise ValueError("arc_length must be positive")
        span = (self.ephemeris.epochs[-1] - self.ephemeris.epochs[0]) / PS_PER_S
        if self.duration > span:
            raise ValueError(f"duration {self.duration} s exceeds ephemeris span {span} s")
        if self.p_det is not None and not (0.0 <= self.p_det <= 1.0):
            raise ValueError("p_det must lie in [0, 1]")

    @property
    def detection_probability(self) -> float:
        return per_shot_detection_probability(self.link) if self.p_det is None else self.p_det

    @property
    def laser(self) -> LaserParams:
        return self.link.laser


@dataclass(frozen=True)
class SimulationResult:
    stream: TimeTagStream
    n_shots: int
    n_signal: int
    n_background: int
    n_dead_time_dropped: int
    n_skipped_shots: int


# --- shot generation ---------------------------------------------------------


def _shot_grid(laser: LaserParams, first_index: int, count: int, start_ps: int) -> np.ndarray:
    k = np.arange(first_index, first_index + count, dtype=np.int64)
    period_ps = PS_PER_S / laser.repetition_rate
    return start_ps + np.rint(k * period_ps).astype(np.int64)


def _shot_count(laser: LaserParams, duration: float) -> int:
    return int(math.floor(duration * laser.repetition_rate + 1e-9))


def _jittered(grid: np.ndarray, sigma_ns: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(len(grid))
    if sigma_ns == 0.0:
        return grid.copy()
    return grid + np.rint(noise * sigma_ns * PS_PER_NS).astype(np.int64)


def generate_shot_times(laser: LaserParams, duration: float, jitter: JitterModel,
                        start_epoch: int = 0) -> TimeTagStream:
    """Laser fire tags at multiples of the pulse period plus emission jitter.

    Tags that jitter below epoch zero are clipped to zero.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    grid = _shot_grid(laser, 0, _shot_count(laser, duration), start_epoch)
    tags = np.maximum(_jittered(grid, jitter.laser_emission_sigma, make_rng(jitter.seed, "shots")), 0)
    return TimeTagStream.of(Channel.LASER_FIRE, tags)


# --- signal and background ---------------------------------------------------


def _usable_shots(eph: EphemerisTable, fire: np.ndarray) -> np.ndarray:
    lo, hi = eph.valid_span
    flight_ps = int(math.ceil(float(np.max(eph.ranges)) / C_M_PER_PS)) + 1
    return (fire >= lo) & (fire + flight_ps <= hi)


def _signal_epochs(emission: np.ndarray, eph: EphemerisTable, p_det: float, sigma_ns: float,
                   rng: np.random.Generator) -> np.ndarray:
    hit = rng.random(len(emission)) < p_det
    chosen = emission[hit]
    noise = rng.standard_normal(len(chosen))
    if len(chosen) == 0:
        return np.empty(0, np.int64)
    t_exp = expected_return_time(eph, chosen)
    return t_exp + np.rint(noise * sigma_ns * PS_PER_NS).astype(np.int64)


def simulate_signal_returns(shots: TimeTagStream, eph: EphemerisTable, p_det: float,
                            jitter: JitterModel, emission_epochs: np.ndarray | None = None
                            ) -> TimeTagStream:
    """Retroreflected single-photon detections.

    Each shot is detected independently with probability ``p_det`` at its
    expected return epoch plus Gaussian instrument jitter. When
    ``emission_epochs`` (true emission instants, aligned with the fire tags)
    is given the return is computed from them, so the laser timing error
    carried by the tags shows up in the deviations.
    """
    if not (0.0 <= p_det <= 1.0):
        raise ValueError("p_det must lie in [0, 1]")
    fire = shots.fire_epochs
    emission = fire if emission_epochs is None else np.asarray(emission_epochs, np.int64)
    if len(emission) != len(fire):
        raise ValueError("emission_epochs must align with the fire tags")
    ok = _usable_shots(eph, emission)
    skipped = int(np.count_nonzero(~ok))
    if skipped:
        warnings.warn(f"{skipped} shots outside the ephemeris span skipped", RuntimeWarning, stacklevel=2)
    rng = make_rng(jitter.seed, "signal")
    epochs = _signal_epochs(emission[ok], eph, p_det, jitter.instrument_sigma, rng)
    return TimeTagStream.of(Channel.DETECTION, epochs)


def _background_epochs(fire: np.ndarray, eph: EphemerisTable, rate: float, duration: float,
                       rms_fraction: float, gate: GateConfig,
                       rng: np.random.Generator, mod_rng: np.random.Generator) -> np.ndarray:
    if rate == 0.0 or len(fire) == 0:
        return np.empty(0, np.int64)
    modulation = max(0.0, 1.0 + rms_fraction * mod_rng.standard_normal())
    n = rng.poisson(rate * modulation * duration)
    which = np.sort(rng.integers(0, len(fire), size=n))
    half_ps = gate.gate_half_width * PS_PER_NS
    offset = rng.uniform(-half_ps, half_ps, size=n)
    if n == 0:
        return np.empty(0, np.int64)
    centers = expected_return_time(eph, fire[which])
    return np.sort(centers + np.floor(offset).astype(np.int64))


def simulate_background(eph: EphemerisTable, shots: TimeTagStream, bg: BackgroundModel,
                        gate: GateConfig, duration: float) -> TimeTagStream:
    """Poisson background restricted to the gate windows around each expected return.

    The rate is modulated once per call by ``1 + rms_fraction * N(0, 1)``
    (clipped at zero); arrivals are uniform within the gates.
    """
    fire = shots.fire_epochs
    fire = fire[_usable_shots(eph, fire)]
    epochs = _background_epochs(fire, eph, bg.gate_rate(gate), duration, bg.rms_fraction, gate,
                                make_rng(bg.seed, "background"),
                                make_rng(bg.seed, "background_modulation"))
    return TimeTagStream.of(Channel.DETECTION, epochs)


def _apply_dead_time(epochs: np.ndarray, dead_ps: int) -> np.ndarray:
    if len(epochs) == 0 or dead_ps <= 0:
        return np.unique(epochs)
    keep = []
    last = None
    for e in np.unique(epochs).tolist():
        if last is None or e - last > dead_ps:
            keep.append(e)
            last = e
    return np.array(keep, dtype=np.int64)


def merge_and_gate(signal: TimeTagStream, background: TimeTagStream, gate: GateConfig) -> TimeTagStream:
    """Merge detection streams and enforce detector dead time.

    A detection falling within ``dead_time`` after an accepted detection is
    dropped. Fire tags pass through untouched; duplicates are removed.
    """
    for s in (signal, background):
        if np.any(np.diff(s.epochs) < 0):
            raise TimeTagError("merge_and_gate requires sorted input streams")
    merged = combine(signal, background)
    det = _apply_dead_time(merged.detection_epochs, int(round(gate.dead_time * PS_PER_NS)))
    fire = np.unique(merged.fire_epochs)
    return combine(TimeTagStream.of(Channel.LASER_FIRE, fire), TimeTagStream.of(Channel.DETECTION, det))


# --- whole pass ----------------------------------------------------------------


def _simulate_arc(cfg: PassSimConfig, arc: int, shots_per_arc: int, n_total: int, start_ps: int):
    first = arc * shots_per_arc
    count = min(shots_per_arc, n_total - first)
    seed = cfg.master_seed
    grid = _shot_grid(cfg.laser, first, count, start_ps)
    tags = _jittered(grid, cfg.jitter.laser_emission_sigma, make_rng(seed, "shots", arc))
    ok = _usable_shots(cfg.ephemeris, grid) & _usable_shots(cfg.ephemeris, tags)
    signal = _signal_epochs(grid[ok], cfg.ephemeris, cfg.detection_probability,
                            cfg.jitter.instrument_sigma, make_rng(seed, "signal", arc))
    arc_seconds = count / cfg.laser.repetition_rate
    background = _background_epochs(tags[ok], cfg.ephemeris, cfg.background.gate_rate(cfg.gate),
                                    arc_seconds, cfg.background.rms_fraction, cfg.gate,
                                    make_rng(seed, "background", arc),
                                    make_rng(seed, "background_modulation", arc))
    return tags, signal, background, int(np.count_nonzero(~ok))


def arc_count(cfg: PassSimConfig) -> int:
    n_total = _shot_count(cfg.laser, cfg.duration)
    per_arc = max(1, int(round(cfg.arc_length * cfg.laser.repetition_rate)))
    return -(-n_total // per_arc)


def simulate_pass(cfg: PassSimConfig, arcs=None, workers: int = 1) -> SimulationResult:
    """Generate the full time-tag record of a pass.

    ``arcs`` restricts generation to the given arc indices (all by default);
    results do not depend on ``workers`` or on the order arcs are produced.
    """
    n_total = _shot_count(cfg.laser, cfg.duration)
    per_arc = max(1, int(round(cfg.arc_length * cfg.laser.repetition_rate)))
    start_ps = int(round(cfg.start * PS_PER_S))
    indices = list(range(arc_count(cfg))) if arcs is None else sorted(set(arcs))

    def run(a):
        return _simulate_arc(cfg, a, per_arc, n_total, start_ps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, indices))
    else:
        parts = [run(a) for a in indices]

    tags = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, np.int64)
    signal = np.sort(np.concatenate([p[1] for p in parts])) if parts else np.empty(0, np.int64)
    background = np.sort(np.concatenate([p[2] for p in parts])) if parts else np.empty(0, np.int64)
    skipped = sum(p[3] for p in parts)
    if skipped:
        log.warning("%d shots outside the ephemeris span skipped", skipped)
    if np.any(tags < 0):
        raise ValueError("acquisition start too close to epoch zero for the laser jitter")

    shots = TimeTagStream.of(Channel.LASER_FIRE, tags)
    detections = merge_and_gate(TimeTagStream.of(Channel.DETECTION, signal),
                                TimeTagStream.of(Channel.DETECTION, background), cfg.gate)
    stream = combine(shots, detections)
    return SimulationResult(
        stream=stream,
        n_shots=len(tags),
        n_signal=len(signal),
        n_background=len(background),
        n_dead_time_dropped=len(signal) + len(background) - len(detections),
        n_skipped_shots=skipped,
    )
