"""Return-peak recovery from time-tag streams.

Each detection is matched to the shot whose predicted return epoch is nearest,
giving a deviation ``D = t_exp - t_ret``. Deviations are histogrammed with one
bin centered on zero; a return is claimed when the maximum bin exceeds the
background level by more than three standard deviations and that bin is the
central one.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ephemeris import C_M_PER_PS, PS_PER_S, EphemerisTable, expected_return_time, interpolate_range
from .link_budget import LaserParams, infer_mean_photon_number
from .timetags import TimeTagStream

PS_PER_NS = 1000
DEFAULT_WINDOW = 250.0  # ns
DEFAULT_WIDTHS = (3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0, 17.0, 19.0)
THRESHOLD_SIGMA = 3.0


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class Deviation:
    value: int  # ps
    source_detection_epoch: int
    matched_shot_epoch: int


@dataclass(frozen=True, eq=False)
class Deviations:
    """Matched deviations as parallel arrays, ordered by detection epoch."""

    values: np.ndarray
    detection_epochs: np.ndarray
    shot_epochs: np.ndarray

    def __post_init__(self) -> None:
        for name in ("values", "detection_epochs", "shot_epochs"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        for v, d, s in zip(self.values.tolist(), self.detection_epochs.tolist(), self.shot_epochs.tolist()):
            yield Deviation(v, d, s)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Deviations):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n))
                   for n in ("values", "detection_epochs", "shot_epochs"))

    def subset(self, mask) -> "Deviations":
        return Deviations(self.values[mask], self.detection_epochs[mask], self.shot_epochs[mask])

    @classmethod
    def from_values(cls, values_ns) -> "Deviations":
        """Deviations with only values known (ns); epochs are zero."""
        v = np.rint(np.asarray(values_ns, dtype=np.float64) * PS_PER_NS).astype(np.int64)
        return cls(v, np.zeros_like(v), np.zeros_like(v))


def _usable(eph: EphemerisTable, fire: np.ndarray) -> np.ndarray:
    lo, hi = eph.valid_span
    flight_ps = int(math.ceil(float(np.max(eph.ranges)) / C_M_PER_PS)) + 1
    return (fire >= lo) & (fire + flight_ps <= hi)


def compute_deviations(detections: TimeTagStream, shots: TimeTagStream, eph: EphemerisTable,
                       window: float = DEFAULT_WINDOW) -> Deviations:
    """Match every detection to the shot with the nearest expected return.

    Matches with ``|D| > window`` ns are discarded. Equidistant candidates
    resolve to the earlier shot. Shots whose return falls outside the
    ephemeris are ignored.
    """
    if not window > 0:
        raise AnalysisError("window must be positive")
    fire = shots.fire_epochs
    if len(fire) == 0:
        raise AnalysisError("shot stream is empty")
    fire = fire[_usable(eph, fire)]
    det = detections.detection_epochs
    if len(fire) == 0 or len(det) == 0:
        return Deviations(np.empty(0), np.empty(0), np.empty(0))

    # Locate each detection's neighbouring shots through an approximate flight
    # time, then confirm the bracket with exact return times.
    lo, hi = eph.valid_span
    probe = np.clip(det, lo, hi)
    flight = np.rint(2.0 * interpolate_range(eph, probe) / C_M_PER_PS).astype(np.int64)
    k = np.searchsorted(fire, det - flight)
    cand = np.clip(k[:, None] + np.arange(-2, 2)[None, :], 0, len(fire) - 1)
    uniq, inverse = np.unique(cand, return_inverse=True)
    t_exp_u = expected_return_time(eph, fire[uniq])
    t_cand = t_exp_u[inverse.reshape(cand.shape)]
    bracketed = (
        ((t_cand <= det[:, None]).any(axis=1) | (cand[:, 0] == 0))
        & ((t_cand > det[:, None]).any(axis=1) | (cand[:, -1] == len(fire) - 1))
    )
    if not bracketed.all():
        t_exp_all = expected_return_time(eph, fire)
        j = np.searchsorted(t_exp_all, det)
        cand = np.clip(j[:, None] + np.array([-1, 0])[None, :], 0, len(fire) - 1)
        t_cand = t_exp_all[cand]

    dist = np.abs(t_cand - det[:, None])
    # argmin returns the first minimum; candidates are in shot order, so ties go to the earlier shot
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(det))
    values = t_cand[rows, best] - det
    shot_epochs = fire[cand[rows, best]]
    keep = np.abs(values) <= window * PS_PER_NS
    return Deviations(values[keep], det[keep], shot_epochs[keep])


@dataclass(frozen=True, eq=False)
class DeviationHistogram:
    """Counts in ``2 * half_bins + 1`` bins of width ``bin_width`` ns, bin
    ``half_bins`` centered on D = 0. Bins are half-open ``[lo, hi)``."""

    bin_width: float
    counts: np.ndarray
    half_bins: int
    n_outside: int = 0

    @property
    def span(self) -> float:
        """Half-width covered by the bins, ns."""
        return (self.half_bins + 0.5) * self.bin_width

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(len(self.counts)) - self.half_bins) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _width_ps(bin_width: float) -> int:
    if not bin_width > 0:
        raise AnalysisError(f"bin width must be positive, got {bin_width!r}")
    w = int(round(bin_width * PS_PER_NS))
    if w < 1:
        raise AnalysisError("bin width below 1 ps")
    return w


def build_histogram(devs: Deviations, bin_width: float, span: float = DEFAULT_WINDOW) -> DeviationHistogram:
    """Histogram deviations within ``[-span, span]`` ns.

    Uses the largest odd number of whole bins that fits in the span. Values on
    a bin edge go to the bin on the positive-D side.
    """
    w = _width_ps(bin_width)
    half = int(math.floor(span * PS_PER_NS / w - 0.5 + 1e-9))
    if half < 0:
        raise AnalysisError("span narrower than half a bin")
    idx = (2 * devs.values + w) // (2 * w) + half
    inside = (idx >= 0) & (idx <= 2 * half)
    counts = np.bincount(idx[inside], minlength=2 * half + 1).astype(np.int64)
    return DeviationHistogram(float(bin_width), counts, half, int(np.count_nonzero(~inside)))


@dataclass(frozen=True)
class PeakReport:
    peak_bin_center: float  # ns
    peak_count: int
    background_mean: float
    background_sigma: float
    bin_width: float  # ns
    background_sigma_raw: float = field(default=math.nan, compare=False)

    @property
    def significance(self) -> float:
        excess = self.peak_count - self.background_mean
        if self.background_sigma == 0.0:
            return math.inf if excess > 0 else 0.0
        return excess / self.background_sigma

    @property
    def passes_3sigma(self) -> bool:
        return self.significance > THRESHOLD_SIGMA

    @property
    def centered_at_zero(self) -> bool:
        return abs(self.peak_bin_center) <= self.bin_width / 2.0

    @property
    def detected(self) -> bool:
        return self.passes_3sigma and self.centered_at_zero

    def as_dict(self) -> dict:
        return {
            "bin_width_ns": self.bin_width,
            "peak_bin_center_ns": self.peak_bin_center,
            "peak_count": self.peak_count,
            "background_mean": self.background_mean,
            "background_sigma": self.background_sigma,
            "significance": self.significance,
            "passes_3sigma": self.passes_3sigma,
            "centered_at_zero": self.centered_at_zero,
        }


def detect_peak(hist: DeviationHistogram, exclusion_halfwidth_bins: int = 1,
                min_sigma: float = 1.0) -> PeakReport:
    """Locate the maximum bin and measure it against the background bins.

    Background mean and population standard deviation come from every bin
    outside ``+-exclusion_halfwidth_bins`` of the central bin. The standard
    deviation is floored at ``min_sigma`` counts: with sparse backgrounds a
    single stray count would otherwise register as a many-sigma excess.
    ``min_sigma=0`` disables the floor, and an empty background then gives
    infinite significance for any non-empty peak.
    """
    if exclusion_halfwidth_bins < 0:
        raise AnalysisError("exclusion_halfwidth_bins must be non-negative")
    offsets = np.arange(len(hist.counts)) - hist.half_bins
    background = hist.counts[np.abs(offsets) > exclusion_halfwidth_bins]
    if len(background) < 10:
        raise AnalysisError(f"only {len(background)} background bins after exclusion; need 10")
    mean = float(background.mean())
    raw = float(background.std())
    # maximum bin; ties prefer the bin nearest D = 0, then the negative side
    order = np.lexsort((offsets, np.abs(offsets), -hist.counts))
    peak = int(order[0])
    return PeakReport(
        peak_bin_center=float(offsets[peak] * hist.bin_width),
        peak_count=int(hist.counts[peak]),
        background_mean=mean,
        background_sigma=max(raw, float(min_sigma)),
        bin_width=hist.bin_width,
        background_sigma_raw=raw,
    )


@dataclass(frozen=True)
class BinScanResult:
    entries: tuple  # ((bin_width_ns, PeakReport), ...)

    @property
    def significances(self) -> list[tuple[float, float]]:
        return [(w, r.significance) for w, r in self.entries]

    @property
    def persistent(self) -> bool:
        return all(r.passes_3sigma for _, r in self.entries)

    @property
    def persistent_centered(self) -> bool:
        return all(r.detected for _, r in self.entries)

    @property
    def optimal_bin(self) -> float:
        best_w, best_s = None, -math.inf
        for w, r in sorted(self.entries, key=lambda e: e[0]):
            if r.significance > best_s:
                best_w, best_s = w, r.significance
        return best_w


def scan_bin_widths(devs: Deviations, widths: Sequence[float] = DEFAULT_WIDTHS,
                    span: float = DEFAULT_WINDOW, exclusion_halfwidth_bins: int = 1,
                    min_sigma: float = 1.0) -> BinScanResult:
    if not len(widths):
        raise AnalysisError("at least one bin width is required")
    entries = []
    for w in widths:
        hist = build_histogram(devs, w, span)
        entries.append((float(w), detect_peak(hist, exclusion_halfwidth_bins, min_sigma)))
    return BinScanResult(tuple(entries))


def segment_arcs(devs: Deviations, arc_length: float, origin: int = 0,
                 n_arcs: int | None = None) -> list[Deviations]:
    """Split deviations into consecutive half-open arcs of ``arc_length`` seconds
    by detection epoch, starting at ``origin`` ps.

    Without ``n_arcs`` the arcs run up to the last detection.
    """
    if not arc_length > 0:
        raise AnalysisError("arc_length must be positive")
    arc_ps = int(round(arc_length * PS_PER_S))
    if np.any(devs.detection_epochs < origin):
        raise AnalysisError("deviation precedes the arc origin")
    which = (devs.detection_epochs - origin) // arc_ps
    if n_arcs is None:
        n_arcs = int(which.max()) + 1 if len(which) else 0
    elif len(which) and which.max() >= n_arcs:
        raise AnalysisError("deviations beyond the last requested arc")
    return [devs.subset(which == a) for a in range(n_arcs)]


@dataclass(frozen=True)
class SignalEstimate:
    rate: float  # cps
    p_det: float
    mu: float
    below_background: bool = False


def estimate_signal_rate_and_mu(report: PeakReport, arc_duration: float, laser: LaserParams,
                                detector_loss_db: float = -10.0,
                                path_loss_db: float = -11.0) -> SignalEstimate:
    """Signal rate from the peak excess over background, then per-shot
    probability and mean photon number at the receiver."""
    if not arc_duration > 0:
        raise AnalysisError("arc_duration must be positive")
    excess = report.peak_count - report.background_mean
    below = excess < 0
    rate = max(excess, 0.0) / arc_duration
    p_det = rate / laser.repetition_rate
    return SignalEstimate(rate, p_det, infer_mean_photon_number(p_det, detector_loss_db, path_loss_db), below)


# --- exports -------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def histogram_csv(hist: DeviationHistogram) -> str:
    lines = ["bin_center_ns,count"]
    lines += [f"{_fmt(float(c))},{int(n)}" for c, n in zip(hist.bin_centers, hist.counts)]
    return "\n".join(lines) + "\n"


def peak_report_text(report: PeakReport) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in report.as_dict().items())


PEAK_COLUMNS = ("arc", "bin_width_ns", "peak_bin_center_ns", "peak_count", "background_mean",
                "background_sigma", "significance", "passes_3sigma", "centered_at_zero")


def scan_csv(scans: Sequence[BinScanResult]) -> str:
    """One row per (arc, bin width)."""
    buf = io.StringIO()
    buf.write(",".join(PEAK_COLUMNS) + "\n")
    for arc, scan in enumerate(scans):
        for _, rep in scan.entries:
            d = rep.as_dict()
            buf.write(",".join([str(arc)] + [_fmt(d[c]) for c in PEAK_COLUMNS[1:]]) + "\n")
    return buf.getvalue()


def scan_summary_text(scan: BinScanResult) -> str:
    return (f"persistent={_fmt(scan.persistent)}\n"
            f"persistent_centered={_fmt(scan.persistent_centered)}\n"
            f"optimal_bin_ns={_fmt(scan.optimal_bin)}\n")


# --- whole-stream pipeline ---------------------------------------------------------


@dataclass(frozen=True)
class PassAnalysis:
    arc_length: float  # s
    origin: int  # ps, first expected return minus the matching window
    arc_durations: tuple  # s of shots contributing to each arc
    arcs: tuple  # (Deviations, ...)
    scans: tuple  # (BinScanResult, ...)
    headline_bin_width: float
    n_deviations: int

    def headline(self, arc: int) -> PeakReport:
        return dict(self.scans[arc].entries)[self.headline_bin_width]

    @property
    def best_arc(self) -> int:
        """Arc with the most significant headline peak (earliest on ties)."""
        sig = [self.headline(a).significance for a in range(len(self.scans))]
        return int(np.argmax(sig)) if sig else -1

    @property
    def detected(self) -> bool:
        """True when some arc shows a centered peak above 3 sigma at every bin width."""
        return any(s.persistent_centered for s in self.scans)


def analyze_stream(stream: TimeTagStream, eph: EphemerisTable, *, widths: Sequence[float] = DEFAULT_WIDTHS,
                   headline_bin_width: float = 5.0, span: float = DEFAULT_WINDOW,
                   window: float = DEFAULT_WINDOW, arc_length: float = 5.0,
                   exclusion_halfwidth_bins: int = 1, min_sigma: float = 1.0,
                   repetition_rate: float | None = None) -> PassAnalysis:
    """Deviations, arc segmentation and a bin-width scan per arc."""
    widths = [float(w) for w in widths]
    if float(headline_bin_width) not in widths:
        widths.append(float(headline_bin_width))
    fire = stream.fire_epochs
    if len(fire) == 0:
        raise AnalysisError("time-tag stream contains no laser fire tags")
    usable = fire[_usable(eph, fire)]
    if len(usable) == 0:
        raise AnalysisError("no shot lies inside the ephemeris span")
    # earliest possible matched detection: first expected return minus the window
    origin = int(expected_return_time(eph, usable[0])) - int(round(window * PS_PER_NS))
    devs = compute_deviations(stream, stream, eph, window)
    arcs = segment_arcs(devs, arc_length, origin)
    if not arcs:
        arcs = [devs]
    # shots contributing to arc a were fired one round trip before the arc
    arc_ps = int(round(arc_length * PS_PER_S))
    fire_arc = (usable - usable[0]) // arc_ps
    counts = np.bincount(fire_arc, minlength=len(arcs))[: len(arcs)]
    if repetition_rate is None:
        period = np.median(np.diff(usable)) / PS_PER_S if len(usable) > 1 else arc_length
        repetition_rate = 1.0 / period
    durations = tuple(float(c) / repetition_rate for c in counts)
    scans = tuple(scan_bin_widths(a, widths, span, exclusion_halfwidth_bins, min_sigma) for a in arcs)
    return PassAnalysis(float(arc_length), origin, durations, tuple(arcs), scans,
                        float(headline_bin_width), len(devs))
