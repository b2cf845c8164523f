"""Retroreflector link budget for a ground-to-satellite-to-ground optical path.

The radar link equation gives the expected detector count rate for a laser
station illuminating a cube-corner array:

    DCR = rep_rate * eta_d * N_p * eta_t * G_t * sigma * (1 / (4 pi R^2))^2
          * A_t * eta_r * T_A^2 * T_C^2

where ``N_p`` is the number of photons in one laser pulse. ``N_p`` is derived
from pulse energy and wavelength; the repetition rate enters exactly once.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import yaml

PLANCK = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299_792_458.0  # m/s

ARCSEC = math.pi / (180.0 * 3600.0)
DEFAULT_FOV = 30.0 * ARCSEC  # full angle, radians

REPORT_COLUMNS = ("name", "rate_cps", "p_det", "fluence_per_shot", "downlink_loss", "attenuation_db")


class LinkBudgetError(ValueError):
    """Invalid link-budget input (domain error)."""


class CatalogError(LinkBudgetError):
    """Malformed satellite catalog."""


def _check_unit_interval(name: str, value: float) -> None:
    if not (0.0 < value <= 1.0):
        raise LinkBudgetError(f"{name} must lie in (0, 1], got {value!r}")


def _check_positive(name: str, value: float) -> None:
    if not value > 0.0:
        raise LinkBudgetError(f"{name} must be strictly positive, got {value!r}")


@dataclass(frozen=True)
class LaserParams:
    repetition_rate: float  # Hz
    pulse_energy: float  # J
    wavelength: float  # m
    pulse_duration: float  # s

    def __post_init__(self) -> None:
        for f in fields(self):
            _check_positive(f.name, getattr(self, f.name))
        if not (100e-9 <= self.wavelength <= 10e-6):
            raise LinkBudgetError(f"wavelength {self.wavelength!r} m outside [100 nm, 10 um]")

    @property
    def photons_per_pulse(self) -> float:
        return photons_per_pulse(self.pulse_energy, self.wavelength)


@dataclass(frozen=True)
class LinkParameters:
    """Every input of the link equation except the per-pulse photon number."""

    laser: LaserParams
    detector_efficiency: float
    transmit_optics_efficiency: float
    transmitter_gain: float
    satellite_cross_section: float  # m^2
    slant_range: float  # m
    receiver_area: float  # m^2
    receiver_optics_efficiency: float
    atmospheric_transmission_one_way: float
    cirrus_transmission_one_way: float = 1.0

    def __post_init__(self) -> None:
        for name in (
            "detector_efficiency",
            "transmit_optics_efficiency",
            "receiver_optics_efficiency",
            "atmospheric_transmission_one_way",
            "cirrus_transmission_one_way",
        ):
            _check_unit_interval(name, getattr(self, name))
        for name in ("transmitter_gain", "satellite_cross_section", "slant_range", "receiver_area"):
            _check_positive(name, getattr(self, name))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LinkParameters":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise CatalogError(f"unknown link parameter keys: {sorted(unknown)}")
        laser = data.pop("laser", None)
        if not isinstance(laser, dict):
            raise CatalogError("link parameters need a 'laser' mapping")
        laser_known = {f.name for f in fields(LaserParams)}
        bad = set(laser) - laser_known
        if bad:
            raise CatalogError(f"unknown laser keys: {sorted(bad)}")
        missing = laser_known - set(laser)
        if missing:
            raise CatalogError(f"missing laser keys: {sorted(missing)}")
        try:
            return cls(laser=LaserParams(**{k: float(v) for k, v in laser.items()}),
                       **{k: float(v) for k, v in data.items()})
        except TypeError as exc:
            raise CatalogError(str(exc)) from None


@dataclass(frozen=True)
class SatelliteProfile:
    name: str
    perigee_height: float  # m
    link: LinkParameters
    reference_expected_rate: float | None = None  # cps, published cross-check
    reference_channel_photons: float | None = None
    reference_downlink_loss: float | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise LinkBudgetError("satellite name must be non-empty")
        _check_positive("perigee_height", self.perigee_height)


@dataclass(frozen=True)
class LinkBudgetReport:
    photons_per_pulse: float
    expected_detector_rate: float
    per_shot_detection_probability: float
    channel_fluence_per_shot: float
    downlink_loss: float
    total_attenuation_db: float


def photons_per_pulse(energy: float, wavelength: float) -> float:
    """Photon count in a pulse of ``energy`` joules at ``wavelength`` meters."""
    if not wavelength > 0.0:
        raise LinkBudgetError(f"wavelength must be positive, got {wavelength!r}")
    if energy < 0.0:
        raise LinkBudgetError(f"energy must be non-negative, got {energy!r}")
    return energy * wavelength / (PLANCK * SPEED_OF_LIGHT)


def _spreading(p: LinkParameters) -> float:
    return 1.0 / (4.0 * math.pi * p.slant_range**2)


def expected_detector_rate(p: LinkParameters) -> float:
    """Expected detector count rate (counts/s) from the radar link equation."""
    return p.laser.repetition_rate * _detections_per_pulse(p)


def _detections_per_pulse(p: LinkParameters) -> float:
    return (
        p.detector_efficiency
        * p.laser.photons_per_pulse
        * p.transmit_optics_efficiency
        * p.transmitter_gain
        * p.satellite_cross_section
        * _spreading(p) ** 2
        * p.receiver_area
        * p.receiver_optics_efficiency
        * p.atmospheric_transmission_one_way**2
        * p.cirrus_transmission_one_way**2
    )


def per_shot_detection_probability(p: LinkParameters) -> float:
    return expected_detector_rate(p) / p.laser.repetition_rate


def channel_fluence_per_shot(p: LinkParameters) -> float:
    """Photons per m^2 arriving at the station per shot.

    Includes the uplink atmosphere but not the downlink atmosphere, receiver
    optics or detector; this is the "photons in the channel" figure.
    """
    return (
        p.laser.photons_per_pulse
        * p.transmit_optics_efficiency
        * p.transmitter_gain
        * p.atmospheric_transmission_one_way
        * p.cirrus_transmission_one_way
        * p.satellite_cross_section
        * _spreading(p) ** 2
    )


def photons_leaving_satellite(p: LinkParameters, fov_full_angle: float = DEFAULT_FOV) -> float:
    """Photons per shot re-emitted by the satellite into the receiver field of view."""
    if not (0.0 <= fov_full_angle < math.pi / 2):
        raise LinkBudgetError(f"fov_full_angle must lie in [0, pi/2), got {fov_full_angle!r}")
    uplink_fluence = (
        p.laser.photons_per_pulse
        * p.transmit_optics_efficiency
        * p.transmitter_gain
        * p.atmospheric_transmission_one_way
        * p.cirrus_transmission_one_way
        * _spreading(p)
    )
    solid_angle = math.pi * (fov_full_angle / 2.0) ** 2
    return uplink_fluence * p.satellite_cross_section * solid_angle / (4.0 * math.pi)


def downlink_loss(p: LinkParameters, fov_full_angle: float = DEFAULT_FOV) -> float:
    """Fraction of photons leaving the satellite that end in a detection."""
    p_det = per_shot_detection_probability(p)
    leaving = photons_leaving_satellite(p, fov_full_angle)
    if leaving == 0.0:
        if p_det == 0.0:
            return 0.0
        raise LinkBudgetError("downlink loss undefined: no photons leave the satellite")
    return p_det / leaving


def total_attenuation_db(detected_rate: float, laser: LaserParams) -> float:
    """Attenuation from emitted photon flux to detected rate, in dB (<= 0).

    A zero detected rate returns ``-inf``, meaning below any measurable floor.
    """
    if detected_rate < 0.0:
        raise LinkBudgetError(f"detected rate must be non-negative, got {detected_rate!r}")
    if detected_rate == 0.0:
        return -math.inf
    return linear_to_db(detected_rate / (laser.repetition_rate * laser.photons_per_pulse))


def infer_mean_photon_number(p_det: float, detector_loss_db: float, path_loss_db: float) -> float:
    """Mean photon number per pulse at the receiver aperture given a per-shot
    detection probability and the (non-positive) detector and path losses."""
    if not (0.0 <= p_det <= 1.0):
        raise LinkBudgetError(f"p_det must lie in [0, 1], got {p_det!r}")
    if detector_loss_db > 0.0 or path_loss_db > 0.0:
        raise LinkBudgetError("losses must be given as non-positive dB values")
    return p_det * db_to_linear(-(detector_loss_db + path_loss_db))


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def linear_to_db(x: float) -> float:
    if not x > 0.0:
        raise LinkBudgetError(f"linear value must be positive, got {x!r}")
    return 10.0 * math.log10(x)


def link_budget(p: LinkParameters, fov_full_angle: float = DEFAULT_FOV) -> LinkBudgetReport:
    rate = expected_detector_rate(p)
    return LinkBudgetReport(
        photons_per_pulse=p.laser.photons_per_pulse,
        expected_detector_rate=rate,
        per_shot_detection_probability=per_shot_detection_probability(p),
        channel_fluence_per_shot=channel_fluence_per_shot(p),
        downlink_loss=downlink_loss(p, fov_full_angle),
        total_attenuation_db=total_attenuation_db(rate, p.laser),
    )


# --- satellite catalog -------------------------------------------------------

_PROFILE_KEYS = {f.name for f in fields(SatelliteProfile)}


def _profile_from_doc(doc: object, index: int) -> SatelliteProfile:
    if not isinstance(doc, dict):
        raise CatalogError(f"catalog document {index} is not a mapping")
    unknown = set(doc) - _PROFILE_KEYS
    if unknown:
        raise CatalogError(f"catalog document {index}: unknown keys {sorted(unknown)}")
    for key in ("name", "perigee_height", "link"):
        if key not in doc:
            raise CatalogError(f"catalog document {index}: missing key {key!r}")
    refs = {k: (None if doc.get(k) is None else float(doc[k]))
            for k in ("reference_expected_rate", "reference_channel_photons", "reference_downlink_loss")}
    try:
        return SatelliteProfile(
            name=str(doc["name"]),
            perigee_height=float(doc["perigee_height"]),
            link=LinkParameters.from_dict(doc["link"]),
            **refs,
        )
    except LinkBudgetError as exc:
        raise CatalogError(f"catalog document {index}: {exc}") from None


def parse_catalog(text: str) -> list[SatelliteProfile]:
    """Parse a multi-document YAML catalog, one satellite per document."""
    try:
        docs = [d for d in yaml.safe_load_all(text) if d is not None]
    except yaml.YAMLError as exc:
        raise CatalogError(f"catalog is not valid YAML: {exc}") from None
    if not docs:
        raise CatalogError("catalog contains no satellite profiles")
    profiles = [_profile_from_doc(d, i) for i, d in enumerate(docs)]
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise CatalogError(f"duplicate satellite names in catalog: {names}")
    return profiles


def load_catalog(path: str | Path | None = None) -> list[SatelliteProfile]:
    """Load a catalog file; ``None`` loads the bundled default catalog."""
    if path is None:
        text = resources.files("slr_qlink").joinpath("data/satellites.yaml").read_text()
    else:
        text = Path(path).read_text()
    return parse_catalog(text)


def dump_catalog(profiles: Iterable[SatelliteProfile]) -> str:
    return yaml.safe_dump_all([asdict(p) for p in profiles], sort_keys=False)


def find_profile(profiles: Sequence[SatelliteProfile], name: str) -> SatelliteProfile:
    for p in profiles:
        if p.name.lower() == name.lower():
            return p
    available = ", ".join(p.name for p in profiles)
    raise KeyError(f"unknown satellite {name!r}; available: {available}")


def budget_rows(profiles: Iterable[SatelliteProfile], fov_full_angle: float = DEFAULT_FOV) -> list[dict]:
    rows = []
    for prof in profiles:
        r = link_budget(prof.link, fov_full_angle)
        rows.append({
            "name": prof.name,
            "rate_cps": r.expected_detector_rate,
            "p_det": r.per_shot_detection_probability,
            "fluence_per_shot": r.channel_fluence_per_shot,
            "downlink_loss": r.downlink_loss,
            "attenuation_db": r.total_attenuation_db,
        })
    return rows


def budget_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        w.writerow([row["name"]] + [repr(float(row[c])) for c in REPORT_COLUMNS[1:]])
    return buf.getvalue()


def budget_table(rows: Iterable[dict]) -> str:
    """Human-readable table, two significant figures like the published tables."""
    lines = [f"{'satellite':<10} {'rate[cps]':>10} {'p_det':>10} {'fluence':>10} {'dl_loss':>10} {'att[dB]':>8}"]
    for row in rows:
        lines.append(
            f"{row['name']:<10} {row['rate_cps']:>10.2g} {row['p_det']:>10.2g} "
            f"{row['fluence_per_shot']:>10.2g} {row['downlink_loss']:>10.2g} {row['attenuation_db']:>8.1f}"
        )
    return "\n".join(lines) + "\n"
