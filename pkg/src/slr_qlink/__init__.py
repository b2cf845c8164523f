"""Photon-counting link budget, pass simulation and time-tag analysis for
satellite laser ranging used as a quantum-channel testbed."""
from .analysis import (
    AnalysisError,
    BinScanResult,
    Deviations,
    DeviationHistogram,
    PassAnalysis,
    PeakReport,
    SignalEstimate,
    analyze_stream,
    build_histogram,
    compute_deviations,
    detect_peak,
    estimate_signal_rate_and_mu,
    scan_bin_widths,
    segment_arcs,
)
from .ephemeris import (
    EphemerisError,
    EphemerisTable,
    OutOfRangeError,
    PerturbationModel,
    SyntheticOrbit,
    apply_perturbation,
    expected_return_time,
    interpolate_range,
    read_ephemeris,
    synthesize_pass,
    write_ephemeris,
)
from .link_budget import (
    LaserParams,
    LinkBudgetError,
    LinkParameters,
    SatelliteProfile,
    downlink_loss,
    expected_detector_rate,
    infer_mean_photon_number,
    link_budget,
    load_catalog,
    per_shot_detection_probability,
    total_attenuation_db,
)
from .timetag_sim import (
    BackgroundModel,
    GateConfig,
    JitterModel,
    PassSimConfig,
    SimulationResult,
    simulate_pass,
)
from .timetags import Channel, TimeTagStream, read_timetags, write_timetags

__version__ = "0.1.0"
