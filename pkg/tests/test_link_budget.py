import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from slr_qlink.link_budget import (
    REPORT_COLUMNS,
    CatalogError,
    LaserParams,
    LinkBudgetError,
    LinkParameters,
    budget_csv,
    budget_rows,
    budget_table,
    channel_fluence_per_shot,
    db_to_linear,
    downlink_loss,
    dump_catalog,
    expected_detector_rate,
    find_profile,
    infer_mean_photon_number,
    link_budget,
    linear_to_db,
    parse_catalog,
    per_shot_detection_probability,
    photons_leaving_satellite,
    photons_per_pulse,
    total_attenuation_db,
)

unit = st.floats(min_value=1e-3, max_value=1.0)


@st.composite
def link_params(draw):
    laser = LaserParams(
        repetition_rate=draw(st.floats(1.0, 1e6)),
        pulse_energy=draw(st.floats(1e-12, 1e-3)),
        wavelength=draw(st.floats(1e-7, 1e-5)),
        pulse_duration=draw(st.floats(1e-12, 1e-8)),
    )
    return LinkParameters(
        laser=laser,
        detector_efficiency=draw(unit),
        transmit_optics_efficiency=draw(unit),
        transmitter_gain=draw(st.floats(1.0, 1e11)),
        satellite_cross_section=draw(st.floats(1e3, 1e9)),
        slant_range=draw(st.floats(3e5, 4e7)),
        receiver_area=draw(st.floats(0.01, 10.0)),
        receiver_optics_efficiency=draw(unit),
        atmospheric_transmission_one_way=draw(unit),
        cirrus_transmission_one_way=draw(unit),
    )


class TestPhotonsPerPulse:
    def test_table1_pulse(self):
        assert photons_per_pulse(490e-9, 532e-9) == pytest.approx(oracles.photons_per_pulse(490e-9, 532e-9), rel=1e-14)
        assert photons_per_pulse(490e-9, 532e-9) == pytest.approx(1.312e12, rel=1e-3)

    def test_zero_energy(self):
        assert photons_per_pulse(0.0, 532e-9) == 0.0

    def test_photon_flux_matches_published_order(self):
        flux = photons_per_pulse(490e-9, 532e-9) * 17000
        assert flux == pytest.approx(2.3e16, rel=0.04)

    @pytest.mark.parametrize("wavelength", [0.0, -532e-9])
    def test_bad_wavelength(self, wavelength):
        with pytest.raises(LinkBudgetError):
            photons_per_pulse(490e-9, wavelength)


class TestDetectorRate:
    def test_table1_against_db_sum(self, table1):
        assert expected_detector_rate(table1) == pytest.approx(oracles.table1_rate(), rel=1e-12)

    def test_table1_value(self, table1):
        # direct product of the tabulated inputs
        assert expected_detector_rate(table1) == pytest.approx(3.7186, rel=1e-4)

    def test_within_reference_band(self, table1):
        assert 3.4 <= expected_detector_rate(table1) <= 5.8

    def test_opaque_atmosphere(self, table1):
        # T_A must lie in (0, 1]; the limit is approached rather than constructed
        p = dataclasses.replace(table1, atmospheric_transmission_one_way=1e-300)
        assert expected_detector_rate(p) == pytest.approx(0.0, abs=1e-300)

    def test_doubling_range(self, table1):
        p2 = dataclasses.replace(table1, slant_range=2 * table1.slant_range)
        assert expected_detector_rate(p2) == pytest.approx(expected_detector_rate(table1) / 16, rel=1e-12)

    def test_p_det_table1(self, table1):
        assert per_shot_detection_probability(table1) == pytest.approx(2.187e-4, rel=1e-3)

    def test_p_det_from_measured_rate(self):
        assert 5.0 / 17000 == pytest.approx(2.9e-4, rel=0.02)

    def test_rep_rate_cancels(self, table1):
        laser2 = dataclasses.replace(table1.laser, repetition_rate=2 * table1.laser.repetition_rate)
        p2 = dataclasses.replace(table1, laser=laser2)
        assert per_shot_detection_probability(p2) == pytest.approx(per_shot_detection_probability(table1), rel=1e-15)


class TestFluenceAndLoss:
    def test_fluence_table1(self, table1):
        assert channel_fluence_per_shot(table1) == pytest.approx(0.3814, rel=1e-3)

    def test_lageos_fluence_order(self, catalog):
        lageos = find_profile(catalog, "Lageos")
        assert 3e-4 < channel_fluence_per_shot(lageos.link) < 3e-3

    def test_photons_leaving(self, table1):
        assert photons_leaving_satellite(table1) == pytest.approx(1.725e4, rel=2e-3)

    def test_photons_leaving_zero_fov(self, table1):
        assert photons_leaving_satellite(table1, 0.0) == 0.0

    def test_photons_leaving_linear_in_solid_angle(self, table1):
        a = photons_leaving_satellite(table1, 1e-4)
        b = photons_leaving_satellite(table1, 2e-4)
        assert b == pytest.approx(4 * a, rel=1e-12)

    def test_bad_fov(self, table1):
        with pytest.raises(LinkBudgetError):
            photons_leaving_satellite(table1, math.pi / 2)

    def test_published_downlink_ratio(self):
        assert 2.7e-4 / 1.2e5 == pytest.approx(2.2e-9, rel=0.03)

    def test_downlink_loss_is_ratio(self, table1):
        assert downlink_loss(table1) == pytest.approx(
            per_shot_detection_probability(table1) / photons_leaving_satellite(table1), rel=1e-15)

    def test_downlink_loss_undefined(self, table1):
        with pytest.raises(LinkBudgetError):
            downlink_loss(table1, 0.0)


class TestAttenuation:
    def test_five_cps(self, laser):
        assert total_attenuation_db(5.0, laser) == pytest.approx(-156.495, abs=1e-3)
        assert abs(total_attenuation_db(5.0, laser) - (-157)) <= 1

    def test_lossless(self, laser):
        assert total_attenuation_db(laser.repetition_rate * laser.photons_per_pulse, laser) == pytest.approx(0.0, abs=1e-12)

    def test_halving(self, laser):
        shift = total_attenuation_db(2.5, laser) - total_attenuation_db(5.0, laser)
        assert shift == pytest.approx(-10 * math.log10(2), rel=1e-12)

    def test_zero_rate_is_floor(self, laser):
        assert total_attenuation_db(0.0, laser) == -math.inf

    def test_negative_rate(self, laser):
        with pytest.raises(LinkBudgetError):
            total_attenuation_db(-1.0, laser)

    def test_mu(self):
        assert infer_mean_photon_number(3e-4, -10, -11) == pytest.approx(3e-4 * 10**2.1, rel=1e-14)
        assert infer_mean_photon_number(3e-4, -10, -11) == pytest.approx(0.03777, rel=1e-3)

    def test_mu_trivial(self):
        assert infer_mean_photon_number(0.0, -5, -7) == 0.0
        assert infer_mean_photon_number(1e-3, 0.0, 0.0) == 1e-3

    def test_gain_rejected(self):
        with pytest.raises(LinkBudgetError):
            infer_mean_photon_number(1e-3, 3.0, -11)

    def test_db_conversions(self):
        assert db_to_linear(-10) == pytest.approx(0.1, rel=1e-15)
        assert db_to_linear(0) == 1.0
        assert linear_to_db(db_to_linear(-157)) == pytest.approx(-157, abs=1e-9)
        with pytest.raises(LinkBudgetError):
            linear_to_db(0.0)


class TestValidation:
    @pytest.mark.parametrize("field,value", [
        ("detector_efficiency", 0.0),
        ("detector_efficiency", 1.5),
        ("transmitter_gain", 0.0),
        ("slant_range", -1.0),
        ("atmospheric_transmission_one_way", 1.01),
    ])
    def test_link_fields(self, table1, field, value):
        with pytest.raises(LinkBudgetError):
            dataclasses.replace(table1, **{field: value})

    @pytest.mark.parametrize("wavelength", [50e-9, 20e-6])
    def test_wavelength_range(self, wavelength):
        with pytest.raises(LinkBudgetError):
            LaserParams(17000.0, 490e-9, wavelength, 700e-12)


class TestProperties:
    @settings(max_examples=200)
    @given(link_params())
    def test_rate_identity(self, p):
        assert expected_detector_rate(p) == p.laser.repetition_rate * per_shot_detection_probability(p)

    @settings(max_examples=200)
    @given(link_params(), st.floats(0.1, 10.0))
    def test_range_scaling(self, p, k):
        q = dataclasses.replace(p, slant_range=k * p.slant_range)
        assert expected_detector_rate(q) == pytest.approx(expected_detector_rate(p) * k**-4, rel=1e-10)

    @settings(max_examples=100)
    @given(link_params(), st.sampled_from([
        "detector_efficiency", "transmit_optics_efficiency", "transmitter_gain",
        "satellite_cross_section", "receiver_area", "receiver_optics_efficiency",
        "atmospheric_transmission_one_way", "cirrus_transmission_one_way"]),
        st.floats(0.5, 0.99))
    def test_monotone_increasing(self, p, name, shrink):
        q = dataclasses.replace(p, **{name: getattr(p, name) * shrink})
        assert expected_detector_rate(q) < expected_detector_rate(p)

    @settings(max_examples=100)
    @given(link_params(), st.floats(1.01, 3.0))
    def test_monotone_decreasing_in_range(self, p, grow):
        q = dataclasses.replace(p, slant_range=p.slant_range * grow)
        assert expected_detector_rate(q) < expected_detector_rate(p)

    @given(link_params())
    def test_report_non_negative(self, p):
        r = link_budget(p)
        assert r.per_shot_detection_probability >= 0
        assert r.channel_fluence_per_shot >= 0
        assert r.downlink_loss >= 0


class TestCatalog:
    def test_default_order(self, catalog):
        assert [p.name for p in catalog] == ["Ajisai", "Beacon", "Topex", "Lageos"]

    def test_rate_ordering(self, catalog):
        rates = [expected_detector_rate(p.link) for p in catalog]
        assert rates == sorted(rates, reverse=True)
        assert len(set(rates)) == 4

    def test_quantum_regime(self, catalog):
        assert all(channel_fluence_per_shot(p.link) < 1 for p in catalog)

    @pytest.mark.parametrize("name", ["Ajisai", "Beacon", "Topex", "Lageos"])
    def test_fluence_reproduces_reference(self, catalog, name):
        prof = find_profile(catalog, name)
        assert channel_fluence_per_shot(prof.link) == pytest.approx(prof.reference_channel_photons, rel=0.15)

    def test_unknown_key_rejected(self, catalog):
        text = dump_catalog(catalog[:1]).replace("detector_efficiency", "detector_eff")
        with pytest.raises(CatalogError, match="unknown"):
            parse_catalog(text)

    def test_unknown_top_level_key(self, catalog):
        text = dump_catalog(catalog[:1]) + "colour: red\n"
        with pytest.raises(CatalogError):
            parse_catalog(text)

    def test_empty_catalog(self):
        with pytest.raises(CatalogError):
            parse_catalog("")

    def test_round_trip(self, catalog):
        assert parse_catalog(dump_catalog(catalog)) == catalog

    def test_find_profile_lists_names(self, catalog):
        with pytest.raises(KeyError, match="Ajisai, Beacon, Topex, Lageos"):
            find_profile(catalog, "Starlette")

    def test_csv_columns(self, catalog):
        text = budget_csv(budget_rows(catalog))
        lines = text.splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert [l.split(",")[0] for l in lines[1:]] == ["Ajisai", "Beacon", "Topex", "Lageos"]
        assert float(lines[1].split(",")[1]) == expected_detector_rate(catalog[0].link)

    def test_table_two_significant_figures(self, catalog):
        table = budget_table(budget_rows(catalog[:1]))
        assert "3.7" in table and "0.38" in table
