import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etqkd.config import (
    PRESETS,
    ConfigParseError,
    dump_scenario,
    load_scenario,
    parameter_hash,
    parse_scenario,
    preset_text,
)
from etqkd.model import (
    Compensation,
    FiberSpan,
    Filtering,
    SourceSpec,
    ValidationError,
    alice_rate_hz,
    channel_budget,
    effective_spectrum,
    transmittance,
)


def test_presets_load(compensation, filtering, unmanaged):
    assert isinstance(compensation.strategy, Compensation)
    assert isinstance(filtering.strategy, Filtering)
    assert unmanaged.strategy is None
    assert alice_rate_hz(filtering) == pytest.approx(36000.0, rel=1e-6)


def test_pump_wavelength_derived():
    src = SourceSpec(810.0, 1550.0, 2.0, 6.9, 1e5)
    assert src.pump_wavelength_nm == pytest.approx(1 / (1 / 810 + 1 / 1550))


def test_filter_narrows_both_photons(filtering):
    spectrum = effective_spectrum(filtering.source, filtering.strategy)
    assert spectrum.signal_fwhm_nm == pytest.approx(2.0 / math.sqrt(2.0))
    ratio = (spectrum.idler_center_nm / 814.0) ** 2
    assert spectrum.idler_fwhm_nm == pytest.approx(spectrum.signal_fwhm_nm * ratio)
    assert spectrum.singles_scale == pytest.approx(1 / 3, rel=1e-5)


def test_no_strategy_keeps_spectrum(unmanaged):
    spectrum = effective_spectrum(unmanaged.source, None)
    assert (spectrum.signal_fwhm_nm, spectrum.idler_fwhm_nm, spectrum.singles_scale) == (2.0, 6.9, 1.0)


def test_channel_budget(compensation, unmanaged):
    cb = channel_budget(compensation)
    assert cb.total_loss_db == pytest.approx(8.3 + 2.9)
    assert cb.net_dispersion_ps_per_nm == pytest.approx(abs(31 * 17 - 506))
    assert channel_budget(unmanaged).net_dispersion_ps_per_nm == pytest.approx(527.0)


def test_transmittance_db():
    assert transmittance(3.0, 7.0) == pytest.approx(0.1)
    assert transmittance() == 1.0


@pytest.mark.parametrize(
    "make",
    [
        lambda: SourceSpec(810.0, 1550.0, -1.0, 6.9, 1e5),
        lambda: FiberSpan(-1.0, 3.0),
        lambda: Filtering(814.0, 0.0),
        lambda: Compensation(500.0, -1.0),
    ],
)
def test_invalid_values_rejected(make):
    with pytest.raises(ValidationError):
        make()


def test_round_trip_presets():
    for name in PRESETS:
        sc = load_scenario(name)
        assert parse_scenario(dump_scenario(sc)) == sc
        assert parameter_hash(parse_scenario(dump_scenario(sc))) == parameter_hash(sc)


def test_hash_changes_with_parameters(compensation):
    other = dataclasses.replace(compensation, q_sift=0.6)
    assert parameter_hash(other) != parameter_hash(compensation)


def test_unknown_key_reports_line():
    text = preset_text("compensation") + "\n[detector]\nbogus = 1\n"
    with pytest.raises((ConfigParseError, ValidationError)):
        parse_scenario(text)


def test_syntax_error_has_line_number():
    text = "[source]\nsignal_wavelength_nm 810\n"
    with pytest.raises(ConfigParseError) as err:
        parse_scenario(text)
    assert err.value.lineno == 2


def test_missing_fields_listed():
    with pytest.raises(ValidationError, match="missing required field"):
        parse_scenario("[scenario]\nq_sift = 0.5\n")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/does/not/exist.ini")


finite = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    length=finite,
    att=finite,
    vis=st.floats(0.0, 1.0),
    q=st.floats(0.01, 1.0),
    width=finite,
    comp=st.one_of(st.none(), st.tuples(finite, finite)),
)
def test_round_trip_random(compensation, length, att, vis, q, width, comp):
    sc = dataclasses.replace(
        compensation,
        fiber=dataclasses.replace(compensation.fiber, length_km=length, attenuation_db=att),
        interferometer=dataclasses.replace(compensation.interferometer, visibility=vis),
        detector=dataclasses.replace(compensation.detector, gate_width_ns=width),
        strategy=None if comp is None else Compensation(*comp),
        q_sift=q,
    )
    assert parse_scenario(dump_scenario(sc)) == sc
