"""Scenario types and the spectral/loss effects of the dispersion strategies.

All types are frozen dataclasses validated on construction; a violated
invariant raises :class:`ValidationError` naming the offending field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union


class ValidationError(ValueError):
    """A scenario value violates one of its invariants."""


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise ValidationError(message)


def pump_wavelength_from_pair(signal_nm: float, idler_nm: float) -> float:
    """Pump wavelength fixed by energy conservation, 1/lp = 1/ls + 1/li."""
    return 1.0 / (1.0 / signal_nm + 1.0 / idler_nm)


@dataclass(frozen=True)
class SourceSpec:
    signal_wavelength_nm: float
    idler_wavelength_nm: float
    signal_fwhm_nm: float
    idler_fwhm_nm: float
    alice_singles_rate_hz: float
    pair_rate_in_fiber_hz: float = 0.0
    mu_coupling: float = 1.0
    pump_wavelength_nm: float | None = None
    pump_coherence_ns: float = 1000.0

    def __post_init__(self) -> None:
        _require(self.signal_wavelength_nm > 0, "source.signal_wavelength_nm must be > 0")
        _require(self.idler_wavelength_nm > 0, "source.idler_wavelength_nm must be > 0")
        _require(self.signal_fwhm_nm > 0, "source.signal_fwhm_nm must be > 0")
        _require(self.idler_fwhm_nm > 0, "source.idler_fwhm_nm must be > 0")
        _require(self.alice_singles_rate_hz >= 0, "source.alice_singles_rate_hz must be >= 0")
        _require(self.pair_rate_in_fiber_hz >= 0, "source.pair_rate_in_fiber_hz must be >= 0")
        _require(0.0 <= self.mu_coupling <= 1.0, "source.mu_coupling must be in [0, 1]")
        _require(self.pump_coherence_ns > 0, "source.pump_coherence_ns must be > 0")
        if self.pump_wavelength_nm is None:
            object.__setattr__(
                self,
                "pump_wavelength_nm",
                pump_wavelength_from_pair(self.signal_wavelength_nm, self.idler_wavelength_nm),
            )
        _require(self.pump_wavelength_nm > 0, "source.pump_wavelength_nm must be > 0")


@dataclass(frozen=True)
class FiberSpan:
    length_km: float
    attenuation_db: float
    dispersion_ps_per_nm_km: float = 17.0
    pmd_coeff_ps_per_sqrt_km: float = 0.1

    def __post_init__(self) -> None:
        _require(self.length_km >= 0, "fiber.length_km must be >= 0")
        _require(self.attenuation_db >= 0, "fiber.attenuation_db must be >= 0")
        _require(self.pmd_coeff_ps_per_sqrt_km >= 0, "fiber.pmd_coeff_ps_per_sqrt_km must be >= 0")


@dataclass(frozen=True)
class Compensation:
    """Negative-dispersion spool placed before Bob."""

    d_comp_ps_per_nm: float
    loss_db: float
    delay_equiv_km: float = 0.0

    variant = "compensation"

    def __post_init__(self) -> None:
        _require(self.d_comp_ps_per_nm >= 0, "strategy.d_comp_ps_per_nm must be >= 0")
        _require(self.loss_db >= 0, "strategy.loss_db must be >= 0")
        _require(self.delay_equiv_km >= 0, "strategy.delay_equiv_km must be >= 0")


@dataclass(frozen=True)
class Filtering:
    """Gaussian bandpass filter on the short-wavelength photon at the source."""

    center_nm: float
    fwhm_nm: float
    peak_transmission: float = 1.0
    center_offset_penalty: float = 1.0

    variant = "filtering"

    def __post_init__(self) -> None:
        _require(self.center_nm > 0, "strategy.center_nm must be > 0")
        _require(self.fwhm_nm > 0, "strategy.fwhm_nm must be > 0")
        _require(0.0 < self.peak_transmission <= 1.0, "strategy.peak_transmission must be in (0, 1]")
        _require(
            0.0 < self.center_offset_penalty <= 1.0,
            "strategy.center_offset_penalty must be in (0, 1]",
        )


DispersionStrategy = Union[Compensation, Filtering, None]

# (phi_A, phi_B) per basis; matched bases sum to 0, crossed bases to +-pi/2.
DEFAULT_BASIS_PHASES: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (math.pi / 2, -math.pi / 2),
)


@dataclass(frozen=True)
class InterferometerSpec:
    delta_t_ns: float
    visibility: float
    basis_phases: tuple[tuple[float, float], ...] = DEFAULT_BASIS_PHASES

    def __post_init__(self) -> None:
        _require(self.delta_t_ns > 0, "interferometer.delta_t_ns must be > 0")
        _require(0.0 <= self.visibility <= 1.0, "interferometer.visibility must be in [0, 1]")
        phases = tuple((float(a), float(b)) for a, b in self.basis_phases)
        _require(len(phases) == 2, "interferometer.basis_phases must define bases 0 and 1")
        object.__setattr__(self, "basis_phases", phases)


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float
    gate_width_ns: float
    dark_prob_per_gate_total: float = 0.0
    jitter_fwhm_ns: float = 0.0
    bob_loss_db: float = 0.0

    def __post_init__(self) -> None:
        _require(0.0 <= self.efficiency <= 1.0, "detector.efficiency must be in [0, 1]")
        _require(self.gate_width_ns > 0, "detector.gate_width_ns must be > 0")
        _require(self.dark_prob_per_gate_total >= 0, "detector.dark_prob_per_gate_total must be >= 0")
        _require(self.jitter_fwhm_ns >= 0, "detector.jitter_fwhm_ns must be >= 0")
        _require(self.bob_loss_db >= 0, "detector.bob_loss_db must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete link description.

    ``peak_fwhm_ns`` optionally pins the coincidence-peak width to a value
    fitted on a measured histogram; when unset the width comes from the
    quadrature sum of jitter, coherence time and residual dispersion.
    """

    source: SourceSpec
    fiber: FiberSpan
    interferometer: InterferometerSpec
    detector: DetectorSpec
    strategy: DispersionStrategy = None
    q_sift: float = 0.5
    bases_used: int = 2
    peak_fwhm_ns: float | None = None

    def __post_init__(self) -> None:
        _require(0.0 < self.q_sift <= 1.0, "q_sift must be in (0, 1]")
        _require(self.bases_used in (1, 2), "bases_used must be 1 or 2")
        _require(
            self.strategy is None or isinstance(self.strategy, (Compensation, Filtering)),
            "strategy must be None, Compensation or Filtering",
        )
        _require(self.peak_fwhm_ns is None or self.peak_fwhm_ns > 0, "peak_fwhm_ns must be > 0")


class EffectiveSpectrum(NamedTuple):
    signal_fwhm_nm: float
    idler_fwhm_nm: float
    singles_scale: float
    idler_center_nm: float


class ChannelBudget(NamedTuple):
    total_loss_db: float
    net_dispersion_ps_per_nm: float
    idler_fwhm_nm: float


def effective_spectrum(source: SourceSpec, strategy: DispersionStrategy) -> EffectiveSpectrum:
    """Photon bandwidths and Alice singles scaling after the strategy acts.

    A filter multiplies the Gaussian signal spectrum by a Gaussian
    transmission, so the output FWHM is ``ws*wf/sqrt(ws^2+wf^2)`` and the
    transmitted fraction ``wf/sqrt(ws^2+wf^2)``. The twin photon's width
    follows from energy conservation around the filter-selected center.
    """
    if not isinstance(strategy, Filtering):
        return EffectiveSpectrum(
            source.signal_fwhm_nm, source.idler_fwhm_nm, 1.0, source.idler_wavelength_nm
        )
    ws, wf = source.signal_fwhm_nm, strategy.fwhm_nm
    norm = math.hypot(ws, wf)
    signal = ws * wf / norm
    # idler center paired with the filter center under the fixed pump
    pump = source.pump_wavelength_nm
    lam_s = strategy.center_nm
    lam_i = 1.0 / (1.0 / pump - 1.0 / lam_s)
    idler = signal * (lam_i / lam_s) ** 2
    scale = strategy.peak_transmission * strategy.center_offset_penalty * wf / norm
    return EffectiveSpectrum(signal, idler, scale, lam_i)


def channel_budget(scenario: ScenarioConfig) -> ChannelBudget:
    """Quantum-channel loss, residual dispersion and the photon width it acts on."""
    fiber, strategy = scenario.fiber, scenario.strategy
    accumulated = fiber.length_km * fiber.dispersion_ps_per_nm_km
    loss = fiber.attenuation_db
    if isinstance(strategy, Compensation):
        loss += strategy.loss_db
        dispersion = abs(accumulated - strategy.d_comp_ps_per_nm)
    else:
        dispersion = abs(accumulated)
    spectrum = effective_spectrum(scenario.source, strategy)
    return ChannelBudget(loss, dispersion, spectrum.idler_fwhm_nm)


def strategy_loss_db(strategy: DispersionStrategy) -> float:
    return strategy.loss_db if isinstance(strategy, Compensation) else 0.0


def alice_rate_hz(scenario: ScenarioConfig) -> float:
    """Alice's click rate after any source-side filtering."""
    return scenario.source.alice_singles_rate_hz * effective_spectrum(
        scenario.source, scenario.strategy
    ).singles_scale


def transmittance(*losses_db: float) -> float:
    return 10.0 ** (-sum(losses_db) / 10.0)


def bob_transmittance(scenario: ScenarioConfig) -> float:
    """Linear transmission from fiber input to Bob's detectors (excluding efficiency)."""
    return transmittance(
        scenario.fiber.attenuation_db,
        scenario.detector.bob_loss_db,
        strategy_loss_db(scenario.strategy),
    )
