"""QBER budget, sifted-key-rate chain and spectral-width design limits."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

from .model import ScenarioConfig, alice_rate_hz, strategy_loss_db, transmittance
from .temporal import (
    PeakModel,
    TimingBudget,
    coherence_time_fwhm,
    dispersion_qber,
    eta_g,
    peak_model,
    total_spread,
)

SECURITY_THRESHOLD = 0.11
SEARCH_UPPER_NM = 100.0
DOP_MODEL = "gaussian-surrogate: DOP = exp(-0.5 * (pmd*sqrt(L) / tau_c)^2), tau_c = coherence-time FWHM"


@dataclass(frozen=True)
class QberBudget:
    optical: float
    accidental: float
    detector: float
    dispersion: float
    total: float = field(init=False)

    def __post_init__(self) -> None:
        terms = (self.optical, self.accidental, self.detector, self.dispersion)
        if min(terms) < 0:
            raise ValueError("QBER terms must be >= 0")
        object.__setattr__(self, "total", sum(terms))


@dataclass(frozen=True)
class RateChain:
    """Factors from Alice's singles to the sifted key rate; losses in dB."""

    singles_rate_hz: float
    mu: float
    t_l_db: float
    t_b_db: float
    t_c_db: float
    eta_d: float
    eta_g: float
    q_s: float

    @property
    def sifted_rate_hz(self) -> float:
        return sifted_rate(
            self.singles_rate_hz, self.mu, self.t_l_db, self.t_b_db, self.t_c_db,
            self.eta_d, self.eta_g, self.q_s,
        )


class WidthLimit(NamedTuple):
    fwhm_nm: float
    unconstrained: bool


class ComparisonPoint(NamedTuple):
    length_km: float
    max_fwhm_et_nm: float
    max_fwhm_pol_nm: float


class Sweep(NamedTuple):
    points: list[ComparisonPoint]
    crossover_km: float | None


def optical_qber(visibility: float) -> float:
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must be in [0, 1]")
    return (1.0 - visibility) / 2.0


def sifted_rate(
    singles_rate_hz: float,
    mu: float,
    t_l_db: float,
    t_b_db: float,
    t_c_db: float,
    eta_d: float,
    eta_g: float,
    q_s: float,
) -> float:
    return singles_rate_hz * mu * transmittance(t_l_db, t_b_db, t_c_db) * eta_d * eta_g * q_s


def signal_prob_per_gate(chain: RateChain) -> float:
    """Probability that a gate holds a countable correlated photon (before sifting)."""
    return chain.mu * transmittance(chain.t_l_db, chain.t_b_db, chain.t_c_db) * chain.eta_d * chain.eta_g


def detector_qber(dark_prob_per_gate_total: float, signal_prob: float, q_s: float) -> float:
    # dark clicks survive sifting, signal is thinned by q_s
    denominator = signal_prob * q_s
    if denominator == 0:
        raise ZeroDivisionError("signal probability times q_s is zero")
    return 0.5 * dark_prob_per_gate_total / denominator


def accidental_qber(
    pair_rate_in_fiber_hz: float,
    gate_width_ns: float,
    t_l_db: float,
    t_b_db: float,
    t_c_db: float,
    eta_d: float,
    signal_prob: float,
) -> float:
    if signal_prob == 0:
        raise ZeroDivisionError("signal probability is zero")
    p_uncorrelated = (
        pair_rate_in_fiber_hz * gate_width_ns * 1e-9 * transmittance(t_l_db, t_b_db, t_c_db) * eta_d
    )
    return 0.5 * p_uncorrelated / signal_prob


def rate_chain(scenario: ScenarioConfig, peaks: PeakModel | None = None) -> RateChain:
    if peaks is None:
        peaks = peak_model(scenario)
    det = scenario.detector
    return RateChain(
        singles_rate_hz=alice_rate_hz(scenario),
        mu=scenario.source.mu_coupling,
        t_l_db=scenario.fiber.attenuation_db,
        t_b_db=det.bob_loss_db,
        t_c_db=strategy_loss_db(scenario.strategy),
        eta_d=det.efficiency,
        eta_g=eta_g(peaks, det.gate_width_ns),
        q_s=scenario.q_sift,
    )


def qber_budget(scenario: ScenarioConfig, peaks: PeakModel | None = None) -> QberBudget:
    if peaks is None:
        peaks = peak_model(scenario)
    chain = rate_chain(scenario, peaks)
    det = scenario.detector
    signal = signal_prob_per_gate(chain)
    return QberBudget(
        optical=optical_qber(scenario.interferometer.visibility),
        accidental=accidental_qber(
            scenario.source.pair_rate_in_fiber_hz, det.gate_width_ns,
            chain.t_l_db, chain.t_b_db, chain.t_c_db, chain.eta_d, signal,
        ),
        detector=detector_qber(det.dark_prob_per_gate_total, signal, chain.q_s),
        dispersion=dispersion_qber(peaks, det.gate_width_ns),
    )


def security_check(total_qber: float) -> bool:
    """True when the QBER is strictly below the 11 % threshold."""
    if not 0.0 <= total_qber <= 1.0:
        raise ValueError("QBER must be in [0, 1]")
    return total_qber < SECURITY_THRESHOLD


def _largest_feasible(
    qber: Callable[[float], float],
    target: float,
    upper: float = SEARCH_UPPER_NM,
    xtol: float = 1e-3,
    qtol: float = 1e-6,
) -> WidthLimit:
    """Largest width with qber(width) <= target, assuming qber is nondecreasing.

    Bisection stops once the bracket is narrower than ``xtol`` nm and the
    QBER across it differs by less than ``qtol``.
    """
    q_hi = qber(upper)
    if q_hi <= target:
        return WidthLimit(upper, True)
    lo, hi = 0.0, upper
    q_lo = qber(lo)
    for _ in range(200):
        if hi - lo <= xtol and q_hi - q_lo <= qtol:
            break
        mid = 0.5 * (lo + hi)
        q_mid = qber(mid)
        if q_mid <= target:
            lo, q_lo = mid, q_mid
        else:
            hi, q_hi = mid, q_mid
    return WidthLimit(lo, False)


def _check_target(target_qber: float) -> None:
    if not 0.0 < target_qber < 0.5:
        raise ValueError("target_qber must be in (0, 0.5)")


def et_qber(
    fwhm_nm: float, length_km: float, d_ps_nm_km: float, delta_t_ns: float,
    window_ns: float, jitter_fwhm_ns: float,
) -> float:
    """Dispersion QBER of the energy-time link for a given photon bandwidth."""
    spread = total_spread(TimingBudget(jitter_fwhm_ns, 0.0, d_ps_nm_km * fwhm_nm * length_km * 1e-3))
    return dispersion_qber(PeakModel(delta_t_ns, spread), window_ns)


def max_spectral_width_et(
    length_km: float,
    d_ps_nm_km: float,
    delta_t_ns: float,
    window_ns: float,
    jitter_fwhm_ns: float,
    target_qber: float,
) -> WidthLimit:
    _check_target(target_qber)
    if length_km < 0:
        raise ValueError("length_km must be >= 0")
    return _largest_feasible(
        lambda w: et_qber(w, length_km, d_ps_nm_km, delta_t_ns, window_ns, jitter_fwhm_ns),
        target_qber,
    )


def dop_pmd(wavelength_nm: float, fwhm_nm: float, length_km: float, pmd_coeff: float) -> float:
    """Mean degree of polarization after PMD, Gaussian surrogate (see DOP_MODEL)."""
    if length_km == 0 or pmd_coeff == 0:
        return 1.0
    dgd_ns = pmd_coeff * math.sqrt(length_km) * 1e-3
    tau_c = coherence_time_fwhm(wavelength_nm, fwhm_nm)
    return math.exp(-0.5 * (dgd_ns / tau_c) ** 2)


def pol_qber(fwhm_nm: float, length_km: float, pmd_coeff: float, wavelength_nm: float = 1550.0) -> float:
    if fwhm_nm == 0:
        return 0.0
    return 0.5 * (1.0 - dop_pmd(wavelength_nm, fwhm_nm, length_km, pmd_coeff))


def max_spectral_width_pol(
    length_km: float, pmd_coeff: float, target_qber: float, wavelength_nm: float = 1550.0
) -> WidthLimit:
    _check_target(target_qber)
    if length_km < 0:
        raise ValueError("length_km must be >= 0")
    return _largest_feasible(
        lambda w: pol_qber(w, length_km, pmd_coeff, wavelength_nm), target_qber
    )


@dataclass(frozen=True)
class SweepParams:
    d_ps_nm_km: float = 17.0
    delta_t_ns: float = 3.3
    window_ns: float = 1.1
    jitter_fwhm_ns: float = 0.7
    pmd_coeff: float = 0.1
    target_qber: float = 0.01
    wavelength_nm: float = 1550.0

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig, target_qber: float = 0.01) -> "SweepParams":
        return cls(
            d_ps_nm_km=scenario.fiber.dispersion_ps_per_nm_km,
            delta_t_ns=scenario.interferometer.delta_t_ns,
            window_ns=scenario.detector.gate_width_ns,
            jitter_fwhm_ns=scenario.detector.jitter_fwhm_ns,
            pmd_coeff=scenario.fiber.pmd_coeff_ps_per_sqrt_km,
            target_qber=target_qber,
            wavelength_nm=scenario.source.idler_wavelength_nm,
        )


def _point(length_km: float, p: SweepParams) -> ComparisonPoint:
    et = max_spectral_width_et(
        length_km, p.d_ps_nm_km, p.delta_t_ns, p.window_ns, p.jitter_fwhm_ns, p.target_qber
    )
    pol = max_spectral_width_pol(length_km, p.pmd_coeff, p.target_qber, p.wavelength_nm)
    return ComparisonPoint(length_km, et.fwhm_nm, pol.fwhm_nm)


def comparison_sweep(
    lengths: Sequence[float], params: SweepParams = SweepParams(), workers: int = 1
) -> Sweep:
    lengths = [float(x) for x in lengths]
    if not lengths:
        raise ValueError("lengths must be nonempty")
    if any(b <= a for a, b in zip(lengths, lengths[1:])) or lengths[0] <= 0:
        raise ValueError("lengths must be positive and strictly increasing")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            points = list(pool.map(lambda L: _point(L, params), lengths))
    else:
        points = [_point(L, params) for L in lengths]
    return Sweep(points, crossover(points))


def crossover(points: Sequence[ComparisonPoint]) -> float | None:
    """First length where the polarization limit exceeds the energy-time limit."""
    if len(points) < 2:
        return None
    prev = None
    for pt in points:
        gap = pt.max_fwhm_et_nm - pt.max_fwhm_pol_nm
        if gap < 0:
            if prev is None:
                return pt.length_km
            prev_len, prev_gap = prev
            return prev_len + (pt.length_km - prev_len) * prev_gap / (prev_gap - gap)
        prev = (pt.length_km, gap)
    return None

