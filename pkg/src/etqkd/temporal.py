"""Three-peak coincidence-time model and window-discriminator integrals.

Coincidence times (Bob minus Alice) form three Gaussians of common FWHM
at -dT, 0 and +dT with weights 1/4, 1/2, 1/4. Only the central peak
carries interfering (correlated) events.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ScenarioConfig, channel_budget, effective_spectrum

FWHM_TO_SIGMA = 1.0 / math.sqrt(8.0 * math.log(2.0))
SPEED_OF_LIGHT_NM_PER_NS = 299_792_458.0  # m/s == nm/ns
PEAK_WEIGHTS = (0.25, 0.5, 0.25)


@dataclass(frozen=True)
class TimingBudget:
    jitter_fwhm_ns: float
    coherence_fwhm_ns: float
    dispersion_fwhm_ns: float

    def __post_init__(self) -> None:
        if min(self.jitter_fwhm_ns, self.coherence_fwhm_ns, self.dispersion_fwhm_ns) < 0:
            raise ValueError("timing contributions must be >= 0")


@dataclass(frozen=True)
class PeakModel:
    delta_t_ns: float
    fwhm_ns: float

    def __post_init__(self) -> None:
        if self.delta_t_ns <= 0:
            raise ValueError("delta_t_ns must be > 0")
        if self.fwhm_ns < 0:
            raise ValueError("fwhm_ns must be >= 0")

    @property
    def sigma_ns(self) -> float:
        return self.fwhm_ns * FWHM_TO_SIGMA

    @property
    def centers(self) -> tuple[float, float, float]:
        return (-self.delta_t_ns, 0.0, self.delta_t_ns)

    @property
    def weights(self) -> tuple[float, float, float]:
        return PEAK_WEIGHTS


class WindowFractions(NamedTuple):
    central_in: float
    side_in: float
    windowed_side_share: float


class FransonStatus(enum.Enum):
    OK = "ok"
    VIOLATED_LOWER = "violated_lower"
    VIOLATED_UPPER = "violated_upper"


def coherence_time_fwhm(wavelength_nm: float, fwhm_nm: float) -> float:
    """Single-photon coherence time lambda^2 / (c * dlambda), in ns."""
    if wavelength_nm <= 0 or fwhm_nm <= 0:
        raise ValueError("wavelength and spectral width must be > 0")
    return wavelength_nm**2 / (SPEED_OF_LIGHT_NM_PER_NS * fwhm_nm)


def dispersion_spread(net_dispersion_ps_per_nm: float, idler_fwhm_nm: float) -> float:
    """Wave-packet broadening D*L*dlambda in ns."""
    if net_dispersion_ps_per_nm < 0 or idler_fwhm_nm < 0:
        raise ValueError("dispersion and width must be >= 0")
    return net_dispersion_ps_per_nm * idler_fwhm_nm * 1e-3


def total_spread(budget: TimingBudget) -> float:
    # summing in sorted order makes the result independent of argument order
    parts = sorted((budget.jitter_fwhm_ns, budget.coherence_fwhm_ns, budget.dispersion_fwhm_ns))
    return math.sqrt(math.fsum(x * x for x in parts))


def timing_budget(scenario: ScenarioConfig) -> TimingBudget:
    channel = channel_budget(scenario)
    spectrum = effective_spectrum(scenario.source, scenario.strategy)
    return TimingBudget(
        jitter_fwhm_ns=scenario.detector.jitter_fwhm_ns,
        coherence_fwhm_ns=coherence_time_fwhm(spectrum.idler_center_nm, channel.idler_fwhm_nm),
        dispersion_fwhm_ns=dispersion_spread(channel.net_dispersion_ps_per_nm, channel.idler_fwhm_nm),
    )


def peak_model(scenario: ScenarioConfig, *, use_fitted: bool = True) -> PeakModel:
    """Peaks for a scenario; a fitted width overrides the timing budget unless disabled."""
    if use_fitted and scenario.peak_fwhm_ns is not None:
        width = scenario.peak_fwhm_ns
    else:
        width = total_spread(timing_budget(scenario))
    return PeakModel(scenario.interferometer.delta_t_ns, width)


def franson_condition(peaks: PeakModel, pump_coherence_ns: float) -> FransonStatus:
    if not peaks.fwhm_ns < peaks.delta_t_ns:
        return FransonStatus.VIOLATED_LOWER
    if not peaks.delta_t_ns < pump_coherence_ns:
        return FransonStatus.VIOLATED_UPPER
    return FransonStatus.OK


def _phi(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def gaussian_mass(center: float, sigma: float, lo: float, hi: float) -> float:
    """Probability mass of N(center, sigma) on [lo, hi] via the normal CDF."""
    a, b = (lo - center) / sigma, (hi - center) / sigma
    if a >= 0:
        # both bounds in the upper tail: use the mirrored CDF to keep precision
        return _phi(-a) - _phi(-b)
    return _phi(b) - _phi(a)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def gaussian_mass_quadrature(
    center: float, sigma: float, lo: float, hi: float, panels: int = 32
) -> float:
    """Same mass by composite Gauss-Legendre quadrature of the density."""
    # outside +-14 sigma the density contributes < 1e-40
    lo = max(lo, center - 14 * sigma)
    hi = min(hi, center + 14 * sigma)
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    pdf = np.exp(-0.5 * ((t - center) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * pdf))


def window_fractions(peaks: PeakModel, window_ns: float, method: str = "cdf") -> WindowFractions:
    """Fractions of the central and of one side peak inside [-W/2, W/2]."""
    if window_ns <= 0:
        raise ValueError("window_ns must be > 0")
    half = 0.5 * window_ns
    if peaks.fwhm_ns == 0:
        central = 1.0
        side = 1.0 if peaks.delta_t_ns < half else 0.0
    else:
        if method == "cdf":
            mass = gaussian_mass
        elif method == "quadrature":
            mass = gaussian_mass_quadrature
        else:
            raise ValueError(f"unknown integration method {method!r}")
        sigma = peaks.sigma_ns
        central = mass(0.0, sigma, -half, half)
        side = mass(peaks.delta_t_ns, sigma, -half, half)
    w_side, w_center = PEAK_WEIGHTS[0], PEAK_WEIGHTS[1]
    windowed_side = 2 * w_side * side
    total = w_center * central + windowed_side
    share = windowed_side / total if total > 0 else 0.0
    return WindowFractions(central, side, share)


def eta_g(peaks: PeakModel, window_ns: float) -> float:
    """Fraction of incoming photons that can become key bits."""
    return PEAK_WEIGHTS[1] * window_fractions(peaks, window_ns).central_in


def dispersion_qber(peaks: PeakModel, window_ns: float) -> float:
    # uncorrelated side-peak events give a wrong bit half of the time
    return 0.5 * window_fractions(peaks, window_ns).windowed_side_share


def bin_centers(bin_ns: float, range_ns: float) -> np.ndarray:
    """Symmetric grid with one bin centered on zero, covering [-range/2, range/2]."""
    if bin_ns <= 0:
        raise ValueError("bin_ns must be > 0")
    k = int(math.floor(0.5 * range_ns / bin_ns + 0.5))
    return np.arange(-k, k + 1) * bin_ns


def default_range_ns(peaks: PeakModel) -> float:
    return 2.0 * (peaks.delta_t_ns + 8.0 * peaks.sigma_ns)


def theoretical_histogram(
    peaks: PeakModel, bin_ns: float, range_ns: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Three-peak mixture density (per ns) sampled at the bin centers."""
    if peaks.fwhm_ns == 0:
        raise ValueError("a zero-width peak model has no density")
    if range_ns is None:
        range_ns = default_range_ns(peaks)
    t = bin_centers(bin_ns, range_ns)
    sigma = peaks.sigma_ns
    norm = 1.0 / (sigma * math.sqrt(2 * math.pi))
    density = np.zeros_like(t)
    for center, weight in zip(peaks.centers, peaks.weights):
        density += weight * norm * np.exp(-0.5 * ((t - center) / sigma) ** 2)
    return t, density
