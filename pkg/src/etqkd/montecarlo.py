"""Seeded event-level simulation of the gated Franson link.

Alice's clicks form a Poisson process; each click opens a Bob gate that
spans the histogram range. Time is Bob-minus-Alice, so Alice records carry
``time_ps = 0``. Randomness is drawn per block of simulated time from a
generator keyed on ``(seed, block)``, so output does not depend on how
blocks are distributed over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ScenarioConfig, alice_rate_hz, bob_transmittance
from .sifting import coincidence_histogram, match_coincidences
from .streams import TRUTH_TAGS, Stream
from .temporal import PEAK_WEIGHTS, PeakModel, peak_model, window_fractions

BLOCK_S = 0.25
TIME_RESOLUTION_NS = 1e-3
CENTRAL, SIDE, DARK, ACCIDENTAL = range(4)


@dataclass(frozen=True, eq=False)
class SimOutput:
    alice: Stream
    bob: Stream
    truth: np.ndarray  # tag code per bob record, index into TRUTH_TAGS
    realized_duration_s: float
    seed: int
    range_ns: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SimOutput):
            return NotImplemented
        return (
            self.alice == other.alice
            and self.bob == other.bob
            and np.array_equal(self.truth, other.truth)
            and (self.realized_duration_s, self.seed, self.range_ns)
            == (other.realized_duration_s, other.seed, other.range_ns)
        )


@dataclass(frozen=True)
class _LinkParams:
    alice_rate_hz: float
    bases_used: int
    p_detect: float          # correlated photon reaches a Bob detector and clicks
    sigma_ns: float
    delta_t_ns: float
    visibility: float
    phases: tuple[tuple[float, float], ...]
    q_match: float
    dark_per_ns: float
    accidental_per_ns: float
    range_ns: float

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig, range_ns: float) -> "_LinkParams":
        peaks = peak_model(scenario)
        det = scenario.detector
        transmission = bob_transmittance(scenario)
        return cls(
            alice_rate_hz=alice_rate_hz(scenario),
            bases_used=scenario.bases_used,
            p_detect=scenario.source.mu_coupling * transmission * det.efficiency,
            sigma_ns=peaks.sigma_ns,
            delta_t_ns=peaks.delta_t_ns,
            visibility=scenario.interferometer.visibility,
            phases=scenario.interferometer.basis_phases,
            q_match=scenario.q_sift,
            dark_per_ns=det.dark_prob_per_gate_total / det.gate_width_ns,
            accidental_per_ns=scenario.source.pair_rate_in_fiber_hz * 1e-9 * transmission * det.efficiency,
            range_ns=range_ns,
        )


def default_range_ns(scenario: ScenarioConfig) -> float:
    return max(4.0 * scenario.interferometer.delta_t_ns, scenario.detector.gate_width_ns)


def _rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, block))))


def _block_gates(seed: int, block: int, rate_hz: float, span_s: float) -> int:
    return int(_rng(seed, 0, block).poisson(rate_hz * span_s))


def _simulate_block(p: _LinkParams, seed: int, block: int, n: int, gate0: int):
    rng = _rng(seed, 1, block)
    half = 0.5 * p.range_ns
    alice_det = rng.integers(0, 2 * p.bases_used, n).astype(np.int8)
    alice_basis = alice_det >> 1
    alice_bit = alice_det & 1

    # correlated photons: path SS/LL (central), SL (+dT) or LS (-dT)
    hit = np.flatnonzero(rng.random(n) < p.p_detect)
    path = rng.integers(0, 4, hit.size)
    t = np.where(path == 2, p.delta_t_ns, np.where(path == 3, -p.delta_t_ns, 0.0))
    t = t + rng.normal(0.0, p.sigma_ns, hit.size) if p.sigma_ns > 0 else t
    a_basis = alice_basis[hit]
    matched = rng.random(hit.size) < p.q_match
    b_basis = np.where(matched, a_basis, 1 - a_basis).astype(np.int8)
    phi_a = np.array([ph[0] for ph in p.phases])
    phi_b = np.array([ph[1] for ph in p.phases])
    central = path < 2
    p_agree = np.where(central, 0.5 * (1 + p.visibility * np.cos(phi_a[a_basis] + phi_b[b_basis])), 0.5)
    agree = rng.random(hit.size) < p_agree
    b_bit = np.where(agree, alice_bit[hit], 1 - alice_bit[hit]).astype(np.int8)
    inside = np.abs(t) <= half
    photon = (hit[inside], t[inside], b_basis[inside], b_bit[inside],
              np.where(central, CENTRAL, SIDE)[inside])

    # dark clicks carry no photon and are credited to Alice's basis
    n_dark = rng.poisson(p.dark_per_ns * p.range_ns, n)
    d_gate = np.repeat(np.arange(n), n_dark)
    dark = (d_gate, rng.uniform(-half, half, d_gate.size), alice_basis[d_gate],
            rng.integers(0, 2, d_gate.size).astype(np.int8), np.full(d_gate.size, DARK))

    # photons from unrelated pairs: uniform in time, random bit
    n_acc = rng.poisson(p.accidental_per_ns * p.range_ns, n)
    x_gate = np.repeat(np.arange(n), n_acc)
    x_matched = rng.random(x_gate.size) < p.q_match
    x_basis = np.where(x_matched, alice_basis[x_gate], 1 - alice_basis[x_gate]).astype(np.int8)
    accidental = (x_gate, rng.uniform(-half, half, x_gate.size), x_basis,
                  rng.integers(0, 2, x_gate.size).astype(np.int8), np.full(x_gate.size, ACCIDENTAL))

    gate, times, basis, bit, tag = (np.concatenate(c) for c in zip(photon, dark, accidental))
    time_ps = np.rint(times / TIME_RESOLUTION_NS).astype(np.int64)
    order = np.lexsort((time_ps, gate))
    bob = (gate[order].astype(np.int64) + gate0, time_ps[order],
           bit[order].astype(np.int8), basis[order].astype(np.int8), bit[order].astype(np.int8),
           tag[order].astype(np.int8))
    return alice_det, alice_basis, alice_bit, bob


def simulate(
    scenario: ScenarioConfig,
    duration_s: float,
    seed: int,
    *,
    range_ns: float | None = None,
    workers: int = 1,
) -> SimOutput:
    if not (isinstance(duration_s, (int, float)) and math.isfinite(duration_s) and duration_s > 0):
        raise ValueError("duration_s must be a positive finite number")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("seed must be a non-negative integer")
    seed = int(seed)
    if range_ns is None:
        range_ns = default_range_ns(scenario)
    if range_ns < 3 * scenario.interferometer.delta_t_ns or range_ns < scenario.detector.gate_width_ns:
        raise ValueError("range_ns must cover 3 * delta_t_ns and the detection window")
    p = _LinkParams.from_scenario(scenario, range_ns)

    n_blocks = max(1, math.ceil(duration_s / BLOCK_S - 1e-9))
    spans = [min(BLOCK_S, duration_s - b * BLOCK_S) for b in range(n_blocks)]
    counts = [_block_gates(seed, b, p.alice_rate_hz, s) for b, s in enumerate(spans)]
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def run(b: int):
        return _simulate_block(p, seed, b, counts[b], int(offsets[b]))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]

    total = int(offsets[-1])
    alice = Stream(
        "alice",
        np.arange(total, dtype=np.int64),
        np.zeros(total, dtype=np.int64),
        np.concatenate([q[0] for q in parts]),
        np.concatenate([q[1] for q in parts]),
        np.concatenate([q[2] for q in parts]),
    )
    cols = [np.concatenate([q[3][i] for q in parts]) for i in range(6)]
    bob = Stream("bob", *cols[:5])
    return SimOutput(alice, bob, cols[5], float(duration_s), seed, float(range_ns))


def empirical_histogram(output: SimOutput, bin_ns: float) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of Bob-minus-Alice delays over all coincidences in the gate range."""
    if len(output.bob) == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    match = match_coincidences(output.alice, output.bob, output.range_ns)
    return coincidence_histogram(match.all, bin_ns, output.range_ns)


def truth_counts(output: SimOutput, window_ns: float) -> dict[str, tuple[int, int]]:
    """Per truth tag: (records inside the window, records in the whole gate range)."""
    inside = np.abs(output.bob.time_ps) <= 500.0 * window_ns
    return {
        tag: (
            int(np.count_nonzero(inside & (output.truth == code))),
            int(np.count_nonzero(output.truth == code)),
        )
        for code, tag in enumerate(TRUTH_TAGS)
    }


def empirical_side_share(output: SimOutput, window_ns: float) -> float | None:
    counts = truth_counts(output, window_ns)
    central, side = counts["signal_central"][0], counts["signal_side"][0]
    return side / (central + side) if central + side else None


class Prediction(NamedTuple):
    """Expected per-gate click probabilities and derived sifting statistics."""

    in_window: dict[str, float]
    in_range: dict[str, float]
    window_acceptance: float
    windowed_side_share: float
    q_s: float
    sifted_qber: float
    sifted_per_gate: float


def predict(scenario: ScenarioConfig, range_ns: float | None = None, peaks: PeakModel | None = None) -> Prediction:
    """Analytic expectation of what :func:`simulate` followed by sifting measures."""
    if range_ns is None:
        range_ns = default_range_ns(scenario)
    if peaks is None:
        peaks = peak_model(scenario)
    p = _LinkParams.from_scenario(scenario, range_ns)
    # integer-ps timestamps in a closed window span one extra picosecond
    window = scenario.detector.gate_width_ns + TIME_RESOLUTION_NS
    fw = window_fractions(peaks, window)
    fr = window_fractions(peaks, range_ns)
    w_side, w_center = PEAK_WEIGHTS[0], PEAK_WEIGHTS[1]

    def rates(frac, span):
        return {
            "signal_central": p.p_detect * w_center * frac.central_in,
            "signal_side": p.p_detect * 2 * w_side * frac.side_in,
            "dark": p.dark_per_ns * span,
            "accidental": p.accidental_per_ns * span,
        }

    in_w, in_r = rates(fw, window), rates(fr, range_ns)
    photons = in_w["signal_central"] + in_w["signal_side"] + in_w["accidental"]
    sifted = p.q_match * photons + in_w["dark"]
    e_central = float(np.mean([
        0.5 * (1 - p.visibility * math.cos(a + b)) for a, b in p.phases[: scenario.bases_used]
    ]))
    errors = (
        p.q_match * in_w["signal_central"] * e_central
        + 0.5 * p.q_match * (in_w["signal_side"] + in_w["accidental"])
        + 0.5 * in_w["dark"]
    )
    total_w, total_r = sum(in_w.values()), sum(in_r.values())
    return Prediction(
        in_window=in_w,
        in_range=in_r,
        window_acceptance=total_w / total_r if total_r else 0.0,
        windowed_side_share=fw.windowed_side_share,
        q_s=sifted / total_w if total_w else 0.0,
        sifted_qber=errors / sifted if sifted else 0.0,
        sifted_per_gate=sifted,
    )
