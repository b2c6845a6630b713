"""Acceptance criteria 1-12, one PASS/FAIL line each.

Run with pytest (lines appear in the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""
import filecmp
import itertools
import math
import time

import numpy as np
import pytest

from etqkd.budget import (
    comparison_sweep,
    et_qber,
    max_spectral_width_et,
    max_spectral_width_pol,
    optical_qber,
    pol_qber,
    qber_budget,
    rate_chain,
    security_check,
    sifted_rate,
)
from etqkd.cli import main as cli_main
from etqkd.config import load_scenario
from etqkd.model import Filtering, SourceSpec, effective_spectrum
from etqkd.montecarlo import empirical_side_share, predict, simulate
from etqkd.sifting import match_coincidences, sift
from etqkd.temporal import PeakModel, TimingBudget, total_spread, window_fractions

RESULTS: list[str] = []


def check(number, label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {number:>3}  {label}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def presets():
    return {name: load_scenario(name) for name in ("compensation", "filtering")}


def test_01_rate_chain():
    comp = sifted_rate(79000, 0.5, 8.3, 5.4, 2.9, 0.1, 0.38, 0.7)
    filt = sifted_rate(36000, 0.5, 8.3, 5.4, 0.0, 0.1, 0.22, 0.7)
    ok = abs(comp - 23.0) <= 0.5 and abs(filt - 11.8) <= 0.5
    check(1, "sifted rate", ok, f"compensation {comp:.3f} Hz, filtering {filt:.3f} Hz")


def test_02_optical_qber():
    a, b = optical_qber(0.89), optical_qber(0.92)
    ok = math.isclose(a, 0.055, abs_tol=1e-15) and math.isclose(b, 0.04, abs_tol=1e-15)
    check(2, "optical QBER", ok, f"{100 * a:.4f}% and {100 * b:.4f}%")


def test_03_filtered_widths():
    src = SourceSpec(814.0, 1536.0, 2.0, 6.9, 1e5)
    spectrum = effective_spectrum(src, Filtering(814.0, 2.0))
    ok = abs(spectrum.signal_fwhm_nm - 1.45) <= 0.1 and abs(spectrum.idler_fwhm_nm - 5.2) <= 0.3
    check(3, "filtered widths", ok, f"{spectrum.signal_fwhm_nm:.4f} nm signal, {spectrum.idler_fwhm_nm:.4f} nm idler")


def test_04_unmanaged_side_share():
    coherence = 1550.0**2 / (299792458.0 * 6.9)
    spread = total_spread(TimingBudget(0.7, coherence, 17 * 31 * 6.9e-3))
    share = window_fractions(PeakModel(3.3, spread), 1.1).windowed_side_share
    check(4, "unmanaged side share", abs(share - 0.10) <= 0.03, f"{100 * share:.3f}% (peak FWHM {spread:.4f} ns)")


def test_05_dispersion_qber(presets):
    comp = qber_budget(presets["compensation"]).dispersion
    filt = qber_budget(presets["filtering"]).dispersion
    ok = comp < 0.001 and abs(filt - 0.005) <= 0.015
    check(5, "dispersion QBER", ok, f"compensation {100 * comp:.2e}%, filtering {100 * filt:.3f}%")


def test_06a_detector_qber_compensation(presets):
    det = qber_budget(presets["compensation"]).detector
    check("6a", "detector QBER compensation", abs(det - 0.04) <= 0.01, f"{100 * det:.3f}%")


def test_06b_detector_qber_filtering(presets):
    det = qber_budget(presets["filtering"]).detector
    ok = 0.017 / 2 <= det <= 0.017 * 2
    check("6b", "detector QBER filtering", ok, f"{100 * det:.3f}% (band 0.85%..3.40%)")


def test_07_total_qber(presets):
    comp = qber_budget(presets["compensation"]).total
    filt = qber_budget(presets["filtering"]).total
    ok = (
        abs(comp - 0.105) <= 0.02
        and abs(filt - 0.072) <= 0.02
        and security_check(comp)
        and security_check(filt)
    )
    check(7, "total QBER", ok, f"compensation {100 * comp:.3f}%, filtering {100 * filt:.3f}%, both secure")


def test_08_et_limit_30km():
    limit = max_spectral_width_et(30.0, 17.0, 3.3, 1.1, 0.7, 0.01)
    check(8, "ET width limit at 30 km", 4.5 <= limit.fwhm_nm <= 5.5, f"{limit.fwhm_nm:.4f} nm")


def test_09_crossover():
    sweep = comparison_sweep(np.arange(10.0, 201.0, 10.0))
    at30 = next(p for p in sweep.points if p.length_km == 30.0)
    x = sweep.crossover_km
    ok = at30.max_fwhm_et_nm > at30.max_fwhm_pol_nm and x is not None and 60.0 <= x <= 150.0
    check(
        9, "ET vs polarization crossover", ok,
        f"30 km: ET {at30.max_fwhm_et_nm:.3f} nm > pol {at30.max_fwhm_pol_nm:.3f} nm; crossover {x:.2f} km",
    )


def _binomial_z(observed, expected, n):
    sigma = math.sqrt(expected * (1 - expected) / n)
    return (observed - expected) / sigma


@pytest.mark.slow
@pytest.mark.parametrize("name,seed", [("compensation", 20240601), ("filtering", 20240602)])
def test_10_monte_carlo_agreement(presets, name, seed):
    scenario = presets[name]
    start = time.perf_counter()
    out = simulate(scenario, 600.0, seed)
    match = match_coincidences(out.alice, out.bob, 1.1)
    rep = sift(match.inside, all_count=len(match.all), duration_s=out.realized_duration_s)
    share = empirical_side_share(out, 1.1)
    elapsed = time.perf_counter() - start

    pred = predict(scenario, out.range_ns)
    n_signal = round((pred.in_window["signal_central"] + pred.in_window["signal_side"]) * len(out.alice))
    z = {
        "acceptance": _binomial_z(rep.window_acceptance, pred.window_acceptance, len(match.all)),
        "side share": _binomial_z(share, pred.windowed_side_share, n_signal),
        "QBER": _binomial_z(rep.measured_qber, pred.sifted_qber, rep.sifted),
    }
    ok = all(abs(v) <= 3 for v in z.values()) and elapsed < 60.0
    detail = ", ".join(f"{k} z={v:+.2f}" for k, v in z.items()) + f", {elapsed:.1f} s"
    check(f"10{name[0]}", f"MC vs analytic ({name})", ok, detail)


def test_11_determinism(presets, tmp_path):
    same_runs = simulate(presets["filtering"], 3.0, 77) == simulate(presets["filtering"], 3.0, 77)
    same_workers = simulate(presets["compensation"], 3.0, 77, workers=1) == simulate(
        presets["compensation"], 3.0, 77, workers=4
    )
    dirs = []
    for i, workers in enumerate(("1", "1", "4")):
        d = tmp_path / f"run{i}"
        cli_main(["report", "--preset", "compensation", "--seed", "77", "--duration", "3",
                  "--workers", workers, "--out", str(d)])
        dirs.append(d)
    files = ("report.txt", "alice.csv", "bob.csv", "truth.csv")
    same_files = all(filecmp.cmp(dirs[0] / f, d / f, shallow=False) for d in dirs[1:] for f in files)
    check(11, "determinism", same_runs and same_workers and same_files,
          f"repeat {same_runs}, workers {same_workers}, report files {same_files}")


def test_12_property_suites():
    rng = np.random.default_rng(2024)
    # window monotonicity
    mono = True
    for _ in range(50):
        peaks = PeakModel(rng.uniform(0.5, 10), rng.uniform(0.0, 8))
        ws = np.sort(rng.uniform(0.01, 20, 40))
        c = [window_fractions(peaks, w) for w in ws]
        mono &= all(np.diff([f.central_in for f in c]) >= 0) and all(np.diff([f.side_in for f in c]) >= 0)
    # cdf vs quadrature
    worst = 0.0
    for _ in range(1000):
        dt, fwhm = rng.uniform(0.5, 10), rng.uniform(0.01, 8)
        w = rng.uniform(0.05, 4 * dt)
        a = window_fractions(PeakModel(dt, fwhm), w)
        b = window_fractions(PeakModel(dt, fwhm), w, method="quadrature")
        worst = max(worst, abs(a.central_in - b.central_in), abs(a.side_in - b.side_in))
    # RMS permutation invariance
    perm = True
    for _ in range(100):
        vals = tuple(rng.uniform(0, 5, 3))
        ref = total_spread(TimingBudget(*vals))
        perm &= all(total_spread(TimingBudget(*p)) == ref for p in itertools.permutations(vals))
    # 3 dB scaling
    ratio_err = 0.0
    for _ in range(200):
        args = [rng.uniform(1e3, 1e5), 0.5, rng.uniform(0, 20), rng.uniform(0, 10), rng.uniform(0, 5), 0.1, 0.3, 0.6]
        base = sifted_rate(*args)
        args[2] += 3.0
        ratio_err = max(ratio_err, abs(sifted_rate(*args) / base / 10 ** (-0.3) - 1))
    # bisection postcondition
    gap = 0.0
    for length in np.linspace(10, 200, 20):
        et = max_spectral_width_et(length, 17.0, 3.3, 1.1, 0.7, 0.01)
        pol = max_spectral_width_pol(length, 0.1, 0.01)
        if not et.unconstrained:
            gap = max(gap, abs(et_qber(et.fwhm_nm, length, 17.0, 3.3, 1.1, 0.7) - 0.01))
        if not pol.unconstrained:
            gap = max(gap, abs(pol_qber(pol.fwhm_nm, length, 0.1) - 0.01))
    ok = mono and worst <= 1e-7 and perm and ratio_err <= 1e-12 and gap <= 1e-4
    check(12, "property suites", ok,
          f"monotone {mono}, cdf/quad {worst:.1e}, permutation {perm}, 3 dB {ratio_err:.1e}, bisection {gap:.1e}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
