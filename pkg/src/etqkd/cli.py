"""Batch front end: ``etqkd {budget,peaks,sweep,simulate,sift,report}``."""
from __future__ import annotations

import argparse
import hashlib
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .budget import (
    DOP_MODEL,
    SweepParams,
    comparison_sweep,
    qber_budget,
    rate_chain,
    security_check,
)
from .config import ConfigParseError, load_scenario, parameter_hash
from .model import ScenarioConfig, ValidationError
from .montecarlo import default_range_ns, empirical_side_share, predict, simulate
from .sifting import match_coincidences, sift
from .streams import provenance_line, read_provenance, read_stream, write_stream
from .temporal import (
    franson_condition,
    peak_model,
    theoretical_histogram,
    timing_budget,
    total_spread,
    window_fractions,
)

SESSION_S = 40 * 60.0
DEFAULT_SCALE = 1.0 / 2400.0
EXIT_INSECURE = 3
EXIT_ERROR = 2

# Values measured on the two deployed configurations, shown next to the model.
MEASURED = {
    "compensation": dict(rate=23.0, optical=0.055, accidental=0.01, detector=0.04, dispersion=0.0, total=0.105),
    "filtering": dict(rate=12.0, optical=0.04, accidental=0.01, detector=0.017, dispersion=0.005, total=0.072),
}


class CliError(Exception):
    pass


def _scenario(args) -> tuple[ScenarioConfig, str]:
    if getattr(args, "config", None):
        return load_scenario(args.config), f"config:{Path(args.config).name}"
    return load_scenario(args.preset), args.preset


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _duration(args) -> float:
    return args.duration if args.duration is not None else SESSION_S * args.scale


def _pct(x: float | None) -> str:
    return "none" if x is None else f"{100 * x:.2f}%"


def _emit(text: str, out: Path | None, filename: str) -> None:
    sys.stdout.write(text)
    if out is not None:
        (out / filename).write_text(text, encoding="utf-8")


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*r).rstrip() for r in [header] + rows) + "\n"


def budget_text(scenario: ScenarioConfig, name: str) -> tuple[str, str]:
    """Aligned tables (QBER terms, then rate factors) and the matching CSV."""
    chain = rate_chain(scenario)
    qb = qber_budget(scenario)
    secure = "yes" if security_check(min(qb.total, 1.0)) else "no"
    qber_rows = [[
        name, f"{chain.sifted_rate_hz:.1f} Hz", _pct(qb.optical), _pct(qb.accidental),
        _pct(qb.detector), _pct(qb.dispersion), _pct(qb.total), secure,
    ]]
    ref = MEASURED.get(name)
    if ref:
        qber_rows.append([
            "  measured", f"{ref['rate']:g} Hz", _pct(ref["optical"]), _pct(ref["accidental"]),
            _pct(ref["detector"]), _pct(ref["dispersion"]), _pct(ref["total"]), "",
        ])
    chain_rows = [[
        name, f"{chain.singles_rate_hz / 1e3:.1f} kHz", f"{chain.mu:g}", f"{chain.t_l_db:g}",
        f"{chain.t_b_db:g}", f"{chain.t_c_db:g}", f"{chain.eta_d:g}", f"{chain.eta_g:.3f}",
        f"{chain.q_s:g}", f"{chain.sifted_rate_hz:.1f} Hz",
    ]]
    head = provenance_line(preset=name, params=parameter_hash(scenario)) + "\n"
    text = (
        head
        + "QBER budget\n"
        + _table(["configuration", "sifted rate", "opt.", "acc.", "detect.", "disp.", "total", "secure"], qber_rows)
        + "\nRate chain\n"
        + _table(["configuration", "singles", "mu", "T_L dB", "T_B dB", "T_C dB", "eta_d", "eta_g", "q_s", "sifted rate"], chain_rows)
    )
    csv = head + (
        "configuration,sifted_key_rate_hz,optical_qber,accidental_qber,detector_qber,dispersion_qber,"
        "total_qber,singles_rate_hz,mu,t_l_db,t_b_db,t_c_db,eta_d,eta_g,q_s\n"
        f"{name},{chain.sifted_rate_hz!r},{qb.optical!r},{qb.accidental!r},{qb.detector!r},"
        f"{qb.dispersion!r},{qb.total!r},{chain.singles_rate_hz!r},{chain.mu!r},{chain.t_l_db!r},"
        f"{chain.t_b_db!r},{chain.t_c_db!r},{chain.eta_d!r},{chain.eta_g!r},{chain.q_s!r}\n"
    )
    return text, csv


def cmd_budget(args) -> int:
    scenario, name = _scenario(args)
    text, csv = budget_text(scenario, name)
    sys.stdout.write(text)
    out = _out_dir(args)
    if out is not None:
        (out / "budget.txt").write_text(text, encoding="utf-8")
        (out / "budget.csv").write_text(csv, encoding="utf-8")
    return 0


def cmd_peaks(args) -> int:
    scenario, name = _scenario(args)
    peaks = peak_model(scenario)
    window = args.window_ns or scenario.detector.gate_width_ns
    t, density = theoretical_histogram(peaks, args.bin_ns, args.range_ns)
    lines = [
        provenance_line(
            preset=name, params=parameter_hash(scenario), delta_t_ns=peaks.delta_t_ns,
            fwhm_ns=f"{peaks.fwhm_ns:.6g}", window_ns=window,
        ),
        "bin_center_ns,density",
    ]
    lines += [f"{x!r},{y!r}" for x, y in zip(t.tolist(), density.tolist())]
    out = _out_dir(args) or Path(".")
    (out / "peaks.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'peaks.csv'} ({len(t)} bins, FWHM {peaks.fwhm_ns:.4f} ns)")
    return 0


def cmd_sweep(args) -> int:
    if args.step <= 0 or args.to < args.from_:
        raise CliError("sweep needs --step > 0 and --to >= --from")
    lengths = np.arange(args.from_, args.to + 0.5 * args.step, args.step).tolist()
    if args.preset or args.config:
        scenario, name = _scenario(args)
        params = SweepParams.from_scenario(scenario, args.target)
    else:
        name, params = "none", SweepParams(target_qber=args.target)
    if args.pmd is not None:
        params = SweepParams(**{**params.__dict__, "pmd_coeff": args.pmd})
    result = comparison_sweep(lengths, params, workers=args.workers)
    digest = hashlib.sha256(repr(params).encode()).hexdigest()[:16]
    lines = [
        provenance_line(preset=name, params=digest, target_qber=params.target_qber),
        f"# pol_model={DOP_MODEL.split(':')[0]}",
        "length_km,max_fwhm_et_nm,max_fwhm_pol_nm",
    ]
    lines += [f"{p.length_km:g},{p.max_fwhm_et_nm:.4f},{p.max_fwhm_pol_nm:.4f}" for p in result.points]
    cross = "none" if result.crossover_km is None else f"{result.crossover_km:.2f}"
    lines.append(f"# crossover_km={cross}")
    _emit("\n".join(lines) + "\n", _out_dir(args), "sweep.csv")
    return 0


def _write_sim(out: Path, output, scenario: ScenarioConfig, name: str) -> None:
    meta = dict(
        preset=name, params=parameter_hash(scenario), seed=output.seed,
        duration_s=repr(output.realized_duration_s), range_ns=repr(output.range_ns),
    )
    write_stream(out / "alice.csv", output.alice, provenance_line(**meta))
    write_stream(out / "bob.csv", output.bob, provenance_line(**meta))
    write_stream(out / "truth.csv", output.bob, provenance_line(**meta, log="truth"), truth=output.truth)


def cmd_simulate(args) -> int:
    scenario, name = _scenario(args)
    output = simulate(scenario, _duration(args), args.seed, range_ns=args.range_ns, workers=args.workers)
    out = _out_dir(args) or Path(".")
    _write_sim(out, output, scenario, name)
    print(
        f"simulated {output.realized_duration_s:g} s: {len(output.alice)} Alice clicks, "
        f"{len(output.bob)} Bob clicks -> {out}"
    )
    return 0


def _enforce(args, qber: float | None) -> int:
    if not args.enforce_security:
        return 0
    if qber is None or not security_check(qber):
        print(f"insecure: QBER {_pct(qber)} is not below 11%", file=sys.stderr)
        return EXIT_INSECURE
    return 0


def cmd_sift(args) -> int:
    src = Path(args.in_)
    alice_path, bob_path = src / "alice.csv", src / "bob.csv"
    for path in (alice_path, bob_path):
        if not path.is_file():
            raise CliError(f"missing stream file {path}")
    window = args.window_ns
    if window is None:
        if not (args.preset or args.config):
            raise CliError("sift needs --window-ns or a scenario (--preset/--config)")
        window = _scenario(args)[0].detector.gate_width_ns
    meta = read_provenance(bob_path)
    duration = args.duration if args.duration is not None else float(meta.get("duration_s", "nan"))
    alice, _ = read_stream(alice_path)
    bob, _ = read_stream(bob_path)
    match = match_coincidences(alice, bob, window, args.multi)
    report = sift(
        match.inside, all_count=len(match.all),
        duration_s=duration if math.isfinite(duration) else None,
        disclose_every=args.disclose_every,
    )
    head = provenance_line(source=src.name, params=meta.get("params"), seed=meta.get("seed"), window_ns=window)
    out = _out_dir(args)
    sys.stdout.write(head + "\n" + report.to_table())
    if out is not None:
        (out / "sift_report.txt").write_text(head + "\n" + report.to_table(), encoding="utf-8")
        (out / "sift_report.csv").write_text(head + "\n" + report.to_csv(), encoding="utf-8")
    return _enforce(args, report.measured_qber)


def report_text(scenario: ScenarioConfig, name: str, output, window: float) -> tuple[str, float | None]:
    pred = predict(scenario, output.range_ns)
    match = match_coincidences(output.alice, output.bob, window)
    rep = sift(match.inside, all_count=len(match.all), duration_s=output.realized_duration_s)
    chain = rate_chain(scenario)
    qb = qber_budget(scenario)
    peaks = peak_model(scenario)
    physical = total_spread(timing_budget(scenario))
    n_gates = len(output.alice)
    share = empirical_side_share(output, window)

    def fmt(x, pct=False):
        if x is None:
            return "none"
        return f"{100 * x:.3f}%" if pct else f"{x:.5g}"

    def sigma(p, n):
        return math.sqrt(p * (1 - p) / n) if n else float("nan")

    signal_in_window = pred.in_window["signal_central"] + pred.in_window["signal_side"]
    rows = [
        ["alice_rate_hz", fmt(chain.singles_rate_hz), fmt(n_gates / output.realized_duration_s),
         fmt(math.sqrt(chain.singles_rate_hz / output.realized_duration_s))],
        ["window_acceptance", fmt(pred.window_acceptance), fmt(rep.window_acceptance),
         fmt(sigma(pred.window_acceptance, len(match.all)))],
        ["windowed_side_share", fmt(pred.windowed_side_share), fmt(share),
         fmt(sigma(pred.windowed_side_share, round(signal_in_window * n_gates)))],
        ["measured_q_s", fmt(pred.q_s), fmt(rep.measured_q_s), fmt(sigma(pred.q_s, rep.coincidences))],
        ["sifted_qber", fmt(pred.sifted_qber, True), fmt(rep.measured_qber, True),
         fmt(sigma(pred.sifted_qber, rep.sifted), True)],
        ["sifted_rate_hz", fmt(pred.sifted_per_gate * chain.singles_rate_hz), fmt(rep.sifted_rate_hz),
         fmt(math.sqrt(pred.sifted_per_gate * chain.singles_rate_hz / output.realized_duration_s))],
    ]
    budget, _ = budget_text(scenario, name)
    text = (
        provenance_line(preset=name, params=parameter_hash(scenario), seed=output.seed,
                        duration_s=repr(output.realized_duration_s))
        + "\n"
        + f"peaks: delta_t = {peaks.delta_t_ns:g} ns, fwhm = {peaks.fwhm_ns:.4f} ns "
        + f"(timing budget {physical:.4f} ns), window = {window:g} ns, "
        + f"central_in = {window_fractions(peaks, window).central_in:.4f}, "
        + f"franson = {franson_condition(peaks, scenario.source.pump_coherence_ns).value}\n"
        + "\n".join(budget.splitlines()[1:]) + "\n\n"
        + "Analytic vs Monte Carlo\n"
        + _table(["quantity", "analytic", "empirical", "1 sigma"], rows)
        + f"\nsecure (analytic total {_pct(qb.total)}): {'yes' if qb.total < 0.11 else 'no'}; "
        + f"secure (measured): {'yes' if rep.secure() else 'no'}\n"
    )
    return text, rep.measured_qber


def cmd_report(args) -> int:
    scenario, name = _scenario(args)
    output = simulate(scenario, _duration(args), args.seed, range_ns=args.range_ns, workers=args.workers)
    window = args.window_ns or scenario.detector.gate_width_ns
    text, qber = report_text(scenario, name, output, window)
    out = _out_dir(args)
    if out is not None:
        _write_sim(out, output, scenario, name)
    _emit(text, out, "report.txt")
    return _enforce(args, qber)


def _add_scenario(p: argparse.ArgumentParser, required: bool = True, default: str | None = "compensation") -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--preset", default=default if required else None,
                       help="named scenario: compensation, filtering, unmanaged")
    group.add_argument("--config", metavar="PATH", help="scenario file")


def _add_sim(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--duration", type=float, help="simulated seconds (overrides --scale)")
    p.add_argument("--scale", type=float, default=DEFAULT_SCALE,
                   help="fraction of a 40 minute session to simulate (default 1/2400)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--range-ns", type=float, help="Bob gate / histogram span (default 4 x delta_t)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etqkd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"etqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("budget", help="QBER budget and sifted-rate chain")
    _add_scenario(p)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("peaks", help="theoretical coincidence histogram (CSV)")
    _add_scenario(p)
    p.add_argument("--bin-ns", type=float, default=0.05)
    p.add_argument("--range-ns", type=float)
    p.add_argument("--window-ns", type=float)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_peaks)

    p = sub.add_parser("sweep", help="maximal spectral width vs length, energy-time vs polarization")
    _add_scenario(p, required=False)
    p.add_argument("--from", dest="from_", type=float, default=10.0)
    p.add_argument("--to", type=float, default=200.0)
    p.add_argument("--step", type=float, default=10.0)
    p.add_argument("--target", type=float, default=0.01)
    p.add_argument("--pmd", type=float, help="PMD coefficient, ps/sqrt(km)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="write Alice/Bob streams and the truth log")
    _add_scenario(p)
    _add_sim(p)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sift", help="match, window and sift stream files")
    _add_scenario(p, required=False)
    p.add_argument("--in", dest="in_", metavar="DIR", default=".")
    p.add_argument("--window-ns", type=float)
    p.add_argument("--duration", type=float, help="override the duration read from the stream header")
    p.add_argument("--multi", choices=("earliest", "discard"), default="earliest")
    p.add_argument("--disclose-every", type=int, default=1)
    p.add_argument("--enforce-security", action="store_true")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_sift)

    p = sub.add_parser("report", help="simulate + sift + budget, analytic vs empirical")
    _add_scenario(p)
    _add_sim(p)
    p.add_argument("--window-ns", type=float)
    p.add_argument("--enforce-security", action="store_true")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigParseError, ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"etqkd: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
