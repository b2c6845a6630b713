"""Coincidence matching, window discrimination and basis sifting."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .budget import SECURITY_THRESHOLD
from .streams import Stream
from .temporal import bin_centers

log = logging.getLogger(__name__)


class CoincidenceRecord(NamedTuple):
    gate_id: int
    delta_t_ps: int
    alice_basis: int
    bob_basis: int
    alice_bit: int
    bob_bit: int


@dataclass(frozen=True, eq=False)
class Coincidences:
    """One row per gate holding both an Alice and a (kept) Bob click."""

    gate_id: np.ndarray
    delta_t_ps: np.ndarray
    alice_basis: np.ndarray
    bob_basis: np.ndarray
    alice_bit: np.ndarray
    bob_bit: np.ndarray

    def __len__(self) -> int:
        return len(self.gate_id)

    def take(self, index) -> "Coincidences":
        return Coincidences(*(getattr(self, f)[index] for f in CoincidenceRecord._fields))

    def records(self) -> Iterator[CoincidenceRecord]:
        cols = [getattr(self, f).tolist() for f in CoincidenceRecord._fields]
        for row in zip(*cols):
            yield CoincidenceRecord(*row)

    @classmethod
    def from_records(cls, records) -> "Coincidences":
        rows = list(records)
        if not rows:
            return cls(*(np.zeros(0, dtype=np.int64) for _ in CoincidenceRecord._fields))
        return cls(*(np.asarray(c, dtype=np.int64) for c in zip(*rows)))


class Match(NamedTuple):
    inside: Coincidences
    all: Coincidences
    duplicate_gates: int


def _check_sorted(stream: Stream) -> None:
    if len(stream) > 1 and np.any(np.diff(stream.gate_id) < 0):
        raise ValueError(f"{stream.party} stream is not sorted by gate_id")


def in_window(delta_t_ps: np.ndarray, window_ns: float) -> np.ndarray:
    """Closed window [-W/2, +W/2]."""
    return np.abs(delta_t_ps) <= 500.0 * window_ns


def match_coincidences(
    alice: Stream, bob: Stream, window_ns: float, multi: str = "earliest"
) -> Match:
    """Join Bob clicks to Alice gates; keep the earliest Bob click per gate.

    ``multi="discard"`` drops gates with more than one Bob click instead.
    """
    if window_ns <= 0:
        raise ValueError("window_ns must be > 0")
    if multi not in ("earliest", "discard"):
        raise ValueError("multi must be 'earliest' or 'discard'")
    _check_sorted(alice)
    _check_sorted(bob)
    if len(alice) > 1 and np.any(np.diff(alice.gate_id) == 0):
        raise ValueError("alice stream has repeated gate ids")

    order = np.lexsort((bob.time_ps, bob.gate_id))
    gates = bob.gate_id[order]
    first = np.ones(len(gates), dtype=bool)
    first[1:] = gates[1:] != gates[:-1]
    counts = np.diff(np.append(np.flatnonzero(first), len(gates)))
    duplicates = int(np.count_nonzero(counts > 1))
    if duplicates:
        log.warning("%d gate(s) with several Bob clicks; keeping %s", duplicates, multi)
    keep = order[first]
    if multi == "discard":
        keep = keep[counts == 1]

    probe = bob.gate_id[keep]
    if len(alice):
        pos = np.minimum(np.searchsorted(alice.gate_id, probe), len(alice) - 1)
        found = alice.gate_id[pos] == probe
    else:
        pos = np.zeros(len(probe), dtype=np.int64)
        found = np.zeros(len(probe), dtype=bool)
    keep, apos = keep[found], pos[found]

    everything = Coincidences(
        gate_id=bob.gate_id[keep].astype(np.int64),
        delta_t_ps=(bob.time_ps[keep] - alice.time_ps[apos]).astype(np.int64),
        alice_basis=alice.basis[apos].astype(np.int64),
        bob_basis=bob.basis[keep].astype(np.int64),
        alice_bit=alice.bit[apos].astype(np.int64),
        bob_bit=bob.bit[keep].astype(np.int64),
    )
    inside = everything.take(in_window(everything.delta_t_ps, window_ns))
    return Match(inside, everything, duplicates)


@dataclass(frozen=True, eq=False)
class SiftReport:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    coincidences: int
    sifted: int
    errors: int
    disclosed: int
    sifted_rate_hz: float | None
    measured_q_s: float | None
    measured_qber: float | None
    window_acceptance: float | None

    def secure(self) -> bool:
        return self.measured_qber is not None and self.measured_qber < SECURITY_THRESHOLD

    def rows(self) -> list[tuple[str, str]]:
        def pct(x):
            return "none" if x is None else f"{100 * x:.3f}%"

        def num(x, fmt):
            return "none" if x is None else format(x, fmt)

        return [
            ("coincidences_in_window", str(self.coincidences)),
            ("sifted_bits", str(self.sifted)),
            ("disclosed_bits", str(self.disclosed)),
            ("bit_errors", str(self.errors)),
            ("sifted_rate_hz", num(self.sifted_rate_hz, ".4f")),
            ("measured_q_s", num(self.measured_q_s, ".5f")),
            ("measured_qber", pct(self.measured_qber)),
            ("window_acceptance", num(self.window_acceptance, ".5f")),
        ]

    def to_table(self) -> str:
        width = max(len(k) for k, _ in self.rows())
        return "\n".join(f"{k:<{width}}  {v}" for k, v in self.rows()) + "\n"

    def to_csv(self) -> str:
        return "quantity,value\n" + "".join(f"{k},{v}\n" for k, v in self.rows())


def sift(
    coincidences: Coincidences,
    *,
    all_count: int | None = None,
    duration_s: float | None = None,
    disclose_every: int = 1,
) -> SiftReport:
    """Keep matched-basis coincidences and estimate the QBER.

    With ``disclose_every = k`` only every k-th sifted bit is compared.
    ``all_count`` (coincidences before the window cut) gives the window
    acceptance.
    """
    if disclose_every < 1:
        raise ValueError("disclose_every must be >= 1")
    matched = coincidences.alice_basis == coincidences.bob_basis
    a = coincidences.alice_bit[matched].astype(np.int8)
    b = coincidences.bob_bit[matched].astype(np.int8)
    n, kept = len(coincidences), len(a)
    sample = slice(None, None, disclose_every)
    errors = int(np.count_nonzero(a[sample] != b[sample]))
    disclosed = len(a[sample])
    return SiftReport(
        alice_bits=a,
        bob_bits=b,
        coincidences=n,
        sifted=kept,
        errors=errors,
        disclosed=disclosed,
        sifted_rate_hz=kept / duration_s if duration_s else None,
        measured_q_s=kept / n if n else None,
        measured_qber=errors / disclosed if disclosed else None,
        window_acceptance=n / all_count if all_count else None,
    )


def sift_streams(
    alice: Stream,
    bob: Stream,
    window_ns: float,
    *,
    duration_s: float | None = None,
    multi: str = "earliest",
    disclose_every: int = 1,
) -> SiftReport:
    match = match_coincidences(alice, bob, window_ns, multi)
    return sift(
        match.inside, all_count=len(match.all), duration_s=duration_s, disclose_every=disclose_every
    )


def coincidence_histogram(
    coincidences: Coincidences, bin_ns: float, range_ns: float
) -> tuple[np.ndarray, np.ndarray]:
    """Counts of Bob-minus-Alice delays on a zero-centered bin grid."""
    centers = bin_centers(bin_ns, range_ns)
    if len(coincidences) == 0:
        return centers[:0], np.zeros(0, dtype=np.int64)
    dt_ns = coincidences.delta_t_ps / 1000.0
    idx = np.floor(dt_ns / bin_ns + 0.5).astype(np.int64) + len(centers) // 2
    # clip the rare overflow into the edge bins so counts sum to the coincidences
    idx = np.clip(idx, 0, len(centers) - 1)
    return centers, np.bincount(idx, minlength=len(centers)).astype(np.int64)
