"""Columnar detection streams and their CSV form.

Public streams: ``gate_id,party,time_ps,detector_id,basis,bit``.
The truth log adds a ``truth_tag`` column and lives in its own file.
Every file starts with a ``#`` provenance line of ``key=value`` pairs.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from . import __version__

STREAM_COLUMNS = ("gate_id", "party", "time_ps", "detector_id", "basis", "bit")
TRUTH_TAGS = ("signal_central", "signal_side", "dark", "accidental")


class EventRecord(NamedTuple):
    gate_id: int
    party: str
    time_ps: int
    detector_id: int
    basis: int
    bit: int


@dataclass(frozen=True, eq=False)
class Stream:
    party: str
    gate_id: np.ndarray
    time_ps: np.ndarray
    detector_id: np.ndarray
    basis: np.ndarray
    bit: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.gate_id)
        for name in ("time_ps", "detector_id", "basis", "bit"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.gate_id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Stream):
            return NotImplemented
        return self.party == other.party and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("gate_id", "time_ps", "detector_id", "basis", "bit")
        )

    def records(self) -> Iterator[EventRecord]:
        for row in zip(
            self.gate_id.tolist(), self.time_ps.tolist(), self.detector_id.tolist(),
            self.basis.tolist(), self.bit.tolist(),
        ):
            yield EventRecord(row[0], self.party, *row[1:])

    @classmethod
    def empty(cls, party: str) -> "Stream":
        z = np.zeros(0, dtype=np.int64)
        return cls(party, z, z.copy(), z.astype(np.int8), z.astype(np.int8), z.astype(np.int8))

    @classmethod
    def from_records(cls, party: str, records) -> "Stream":
        rows = list(records)
        if not rows:
            return cls.empty(party)
        g, t, d, b, x = (np.asarray(c) for c in zip(*[(r[0], r[2], r[3], r[4], r[5]) for r in rows]))
        return cls(
            party, g.astype(np.int64), t.astype(np.int64),
            d.astype(np.int8), b.astype(np.int8), x.astype(np.int8),
        )

    def take(self, index) -> "Stream":
        return Stream(
            self.party, self.gate_id[index], self.time_ps[index],
            self.detector_id[index], self.basis[index], self.bit[index],
        )


def provenance_line(**meta) -> str:
    parts = [f"etqkd={__version__}"] + [f"{k}={v}" for k, v in meta.items() if v is not None]
    return "# " + " ".join(parts)


def read_provenance(path: Path) -> dict[str, str]:
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for token in line[1:].split():
                key, sep, value = token.partition("=")
                if sep:
                    meta[key] = value
    return meta


def _format_rows(columns, party: str, tags=None) -> str:
    buf = io.StringIO()
    lists = [c.tolist() for c in columns]
    if tags is None:
        for g, t, d, b, x in zip(*lists):
            buf.write(f"{g},{party},{t},{d},{b},{x}\n")
    else:
        names = [TRUTH_TAGS[i] for i in tags.tolist()]
        for (g, t, d, b, x), tag in zip(zip(*lists), names):
            buf.write(f"{g},{party},{t},{d},{b},{x},{tag}\n")
    return buf.getvalue()


def write_stream(path: Path, stream: Stream, header: str, truth: np.ndarray | None = None) -> None:
    cols = (stream.gate_id, stream.time_ps, stream.detector_id, stream.basis, stream.bit)
    names = STREAM_COLUMNS + (("truth_tag",) if truth is not None else ())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        fh.write(",".join(names) + "\n")
        fh.write(_format_rows(cols, stream.party, truth))


def read_stream(path: Path, with_truth: bool = False) -> tuple[Stream, np.ndarray | None]:
    """Read a stream file; returns the stream and, if requested, the truth tag codes."""
    party = None
    gate, time, det, basis, bit, tags = [], [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                names = tuple(line.split(","))
                if names[: len(STREAM_COLUMNS)] != STREAM_COLUMNS:
                    raise ValueError(f"{path}:{lineno}: unexpected header {line!r}")
                if with_truth and "truth_tag" not in names:
                    raise ValueError(f"{path}: no truth_tag column")
                header_seen = True
                continue
            fields = line.split(",")
            try:
                g, p, t, d, b, x = fields[:6]
                row = (int(g), int(t), int(d), int(b), int(x))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed record {line!r}") from None
            if party is None:
                party = p
            elif p != party:
                raise ValueError(f"{path}:{lineno}: mixed parties {party!r} and {p!r}")
            gate.append(row[0]); time.append(row[1]); det.append(row[2])
            basis.append(row[3]); bit.append(row[4])
            if with_truth:
                tags.append(TRUTH_TAGS.index(fields[6]))
    stream = Stream(
        party or "unknown",
        np.asarray(gate, dtype=np.int64), np.asarray(time, dtype=np.int64),
        np.asarray(det, dtype=np.int8), np.asarray(basis, dtype=np.int8),
        np.asarray(bit, dtype=np.int8),
    )
    return stream, (np.asarray(tags, dtype=np.int8) if with_truth else None)
