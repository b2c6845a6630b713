import numpy as np
import pytest

from etqkd.sifting import Coincidences, coincidence_histogram, in_window, match_coincidences, sift
from etqkd.streams import Stream, read_provenance, read_stream, write_stream, provenance_line


def stream(party, rows):
    if not rows:
        return Stream.empty(party)
    g, t, d, b, x = (np.asarray(c) for c in zip(*rows))
    return Stream(party, g, t, d.astype(np.int8), b.astype(np.int8), x.astype(np.int8))


ALICE = stream("alice", [(0, 0, 0, 0, 0), (1, 0, 1, 0, 1), (2, 0, 2, 1, 0), (3, 0, 3, 1, 1)])


def test_window_is_closed():
    assert list(in_window(np.array([-550, 550, 551, -551]), 1.1)) == [True, True, False, False]


def test_earliest_click_wins():
    bob = stream("bob", [(0, 3000, 1, 0, 1), (0, 100, 0, 0, 0), (2, -200, 1, 1, 1)])
    m = match_coincidences(ALICE, bob, 1.1)
    assert m.duplicate_gates == 1
    assert list(m.all.delta_t_ps) == [100, -200]
    assert list(m.inside.gate_id) == [0, 2]


def test_discard_mode():
    bob = stream("bob", [(0, 100, 0, 0, 0), (0, 3000, 1, 0, 1), (2, -200, 1, 1, 1)])
    m = match_coincidences(ALICE, bob, 1.1, multi="discard")
    assert list(m.all.gate_id) == [2]


def test_bob_without_alice_ignored():
    bob = stream("bob", [(9, 0, 0, 0, 0)])
    assert len(match_coincidences(ALICE, bob, 1.1).all) == 0


def test_unsorted_input_rejected():
    bob = stream("bob", [(2, 0, 0, 0, 0), (1, 0, 0, 0, 0)])
    with pytest.raises(ValueError):
        match_coincidences(ALICE, bob, 1.1)


def test_sift_counts():
    c = Coincidences.from_records([
        (0, 0, 0, 0, 0, 0),
        (1, 0, 0, 0, 1, 0),
        (2, 0, 1, 0, 1, 1),
        (3, 0, 1, 1, 1, 1),
    ])
    rep = sift(c, all_count=8, duration_s=2.0)
    assert (rep.coincidences, rep.sifted, rep.errors) == (4, 3, 1)
    assert rep.measured_qber == pytest.approx(1 / 3)
    assert rep.measured_q_s == pytest.approx(0.75)
    assert rep.window_acceptance == pytest.approx(0.5)
    assert rep.sifted_rate_hz == pytest.approx(1.5)


def test_partial_disclosure():
    n = 10
    c = Coincidences.from_records([(i, 0, 0, 0, 0, int(i % 2 == 1)) for i in range(n)])
    rep = sift(c, disclose_every=2)
    assert rep.disclosed == 5 and rep.errors == 0
    assert len(rep.alice_bits) == n


def test_empty_sift():
    rep = sift(Coincidences.from_records([]))
    assert rep.measured_qber is None and not rep.secure()


def test_histogram_counts_everything():
    c = Coincidences.from_records([(i, dt, 0, 0, 0, 0) for i, dt in enumerate([-3300, 0, 10, 3300, 9999])])
    t, counts = coincidence_histogram(c, 0.5, 8.0)
    assert counts.sum() == 5
    assert counts[np.argmin(np.abs(t))] == 2


def test_stream_csv_round_trip(tmp_path):
    bob = stream("bob", [(0, 100, 0, 0, 0), (2, -200, 1, 1, 1)])
    path = tmp_path / "bob.csv"
    write_stream(path, bob, provenance_line(seed=7, duration_s=1.0), truth=np.array([0, 2]))
    back, tags = read_stream(path, with_truth=True)
    assert back == bob
    assert list(tags) == [0, 2]
    assert read_provenance(path)["seed"] == "7"


def test_malformed_stream_line(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("gate_id,party,time_ps,detector_id,basis,bit\n0,bob,abc,0,0,0\n")
    with pytest.raises(ValueError, match=":2:"):
        read_stream(path)
