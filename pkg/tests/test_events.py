import pytest

from crowdlabel.events import (
    Event,
    EventWriter,
    LogCorruptionError,
    LogicalClock,
    Tee,
    check_contiguity,
    read_log,
)


def ev(seq, kind="ping", **payload):
    return Event(seq=seq, ts=seq - 1, kind=kind, payload=payload)


class TestEncoding:
    def test_round_trip(self):
        event = ev(3, "hit_issued", hit_id="h1", n=5)
        assert Event.decode(event.encode()) == event

    def test_canonical_key_order(self):
        a = Event(1, 0, "k", {"b": 1, "a": 2})
        b = Event(1, 0, "k", {"a": 2, "b": 1})
        assert a.encode() == b.encode()

    def test_decode_rejects_garbage(self):
        with pytest.raises(LogCorruptionError):
            Event.decode("{not json")
        with pytest.raises(LogCorruptionError):
            Event.decode('{"seq": 1}')


class TestContiguity:
    def test_accepts_gap_free(self):
        events = [ev(1), ev(2), ev(3)]
        assert check_contiguity(events) == events

    def test_rejects_gap(self):
        with pytest.raises(LogCorruptionError):
            check_contiguity([ev(1), ev(3)])

    def test_rejects_duplicate(self):
        with pytest.raises(LogCorruptionError):
            check_contiguity([ev(1), ev(1)])

    def test_custom_start(self):
        assert check_contiguity([ev(5), ev(6)], start=5)
        with pytest.raises(LogCorruptionError):
            check_contiguity([ev(5)], start=1)


class TestWriter:
    def test_write_then_read(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with EventWriter(path) as writer:
            writer(ev(1))
            writer(ev(2))
        assert read_log(path) == [ev(1), ev(2)]

    def test_append_across_openings(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with EventWriter(path) as writer:
            writer(ev(1))
        with EventWriter(path) as writer:
            writer(ev(2))
        assert [e.seq for e in read_log(path)] == [1, 2]

    def test_read_names_corrupt_line(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text(ev(1).encode() + "\nnot json\n", encoding="utf-8")
        with pytest.raises(LogCorruptionError) as err:
            read_log(path)
        assert ":2:" in str(err.value)


def test_logical_clock():
    clock = LogicalClock()
    assert [clock() for _ in range(3)] == [0, 1, 2]
    assert LogicalClock(7)() == 7


def test_tee_fans_out():
    seen_a, seen_b = [], []
    tee = Tee(seen_a.append, None, seen_b.append)
    tee(ev(1))
    assert seen_a == [ev(1)] and seen_b == [ev(1)]
