import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqannot.diagnostics import TranscriptError
from seqannot.samples import sample1_transcript, sample2_transcript
from seqannot.transcript import (
    MicroPause,
    Nonverbal,
    Silence,
    Turn,
    Word,
    measured_gap,
    parse_transcript,
    serialize_transcript,
    to_records,
)


def test_turn_with_micro_pause_and_rising_final():
    (turn,) = parse_transcript("1 Pep : hi (.) can I help you?").events
    assert isinstance(turn, Turn) and turn.speaker == "Pep" and turn.line_no == 1
    assert [type(x) for x in turn.items] == [Word, MicroPause, Word, Word, Word, Word]
    assert [w.text for w in turn.items if isinstance(w, Word)] == ["hi", "can", "I", "help", "you"]
    assert turn.items[-1].rising_final and not turn.items[0].rising_final


def test_standalone_silence_line():
    (s,) = parse_transcript("2 (1.0)").events
    assert isinstance(s, Silence) and s.duration_ms == 1000 and s.speaker is None and not s.micro


def test_comma_decimal_duration():
    (s,) = parse_transcript("3 (0,4)").events
    assert s.duration_ms == 400


def test_prolongation_degree():
    (turn,) = parse_transcript("12 Hum: hu::::m").events
    (w,) = turn.items
    assert (w.text, w.prolongation_degree) == ("hum", 4)


def test_nonverbal_event():
    events = parse_transcript("4 ((hum1 and hum2 laugh))").events
    assert events == (Nonverbal(4, "hum1 and hum2 laugh", None, 0),)


def test_silence_inside_turn_splits_it():
    events = parse_transcript("5 Hum: yes (0.5) please").events
    assert [type(e) for e in events] == [Turn, Silence, Turn]
    assert events[1].duration_ms == 500


def test_short_measured_silence_is_a_warning():
    t = parse_transcript("1 (0.1)")
    assert t.events[0].duration_ms == 100
    assert [d.code for d in t.diagnostics] == ["short_silence"]


@pytest.mark.parametrize("text", [
    "1 (1.x)",
    "1 Pep: hi ((laughs",
    "2 Pep: hi\n1 Hum: hi",
    "3 hello there",
])
def test_errors(text):
    with pytest.raises(TranscriptError):
        parse_transcript(text)


def test_error_carries_line_number():
    with pytest.raises(TranscriptError) as exc:
        parse_transcript("1 Pep: hi\n7 (2.x)")
    assert exc.value.line_no == 7


def test_sample1_gap_lines_1_to_3():
    gap = measured_gap(sample1_transcript(), 1, 3)
    assert (gap.duration_ms, gap.complete) == (1000, True)


def test_adjacent_lines_have_zero_gap():
    gap = measured_gap(sample1_transcript(), 2, 3)
    assert (gap.duration_ms, gap.complete) == (0, True)


def test_sample2_gap_is_a_lower_bound():
    gap = measured_gap(sample2_transcript(), 1, 12)
    # 0.4 + 1.0 + 0.9 + 0.3 + 0.2 + 1.6 seconds of measured silence
    assert gap.duration_ms == 400 + 1000 + 900 + 300 + 200 + 1600
    assert gap.complete is False
    assert gap.duration_ms <= 6600


def test_gap_unknown_line():
    with pytest.raises(KeyError):
        measured_gap(sample1_transcript(), 1, 99)


@pytest.mark.parametrize("sample", [sample1_transcript, sample2_transcript])
def test_samples_round_trip(sample):
    t = sample()
    assert parse_transcript(serialize_transcript(t)) == t


def test_records_are_json_lines():
    import json

    lines = to_records(sample1_transcript()).splitlines()
    assert len(lines) == len(sample1_transcript().events)
    assert all(isinstance(json.loads(x), dict) for x in lines)


# Gap additivity with strictly-between semantics: the silence measured on the
# middle line itself must be added back in.
durations = st.lists(st.one_of(st.none(), st.integers(2, 40).map(lambda d: d * 100)), min_size=3, max_size=12)


def _build(ds):
    lines = []
    for i, d in enumerate(ds, 1):
        if d is None:
            lines.append(f"{i} X: word")
        else:
            lines.append(f"{i} ({d // 1000}.{(d % 1000) // 100})")
    return parse_transcript("\n".join(lines))


@given(durations, st.data())
def test_gap_additivity(ds, data):
    t = _build(ds)
    a = data.draw(st.integers(1, len(ds) - 2))
    b = data.draw(st.integers(a + 1, len(ds) - 1))
    c = data.draw(st.integers(b + 1, len(ds)))
    whole, left, right = measured_gap(t, a, c), measured_gap(t, a, b), measured_gap(t, b, c)
    middle = ds[b - 1] or 0
    assert whole.duration_ms == left.duration_ms + right.duration_ms + middle
    assert whole.complete == (left.complete and right.complete and ds[b - 1] is not None)
