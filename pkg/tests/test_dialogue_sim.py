import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqannot.diagnostics import MachineConfigError
from seqannot.dialogue_sim import (
    LogEvent,
    Pause,
    SimLog,
    Utterance,
    annotate_log,
    example_machine_config,
    example_script,
    exchange_clips,
    load_machine,
    log_to_document,
    parse_script,
    simulate,
    step,
)
from seqannot.label_grammar import lint_labels, parse_label_string
from seqannot.sequence_engine import lint_ledger, replay
from seqannot.tiers import validate_tiers

MINIMAL = """
initial s
[state s]
rule hello -> s : hi @greeting2
"""

GREETER = """
initial greet
robot Pep
user Hum
fallback reissue how can I help you? @offer

[state greet]
rule hello hi -> offered : hi (.) can I help you? @greeting2+offer

[state offered]
rule bye -> greet : goodbye @closing2

[awaits]
greeting1 = greeting2
offer = acceptance rejection request question
"""


@pytest.fixture
def greeter():
    return load_machine(GREETER)


def test_minimal_config():
    m = load_machine(MINIMAL)
    assert m.states == {"s"} and m.initial == "s" and len(m.rules) == 1


def test_undeclared_target_names_state():
    with pytest.raises(MachineConfigError, match="nowhere"):
        load_machine("initial s\n[state s]\nrule hello -> nowhere : hi @greeting2\n")


def test_duplicate_keyword_is_ambiguous():
    cfg = "initial s\n[state s]\nrule hello -> s : a @greeting2\nrule hi hello -> s : b @greeting2\n"
    with pytest.raises(MachineConfigError, match="ambiguous trigger"):
        load_machine(cfg)


def test_same_keyword_in_different_states_is_fine():
    load_machine("initial s\n[state s]\nrule hello -> t : a @greeting2\n[state t]\nrule hello -> s : b @greeting2\n")


def test_empty_trigger():
    with pytest.raises(MachineConfigError):
        load_machine("initial s\n[state s]\nrule -> s : hi @greeting2\n")


def test_unknown_category():
    with pytest.raises(MachineConfigError):
        load_machine("initial s\n[state s]\nrule hi -> s : hi @dance\n")


def test_response_escapes():
    m = load_machine("initial s\n[state s]\nrule mail -> s : write to desk\\@library.org @answer\n")
    resp, _ = step(m, "s", "mail")
    assert resp.text == "write to desk@library.org" and resp.categories == ("answer",)


def test_step_opening_prompt(greeter):
    resp, nxt = step(greeter, "greet", "Hello there")
    assert resp.text == "hi (.) can I help you?" and nxt == "offered"
    assert resp.categories == ("greeting2", "offer")


def test_step_fallback_reissues_offer(greeter):
    resp, nxt = step(greeter, "offered", "xyzzy")
    assert resp.text == "how can I help you?" and nxt == "offered"


def test_step_empty_utterance_keeps_state(greeter):
    resp, nxt = step(greeter, "offered", "")
    assert resp.source == "fallback" and nxt == "offered"


def test_step_stay_silent_fallback():
    m = load_machine(MINIMAL)
    assert step(m, "s", "nothing") == (None, "s")


def test_keywords_match_whole_words_case_insensitively(greeter):
    assert step(greeter, "greet", "HI!")[1] == "offered"
    assert step(greeter, "greet", "this")[1] == "greet"


def test_step_unknown_state(greeter):
    with pytest.raises(KeyError):
        step(greeter, "missing", "hello")


def test_simulate_timing(greeter):
    log = simulate(greeter, [Utterance("hello", ("greeting1",)), Pause(1000)], response_delay_ms=500)
    user, robot, silence = log.events
    assert (user.speaker, user.start_ms, user.end_ms) == ("Hum", 0, 300)
    assert (robot.speaker, robot.start_ms) == ("Pep", 300 + 500)
    assert silence.is_silence and silence.start_ms == robot.end_ms and silence.end_ms - silence.start_ms == 1000


def test_simulate_only_pauses(greeter):
    log = simulate(greeter, [Pause(500), Pause(700)])
    assert all(e.is_silence for e in log.events) and log.end_ms == 1200


def test_simulate_is_deterministic(greeter):
    assert simulate(greeter, example_script()) == simulate(greeter, example_script())


def test_parse_script():
    assert parse_script("say greeting1 : hello\npause 250\nsay request 900 : toilets?") == [
        Utterance("hello", ("greeting1",)), Pause(250), Utterance("toilets?", ("request",), 900)]
    with pytest.raises(ValueError):
        parse_script("shout : hey")


def test_annotate_sample_shaped_log(greeter):
    log = SimLog((
        LogEvent("Pep", "hi can I help you", 0, 1500, ("greeting1", "offer"), "rule"),
        LogEvent(None, None, 1500, 2500),
        LogEvent("Hum", "hi", 2500, 2900, ("greeting2",), "script"),
    ), "greet")
    ann = annotate_log(log, greeter)
    assert ann.label_string == "pgreeting1h, pofferh, silence, hgreeting2p"
    assert parse_label_string(ann.label_string).diagnostics == ()
    ledger = replay(ann.events).ledger
    assert ledger.projections[0].status == "satisfied" and ledger.projections[0].matched == "greeting2"


def test_annotate_empty_log(greeter):
    assert annotate_log(SimLog((), "greet"), greeter).label_string == ""


def test_short_silence_gets_no_label(greeter):
    log = SimLog((LogEvent(None, None, 0, 999),), "greet")
    assert annotate_log(log, greeter).label_string == ""


def test_example_pipeline():
    m = load_machine(example_machine_config())
    log = simulate(m, example_script())
    ann = annotate_log(log, m)
    seq = parse_label_string(ann.label_string)
    assert seq.diagnostics == () and lint_labels(seq) == []
    assert lint_ledger(replay(ann.events).ledger) == []
    doc = log_to_document(log, m)
    assert [d for d in validate_tiers(doc) if d.severity == "error"] == []
    clips = exchange_clips(log, m)
    assert [c[0] for c in clips] == ["x001", "x002", "x003"]
    assert all(parse_label_string(c[3]).diagnostics == () for c in clips)


WORDS = st.sampled_from(["hello", "hi", "toilets", "bye", "thanks", "wifi", "xyzzy", "please", "book"])
SCRIPTS = st.lists(
    st.one_of(st.builds(Pause, st.integers(0, 3000)),
              st.builds(lambda ws: Utterance(" ".join(ws), ("request",)), st.lists(WORDS, min_size=1, max_size=5))),
    max_size=10,
)


@settings(max_examples=60)
@given(SCRIPTS)
def test_log_is_monotone_and_justified(script):
    m = load_machine(example_machine_config())
    log = simulate(m, script)
    starts = [e.start_ms for e in log.events]
    assert starts == sorted(starts)
    assert all(e.end_ms >= e.start_ms for e in log.events)
    robot = [e for e in log.events if e.speaker == m.robot]
    assert all(e.source.startswith(("rule ", "fallback")) for e in robot)
    # every robot event directly follows a user utterance
    for i, e in enumerate(log.events):
        if e.speaker == m.robot:
            assert i > 0 and log.events[i - 1].speaker == m.user


@settings(max_examples=60)
@given(SCRIPTS)
def test_annotations_always_parse_cleanly(script):
    m = load_machine(example_machine_config())
    ann = annotate_log(simulate(m, script), m)
    assert parse_label_string(ann.label_string).diagnostics == ()
    replay(ann.events)
