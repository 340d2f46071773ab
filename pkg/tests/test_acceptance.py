"""Acceptance criteria, one test each.  Every test records a pass/fail line
that is printed in the pytest terminal summary (or directly when this file
is run as a script)."""

import itertools
import random
import time

from acceptance_log import record
from generators import random_document, random_stream

from seqannot.corpus import ClipRecord, Session, emit_cutlist, index_from_parts
from seqannot.dialogue_sim import annotate_log, exchange_clips, load_machine, log_to_document, simulate
from seqannot.dialogue_sim import example_machine_config, example_script
from seqannot.label_grammar import (
    Directed,
    LabelSequence,
    Plain,
    TagRegistry,
    lint_labels,
    match_label_query,
    parse_label_string,
    parse_token_pattern,
    serialize_label_sequence,
)
from seqannot.samples import SAMPLE1_LABELS, SAMPLE1_LINES, sample1_stream, sample2_transcript
from seqannot.sequence_engine import (
    ActionEvent,
    Lapse,
    ResponseGap,
    canonical_order,
    check_invariants,
    classify_silence,
    close_out,
    export_to_tiers,
    import_from_tiers,
    latencies,
    ledger_json,
    lint_ledger,
    replay,
    stacking_string,
)
from seqannot.tiers import export_document, import_annotation_document
from seqannot.transcript import measured_gap


def _start(line):
    return SAMPLE1_LINES[line][0]


# -- 1 ----------------------------------------------------------------------------


def test_criterion_1_label_grammar_golden():
    t0 = time.perf_counter()
    seq = parse_label_string(SAMPLE1_LABELS)
    expected = (
        Directed("h", "greeting", 1, "p"),
        Directed("h", "question", None, "p"),
        Plain("silence"),
        Directed("p", "greeting", 2, "h"),
    )
    text = serialize_label_sequence(seq)
    elapsed = time.perf_counter() - t0
    ok = seq.tokens == expected and text == SAMPLE1_LABELS and not seq.diagnostics and elapsed < 1.0
    record(1, ok, f"4 tokens, round trip identity, {elapsed * 1000:.2f} ms")
    assert ok


# -- 2 ----------------------------------------------------------------------------


def test_criterion_2_sample1_replay_golden():
    ledger = replay(sample1_stream()).ledger
    ev = ledger.events

    def row(p):
        sat = None if p.satisfied_by is None else (ev[p.satisfied_by].producer, ev[p.satisfied_by].category)
        return (p.thread, ev[p.opened_by].category, p.opened_at_ms, p.status, p.closed_at_ms, sat,
                p.abandon_reason, tuple(ev[d].category for d in p.delays), tuple(sorted(p.targets)))

    got = [row(p) for p in ledger.projections]
    laughs = ("laughter", "laughter")
    expected = [
        ("A", "greeting1", _start(1), "satisfied", _start(3), ("Hum1", "greeting2"), None, (), ()),
        ("B", "offer", _start(1), "satisfied", 5000, ("Hum1", "acceptance"), None, laughs, ()),
        ("A", "howareyou", _start(5), "abandoned", _start(9), None, "superseded", (), ()),
        ("B", "acceptance", 5000, "satisfied", _start(9), ("Pep", "offer"), None, (), ()),
        ("C", "repair_init", _start(7), "satisfied", _start(9), ("Pep", "offer"), None, (), (3, 4)),
        ("B", "offer", _start(9), "open", None, None, None, (), ()),
    ]
    delays_on_line4 = all(SAMPLE1_LINES[4][0] <= ev[d].start_ms < SAMPLE1_LINES[4][1]
                          for d in ledger.projections[1].delays)
    ok = got == expected and delays_on_line4
    record(2, ok, "threads A/B/C match the walkthrough exactly")
    assert got == expected
    assert delays_on_line4


# -- 3 ----------------------------------------------------------------------------


def test_criterion_3_silence_classification():
    ledger = replay(sample1_stream()).ledger
    line2 = classify_silence(ledger, SAMPLE1_LINES[2])
    line8 = classify_silence(ledger, SAMPLE1_LINES[8])
    pair = replay([
        ActionEvent(0, 1000, "Pep", "greeting1", awaited_next={"greeting2"}),
        ActionEvent(1500, 2000, "Hum", "greeting2"),
    ]).ledger
    after = classify_silence(pair, (2000, 3000))
    ok = (
        isinstance(line2, ResponseGap)
        and line2.awaiting == (("A", frozenset({"greeting2"})),
                               ("B", frozenset({"acceptance", "rejection", "request", "question"})))
        and isinstance(line8, ResponseGap) and line8.threads == ("A", "B", "C")
        and isinstance(after, Lapse)
    )
    record(3, ok, f"line 2 gap over {getattr(line2, 'threads', None)}, line 8 over "
                  f"{getattr(line8, 'threads', None)}, post-closure {type(after).__name__}")
    assert ok


# -- 4 ----------------------------------------------------------------------------


def test_criterion_4_latency_and_gap():
    lat = dict(latencies(replay(sample1_stream()).ledger))
    gap = measured_gap(sample2_transcript(), 1, 12)
    ok = lat.get("greeting2") == 1000 and gap.duration_ms == 4400 and gap.complete is False and gap.duration_ms <= 6600
    record(4, ok, f"greeting2 latency {lat.get('greeting2')} ms; gap 01->12 {gap.duration_ms} ms "
                  f"complete={gap.complete} <= 6600")
    assert ok


# -- 5 ----------------------------------------------------------------------------


def _lowest_free_problems(ledger):
    """Independent oracle: each projection takes the lowest thread label not
    held (by seq order) by another projection of its framework."""
    from seqannot.sequence_engine import thread_label

    problems = []
    inf = float("inf")
    for p in ledger.projections:
        held = {q.thread for q in ledger.projections
                if q.framework == p.framework and q.id != p.id
                and q.opened_seq < p.opened_seq < (inf if q.closed_seq is None else q.closed_seq)}
        i = 0
        while thread_label(i) in held:
            i += 1
        if p.thread != thread_label(i):
            problems.append(f"projection {p.id} on {p.thread}, lowest free was {thread_label(i)}")
    return problems


def _one_open_problems(ledger):
    problems = []
    seqs = sorted({p.opened_seq for p in ledger.projections} | {p.closed_seq for p in ledger.projections if p.closed_seq})
    for s in seqs:
        live = [(p.framework, p.thread) for p in ledger.projections
                if p.opened_seq <= s and (p.closed_seq is None or p.closed_seq > s)]
        if len(live) != len(set(live)):
            problems.append(f"two open projections on one thread at seq {s}")
    return problems


def _byplay_problems(ledger):
    problems = []
    for p in ledger.projections:
        if p.satisfied_by is not None and ledger.events[p.satisfied_by].framework != p.framework:
            problems.append(f"projection {p.id} satisfied across frameworks")
        for d in p.delays:
            if ledger.events[d].framework != "byplay" or p.framework != "main":
                problems.append(f"projection {p.id} has a non-byplay delay")
    return problems


def test_criterion_5_allocation_fuzz():
    t0 = time.perf_counter()
    failures = []
    for seed in range(1000):
        items = random_stream(random.Random(seed), max_items=50)
        assert len(items) <= 50
        a, b = replay(items), replay(items)
        if ledger_json(a.ledger) != ledger_json(b.ledger) or a.ledger != b.ledger:
            failures.append((seed, "nondeterministic"))
        end = max((getattr(i, "end_ms", i.time_ms) for i in items), default=0)
        final = close_out(a.ledger, end)
        problems = (_lowest_free_problems(final) + _one_open_problems(final) + _byplay_problems(final)
                    + check_invariants(final, terminal=True))
        if problems:
            failures.append((seed, problems[0]))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 10
    record(5, ok, f"1000 sequences, {len(failures)} failures, {elapsed:.2f} s")
    assert not failures, failures[:5]
    assert elapsed < 10


# -- 6 ----------------------------------------------------------------------------


def test_criterion_6_round_trips():
    doc_fail, led_fail = 0, 0
    for seed in range(100):
        doc = random_document(random.Random(seed))
        for fmt in ("interchange", "eaf-subset"):
            if import_annotation_document(export_document(doc, fmt), fmt) != doc:
                doc_fail += 1
    for seed in range(100):
        items = random_stream(random.Random(10_000 + seed))
        ledger = replay(items).ledger
        end = max((getattr(i, "end_ms", i.time_ms) for i in items), default=0) + 1
        back = import_from_tiers(export_to_tiers(ledger, "fuzz", end))
        if back != canonical_order(items) or replay(back).ledger != ledger:
            led_fail += 1
    ok = doc_fail == 0 and led_fail == 0
    record(6, ok, f"100 documents x 2 formats ({doc_fail} failures), 100 ledgers ({led_fail} failures)")
    assert ok


# -- 7 ----------------------------------------------------------------------------

REGISTRY3 = TagRegistry.build(directed=["ask"], plain=["pause"], pairable=["greet"])
SEQ_TOKENS = ("hgreet1p", "haskp", "pause")
PATTERN_SYMBOLS = ("h*p", "?greet?", "pause", "*")
# which token each pattern symbol accepts, written out by hand
ACCEPTS = {
    "h*p": {"hgreet1p", "haskp"},
    "?greet?": {"hgreet1p"},
    "pause": {"pause"},
    "*": {"hgreet1p", "haskp", "pause"},
}


def _oracle(seq_texts, pat_texts):
    for idx in itertools.combinations(range(len(seq_texts)), len(pat_texts)):
        if all(seq_texts[i] in ACCEPTS[p] for i, p in zip(idx, pat_texts)):
            return True
    return False


def test_criterion_7_query_oracle_exhaustive():
    """Every sequence and pattern of length <= 8 whose combined length is <= 9."""
    tok = {t: parse_label_string(t, REGISTRY3).tokens[0] for t in SEQ_TOKENS}
    pat = {p: parse_token_pattern(p, REGISTRY3) for p in PATTERN_SYMBOLS}
    checked, mismatches = 0, []
    for n in range(0, 9):
        for seq_texts in itertools.product(SEQ_TOKENS, repeat=n):
            seq = LabelSequence(tuple(tok[t] for t in seq_texts))
            for k in range(0, min(8, 9 - n) + 1):
                for pat_texts in itertools.product(PATTERN_SYMBOLS, repeat=k):
                    got = match_label_query(seq, [pat[p] for p in pat_texts])
                    checked += 1
                    if bool(got) != _oracle(seq_texts, pat_texts):
                        mismatches.append((seq_texts, pat_texts))
                    elif got and not all(seq_texts[i] in ACCEPTS[p] for i, p in zip(got.span, pat_texts)):
                        mismatches.append((seq_texts, pat_texts, "bad span"))
    ok = not mismatches
    record(7, ok, f"{checked} (sequence, pattern) pairs, {len(mismatches)} disagreements")
    assert ok, mismatches[:5]


# -- 8 ----------------------------------------------------------------------------


def test_criterion_8_simulator_pipeline():
    machine = load_machine(example_machine_config())
    log = simulate(machine, example_script())
    ann = annotate_log(log, machine)
    reparsed = parse_label_string(ann.label_string)
    parses = not reparsed.diagnostics and not lint_labels(reparsed) and serialize_label_sequence(reparsed) == ann.label_string
    lint = lint_ledger(replay(ann.events).ledger)
    doc = log_to_document(log, machine, session_id="sim")
    clips = [ClipRecord(cid, "sim", a, b, parse_label_string(lab)) for cid, a, b, lab in exchange_clips(log, machine)]
    index, diags = index_from_parts([Session("sim", doc)], clips)
    manifest = emit_cutlist(index)
    preserved = manifest.total_duration_ms() == sum(c.duration_ms for c in clips) and all(r.ok for r in manifest.rows)
    ok = parses and not lint and not diags and preserved and clips
    record(8, ok, f"labels parse cleanly={parses}, ledger lint={len(lint)}, "
                  f"cut-list {manifest.total_duration_ms()} ms over {len(clips)} clips")
    assert ok


# -- 9 ----------------------------------------------------------------------------


def test_criterion_9_stacking_strings():
    four = [
        ActionEvent(0, 1000, "P", "offer", awaited_next={"acceptance"}),
        ActionEvent(1500, 2000, "H", "question", awaited_next={"answer"}),
        ActionEvent(2500, 3000, "P", "answer"),
        ActionEvent(3500, 4000, "H", "acceptance"),
    ]
    interleaved = stacking_string(replay(four).ledger)
    single = stacking_string(replay([four[0], four[3]]).ledger)
    ok = interleaved == "[P1->H2->P2->H1]" and single == "[P1->H1]"
    record(9, ok, f"{interleaved} and {single}")
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
