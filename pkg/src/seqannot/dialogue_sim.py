"""Keyword-triggered dialogue machine and a simulator that turns scripted
user input into annotated interaction logs.

Machine config (plain text, ``#`` lines are comments)::

    initial idle
    fallback reissue how can I help you? @offer     # or: fallback stay_silent
    robot Pep
    user Hum
    silence_threshold_ms 1000

    [state idle]
    rule hello hi -> offered : hi (.) can I help you? @greeting2+offer

    [state offered]
    rule toilets toilet -> offered : the toilets are downstairs @answer

    [awaits]
    offer = acceptance rejection request question

    [labels]
    howareyou = question

In a response text ``\\@`` is a literal ``@`` and ``\\\\`` a literal
backslash; the first unescaped `` @`` starts the category list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from .diagnostics import MachineConfigError
from .label_grammar import Directed, LabelSequence, Plain, TagRegistry, default_registry, serialize_label_sequence
from .sequence_engine import REPAIR_INIT, ActionEvent, CategoryRegistry, default_categories
from .tiers import AlignmentEntry, AnnotationDocument, Segment, Tier

_WORD = re.compile(r"[a-z0-9']+")
_KEYWORD = re.compile(r"^[a-z0-9']+$")

DEFAULT_LABELS = {"howareyou": "question", "repair_init": "repair", "repair_account": "repair"}


@dataclass(frozen=True)
class Rule:
    source: str
    keywords: frozenset
    response: str
    categories: tuple
    target: str

    def fires_on(self, words) -> bool:
        return bool(self.keywords & set(words))


@dataclass(frozen=True)
class Fallback:
    text: str | None = None  # None means stay silent
    categories: tuple = ()


@dataclass(frozen=True)
class DialogueMachine:
    states: frozenset
    initial: str
    rules: tuple
    fallback: Fallback = Fallback()
    robot: str = "Pep"
    user: str = "Hum"
    awaits: dict = field(default_factory=dict, hash=False)
    labels: dict = field(default_factory=dict, hash=False)
    silence_threshold_ms: int = 1000
    categories: CategoryRegistry = field(default_factory=default_categories, hash=False)

    def rules_from(self, state: str) -> list[Rule]:
        return [r for r in self.rules if r.source == state]


def _unescape_response(text: str, lineno: int) -> tuple[str, tuple]:
    out, i = [], 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text) and text[i + 1] in "@\\":
            out.append(text[i + 1])
            i += 2
            continue
        if c == "@" and (i == 0 or text[i - 1].isspace()):
            cats = tuple(c for c in text[i + 1 :].strip().split("+") if c)
            if not cats:
                raise MachineConfigError(f"line {lineno}: empty category after '@'")
            return "".join(out).strip(), cats
        out.append(c)
        i += 1
    raise MachineConfigError(f"line {lineno}: response has no '@<category>'")


def load_machine(config: bytes | str, tag_registry: TagRegistry | None = None) -> DialogueMachine:
    text = config.decode("utf-8") if isinstance(config, bytes) else config
    states: list[str] = []
    rules: list[Rule] = []
    awaits: dict[str, frozenset] = {}
    labels = dict(DEFAULT_LABELS)
    extra_categories: set[str] = set()
    opts = {"initial": None, "fallback": Fallback(), "robot": "Pep", "user": "Hum", "threshold": 1000}
    section, state = None, None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = re.match(r"^\[(state\s+(\S+)|awaits|labels)\]$", line)
        if m:
            section = "state" if m.group(2) else m.group(1)
            state = m.group(2)
            if state:
                if state in states:
                    raise MachineConfigError(f"line {lineno}: state {state!r} declared twice")
                states.append(state)
            continue
        if section == "state":
            rm = re.match(r"^rule\s+(.+?)\s+->\s+(\S+)\s+:\s+(.*)$", line)
            if not rm:
                raise MachineConfigError(f"line {lineno}: expected 'rule <keywords> -> <target> : <response> @<category>'")
            keywords = rm.group(1).split()
            bad = [k for k in keywords if not _KEYWORD.match(k)]
            if bad:
                raise MachineConfigError(f"line {lineno}: keywords must be lowercase words: {bad}")
            response, cats = _unescape_response(rm.group(3), lineno)
            rules.append(Rule(state, frozenset(keywords), response, cats, rm.group(2)))
        elif section in ("awaits", "labels"):
            key, sep, value = line.partition("=")
            if not sep:
                raise MachineConfigError(f"line {lineno}: expected '<category> = ...'")
            if section == "awaits":
                awaits[key.strip()] = frozenset(value.split())
            else:
                labels[key.strip()] = value.strip()
        else:
            word, _, rest = line.partition(" ")
            rest = rest.strip()
            if word == "initial":
                opts["initial"] = rest
            elif word == "robot" and rest:
                opts["robot"] = rest
            elif word == "user" and rest:
                opts["user"] = rest
            elif word == "silence_threshold_ms":
                opts["threshold"] = int(rest)
            elif word == "categories":
                extra_categories.update(rest.split())
            elif word == "fallback":
                if rest == "stay_silent":
                    opts["fallback"] = Fallback()
                elif rest.startswith("reissue "):
                    ftext, fcats = _unescape_response(rest[len("reissue "):], lineno)
                    opts["fallback"] = Fallback(ftext, fcats)
                else:
                    raise MachineConfigError(f"line {lineno}: fallback must be 'stay_silent' or 'reissue <text> @<category>'")
            else:
                raise MachineConfigError(f"line {lineno}: unknown directive {word!r}")

    registry = default_categories().extended(extra_categories)
    machine = DialogueMachine(
        frozenset(states), opts["initial"] or (states[0] if states else ""), tuple(rules),
        opts["fallback"], opts["robot"], opts["user"], awaits, labels, opts["threshold"], registry,
    )
    validate_machine(machine)
    return machine


def validate_machine(m: DialogueMachine) -> None:
    if not m.states:
        raise MachineConfigError("machine declares no states")
    if m.initial not in m.states:
        raise MachineConfigError(f"initial state {m.initial!r} is not declared")
    for r in m.rules:
        if r.target not in m.states:
            raise MachineConfigError(f"rule from {r.source!r} targets undeclared state {r.target!r}")
        if not r.keywords:
            raise MachineConfigError(f"rule from {r.source!r} has an empty trigger")
    for s in m.states:
        seen: dict[str, int] = {}
        for i, r in enumerate(m.rules_from(s)):
            for k in r.keywords:
                if k in seen:
                    raise MachineConfigError(f"ambiguous trigger {k!r} in state {s!r}")
                seen[k] = i
    used = {c for r in m.rules for c in r.categories} | set(m.fallback.categories)
    used |= set(m.awaits) | {c for v in m.awaits.values() for c in v}
    unknown = used - m.categories.names
    if unknown:
        raise MachineConfigError(f"unknown action categories: {sorted(unknown)}")
    if m.awaits.get(REPAIR_INIT):
        raise MachineConfigError("repair_init cannot await categories; it opens a repair projection")


def example_machine_config() -> str:
    return resources.files("seqannot.data").joinpath("library_machine.conf").read_text("utf-8")


def example_script() -> str:
    return resources.files("seqannot.data").joinpath("library_script.txt").read_text("utf-8")


# -- stepping ---------------------------------------------------------------


@dataclass(frozen=True)
class Response:
    text: str
    categories: tuple
    source: str  # "rule <state>#<n>" or "fallback"


def words_of(utterance: str) -> list[str]:
    return _WORD.findall(utterance.lower())


def step(machine: DialogueMachine, state: str, utterance: str) -> tuple[Response | None, str]:
    """Fire the rule triggered by the utterance, or apply the fallback.

    When keywords of several rules occur, the rule whose keyword appears
    first in the utterance wins."""
    if state not in machine.states:
        raise KeyError(f"unknown state {state!r}")
    words = words_of(utterance)
    best = None
    for n, rule in enumerate(machine.rules_from(state)):
        hits = [i for i, w in enumerate(words) if w in rule.keywords]
        if hits and (best is None or hits[0] < best[0]):
            best = (hits[0], n, rule)
    if best is not None:
        _, n, rule = best
        return Response(rule.response, rule.categories, f"rule {state}#{n}"), rule.target
    fb = machine.fallback
    if fb.text is None:
        return None, state
    return Response(fb.text, fb.categories, "fallback"), state


# -- simulation -------------------------------------------------------------


@dataclass(frozen=True)
class Utterance:
    text: str
    categories: tuple = ()
    duration_ms: int | None = None


@dataclass(frozen=True)
class Pause:
    duration_ms: int


@dataclass(frozen=True)
class LogEvent:
    speaker: str | None  # None for silence
    text: str | None
    start_ms: int
    end_ms: int
    categories: tuple = ()
    source: str = ""

    @property
    def is_silence(self) -> bool:
        return self.speaker is None


@dataclass(frozen=True)
class SimLog:
    events: tuple
    final_state: str

    @property
    def end_ms(self) -> int:
        return max((e.end_ms for e in self.events), default=0)


def parse_script(text: str) -> list:
    """``say <cat>[+<cat>] [<duration_ms>] : <text>`` and ``pause <ms>`` lines."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("pause"):
            parts = line.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise ValueError(f"script line {lineno}: expected 'pause <ms>'")
            out.append(Pause(int(parts[1])))
            continue
        m = re.match(r"^say\s+(\S+)(?:\s+(\d+))?\s*:\s?(.*)$", line)
        if not m:
            raise ValueError(f"script line {lineno}: expected 'say <categories> [<ms>] : <text>' or 'pause <ms>'")
        out.append(Utterance(m.group(3), tuple(m.group(1).split("+")), int(m.group(2)) if m.group(2) else None))
    return out


def speaking_time(text: str, ms_per_word: int) -> int:
    return max(1, len(text.split())) * ms_per_word


def simulate(machine: DialogueMachine, script, response_delay_ms: int = 500, ms_per_word: int = 300) -> SimLog:
    """User utterances run back to back; the robot answers ``response_delay_ms``
    after each utterance ends; pauses advance the clock as logged silences."""
    if isinstance(script, str):
        script = parse_script(script)
    clock, state = 0, machine.initial
    log: list[LogEvent] = []
    for item in script:
        if isinstance(item, Pause):
            if item.duration_ms > 0:
                log.append(LogEvent(None, None, clock, clock + item.duration_ms))
                clock += item.duration_ms
            continue
        dur = item.duration_ms or speaking_time(item.text, ms_per_word)
        log.append(LogEvent(machine.user, item.text, clock, clock + dur, tuple(item.categories), "script"))
        clock += dur
        response, state = step(machine, state, item.text)
        if response is not None:
            start = clock + response_delay_ms
            end = start + speaking_time(response.text, ms_per_word)
            log.append(LogEvent(machine.robot, response.text, start, end, response.categories, response.source))
            clock = end
    return SimLog(tuple(log), state)


# -- annotation -------------------------------------------------------------


@dataclass(frozen=True)
class AnnotatedLog:
    labels: LabelSequence
    events: tuple
    silences: tuple

    @property
    def label_string(self) -> str:
        return serialize_label_sequence(self.labels)


def label_token(category: str, transmitter: str, recipient: str, labels: dict, registry: TagRegistry):
    tag = labels.get(category, category)
    m = re.match(r"^([a-z]+?)([12])?$", tag)
    if m and m.group(1) in registry.directed_tags:
        part = int(m.group(2)) if m.group(2) and m.group(1) in registry.pairable_tags else None
        if m.group(2) is None or part is not None:
            return Directed(transmitter, m.group(1), part, recipient)
    return Plain(tag, tag in registry.plain_tags)


def annotate_log(log: SimLog, machine: DialogueMachine, registry: TagRegistry | None = None) -> AnnotatedLog:
    registry = registry or default_registry()
    tokens, events, silences = [], [], []
    for ev in log.events:
        if ev.is_silence:
            silences.append((ev.start_ms, ev.end_ms))
            if ev.end_ms - ev.start_ms >= machine.silence_threshold_ms:
                tokens.append(Plain("silence"))
            continue
        if not ev.categories:
            raise ValueError(f"log event at {ev.start_ms} ms carries no action category")
        robot = ev.speaker == machine.robot
        t, r = ("p", "h") if robot else ("h", "p")
        for cat in ev.categories:
            tokens.append(label_token(cat, t, r, machine.labels, registry))
            events.append(ActionEvent(ev.start_ms, ev.end_ms, ev.speaker, cat,
                                      awaited_next=machine.awaits.get(cat, frozenset())))
    seq = LabelSequence(tuple(tokens), serialize_label_sequence(tokens))
    return AnnotatedLog(seq, tuple(events), tuple(silences))


def log_to_document(log: SimLog, machine: DialogueMachine, session_id: str = "sim",
                    recording_id: str = "R1") -> AnnotationDocument:
    """Session document for a simulated log: replayed thread tiers, text
    tiers per speaker and an identity alignment onto one recording."""
    from .sequence_engine import export_to_tiers, replay

    ann = annotate_log(log, machine)
    ledger = replay(ann.events, registry=machine.categories).ledger
    end = log.end_ms
    doc = export_to_tiers(ledger, session_id, end, ann.silences)
    text: dict[str, list] = {}
    for ev in log.events:
        if not ev.is_silence:
            text.setdefault(ev.speaker, []).append(Segment(ev.start_ms, ev.end_ms, ev.text))
    for who, segs in text.items():
        doc = doc.with_tier(Tier(f"text@{who}", "other", who, tuple(segs)))
    if end > 0:
        doc = doc.with_tier(Tier("alignment", "alignment", None, (AlignmentEntry(recording_id, 0, end, 0).to_segment(),)))
    return doc


def exchange_clips(log: SimLog, machine: DialogueMachine) -> list[tuple[str, int, int, str]]:
    """One clip per user utterance and the robot reply that follows it:
    ``(clip_id, start_ms, end_ms, label string)``."""
    clips, current = [], []

    def flush():
        if current:
            sub = SimLog(tuple(current), log.final_state)
            clips.append((f"x{len(clips) + 1:03d}", current[0].start_ms, current[-1].end_ms,
                          annotate_log(sub, machine).label_string))
            current.clear()

    for ev in log.events:
        if ev.is_silence:
            continue
        if ev.speaker == machine.user:
            flush()
        current.append(ev)
    flush()
    return clips
