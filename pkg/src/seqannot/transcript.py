"""Simplified ICOR/Jefferson transcripts.

Recognised marks::

    (.)        micro-pause, shorter than 200 ms, duration unknown
    (1.0)      measured silence in seconds (``1,0`` also accepted)
    word::     prolongation, one colon per degree
    word?      rising intonation
    ((text))   non-transcribable event or conduct

Each line is ``[NN] [Speaker:] payload``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from .diagnostics import Diagnostic, TranscriptError, warning

MICRO_PAUSE_MAX_MS = 200

_LINE = re.compile(r"^\s*(?P<no>\d+)?\s*(?:(?P<spk>[A-Za-z][A-Za-z0-9_]*)\s*:(?=\s|$))?(?P<payload>.*)$")
_DURATION = re.compile(r"^(\d+)(?:[.,](\d+))?$")
_TRAILING_PUNCT = ".,;!"


@dataclass(frozen=True)
class Word:
    raw: str
    text: str
    prolongation_degree: int = 0
    rising_final: bool = False

    @classmethod
    def from_raw(cls, raw: str) -> "Word":
        rising = raw.endswith("?")
        body = raw[:-1] if rising else raw
        text = body.replace(":", "").rstrip(_TRAILING_PUNCT) or body.replace(":", "")
        return cls(raw, text, body.count(":"), rising)

    def with_rising(self) -> "Word":
        return Word(self.raw + "?", self.text, self.prolongation_degree, True)


@dataclass(frozen=True)
class MicroPause:
    def __str__(self) -> str:
        return "(.)"


@dataclass(frozen=True)
class Turn:
    line_no: int | None
    speaker: str
    items: tuple  # Word | MicroPause
    source_line: int = field(default=0, compare=False)
    kind = "Turn"

    @property
    def words(self) -> list[Word]:
        return [w for w in self.items if isinstance(w, Word)]

    @property
    def has_micro_pause(self) -> bool:
        return any(isinstance(w, MicroPause) for w in self.items)


@dataclass(frozen=True)
class Silence:
    line_no: int | None
    duration_ms: int | None
    speaker: str | None = None
    source_line: int = field(default=0, compare=False)
    kind = "Silence"

    @property
    def micro(self) -> bool:
        return self.duration_ms is None


@dataclass(frozen=True)
class Nonverbal:
    line_no: int | None
    description: str
    speaker: str | None = None
    source_line: int = field(default=0, compare=False)
    kind = "Nonverbal"


@dataclass(frozen=True)
class Transcript:
    events: tuple
    participants: frozenset
    diagnostics: tuple = field(default=(), compare=False)

    def lines(self) -> list[int]:
        return sorted({e.line_no for e in self.events if e.line_no is not None})

    def events_on(self, line_no: int) -> list:
        return [e for e in self.events if e.line_no == line_no]


def parse_duration(text: str, line_no: int | None = None) -> int:
    m = _DURATION.match(text.strip())
    if not m:
        raise TranscriptError(f"malformed duration ({text})", line_no)
    try:
        seconds = Decimal(f"{m.group(1)}.{m.group(2) or '0'}")
    except InvalidOperation:  # pragma: no cover - regex already guards this
        raise TranscriptError(f"malformed duration ({text})", line_no)
    return int((seconds * 1000).to_integral_value())


def _tokenize(payload: str, line_no: int | None) -> list:
    """Split a payload into raw pieces: ``("event", text)``, ``("paren", text)``
    or ``("word", text)``."""
    out = []
    i, n = 0, len(payload)
    while i < n:
        c = payload[i]
        if c.isspace():
            i += 1
        elif payload.startswith("((", i):
            end = payload.find("))", i + 2)
            if end < 0:
                raise TranscriptError("unmatched '(('", line_no)
            out.append(("event", payload[i + 2 : end].strip()))
            i = end + 2
        elif c == "(":
            end = payload.find(")", i + 1)
            if end < 0:
                raise TranscriptError("unmatched '('", line_no)
            out.append(("paren", payload[i + 1 : end]))
            i = end + 1
        elif c == ")":
            raise TranscriptError("unmatched ')'", line_no)
        else:
            j = i
            while j < n and not payload[j].isspace() and payload[j] not in "()":
                j += 1
            out.append(("word", payload[i:j]))
            i = j
    return out


def parse_transcript(text: str) -> Transcript:
    events: list = []
    participants: set[str] = set()
    diags: list[Diagnostic] = []
    last_no: int | None = None

    for src, raw in enumerate(text.splitlines()):
        if not raw.strip():
            continue
        m = _LINE.match(raw)
        no = int(m.group("no")) if m.group("no") else None
        speaker = m.group("spk")
        if no is not None:
            if last_no is not None and no <= last_no:
                raise TranscriptError(f"line number {no} does not increase", no)
            last_no = no
        if speaker:
            participants.add(speaker)

        items: list = []

        def flush():
            if not items:
                return
            if any(isinstance(x, Word) for x in items):
                events.append(Turn(no, speaker, tuple(items), src))
            else:
                for _ in items:
                    events.append(Silence(no, None, None, src))
            items.clear()

        for kind, value in _tokenize(m.group("payload"), no):
            if kind == "event":
                flush()
                events.append(Nonverbal(no, value, speaker, src))
            elif kind == "paren":
                if value.strip() == ".":
                    if speaker:
                        items.append(MicroPause())
                    else:
                        events.append(Silence(no, None, None, src))
                    continue
                ms = parse_duration(value, no)
                if ms < MICRO_PAUSE_MAX_MS:
                    diags.append(warning(
                        "short_silence",
                        f"measured silence of {ms} ms is below the {MICRO_PAUSE_MAX_MS} ms micro-pause bound",
                        f"line {no}",
                    ))
                flush()
                events.append(Silence(no, ms, None, src))
            else:
                if value == "?":
                    if items and isinstance(items[-1], Word):
                        items[-1] = items[-1].with_rising()
                        continue
                    raise TranscriptError("rising-intonation mark with no preceding word", no)
                if not speaker:
                    raise TranscriptError("words on a line without a speaker label", no)
                items.append(Word.from_raw(value))
        flush()
    return Transcript(tuple(events), frozenset(participants), tuple(diags))


def format_seconds(ms: int) -> str:
    s = Decimal(ms) / 1000
    text = format(s.normalize(), "f")
    return text if "." in text else text + ".0"


def _render(e) -> str:
    if isinstance(e, Turn):
        return " ".join(w.raw if isinstance(w, Word) else "(.)" for w in e.items)
    if isinstance(e, Silence):
        return "(.)" if e.micro else f"({format_seconds(e.duration_ms)})"
    return f"(({e.description}))"


def serialize_transcript(t: Transcript) -> str:
    """Render back to text, one output line per source line."""
    out = []
    groups: list[list] = []
    for e in t.events:
        if groups and groups[-1][0].source_line == e.source_line:
            groups[-1].append(e)
        else:
            groups.append([e])
    for group in groups:
        no = group[0].line_no
        speaker = next((e.speaker for e in group if e.speaker), None)
        head = "" if no is None else f"{no} "
        if speaker:
            head += f"{speaker}: "
        out.append(head + " ".join(_render(e) for e in group))
    return "\n".join(out) + ("\n" if out else "")


@dataclass(frozen=True)
class Gap:
    duration_ms: int
    complete: bool


def measured_gap(t: Transcript, from_line: int, to_line: int) -> Gap:
    """Sum of measured silences on lines strictly between the two lines.

    The value is a lower bound; ``complete`` is False as soon as anything of
    unmeasured duration (talk, conduct, micro-pause) sits in the interval."""
    present = set(t.lines())
    for ln in (from_line, to_line):
        if ln not in present:
            raise KeyError(f"no transcript line {ln}")
    if from_line >= to_line:
        raise ValueError("from_line must precede to_line")
    total, complete = 0, True
    for e in t.events:
        if e.line_no is None or not (from_line < e.line_no < to_line):
            continue
        if isinstance(e, Silence) and not e.micro:
            total += e.duration_ms
        else:
            complete = False
    return Gap(total, complete)


def event_record(e) -> dict:
    rec = {"kind": e.kind, "line_no": e.line_no, "speaker": e.speaker}
    if isinstance(e, Turn):
        rec["words"] = [
            {"text": w.text, "prolongation_degree": w.prolongation_degree, "rising_final": w.rising_final}
            if isinstance(w, Word) else {"micro_pause": True}
            for w in e.items
        ]
    elif isinstance(e, Silence):
        rec["duration_ms"] = e.duration_ms
        rec["micro"] = e.micro
    else:
        rec["description"] = e.description
    return rec


def to_records(t: Transcript) -> str:
    """One JSON object per event per line."""
    return "".join(json.dumps(event_record(e), sort_keys=True, ensure_ascii=False) + "\n" for e in t.events)
