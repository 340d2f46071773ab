"""Multi-threaded sequential projections.

Every action may open a *projection*: the set of action categories it makes
relevant next (``wait(greeting2)``).  Open projections live on sequential
threads A, B, C, ... which are handed out lowest-free-first, separately for
the main participation framework and for byplay.  A later action whose
category is awaited satisfies the oldest matching projection and frees its
thread.  Byplay actions never satisfy main projections; they are recorded as
delays on every open main projection instead.

A ``repair_init`` action opens a repair projection that targets every open
projection of its framework.  It is satisfied as soon as one target is
satisfied, or by a ``repair_account`` action.

Besides actions, a replay stream may contain two directives:
:class:`Narrow` replaces the awaited set of the projection open on a thread
and :class:`Abandon` drops it.

Timing conventions: a projection occupies its thread from the start of the
opening action until the start of the satisfying action (or the abandon
time).  Response latency is measured from the *end* of the opening action to
the start of the satisfying one.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .diagnostics import Diagnostic, LedgerError, warning
from .tiers import AnnotationDocument, Segment, Tier

MAIN = "main"
BYPLAY = "byplay"
FRAMEWORKS = (MAIN, BYPLAY)

REPAIR_INIT = "repair_init"
REPAIR_ACCOUNT = "repair_account"

DEFAULT_CATEGORIES = (
    "greeting1", "greeting2", "offer", "acceptance", "rejection", "request",
    "question", "answer", "proposal", "howareyou", "repair_init",
    "repair_account", "laughter", "closing1", "closing2",
)


@dataclass(frozen=True)
class CategoryRegistry:
    """Known action categories and what each one can fulfil.

    ``satisfies[c]`` lists the awaited categories that an action of category
    ``c`` fulfils; every category fulfils itself.
    """

    names: frozenset
    satisfies: Mapping = field(default_factory=dict, hash=False)

    def __post_init__(self):
        bad = [n for n in self.satisfies if n not in self.names]
        bad += [t for ts in self.satisfies.values() for t in ts if t not in self.names]
        if bad:
            raise ValueError(f"categories not in registry: {sorted(set(bad))}")

    def fulfils(self, category: str) -> frozenset:
        return frozenset(self.satisfies.get(category, ())) | {category}

    def extended(self, names: Iterable[str] = (), satisfies: Mapping | None = None) -> "CategoryRegistry":
        merged = {k: frozenset(v) for k, v in self.satisfies.items()}
        for k, v in (satisfies or {}).items():
            merged[k] = merged.get(k, frozenset()) | frozenset(v)
        return CategoryRegistry(self.names | frozenset(names), merged)


def default_categories() -> CategoryRegistry:
    return CategoryRegistry(frozenset(DEFAULT_CATEGORIES))


# -- stream items -----------------------------------------------------------


@dataclass(frozen=True)
class ActionEvent:
    start_ms: int
    end_ms: int
    producer: str
    category: str
    framework: str = MAIN
    awaited_next: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "awaited_next", frozenset(self.awaited_next))
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"unknown framework {self.framework!r}")
        if self.end_ms <= self.start_ms or self.start_ms < 0:
            raise ValueError(f"bad action span [{self.start_ms},{self.end_ms}]")

    @property
    def time_ms(self) -> int:
        return self.start_ms


@dataclass(frozen=True)
class Narrow:
    at_ms: int
    thread: str
    awaited: frozenset
    framework: str = MAIN

    def __post_init__(self):
        object.__setattr__(self, "awaited", frozenset(self.awaited))

    @property
    def time_ms(self) -> int:
        return self.at_ms


@dataclass(frozen=True)
class Abandon:
    at_ms: int
    thread: str
    reason: str
    framework: str = MAIN

    @property
    def time_ms(self) -> int:
        return self.at_ms


# -- ledger -----------------------------------------------------------------

OPEN, SATISFIED, ABANDONED = "open", "satisfied", "abandoned"


@dataclass(frozen=True)
class Projection:
    id: int
    opened_by: int  # index into ledger.events
    thread: str
    framework: str
    awaited: frozenset
    opened_at_ms: int
    opened_seq: int
    kind: str = "normal"  # "normal" | "repair"
    targets: frozenset = frozenset()
    initial_awaited: frozenset = frozenset()
    status: str = OPEN
    satisfied_by: int | None = None
    matched: str | None = None
    abandon_reason: str | None = None
    closed_at_ms: int | None = None
    closed_seq: int | None = None
    delays: tuple = ()
    narrowings: tuple = ()  # ((at_ms, awaited), ...)

    @property
    def is_open(self) -> bool:
        return self.status == OPEN

    def awaited_at(self, at_ms: int) -> frozenset:
        current = self.initial_awaited
        for t, aw in self.narrowings:
            if t <= at_ms:
                current = aw
        return current

    def occupies(self, at_ms: int) -> bool:
        if self.opened_at_ms > at_ms:
            return False
        return self.is_open or self.closed_at_ms > at_ms


@dataclass(frozen=True)
class Effect:
    step: int
    kind: str
    projection: int | None = None
    detail: str = ""


@dataclass(frozen=True)
class ThreadLedger:
    events: tuple = ()
    projections: tuple = ()
    notes: tuple = ()
    clock_ms: int = field(default=0, compare=False)
    seq: int = field(default=0, compare=False)

    def threads(self, framework: str = MAIN) -> list[str]:
        used = {p.thread for p in self.projections if p.framework == framework}
        return sorted(used, key=thread_ordinal)

    def on_thread(self, thread: str, framework: str = MAIN) -> list[Projection]:
        return [p for p in self.projections if p.thread == thread and p.framework == framework]

    def open_projections(self, framework: str | None = None) -> list[Projection]:
        return [p for p in self.projections if p.is_open and (framework is None or p.framework == framework)]

    def actions(self) -> list[tuple[int, ActionEvent]]:
        return [(i, e) for i, e in enumerate(self.events) if isinstance(e, ActionEvent)]


def thread_label(index: int) -> str:
    """0 -> A, 25 -> Z, 26 -> AA, ..."""
    label = ""
    n = index + 1
    while n:
        n, r = divmod(n - 1, 26)
        label = chr(ord("A") + r) + label
    return label


def thread_ordinal(label: str) -> int:
    n = 0
    for ch in label:
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n - 1


def allocate_thread(ledger: ThreadLedger, at_ms: int, framework: str = MAIN) -> str:
    """Lowest thread of the framework family that holds no projection at ``at_ms``."""
    return _alloc(ledger.projections, at_ms, framework)


def _alloc(projections, at_ms: int, framework: str) -> str:
    busy = {p.thread for p in projections if p.framework == framework and p.occupies(at_ms)}
    i = 0
    while thread_label(i) in busy:
        i += 1
    return thread_label(i)


class _Builder:
    """Mutable working copy of a ledger; the public API freezes it again."""

    def __init__(self, ledger: ThreadLedger, registry: CategoryRegistry):
        self.events = list(ledger.events)
        self.projections = list(ledger.projections)
        self.notes = list(ledger.notes)
        self.clock = ledger.clock_ms
        self.seq = ledger.seq
        self.registry = registry
        self.effects: list[Effect] = []

    def freeze(self) -> ThreadLedger:
        return ThreadLedger(tuple(self.events), tuple(self.projections), tuple(self.notes), self.clock, self.seq)

    def _tick(self) -> int:
        self.seq += 1
        return self.seq

    def _advance(self, t: int, what: str):
        if t < self.clock:
            raise LedgerError(f"{what} at {t} ms precedes the latest applied time {self.clock} ms")
        self.clock = t

    def _set(self, p: Projection, **changes) -> Projection:
        q = replace(p, **changes)
        self.projections[p.id - 1] = q
        return q

    def _open_on(self, thread: str, framework: str) -> Projection:
        for p in self.projections:
            if p.is_open and p.thread == thread and p.framework == framework:
                return p
        raise LedgerError(f"no open projection on {framework} thread {thread}")

    def _check_categories(self, names, what):
        unknown = [n for n in names if n not in self.registry.names]
        if unknown:
            raise LedgerError(f"unknown action categories in {what}: {sorted(unknown)}")

    def _new(self, step, e, thread, awaited, kind="normal", targets=frozenset()) -> Projection:
        p = Projection(
            id=len(self.projections) + 1, opened_by=step, thread=thread, framework=e.framework,
            awaited=awaited, opened_at_ms=e.start_ms, opened_seq=self._tick(), kind=kind,
            targets=targets, initial_awaited=awaited,
        )
        self.projections.append(p)
        self.effects.append(Effect(step, "opened", p.id, f"{e.framework}:{thread}"))
        return p

    def close(self, p: Projection, at_ms: int, *, by: int | None = None, matched=None, reason=None, step=None):
        if not p.is_open:
            raise LedgerError(f"projection {p.id} is {p.status}, not open")
        if at_ms < p.opened_at_ms:
            raise LedgerError(f"projection {p.id} cannot close before it opened")
        if reason is None:
            self._set(p, status=SATISFIED, satisfied_by=by, matched=matched, closed_at_ms=at_ms, closed_seq=self._tick())
        else:
            self._set(p, status=ABANDONED, abandon_reason=reason, closed_at_ms=at_ms, closed_seq=self._tick())
        self.effects.append(Effect(step if step is not None else len(self.events) - 1,
                                   "satisfied" if reason is None else "abandoned", p.id, matched or reason or ""))

    def apply(self, item, resolver=None):
        if isinstance(item, ActionEvent):
            return self._apply_action(item, resolver)
        self._advance(item.time_ms, type(item).__name__.lower())
        self.events.append(item)
        step = len(self.events) - 1
        p = self._open_on(item.thread, item.framework)
        if isinstance(item, Narrow):
            self._check_categories(item.awaited, "narrow")
            if not item.awaited:
                raise LedgerError("narrow needs a nonempty awaited set")
            self._set(p, awaited=item.awaited, narrowings=p.narrowings + ((item.at_ms, item.awaited),))
            self.effects.append(Effect(step, "narrowed", p.id, ",".join(sorted(item.awaited))))
        elif isinstance(item, Abandon):
            self.close(p, item.at_ms, reason=item.reason, step=step)
        else:
            raise TypeError(f"cannot apply {item!r}")

    def _apply_action(self, e: ActionEvent, resolver):
        self._advance(e.start_ms, "event")
        self._check_categories({e.category} | e.awaited_next, "event")
        if e.category == REPAIR_INIT and e.awaited_next:
            raise LedgerError("a repair_init action opens its repair projection itself; awaited_next must be empty")
        self.events.append(e)
        step = len(self.events) - 1
        fam = e.framework

        if fam == BYPLAY:
            for p in self.projections:
                if p.is_open and p.framework == MAIN:
                    self._set(p, delays=p.delays + (step,))
                    self.effects.append(Effect(step, "delayed", p.id))

        fulfils = self.registry.fulfils(e.category)
        candidates = [p for p in self.projections if p.is_open and p.framework == fam and p.awaited & fulfils]
        satisfied = None
        if candidates:
            satisfied = candidates[0]
            self.close(satisfied, e.start_ms, by=step, matched=min(satisfied.awaited & fulfils), step=step)
            if len(candidates) > 1:
                others = ", ".join(str(p.id) for p in candidates[1:])
                self.notes.append(warning(
                    "ambiguous_satisfaction",
                    f"{e.category} by {e.producer} satisfied projection {satisfied.id} (oldest) over {others}",
                    f"event {step}",
                ))

        changed = True
        while changed:
            changed = False
            for p in self.projections:
                if p.is_open and p.kind == "repair" and p.framework == fam:
                    if any(self.projections[t - 1].status == SATISFIED for t in p.targets):
                        self.close(p, e.start_ms, by=step, matched=None, step=step)
                        self.effects.append(Effect(step, "repair_completed", p.id))
                        changed = True

        opened = None
        if e.category == REPAIR_INIT:
            thread = _alloc(self.projections, e.start_ms, fam)
            if resolver is not None:
                resolver(e, thread, step)
            targets = frozenset(p.id for p in self.projections if p.is_open and p.framework == fam)
            opened = self._new(step, e, thread, frozenset({REPAIR_ACCOUNT}), "repair", targets)
        else:
            awaited = e.awaited_next
            thread = None
            if resolver is not None:
                thread = _alloc(self.projections, e.start_ms, fam)
                awaited = resolver(e, thread, step)
                if awaited:
                    e = replace(e, awaited_next=awaited)
                    self.events[step] = e
            if awaited:
                thread = thread or _alloc(self.projections, e.start_ms, fam)
                opened = self._new(step, e, thread, awaited)

        if fam == MAIN and satisfied is None and opened is None:
            self.effects.append(Effect(step, "unattached", None, e.category))


def _registry(registry):
    return registry if registry is not None else default_categories()


def apply_event(ledger: ThreadLedger, e, registry: CategoryRegistry | None = None):
    """Apply one action or directive; returns ``(new_ledger, effects)``."""
    b = _Builder(ledger, _registry(registry))
    b.apply(e)
    return b.freeze(), b.effects


def abandon(ledger: ThreadLedger, projection_id: int, reason: str, at_ms: int) -> ThreadLedger:
    b = _Builder(ledger, default_categories())
    if not 1 <= projection_id <= len(b.projections):
        raise LedgerError(f"no projection {projection_id}")
    b._advance(at_ms, "abandon")
    b.close(b.projections[projection_id - 1], at_ms, reason=reason)
    return b.freeze()


def narrow(ledger: ThreadLedger, projection_id: int, awaited, at_ms: int) -> ThreadLedger:
    p = ledger.projections[projection_id - 1]
    if not p.is_open:
        raise LedgerError(f"projection {projection_id} is {p.status}, not open")
    new, _ = apply_event(ledger, Narrow(at_ms, p.thread, frozenset(awaited), p.framework),
                         default_categories().extended(awaited))
    return new


def _closeout_key(p: Projection):
    return (FRAMEWORKS.index(p.framework), thread_ordinal(p.thread))


def close_out(ledger: ThreadLedger, at_ms: int, reason: str = "clip_end") -> ThreadLedger:
    """Abandon every open projection, main framework first, then by thread."""
    b = _Builder(ledger, default_categories())
    for p in sorted(ledger.open_projections(), key=_closeout_key):
        b.apply(Abandon(at_ms, p.thread, reason, p.framework))
    return b.freeze()


# -- silences ---------------------------------------------------------------


@dataclass(frozen=True)
class ResponseGap:
    awaiting: tuple  # ((thread, frozenset of categories), ...) by thread order

    @property
    def threads(self) -> tuple:
        return tuple(t for t, _ in self.awaiting)


@dataclass(frozen=True)
class Lapse:
    pass


def classify_silence(ledger: ThreadLedger, span) -> ResponseGap | Lapse:
    start, end = span
    if end <= start:
        raise ValueError(f"bad silence span [{start},{end}]")
    for i, e in ledger.actions():
        if e.start_ms < end and start < e.end_ms:
            raise LedgerError(f"silence [{start},{end}] overlaps action {i} [{e.start_ms},{e.end_ms}]")
    awaiting = []
    for p in ledger.projections:
        if p.framework != MAIN or p.opened_at_ms >= end:
            continue
        if p.is_open or p.closed_at_ms > start:
            awaiting.append((p.thread, p.awaited_at(start)))
    if not awaiting:
        return Lapse()
    awaiting.sort(key=lambda a: thread_ordinal(a[0]))
    return ResponseGap(tuple(awaiting))


# -- replay -----------------------------------------------------------------


@dataclass(frozen=True)
class ReplayResult:
    ledger: ThreadLedger
    effects: tuple
    silences: tuple  # ((span, classification), ...)
    diagnostics: tuple


def lint_ledger(ledger: ThreadLedger) -> list[Diagnostic]:
    out = list(ledger.notes)
    for p in ledger.projections:
        if p.is_open:
            label = "repair" if p.kind == "repair" else ",".join(sorted(p.awaited))
            out.append(warning("unresolved_projection",
                               f"projection {p.id} ({label}) on {p.framework} thread {p.thread} is still open",
                               f"projection {p.id}"))
    return out


def replay(items: Iterable, silences: Iterable = (), registry: CategoryRegistry | None = None) -> ReplayResult:
    """Fold actions and directives, ordered by time (ties keep input order)."""
    ordered = sorted(enumerate(items), key=lambda ie: (ie[1].time_ms, ie[0]))
    b = _Builder(ThreadLedger(), _registry(registry))
    for _, item in ordered:
        b.apply(item)
    ledger = b.freeze()
    classified = tuple((tuple(s), classify_silence(ledger, s)) for s in silences)
    return ReplayResult(ledger, tuple(b.effects), classified, tuple(lint_ledger(ledger)))


def canonical_order(items: Iterable) -> list:
    """Order in which :func:`import_from_tiers` returns stream items."""
    def key(it):
        if isinstance(it, ActionEvent):
            return (it.start_ms, 0, f"speech@{it.producer}", 0, 0)
        return (it.at_ms, 1, "", FRAMEWORKS.index(it.framework), thread_ordinal(it.thread))
    return sorted(items, key=key)


# -- reporting ----------------------------------------------------------------


def _direct_satisfaction(ledger: ThreadLedger) -> dict[int, Projection]:
    out = {}
    for p in ledger.projections:
        if p.status == SATISFIED and p.matched is not None:
            out.setdefault(p.satisfied_by, p)
    return out


def stacking_string(ledger: ThreadLedger, letters: Mapping[str, str] | None = None) -> str:
    """Render main-framework actions as ``[P1+P2->H1->...]``.

    The digit is the creation rank of the projection an action satisfies
    (preferred) or opens; ``?`` marks actions attached to neither.  Adjacent
    actions by one producer without a gap between them form one turn.
    """
    main_rank = {p.id: r for r, p in enumerate((p for p in ledger.projections if p.framework == MAIN), 1)}
    satisfied = _direct_satisfaction(ledger)
    opened = {}
    for p in ledger.projections:
        opened.setdefault(p.opened_by, p)
    turns: list[list[str]] = []
    producer, turn_end = None, None
    for i, e in ledger.actions():
        if e.framework != MAIN:
            continue
        p = satisfied.get(i) or opened.get(i)
        ordinal = str(main_rank[p.id]) if p is not None and p.framework == MAIN else "?"
        token = (letters or {}).get(e.producer, e.producer[:1].upper()) + ordinal
        if producer == e.producer and e.start_ms <= turn_end:
            turns[-1].append(token)
            turn_end = max(turn_end, e.end_ms)
        else:
            turns.append([token])
            producer, turn_end = e.producer, e.end_ms
    return "[" + "->".join("+".join(t) for t in turns) + "]"


def latencies(ledger: ThreadLedger) -> list[tuple[str, int]]:
    """``(matched category, ms)`` per satisfied projection: from the end of the
    opening action to the start of the satisfying one."""
    out = []
    for p in ledger.projections:
        if p.status != SATISFIED:
            continue
        opener = ledger.events[p.opened_by]
        closer = ledger.events[p.satisfied_by]
        out.append((p.matched or "repair", closer.start_ms - opener.end_ms))
    return out


def summary_records(ledger: ThreadLedger) -> list[dict]:
    recs = []
    for p in ledger.projections:
        opener = ledger.events[p.opened_by]
        recs.append({
            "projection": p.id,
            "framework": p.framework,
            "thread": p.thread,
            "kind": p.kind,
            "awaited": sorted(p.initial_awaited),
            "narrowed_to": [sorted(aw) for _, aw in p.narrowings],
            "opened_by": f"{opener.producer}:{opener.category}",
            "opened_at_ms": p.opened_at_ms,
            "status": p.status,
            "closed_at_ms": p.closed_at_ms,
            "satisfied_by": None if p.satisfied_by is None else
            f"{ledger.events[p.satisfied_by].producer}:{ledger.events[p.satisfied_by].category}",
            "abandon_reason": p.abandon_reason,
            "delays": len(p.delays),
            "targets": sorted(p.targets),
        })
    return recs


def ledger_json(ledger: ThreadLedger) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in summary_records(ledger))


# -- invariants ---------------------------------------------------------------


def check_invariants(ledger: ThreadLedger, *, terminal: bool = False) -> list[str]:
    """Structural properties every replayed ledger must have."""
    problems = []
    inf = float("inf")
    by_thread: dict[tuple, list[Projection]] = {}
    for p in ledger.projections:
        by_thread.setdefault((p.framework, p.thread), []).append(p)

    def interval(p):
        return p.opened_seq, (inf if p.closed_seq is None else p.closed_seq)

    for key, ps in by_thread.items():
        spans = sorted(interval(p) for p in ps)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                problems.append(f"two open projections on {key}")
    for p in ledger.projections:
        k = thread_ordinal(p.thread)
        for j in range(k):
            lower = by_thread.get((p.framework, thread_label(j)), [])
            if not any(interval(q)[0] < p.opened_seq < interval(q)[1] for q in lower):
                problems.append(f"projection {p.id} on {p.thread} while {thread_label(j)} was free")
        if p.status == SATISFIED and p.framework == MAIN:
            sat = ledger.events[p.satisfied_by]
            if sat.framework != MAIN:
                problems.append(f"projection {p.id} satisfied by a byplay action")
        if terminal and p.is_open:
            problems.append(f"projection {p.id} still open")
        if p.kind == "repair":
            for t in p.targets:
                q = ledger.projections[t - 1]
                if not (q.opened_seq < p.opened_seq and (q.closed_seq is None or q.closed_seq > p.opened_seq)):
                    problems.append(f"repair {p.id} targets projection {t} that was not open")
    return problems


# -- tiers --------------------------------------------------------------------

_ACT = re.compile(r"^act\(([^,()\s]+),([a-z0-9_]+)(,byplay)?\)$")
_TERM = re.compile(r"^(wait|narrow|abandon|repair|repair_account)\(([^()]*)\)$")
_CAT = re.compile(r"^[a-z0-9_]+$")


def _split_terms(value: str) -> list[str]:
    return [t.strip() for t in value.split("+")]


def format_action(e: ActionEvent) -> str:
    return f"act({e.producer},{e.category}{',byplay' if e.framework == BYPLAY else ''})"


def parse_action_value(value: str, where: str = "") -> list[tuple[str, str, str]]:
    out = []
    for term in _split_terms(value):
        m = _ACT.match(term)
        if not m:
            raise LedgerError(f"{where}: tier value {value!r} is not an action term")
        out.append((m.group(1), m.group(2), BYPLAY if m.group(3) else MAIN))
    return out


def _cats(args: str, where: str, value: str) -> frozenset:
    cats = [c.strip() for c in args.split(",")] if args.strip() else []
    if not cats or not all(_CAT.match(c) for c in cats):
        raise LedgerError(f"{where}: bad category list in {value!r}")
    return frozenset(cats)


def parse_thread_value(value: str, where: str = "") -> dict:
    """``wait(a,b)`` / ``repair()`` / ``narrow(a)`` plus optional
    ``+abandon(reason)`` or ``+repair_account()``."""
    terms = _split_terms(value)
    parsed = []
    for term in terms:
        m = _TERM.match(term)
        if not m:
            raise LedgerError(f"{where}: cannot parse tier value {value!r}")
        parsed.append((m.group(1), m.group(2)))
    head, args = parsed[0]
    out = {"head": head, "awaited": None, "abandon": None, "account": False}
    if head in ("wait", "narrow"):
        out["awaited"] = _cats(args, where, value)
    elif head == "repair":
        if args.strip():
            raise LedgerError(f"{where}: repair() takes no arguments in {value!r}")
    else:
        raise LedgerError(f"{where}: tier value {value!r} must start with wait/narrow/repair")
    for name, a in parsed[1:]:
        if name == "abandon" and a.strip() and out["abandon"] is None:
            out["abandon"] = a.strip()
        elif name == "repair_account" and not a.strip() and head != "wait":
            out["account"] = True
        else:
            raise LedgerError(f"{where}: unexpected term {name}() in {value!r}")
    return out


def _tier_family(framework: str) -> str:
    return "seqthread" if framework == MAIN else "byplay"


def export_to_tiers(ledger: ThreadLedger, session_id: str = "session", timeline_duration_ms: int | None = None,
                    silences: Iterable = ()) -> AnnotationDocument:
    """Actions go to ``speech@<producer>``, projections to thread tiers."""
    silences = [tuple(s) for s in silences]
    ends = [e.end_ms for _, e in ledger.actions()] + [p.closed_at_ms or 0 for p in ledger.projections]
    ends += [e.time_ms for e in ledger.events] + [s[1] for s in silences]
    end = max(ends, default=0)
    if timeline_duration_ms is None:
        timeline_duration_ms = end
    elif timeline_duration_ms < end:
        raise LedgerError("timeline shorter than the ledger")

    speech: dict[str, list] = {}
    for _, e in ledger.actions():
        segs = speech.setdefault(e.producer, [])
        if segs and (segs[-1][0], segs[-1][1]) == (e.start_ms, e.end_ms):
            segs[-1][2].append(format_action(e))
        elif segs and e.start_ms < segs[-1][1]:
            raise LedgerError(f"overlapping actions by {e.producer} at {e.start_ms} ms cannot share a speech tier")
        else:
            segs.append((e.start_ms, e.end_ms, [format_action(e)]))
    tiers = [
        Tier(f"speech@{who}", "speech", who, tuple(Segment(s, t, "+".join(v)) for s, t, v in segs))
        for who, segs in speech.items()
    ]

    threads: dict[tuple, list[Segment]] = {}
    for p in ledger.projections:
        close = timeline_duration_ms if p.is_open else p.closed_at_ms
        cuts = [p.opened_at_ms] + [t for t, _ in p.narrowings] + [close]
        heads = ["repair()" if p.kind == "repair" else f"wait({','.join(sorted(p.initial_awaited))})"]
        heads += [f"narrow({','.join(sorted(aw))})" for _, aw in p.narrowings]
        if p.status == ABANDONED:
            heads[-1] += f"+abandon({p.abandon_reason})"
        elif p.kind == "repair" and p.status == SATISFIED and ledger.events[p.satisfied_by].category == REPAIR_ACCOUNT:
            heads[-1] += "+repair_account()"
        for (a, b), v in zip(zip(cuts, cuts[1:]), heads):
            if b <= a:
                raise LedgerError(f"projection {p.id} has an empty stretch at {a} ms and cannot be segmented")
            threads.setdefault((p.framework, p.thread), []).append(Segment(a, b, v))
    for (fw, th), segs in threads.items():
        kind = "sequential" if fw == MAIN else "byplay"
        tiers.append(Tier(f"{_tier_family(fw)}@{th}", kind, None, tuple(sorted(segs))))
    if silences:
        tiers.append(Tier("silences", "other", None, tuple(Segment(a, b, "silence") for a, b in silences)))
    return AnnotationDocument(session_id, timeline_duration_ms, tuple(tiers))


def silences_from_tiers(doc: AnnotationDocument) -> list[tuple[int, int]]:
    try:
        tier = doc.tier("silences")
    except KeyError:
        return []
    return [(s.start_ms, s.end_ms) for s in tier.segments]


def import_from_tiers(doc: AnnotationDocument, registry: CategoryRegistry | None = None) -> list:
    """Rebuild the action/directive stream that :func:`export_to_tiers` wrote.

    Awaited sets are recovered by re-running thread allocation: an action
    opened the ``wait(...)`` segment that starts at its own start time on the
    thread it would be allocated.
    """
    registry = _registry(registry)
    keyed = []
    for tier in doc.tiers:
        if tier.kind != "speech":
            continue
        for si, seg in enumerate(tier.segments):
            for ti, (who, cat, fw) in enumerate(parse_action_value(seg.value, f"{tier.name}#{si}")):
                keyed.append(((seg.start_ms, 0, tier.name, si, ti), ActionEvent(seg.start_ms, seg.end_ms, who, cat, fw)))

    pending: dict[tuple, dict[int, tuple]] = {}  # (fw, thread) -> start -> (kind, awaited)
    for tier in doc.tiers:
        if tier.kind not in ("sequential", "byplay"):
            continue
        fw = MAIN if tier.kind == "sequential" else BYPLAY
        thread = tier.name.partition("@")[2]
        if not re.fullmatch(r"[A-Z]+", thread):
            raise LedgerError(f"{tier.name}: thread tiers must be named <family>@<letters>")
        prev, prev_closed = None, False
        for si, seg in enumerate(tier.segments):
            where = f"{tier.name}#{si}"
            v = parse_thread_value(seg.value, where)
            if v["head"] == "narrow":
                if prev is None or prev.end_ms != seg.start_ms or prev_closed:
                    raise LedgerError(f"{where}: narrow() must continue an open wait segment")
                keyed.append(((seg.start_ms, 1, "", FRAMEWORKS.index(fw), thread_ordinal(thread)),
                              Narrow(seg.start_ms, thread, v["awaited"], fw)))
            else:
                pending.setdefault((fw, thread), {})[seg.start_ms] = (v["head"], v["awaited"], where)
            prev_closed = v["abandon"] is not None
            if v["abandon"] is not None:
                keyed.append(((seg.end_ms, 1, "", FRAMEWORKS.index(fw), thread_ordinal(thread)),
                              Abandon(seg.end_ms, thread, v["abandon"], fw)))
            prev = seg
    keyed.sort(key=lambda kv: kv[0])

    def resolve(e: ActionEvent, thread: str, step: int):
        slot = pending.get((e.framework, thread), {})
        found = slot.get(e.start_ms)
        if e.category == REPAIR_INIT:
            if found is None or found[0] != "repair":
                raise LedgerError(f"repair_init at {e.start_ms} ms has no repair() segment on thread {thread}")
            del slot[e.start_ms]
            return frozenset()
        if found is None or found[0] != "wait":
            return frozenset()
        del slot[e.start_ms]
        return found[1]

    b = _Builder(ThreadLedger(), registry)
    for _, item in keyed:
        b.apply(item, resolver=resolve)
    leftover = [w for slot in pending.values() for (_, _, w) in slot.values()]
    if leftover:
        raise LedgerError(f"thread segments with no opening action: {', '.join(sorted(leftover))}")
    return list(b.events)
