"""Corpus index, label search, descriptive statistics and cut-lists.

Directory layout::

    <root>/registry.conf                   optional tag registry
    <root>/sessions/<id>/annotations.eaf   or annotations.jsonl (interchange)
    <root>/sessions/<id>/clips.tsv         clip_id<TAB>start_ms<TAB>end_ms<TAB>labels
    <root>/sessions/<id>/transcript.txt    optional, feeds the silence histogram

Cut-list manifests are UTF-8 TSV with LF endings and the columns of
:data:`MANIFEST_COLUMNS`.
"""

from __future__ import annotations

import os
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import Diagnostic, LabelSyntaxError, LedgerError, ValidationError, error, warning
from .label_grammar import (
    Directed,
    LabelSequence,
    TagRegistry,
    default_registry,
    load_registry,
    match_label_query,
    parse_label_string,
    parse_query,
)
from .sequence_engine import CategoryRegistry, import_from_tiers, latencies, replay
from .tiers import AnnotationDocument, Segment, alignment_entries, import_annotation_document, map_to_source
from .transcript import Silence, Transcript, parse_transcript

MANIFEST_COLUMNS = ("clip_id", "session_id", "source_recording_id", "start_ms", "end_ms", "flags", "labels")


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    session_id: str
    start_ms: int
    end_ms: int
    labels: LabelSequence
    notes: str = ""

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class Session:
    session_id: str
    document: AnnotationDocument
    transcript: Transcript | None = None

    @property
    def recordings(self) -> list[str]:
        try:
            return sorted({e.source_recording_id for e in alignment_entries(self.document)})
        except ValueError:
            return []


@dataclass(frozen=True)
class CorpusIndex:
    sessions: dict = field(default_factory=dict, hash=False)
    clips: tuple = ()
    registry: TagRegistry = field(default_factory=default_registry)


def parse_clips_tsv(text: str, session_id: str, registry: TagRegistry, where: str = "clips.tsv"):
    clips, diags = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        loc = f"{where}:{n}"
        if len(parts) < 3:
            diags.append(error("bad_clip_row", "expected clip_id, start_ms, end_ms, labels", loc))
            continue
        labels = parts[3] if len(parts) > 3 else ""
        try:
            start, end = int(parts[1]), int(parts[2])
        except ValueError:
            diags.append(error("bad_clip_row", "clip times must be integer milliseconds", loc))
            continue
        try:
            seq = parse_label_string(labels, registry)
        except LabelSyntaxError as exc:
            diags.append(error("bad_labels", str(exc), loc))
            continue
        diags.extend(warning(d.code, d.message, f"{loc} {d.location}") for d in seq.diagnostics)
        notes = parts[4] if len(parts) > 4 else ""
        clips.append(ClipRecord(parts[0].strip(), session_id, start, end, seq, notes))
    return clips, diags


def index_from_parts(sessions, clips, registry: TagRegistry | None = None):
    """Cross-check sessions and clips; invalid clips are dropped with a diagnostic."""
    registry = registry or default_registry()
    by_id = {s.session_id: s for s in sessions}
    kept, diags, seen = [], [], set()
    for c in clips:
        s = by_id.get(c.session_id)
        if s is None:
            diags.append(error("missing_session", f"clip {c.clip_id} references missing session {c.session_id!r}", c.clip_id))
            continue
        if c.clip_id in seen:
            diags.append(error("duplicate_clip", f"clip id {c.clip_id} is not unique", c.clip_id))
            continue
        if not 0 <= c.start_ms < c.end_ms <= s.document.timeline_duration_ms:
            diags.append(error("bad_clip_span", f"clip [{c.start_ms},{c.end_ms}] is not inside session {c.session_id}", c.clip_id))
            continue
        seen.add(c.clip_id)
        kept.append(c)
    kept.sort(key=lambda c: (c.session_id, c.start_ms, c.clip_id))
    return CorpusIndex(dict(sorted(by_id.items())), tuple(kept), registry), diags


def _load_session(sdir: Path, registry: TagRegistry):
    sid = sdir.name
    diags: list[Diagnostic] = []
    docs = sorted(p for p in sdir.glob("annotations.*") if p.suffix in (".eaf", ".jsonl"))
    session = None
    if not docs:
        diags.append(error("missing_session", "no annotations.eaf or annotations.jsonl", sid))
    else:
        fmt = "eaf-subset" if docs[0].suffix == ".eaf" else "interchange"
        try:
            doc = import_annotation_document(docs[0].read_bytes(), fmt, session_id=sid)
            transcript = None
            tpath = sdir / "transcript.txt"
            if tpath.exists():
                try:
                    transcript = parse_transcript(tpath.read_text("utf-8"))
                except ValueError as exc:
                    diags.append(error("bad_transcript", str(exc), str(tpath)))
            session = Session(sid, doc, transcript)
        except (ValidationError, ValueError, OSError) as exc:
            diags.append(error("bad_document", str(exc).splitlines()[0], str(docs[0])))
            if isinstance(exc, ValidationError):
                diags.extend(exc.diagnostics)
    clips: list[ClipRecord] = []
    cpath = sdir / "clips.tsv"
    if cpath.exists():
        try:
            clips, cdiags = parse_clips_tsv(cpath.read_text("utf-8"), sid, registry, str(cpath))
            diags.extend(cdiags)
        except OSError as exc:
            diags.append(error("unreadable", str(exc), str(cpath)))
    return session, clips, diags


def build_index(root, workers: int | None = None):
    """Load every session under ``root``; returns ``(index, diagnostics)``.

    Sessions load concurrently; results merge in session-id order so the
    index and diagnostics do not depend on scheduling."""
    root = Path(root)
    diags: list[Diagnostic] = []
    registry = default_registry()
    rpath = root / "registry.conf"
    if rpath.exists():
        try:
            registry = load_registry(rpath)
        except ValueError as exc:
            diags.append(error("bad_registry", str(exc), str(rpath)))
    sdirs = sorted(p for p in (root / "sessions").glob("*") if p.is_dir()) if (root / "sessions").is_dir() else []
    if not sdirs:
        diags.append(warning("no_sessions", "no sessions found", str(root)))
        return CorpusIndex(registry=registry), diags
    with ThreadPoolExecutor(max_workers=workers or min(8, os.cpu_count() or 1)) as pool:
        loaded = list(pool.map(lambda d: _load_session(d, registry), sdirs))
    sessions, clips = [], []
    for session, cl, d in loaded:
        diags.extend(d)
        if session is not None:
            sessions.append(session)
        clips.extend(cl)
    index, cross = index_from_parts(sessions, clips, registry)
    return index, diags + cross


def query_clips(index: CorpusIndex, pattern: str) -> list[tuple[ClipRecord, tuple]]:
    pats = parse_query(pattern, index.registry)
    out = []
    for c in index.clips:
        m = match_label_query(c.labels, pats)
        if m:
            out.append((c, m.span))
    return out


# -- statistics -------------------------------------------------------------


@dataclass(frozen=True)
class StatsReport:
    tags: dict
    directions: dict
    silence_histogram: dict  # bin start ms -> count
    latencies: dict  # matched category -> list of ms

    def is_empty(self) -> bool:
        return not (self.tags or self.directions or self.silence_histogram or self.latencies)

    def latency_table(self) -> dict:
        return {
            cat: {"n": len(v), "min": min(v), "median": statistics.median(v), "mean": statistics.fmean(v), "max": max(v)}
            for cat, v in sorted(self.latencies.items())
        }

    def records(self) -> list[dict]:
        recs = [{"table": "tag", "tag": k, "count": v} for k, v in sorted(self.tags.items())]
        recs += [{"table": "direction", "direction": k, "count": v} for k, v in sorted(self.directions.items())]
        recs += [{"table": "silence", "bin_start_ms": k, "count": v} for k, v in sorted(self.silence_histogram.items())]
        recs += [{"table": "latency", "category": k, **v} for k, v in self.latency_table().items()]
        return recs


def tag_frequencies(seqs) -> tuple[Counter, Counter]:
    tags, directions = Counter(), Counter()
    for seq in seqs:
        for tok in seq:
            tags[tok.tag] += 1
            if isinstance(tok, Directed):
                directions[f"{tok.transmitter}->{tok.recipient}"] += 1
    return tags, directions


def silence_histogram(durations, bin_ms: int = 500) -> dict:
    return dict(sorted(Counter((d // bin_ms) * bin_ms for d in durations).items()))


def session_silences(session: Session) -> list[int]:
    """Timed silences from the transcript, else from a ``silences`` tier."""
    if session.transcript is not None:
        return [e.duration_ms for e in session.transcript.events if isinstance(e, Silence) and not e.micro]
    try:
        return [s.end_ms - s.start_ms for s in session.document.tier("silences").segments]
    except KeyError:
        return []


def session_ledger(session: Session, categories: CategoryRegistry | None = None):
    """Replayed ledger of a session whose document carries thread tiers, else None."""
    doc = session.document
    if not doc.tiers_of_kind("sequential") and not doc.tiers_of_kind("byplay"):
        return None
    return replay(import_from_tiers(doc, categories), registry=categories).ledger


def compute_stats(index: CorpusIndex, bin_ms: int = 500, ledgers=(), categories=None):
    """Returns ``(report, diagnostics)``.  Latencies come from session
    documents with thread tiers plus any extra ``ledgers`` given."""
    tags, directions = tag_frequencies(c.labels for c in index.clips)
    durations, lat, diags = [], {}, []
    all_ledgers = list(ledgers)
    for sid, session in index.sessions.items():
        durations += session_silences(session)
        try:
            led = session_ledger(session, categories)
        except (LedgerError, ValueError) as exc:
            diags.append(warning("no_ledger", str(exc), sid))
            led = None
        if led is not None:
            all_ledgers.append(led)
    for led in all_ledgers:
        for cat, ms in latencies(led):
            lat.setdefault(cat, []).append(ms)
    report = StatsReport(dict(tags), dict(directions), silence_histogram(durations, bin_ms),
                         {k: sorted(v) for k, v in lat.items()})
    return report, diags


# -- cut-lists ---------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRow:
    clip_id: str
    session_id: str
    source_recording_id: str
    start_ms: int
    end_ms: int
    flags: str
    labels: str

    @property
    def ok(self) -> bool:
        return not self.flags.startswith("error")

    def cells(self) -> list[str]:
        return [self.clip_id, self.session_id, self.source_recording_id, str(self.start_ms),
                str(self.end_ms), self.flags, self.labels]


@dataclass(frozen=True)
class Manifest:
    rows: tuple
    command_template: str | None = None

    def to_tsv(self) -> str:
        cols = list(MANIFEST_COLUMNS) + (["command"] if self.command_template else [])
        lines = ["\t".join(cols)]
        for r in self.rows:
            cells = r.cells()
            if self.command_template:
                cells.append(self.command_template.format(**dict(zip(MANIFEST_COLUMNS, cells))) if r.ok else "")
            lines.append("\t".join(c.replace("\t", " ").replace("\n", " ") for c in cells))
        return "\n".join(lines) + "\n"

    def total_duration_ms(self) -> int:
        return sum(r.end_ms - r.start_ms for r in self.rows if r.ok)


def emit_cutlist(index: CorpusIndex, clip_ids=None, query: str | None = None,
                 command_template: str | None = None) -> Manifest:
    """One row per (clip, source range); clips whose session lacks a usable
    alignment tier get a single error row."""
    from .label_grammar import serialize_label_sequence

    clips = list(index.clips)
    if clip_ids is not None:
        wanted = set(clip_ids)
        clips = [c for c in clips if c.clip_id in wanted]
    if query is not None:
        hits = {c.clip_id for c, _ in query_clips(index, query)}
        clips = [c for c in clips if c.clip_id in hits]
    rows = []
    for c in clips:
        labels = serialize_label_sequence(c.labels)
        doc = index.sessions[c.session_id].document
        try:
            mapping = map_to_source(doc, Segment(c.start_ms, c.end_ms))
        except ValueError as exc:
            code = "no_alignment_tier" if "no alignment tier" in str(exc) else "bad_alignment"
            rows.append(ManifestRow(c.clip_id, c.session_id, "", c.start_ms, c.end_ms, f"error:{code}", labels))
            continue
        flags = ",".join(w.code for w in mapping.warnings)
        for r in mapping.ranges:
            rows.append(ManifestRow(c.clip_id, c.session_id, r.source_recording_id,
                                    r.start_ms_in_source, r.end_ms_in_source, flags, labels))
        if not mapping.ranges:
            rows.append(ManifestRow(c.clip_id, c.session_id, "", c.start_ms, c.end_ms, "error:uncovered", labels))
    return Manifest(tuple(rows), command_template)
