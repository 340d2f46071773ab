"""Time-aligned annotation documents.

Tier kinds follow the tier name::

    speech@<participant>   speech      one tier per participant
    seqthread@<A|B|...>    sequential  main-framework sequential threads
    byplay@<A|B|...>       byplay      byplay-framework sequential threads
    alignment              alignment   source recording alignment
    labels                 label       shortclip label strings
    anything else          other

Alignment segments carry ``<recording_id>@<offset_ms>``: the segment's
timeline range is found in that recording starting at ``offset_ms``.

Two serialisations are supported.  ``interchange`` is line-delimited JSON
(a document header, then per tier a tier header followed by one record per
segment, tiers in name order).  ``eaf-subset`` is the XML format of the
ELAN editor restricted to time slots, tiers and alignable annotations.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace

from .diagnostics import Diagnostic, ValidationError, error, warning

TIER_KINDS = ("speech", "sequential", "byplay", "alignment", "label", "other")
FORMAT_TAG = "seqannot-interchange"


@dataclass(frozen=True, order=True)
class Segment:
    start_ms: int
    end_ms: int
    value: str = ""

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class Tier:
    name: str
    kind: str = "other"
    participant: str | None = None
    segments: tuple = ()

    def __post_init__(self):
        if self.kind not in TIER_KINDS:
            raise ValueError(f"unknown tier kind {self.kind!r}")
        object.__setattr__(self, "segments", tuple(self.segments))


@dataclass(frozen=True)
class AnnotationDocument:
    session_id: str
    timeline_duration_ms: int
    tiers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(sorted(self.tiers, key=lambda t: t.name)))

    def tier(self, name: str) -> Tier:
        for t in self.tiers:
            if t.name == name:
                return t
        raise KeyError(name)

    def tiers_of_kind(self, kind: str) -> list[Tier]:
        return [t for t in self.tiers if t.kind == kind]

    def with_tier(self, tier: Tier) -> "AnnotationDocument":
        kept = [t for t in self.tiers if t.name != tier.name]
        return replace(self, tiers=tuple(kept + [tier]))


def infer_kind(name: str, overrides: dict | None = None) -> tuple[str, str | None]:
    """Tier kind and participant from the naming convention."""
    if overrides and name in overrides:
        kind = overrides[name]
        participant = name.split("@", 1)[1] if kind == "speech" and "@" in name else None
        return kind, participant
    prefix, _, rest = name.partition("@")
    if prefix == "speech" and rest:
        return "speech", rest
    if prefix == "seqthread" and rest:
        return "sequential", None
    if prefix == "byplay" and rest:
        return "byplay", None
    if name == "alignment":
        return "alignment", None
    if name == "labels":
        return "label", None
    return "other", None


def make_tier(name: str, segments=(), participant: str | None = None, overrides=None) -> Tier:
    kind, inferred = infer_kind(name, overrides)
    return Tier(name, kind, participant if participant is not None else inferred, tuple(segments))


# -- alignment --------------------------------------------------------------


@dataclass(frozen=True)
class AlignmentEntry:
    source_recording_id: str
    ref_start_ms: int
    ref_end_ms: int
    source_offset_ms: int = 0

    def to_segment(self) -> Segment:
        return Segment(self.ref_start_ms, self.ref_end_ms, f"{self.source_recording_id}@{self.source_offset_ms}")


def parse_alignment_value(seg: Segment) -> AlignmentEntry:
    rec, sep, offset = seg.value.rpartition("@")
    if not sep:
        rec, offset = seg.value, "0"
    rec = rec.strip()
    if not rec:
        raise ValueError(f"alignment value {seg.value!r} has no recording id")
    try:
        off = int(offset)
    except ValueError:
        raise ValueError(f"alignment value {seg.value!r} has a non-integer offset") from None
    if off < 0:
        raise ValueError(f"alignment value {seg.value!r} has a negative offset")
    return AlignmentEntry(rec, seg.start_ms, seg.end_ms, off)


def alignment_entries(doc: AnnotationDocument) -> list[AlignmentEntry]:
    tiers = doc.tiers_of_kind("alignment")
    if not tiers:
        raise ValueError(f"session {doc.session_id!r} has no alignment tier")
    if len(tiers) > 1:
        raise ValueError(f"session {doc.session_id!r} has {len(tiers)} alignment tiers, expected one")
    return [parse_alignment_value(s) for s in tiers[0].segments]


@dataclass(frozen=True)
class SourceRange:
    source_recording_id: str
    start_ms_in_source: int
    end_ms_in_source: int
    timeline_start_ms: int
    timeline_end_ms: int

    @property
    def duration_ms(self) -> int:
        return self.end_ms_in_source - self.start_ms_in_source


@dataclass(frozen=True)
class SourceMapping:
    ranges: tuple
    warnings: tuple = ()

    @property
    def split(self) -> bool:
        return len(self.ranges) > 1

    @property
    def uncovered(self) -> bool:
        return any(w.code == "uncovered" for w in self.warnings)


def map_to_source(doc: AnnotationDocument, segment: Segment) -> SourceMapping:
    """Translate a timeline range into ranges of the original recordings."""
    entries = sorted(alignment_entries(doc), key=lambda e: e.ref_start_ms)
    ranges = []
    for e in entries:
        lo, hi = max(segment.start_ms, e.ref_start_ms), min(segment.end_ms, e.ref_end_ms)
        if lo < hi:
            shift = e.source_offset_ms - e.ref_start_ms
            ranges.append(SourceRange(e.source_recording_id, lo + shift, hi + shift, lo, hi))
    warns = []
    if len(ranges) > 1:
        warns.append(warning("split", f"segment spans {len(ranges)} source recordings"))
    covered = sum(r.duration_ms for r in ranges)
    if covered < segment.duration_ms:
        warns.append(warning("uncovered", f"{segment.duration_ms - covered} ms of the segment map to no recording"))
    return SourceMapping(tuple(ranges), tuple(warns))


# -- validation -------------------------------------------------------------


def validate_tiers(doc: AnnotationDocument) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if doc.timeline_duration_ms < 0:
        out.append(error("bad_timeline", "negative timeline duration", doc.session_id))
    seen = set()
    for tier in doc.tiers:
        if tier.name in seen:
            out.append(error("duplicate_tier", f"tier {tier.name!r} appears twice", tier.name))
        seen.add(tier.name)
        if not tier.segments:
            out.append(warning("empty_tier", "tier has no segments", tier.name))
        if tier.kind == "speech" and not tier.participant:
            out.append(warning("no_participant", "speech tier without participant", tier.name))
        prev = None
        for i, seg in enumerate(tier.segments):
            loc = f"{tier.name}#{i}"
            if seg.start_ms < 0:
                out.append(error("negative_time", f"segment starts at {seg.start_ms} ms", loc))
            if seg.end_ms <= seg.start_ms:
                out.append(error("bad_span", f"segment [{seg.start_ms},{seg.end_ms}] is empty or reversed", loc))
            if seg.end_ms > doc.timeline_duration_ms:
                out.append(error(
                    "beyond_timeline",
                    f"segment ends at {seg.end_ms} ms after timeline end {doc.timeline_duration_ms} ms",
                    loc,
                ))
            if prev is not None:
                if seg.start_ms < prev.start_ms:
                    out.append(error("unsorted", "segments are not sorted by start", loc))
                elif seg.start_ms < prev.end_ms:
                    out.append(error(
                        "overlap",
                        f"segment [{seg.start_ms},{seg.end_ms}] overlaps [{prev.start_ms},{prev.end_ms}]",
                        loc,
                    ))
            if tier.kind == "alignment":
                try:
                    parse_alignment_value(seg)
                except ValueError as exc:
                    out.append(error("bad_alignment", str(exc), loc))
            prev = seg
    if len(doc.tiers_of_kind("alignment")) > 1:
        out.append(warning("alignment_tiers", "more than one alignment tier", doc.session_id))
    return out


def _checked(doc: AnnotationDocument) -> AnnotationDocument:
    diags = [d for d in validate_tiers(doc) if d.severity == "error"]
    if diags:
        raise ValidationError(f"invalid annotation document {doc.session_id!r}", diags)
    return doc


# -- interchange ------------------------------------------------------------


def _line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def export_interchange(doc: AnnotationDocument) -> bytes:
    parts = [_line({
        "format": FORMAT_TAG,
        "version": 1,
        "session_id": doc.session_id,
        "timeline_duration_ms": doc.timeline_duration_ms,
    })]
    for tier in sorted(doc.tiers, key=lambda t: t.name):
        parts.append(_line({"tier": tier.name, "kind": tier.kind, "participant": tier.participant}))
        for s in tier.segments:
            parts.append(_line({"start_ms": s.start_ms, "end_ms": s.end_ms, "value": s.value}))
    return "".join(parts).encode("utf-8")


def _int_field(rec: dict, key: str, where: str) -> int:
    v = rec.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ValidationError(f"{where}: field {key!r} must be an integer", [error("bad_record", f"{key}={v!r}", where)])
    return v


def _import_interchange(data: bytes) -> AnnotationDocument:
    lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("empty interchange input", [error("no_header", "missing document header")])
    try:
        records = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise ValidationError("malformed interchange record", [error("bad_json", str(exc))]) from None
    head = records[0]
    if head.get("format") != FORMAT_TAG:
        raise ValidationError("not an interchange document", [error("no_header", "first record is not a document header")])
    tiers: list[Tier] = []
    name, kind, participant, segs = None, None, None, []

    def close():
        if name is not None:
            tiers.append(Tier(name, kind, participant, tuple(segs)))

    for n, rec in enumerate(records[1:], 2):
        if "tier" in rec:
            close()
            name, kind, participant, segs = rec["tier"], rec.get("kind") or infer_kind(rec["tier"])[0], rec.get("participant"), []
            if kind not in TIER_KINDS:
                raise ValidationError(f"record {n}: unknown tier kind", [error("bad_kind", repr(kind), name)])
        else:
            if name is None:
                raise ValidationError(f"record {n}: segment before any tier header", [error("orphan_segment", "", f"record {n}")])
            where = f"{name}#{len(segs)}"
            segs.append(Segment(_int_field(rec, "start_ms", where), _int_field(rec, "end_ms", where), str(rec.get("value", ""))))
    close()
    doc = AnnotationDocument(str(head["session_id"]), _int_field(head, "timeline_duration_ms", "header"), tuple(tiers))
    return _checked(doc)


# -- eaf subset -------------------------------------------------------------

_EAF_IGNORED = {
    "LINGUISTIC_TYPE", "CONSTRAINT", "LANGUAGE", "LOCALE",
    "CONTROLLED_VOCABULARY", "EXTERNAL_REF", "LEXICON_REF", "LICENSE",
}


def _import_eaf(data: bytes, session_id: str | None, overrides: dict | None) -> AnnotationDocument:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ValidationError("malformed XML", [error("bad_xml", str(exc))]) from None
    if root.tag != "ANNOTATION_DOCUMENT":
        raise ValidationError("not an annotation document", [error("bad_root", root.tag)])
    props: dict[str, str] = {}
    slots: dict[str, int] = {}
    tiers: list[Tier] = []
    problems: list[Diagnostic] = []

    for child in root:
        if child.tag == "HEADER":
            for p in child.iter("PROPERTY"):
                props[p.get("NAME", "")] = (p.text or "").strip()
        elif child.tag == "TIME_ORDER":
            for ts in child:
                sid = ts.get("TIME_SLOT_ID")
                value = ts.get("TIME_VALUE")
                if value is None:
                    problems.append(error("unsupported_element", "time slot without TIME_VALUE", sid or "?"))
                    continue
                try:
                    t = int(value)
                except ValueError:
                    problems.append(error("bad_time", f"time slot value {value!r} is not integer ms", sid or "?"))
                    continue
                if t < 0:
                    problems.append(error("negative_time", f"time slot at {t} ms", sid))
                slots[sid] = t
    for child in root:
        if child.tag != "TIER":
            if child.tag not in ("HEADER", "TIME_ORDER") and child.tag not in _EAF_IGNORED:
                problems.append(error("unsupported_element", f"unsupported element <{child.tag}>", child.tag))
            continue
        name = child.get("TIER_ID", "")
        segs = []
        for ann in child:
            if ann.tag != "ANNOTATION":
                problems.append(error("unsupported_element", f"unsupported element <{ann.tag}>", name))
                continue
            for a in ann:
                if a.tag != "ALIGNABLE_ANNOTATION":
                    problems.append(error("unsupported_element", f"unsupported element <{a.tag}>", name))
                    continue
                aid = a.get("ANNOTATION_ID", "?")
                refs = (a.get("TIME_SLOT_REF1"), a.get("TIME_SLOT_REF2"))
                missing = [r for r in refs if r not in slots]
                if missing:
                    for r in missing:
                        problems.append(error("dangling_time_slot", f"annotation {aid} references missing time slot {r}", f"{name}/{aid}"))
                    continue
                val = a.find("ANNOTATION_VALUE")
                segs.append(Segment(slots[refs[0]], slots[refs[1]], (val.text or "") if val is not None else ""))
        segs.sort(key=lambda s: (s.start_ms, s.end_ms))
        kind, participant = infer_kind(name, overrides)
        participant = child.get("PARTICIPANT") or participant
        tiers.append(Tier(name, kind, participant, tuple(segs)))
    if problems:
        raise ValidationError("invalid eaf-subset document", problems)
    sid = session_id or props.get("session_id") or "session"
    if "timeline_duration_ms" in props:
        duration = int(props["timeline_duration_ms"])
    else:
        duration = max(slots.values(), default=0)
    return _checked(AnnotationDocument(sid, duration, tuple(tiers)))


def export_eaf(doc: AnnotationDocument) -> bytes:
    root = ET.Element("ANNOTATION_DOCUMENT", {"FORMAT": "3.0", "VERSION": "3.0", "AUTHOR": ""})
    header = ET.SubElement(root, "HEADER", {"TIME_UNITS": "milliseconds"})
    for k, v in (("session_id", doc.session_id), ("timeline_duration_ms", str(doc.timeline_duration_ms))):
        ET.SubElement(header, "PROPERTY", {"NAME": k}).text = v
    times = sorted({t for tier in doc.tiers for s in tier.segments for t in (s.start_ms, s.end_ms)})
    slot_of = {t: f"ts{i}" for i, t in enumerate(times, 1)}
    order = ET.SubElement(root, "TIME_ORDER")
    for t in times:
        ET.SubElement(order, "TIME_SLOT", {"TIME_SLOT_ID": slot_of[t], "TIME_VALUE": str(t)})
    n = 0
    for tier in sorted(doc.tiers, key=lambda t: t.name):
        attrs = {"TIER_ID": tier.name, "LINGUISTIC_TYPE_REF": "default-lt"}
        if tier.participant:
            attrs["PARTICIPANT"] = tier.participant
        el = ET.SubElement(root, "TIER", attrs)
        for s in tier.segments:
            n += 1
            ann = ET.SubElement(el, "ANNOTATION")
            a = ET.SubElement(ann, "ALIGNABLE_ANNOTATION", {
                "ANNOTATION_ID": f"a{n}", "TIME_SLOT_REF1": slot_of[s.start_ms], "TIME_SLOT_REF2": slot_of[s.end_ms],
            })
            ET.SubElement(a, "ANNOTATION_VALUE").text = s.value
    ET.SubElement(root, "LINGUISTIC_TYPE", {"LINGUISTIC_TYPE_ID": "default-lt", "TIME_ALIGNABLE": "true"})
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def import_annotation_document(data: bytes, format: str = "interchange", *, session_id=None, kind_overrides=None) -> AnnotationDocument:
    """Load a document; raises :class:`ValidationError` listing every finding."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    if format == "interchange":
        doc = _import_interchange(data)
        if kind_overrides:
            doc = replace(doc, tiers=tuple(
                replace(t, kind=kind_overrides[t.name]) if t.name in kind_overrides else t for t in doc.tiers
            ))
        return doc
    if format in ("eaf-subset", "eaf"):
        return _import_eaf(data, session_id, kind_overrides)
    raise ValueError(f"unknown annotation format {format!r}")


def export_document(doc: AnnotationDocument, format: str = "interchange") -> bytes:
    if format == "interchange":
        return export_interchange(doc)
    if format in ("eaf-subset", "eaf"):
        return export_eaf(doc)
    raise ValueError(f"unknown annotation format {format!r}")


def format_for_path(path: str) -> str:
    return "eaf-subset" if str(path).lower().endswith(".eaf") else "interchange"
