"""Command-line entry point: ``seqannot <group> <command> ...``.

Exit status is 0 on success, 1 when validation found problems and 2 for
usage or I/O errors.  ``--structured`` switches every command to one JSON
record per line with sorted keys, so output is byte-identical across runs.
A path of ``-`` reads standard input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .diagnostics import LabelSyntaxError, LedgerError, MachineConfigError, ValidationError, has_errors
from .label_grammar import (
    Directed,
    default_registry,
    lint_labels,
    load_registry,
    match_label_query,
    parse_label_string,
    parse_query,
    serialize_label_sequence,
)

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input that is not a validation finding (exit 2)."""


class _Out:
    def __init__(self, args):
        self.structured = args.structured
        self.lines: list[str] = []

    def record(self, rec: dict, human: str | None = None) -> None:
        if self.structured:
            self.lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
        elif human is not None:
            self.lines.append(human)

    def text(self, line: str) -> None:
        """Human-only line."""
        if not self.structured:
            self.lines.append(line)

    def diagnostics(self, diags) -> None:
        for d in diags:
            self.record({"type": "diagnostic", **d.as_record()}, str(d))

    def payload(self) -> str:
        return "".join(line + "\n" for line in self.lines)


# -- input helpers -------------------------------------------------------------


def _read_bytes(path: str) -> bytes:
    try:
        return sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _read_text(path: str) -> str:
    try:
        return _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise UsageError(f"{path} is not UTF-8") from exc


def _registry(args):
    if getattr(args, "registry", None):
        try:
            return load_registry(args.registry)
        except OSError as exc:
            raise UsageError(f"cannot read registry {args.registry}: {exc.strerror}") from exc
    return default_registry()


def _label_lines(path: str):
    for n, line in enumerate(_read_text(path).splitlines(), 1):
        if line.strip():
            yield n, line.strip()


def _document(args, path: str | None = None):
    from .tiers import format_for_path, import_annotation_document

    path = path or args.input
    fmt = args.format or ("interchange" if path == "-" else format_for_path(path))
    return import_annotation_document(_read_bytes(path), fmt)


def _token_record(tok) -> dict:
    if isinstance(tok, Directed):
        return {"kind": "directed", "transmitter": tok.transmitter, "tag": tok.base,
                "pair_part": tok.pair_part, "recipient": tok.recipient, "text": str(tok)}
    return {"kind": "plain", "tag": tok.name, "known": tok.known, "text": str(tok)}


# -- labels ----------------------------------------------------------------------


def cmd_labels_parse(args, out: _Out) -> int:
    reg, status = _registry(args), EXIT_OK
    for n, line in _label_lines(args.input):
        try:
            seq = parse_label_string(line, reg)
        except LabelSyntaxError as exc:
            out.record({"type": "error", "line": n, "message": str(exc), "field": exc.field_index},
                       f"{n}: error: {exc}")
            status = EXIT_FINDINGS
            continue
        out.record({"type": "labels", "line": n, "tokens": [_token_record(t) for t in seq]},
                   f"{n}: {len(seq.tokens)} tokens: {serialize_label_sequence(seq)}")
        for t in seq:
            out.text("    " + "  ".join(f"{k}={v}" for k, v in _token_record(t).items() if k != "text"))
        out.diagnostics(seq.diagnostics)
    return status


def cmd_labels_lint(args, out: _Out) -> int:
    reg, status = _registry(args), EXIT_OK
    for n, line in _label_lines(args.input):
        try:
            diags = lint_labels(parse_label_string(line, reg), reg)
        except LabelSyntaxError as exc:
            out.record({"type": "error", "line": n, "message": str(exc)}, f"{n}: error: {exc}")
            status = EXIT_FINDINGS
            continue
        for d in diags:
            out.record({"type": "diagnostic", "line": n, **d.as_record()}, f"{n}: {d}")
        if diags:
            status = EXIT_FINDINGS
    return status


def cmd_labels_query(args, out: _Out) -> int:
    reg = _registry(args)
    try:
        pats = parse_query(args.pattern, reg)
    except LabelSyntaxError as exc:
        raise UsageError(f"bad pattern: {exc}") from exc
    for n, line in _label_lines(args.input):
        try:
            m = match_label_query(parse_label_string(line, reg), pats)
        except LabelSyntaxError:
            continue
        if m:
            out.record({"type": "hit", "line": n, "span": list(m.span), "labels": line},
                       f"{n}: {line}  @{list(m.span)}")
    return EXIT_OK


# -- transcript ------------------------------------------------------------------


def _transcript(path):
    from .transcript import parse_transcript

    return parse_transcript(_read_text(path))


def cmd_transcript_parse(args, out: _Out) -> int:
    from .transcript import event_record, serialize_transcript

    try:
        t = _transcript(args.input)
    except ValueError as exc:
        out.record({"type": "error", "message": str(exc)}, f"error: {exc}")
        return EXIT_FINDINGS
    for e in t.events:
        out.record({"type": "event", **event_record(e)})
    out.text(serialize_transcript(t).rstrip("\n"))
    out.text(f"-- {len(t.events)} events, participants: {', '.join(sorted(t.participants))}")
    out.diagnostics(t.diagnostics)
    return EXIT_OK


def cmd_transcript_gap(args, out: _Out) -> int:
    from .transcript import measured_gap

    try:
        t = _transcript(args.input)
        gap = measured_gap(t, args.from_line, args.to_line)
    except KeyError as exc:
        raise UsageError(f"no such line {exc}") from exc
    except ValueError as exc:
        out.record({"type": "error", "message": str(exc)}, f"error: {exc}")
        return EXIT_FINDINGS
    bound = "exact" if gap.complete else "lower bound"
    out.record({"type": "gap", "from": args.from_line, "to": args.to_line,
                "duration_ms": gap.duration_ms, "complete": gap.complete},
               f"{args.from_line}->{args.to_line}: {gap.duration_ms} ms ({bound})")
    return EXIT_OK


# -- annot -----------------------------------------------------------------------


def _doc_or_findings(args, out: _Out):
    try:
        return _document(args)
    except ValidationError as exc:
        out.diagnostics(exc.diagnostics or [])
        if not exc.diagnostics:
            out.record({"type": "error", "message": exc.message}, f"error: {exc.message}")
        return None


def _write(path: str, data: bytes) -> None:
    try:
        if path == "-":
            sys.stdout.buffer.write(data)
        else:
            Path(path).write_bytes(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def cmd_annot_import(args, out: _Out) -> int:
    doc = _doc_or_findings(args, out)
    if doc is None:
        return EXIT_FINDINGS
    out.record({"type": "document", "session_id": doc.session_id,
                "timeline_duration_ms": doc.timeline_duration_ms, "tiers": len(doc.tiers)},
               f"session {doc.session_id}: {doc.timeline_duration_ms} ms, {len(doc.tiers)} tiers")
    for t in doc.tiers:
        out.record({"type": "tier", "name": t.name, "kind": t.kind, "participant": t.participant,
                    "segments": len(t.segments)},
                   f"  {t.name:<20} {t.kind:<11} {len(t.segments):>4} segments")
    return EXIT_OK


def cmd_annot_validate(args, out: _Out) -> int:
    from .tiers import validate_tiers

    doc = _doc_or_findings(args, out)
    if doc is None:
        return EXIT_FINDINGS
    diags = validate_tiers(doc)
    out.diagnostics(diags)
    if not diags:
        out.text("ok")
    return EXIT_FINDINGS if has_errors(diags) else EXIT_OK


def cmd_annot_export(args, out: _Out) -> int:
    from .tiers import export_document

    doc = _doc_or_findings(args, out)
    if doc is None:
        return EXIT_FINDINGS
    target = args.out_file
    _write(target, export_document(doc, args.to))
    if target != "-":
        out.record({"type": "written", "path": target, "format": args.to}, f"wrote {target} ({args.to})")
    return EXIT_OK


def cmd_annot_map(args, out: _Out) -> int:
    from .tiers import Segment, map_to_source

    if not 0 <= args.start < args.end:
        raise UsageError("need 0 <= start < end")
    doc = _doc_or_findings(args, out)
    if doc is None:
        return EXIT_FINDINGS
    try:
        mapping = map_to_source(doc, Segment(args.start, args.end))
    except ValueError as exc:
        out.record({"type": "error", "message": str(exc)}, f"error: {exc}")
        return EXIT_FINDINGS
    for r in mapping.ranges:
        out.record({"type": "range", "source_recording_id": r.source_recording_id,
                    "start_ms": r.start_ms_in_source, "end_ms": r.end_ms_in_source,
                    "timeline_start_ms": r.timeline_start_ms, "timeline_end_ms": r.timeline_end_ms},
                   f"{r.source_recording_id}\t{r.start_ms_in_source}\t{r.end_ms_in_source}")
    out.diagnostics(mapping.warnings)
    return EXIT_OK


# -- seq -------------------------------------------------------------------------


def _replayed(args, out: _Out):
    from .sequence_engine import import_from_tiers, replay, silences_from_tiers

    doc = _doc_or_findings(args, out)
    if doc is None:
        return None
    try:
        return replay(import_from_tiers(doc), silences_from_tiers(doc))
    except LedgerError as exc:
        out.record({"type": "error", "message": str(exc)}, f"error: {exc}")
        return None


def cmd_seq_replay(args, out: _Out) -> int:
    from .sequence_engine import Lapse, summary_records

    result = _replayed(args, out)
    if result is None:
        return EXIT_FINDINGS
    for rec in summary_records(result.ledger):
        closing = {"satisfied": f"satisfied by {rec['satisfied_by']}",
                   "abandoned": f"abandoned ({rec['abandon_reason']})"}.get(rec["status"], "open")
        when = "" if rec["closed_at_ms"] is None else f" at {rec['closed_at_ms']}"
        awaited = ",".join(rec["awaited"]) or "-"
        extra = f", {rec['delays']} delays" if rec["delays"] else ""
        out.record({"type": "projection", **rec},
                   f"{rec['framework']}/{rec['thread']} #{rec['projection']} {rec['kind']} "
                   f"{rec['opened_by']}@{rec['opened_at_ms']} awaits {awaited}{extra}: {closing}{when}")
    for span, cls in result.silences:
        if isinstance(cls, Lapse):
            rec, human = {"class": "lapse"}, "lapse"
        else:
            rec = {"class": "response_gap", "threads": list(cls.threads)}
            human = "response gap over " + ",".join(cls.threads)
        out.record({"type": "silence", "start_ms": span[0], "end_ms": span[1], **rec},
                   f"silence [{span[0]},{span[1]}]: {human}")
    return EXIT_OK


def cmd_seq_lint(args, out: _Out) -> int:
    from .sequence_engine import check_invariants

    result = _replayed(args, out)
    if result is None:
        return EXIT_FINDINGS
    diags = list(result.diagnostics)
    out.diagnostics(diags)
    problems = check_invariants(result.ledger)
    for p in problems:
        out.record({"type": "invariant", "message": p}, f"invariant: {p}")
    if not diags and not problems:
        out.text("ok")
    return EXIT_FINDINGS if diags or problems else EXIT_OK


def cmd_seq_stacking(args, out: _Out) -> int:
    from .sequence_engine import stacking_string

    result = _replayed(args, out)
    if result is None:
        return EXIT_FINDINGS
    s = stacking_string(result.ledger)
    out.record({"type": "stacking", "value": s}, s)
    return EXIT_OK


# -- corpus ----------------------------------------------------------------------


def _index(args, out: _Out, show: bool = False):
    from .corpus import build_index

    if not Path(args.root).is_dir():
        raise UsageError(f"{args.root} is not a directory")
    index, diags = build_index(args.root, workers=getattr(args, "workers", None))
    if show:
        out.diagnostics(diags)
    return index, diags


def cmd_corpus_index(args, out: _Out) -> int:
    index, diags = _index(args, out, show=True)
    for sid, s in index.sessions.items():
        n = sum(1 for c in index.clips if c.session_id == sid)
        out.record({"type": "session", "session_id": sid, "recordings": s.recordings, "clips": n,
                    "timeline_duration_ms": s.document.timeline_duration_ms},
                   f"{sid}: {n} clips, recordings {','.join(s.recordings) or '-'}")
    return EXIT_FINDINGS if has_errors(diags) else EXIT_OK


def cmd_corpus_query(args, out: _Out) -> int:
    from .corpus import query_clips

    index, _ = _index(args, out)
    try:
        hits = query_clips(index, args.pattern)
    except LabelSyntaxError as exc:
        raise UsageError(f"bad pattern: {exc}") from exc
    for c, span in hits:
        out.record({"type": "hit", "clip_id": c.clip_id, "session_id": c.session_id, "start_ms": c.start_ms,
                    "end_ms": c.end_ms, "span": list(span), "labels": serialize_label_sequence(c.labels)},
                   f"{c.clip_id}\t{c.session_id}\t{c.start_ms}\t{c.end_ms}\t{serialize_label_sequence(c.labels)}")
    return EXIT_OK


def cmd_corpus_stats(args, out: _Out) -> int:
    from .corpus import compute_stats

    index, _ = _index(args, out)
    report, diags = compute_stats(index, bin_ms=args.bin_ms)
    out.diagnostics(diags)
    for rec in report.records():
        table = rec.pop("table")
        out.record({"type": "stats", "table": table, **rec},
                   f"{table:<9} " + "  ".join(f"{k}={v}" for k, v in rec.items()))
    if report.is_empty():
        out.text("empty corpus")
    return EXIT_OK


def cmd_corpus_cutlist(args, out: _Out) -> int:
    from .corpus import emit_cutlist

    index, _ = _index(args, out)
    ids = args.clips.split(",") if args.clips else None
    try:
        manifest = emit_cutlist(index, clip_ids=ids, query=args.query, command_template=args.command_template)
    except LabelSyntaxError as exc:
        raise UsageError(f"bad pattern: {exc}") from exc
    except (KeyError, IndexError) as exc:
        raise UsageError(f"bad command template: {exc}") from exc
    if args.structured:
        for r in manifest.rows:
            out.record({"type": "cut", **dataclasses.asdict(r)})
    else:
        out.lines.append(manifest.to_tsv().rstrip("\n"))
    return EXIT_FINDINGS if any(not r.ok for r in manifest.rows) else EXIT_OK


# -- sim ---------------------------------------------------------------------------


def _machine(args):
    from .dialogue_sim import example_machine_config, load_machine

    text = example_machine_config() if args.machine == "example" else _read_text(args.machine)
    return load_machine(text, _registry(args))


def _script(args) -> str:
    from .dialogue_sim import example_script

    return example_script() if args.script == "example" else _read_text(args.script)


def cmd_sim_check(args, out: _Out) -> int:
    try:
        m = _machine(args)
    except MachineConfigError as exc:
        out.record({"type": "error", "message": str(exc)}, f"error: {exc}")
        return EXIT_FINDINGS
    out.record({"type": "machine", "states": sorted(m.states), "initial": m.initial, "rules": len(m.rules)},
               f"ok: {len(m.states)} states, {len(m.rules)} rules, initial {m.initial}")
    return EXIT_OK


def _simulated(args, out: _Out):
    from .dialogue_sim import annotate_log, simulate

    try:
        m = _machine(args)
        log = simulate(m, _script(args), response_delay_ms=args.delay_ms)
    except MachineConfigError as exc:
        out.record({"type": "error", "message": str(exc)}, f"error: {exc}")
        return None
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return m, log, annotate_log(log, m, _registry(args))


def cmd_sim_run(args, out: _Out) -> int:
    sim = _simulated(args, out)
    if sim is None:
        return EXIT_FINDINGS
    _, log, ann = sim
    for e in log.events:
        who = e.speaker or "(silence)"
        out.record({"type": "event", "speaker": e.speaker, "text": e.text, "start_ms": e.start_ms,
                    "end_ms": e.end_ms, "categories": list(e.categories), "source": e.source},
                   f"{e.start_ms:>7} {e.end_ms:>7}  {who:<8} {e.text or ''}  [{'+'.join(e.categories)}]")
    out.record({"type": "labels", "value": ann.label_string, "final_state": log.final_state},
               f"labels: {ann.label_string}")
    out.diagnostics(ann.labels.diagnostics)
    return EXIT_FINDINGS if ann.labels.diagnostics else EXIT_OK


def cmd_sim_gen(args, out: _Out) -> int:
    """Write a one-session corpus: annotations.jsonl and clips.tsv."""
    from .dialogue_sim import exchange_clips, log_to_document
    from .tiers import export_document

    sim = _simulated(args, out)
    if sim is None:
        return EXIT_FINDINGS
    m, log, _ = sim
    doc = log_to_document(log, m, session_id=args.session)
    sdir = Path(args.out_dir) / "sessions" / args.session
    try:
        sdir.mkdir(parents=True, exist_ok=True)
        (sdir / "annotations.jsonl").write_bytes(export_document(doc, "interchange"))
        clips = exchange_clips(log, m)
        (sdir / "clips.tsv").write_text("".join(f"{c}\t{a}\t{b}\t{lab}\n" for c, a, b, lab in clips), "utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {sdir}: {exc.strerror}") from exc
    out.record({"type": "written", "session_dir": str(sdir), "clips": len(clips)},
               f"wrote {sdir} ({len(clips)} clips)")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--registry", help="tag registry config (default: shipped registry)")
    common.add_argument("--format", choices=["eaf-subset", "interchange"],
                        help="annotation input format (default: by file extension)")
    common.add_argument("--structured", action="store_true", help="one JSON record per line")
    common.add_argument("--out", help="write output here instead of stdout")

    p = argparse.ArgumentParser(prog="seqannot", description="Sequential annotation toolkit. Options go after the command.")
    groups = p.add_subparsers(dest="group", required=True, metavar="GROUP")

    def group(name, help_):
        g = groups.add_parser(name, help=help_)
        return g.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def cmd(sub, name, func, help_, *inputs):
        c = sub.add_parser(name, help=help_, parents=[common])
        c.set_defaults(func=func)
        for arg in inputs:
            c.add_argument(arg)
        return c

    g = group("labels", "shortclip label strings")
    cmd(g, "parse", cmd_labels_parse, "parse one label string per line", "input")
    cmd(g, "lint", cmd_labels_lint, "report unpaired parts, unknown tags, self-addressing", "input")
    cmd(g, "query", cmd_labels_query, "ordered-subsequence search", "pattern", "input")

    g = group("transcript", "transcripts")
    cmd(g, "parse", cmd_transcript_parse, "parse and normalise a transcript", "input")
    c = cmd(g, "gap", cmd_transcript_gap, "measured silence strictly between two lines", "input")
    c.add_argument("from_line", type=int)
    c.add_argument("to_line", type=int)

    g = group("annot", "annotation documents")
    cmd(g, "import", cmd_annot_import, "load and summarise a document", "input")
    cmd(g, "validate", cmd_annot_validate, "check tier invariants", "input")
    c = cmd(g, "export", cmd_annot_export, "convert between formats", "input")
    c.add_argument("--to", choices=["eaf-subset", "interchange"], default="interchange")
    c.add_argument("out_file", help="destination path, - for stdout")
    c = cmd(g, "map", cmd_annot_map, "map a timeline range to source recordings", "input")
    c.add_argument("start", type=int)
    c.add_argument("end", type=int)

    g = group("seq", "sequential threads")
    cmd(g, "replay", cmd_seq_replay, "replay thread tiers into a ledger", "input")
    cmd(g, "lint", cmd_seq_lint, "ledger diagnostics and invariant checks", "input")
    cmd(g, "stacking", cmd_seq_stacking, "render the stacking string", "input")

    g = group("corpus", "corpus directories")
    c = cmd(g, "index", cmd_corpus_index, "load and cross-check a corpus", "root")
    c.add_argument("--workers", type=int)
    cmd(g, "query", cmd_corpus_query, "search clip labels", "root", "pattern")
    c = cmd(g, "stats", cmd_corpus_stats, "tag, silence and latency tables", "root")
    c.add_argument("--bin-ms", type=int, default=500)
    c = cmd(g, "cutlist", cmd_corpus_cutlist, "clip extraction manifest", "root")
    c.add_argument("--clips", help="comma-separated clip ids")
    c.add_argument("--query", help="label query selecting clips")
    c.add_argument("--command-template", help="e.g. 'cut {source_recording_id} {start_ms} {end_ms}'")

    g = group("sim", "dialogue machine simulation")
    cmd(g, "check", cmd_sim_check, "validate a machine config ('example' for the shipped one)", "machine")
    for name, func, help_ in (("run", cmd_sim_run, "simulate a script and print the log"),
                              ("gen", cmd_sim_gen, "write a synthetic corpus session")):
        c = cmd(g, name, func, help_, "machine", "script")
        c.add_argument("--delay-ms", type=int, default=500)
        if name == "gen":
            c.add_argument("out_dir")
            c.add_argument("--session", default="sim001")
    return p


def dispatch(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    out = _Out(args)
    try:
        status = args.func(args, out)
        payload = out.payload()
        if args.out:
            _write(args.out, payload.encode("utf-8"))
        else:
            stdout.write(payload)
    except UsageError as exc:
        stderr.write(f"seqannot: {exc}\n")
        return EXIT_USAGE
    return status


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
