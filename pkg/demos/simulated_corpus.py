"""Generate a small synthetic corpus with the example dialogue machine.

Three visitors run slightly different scripts.  Each run becomes one
session (thread tiers, text tiers, identity alignment) plus one clip per
exchange.  The corpus is then indexed, searched and summarised, and a
cut-list is written the way it would be handed to a video tool.
"""

import tempfile
from pathlib import Path

from seqannot.corpus import build_index, compute_stats, emit_cutlist, query_clips
from seqannot.dialogue_sim import exchange_clips, load_machine, log_to_document, simulate
from seqannot.dialogue_sim import example_machine_config
from seqannot.tiers import export_document

SCRIPTS = {
    "v01": "say greeting1 : hello\npause 1200\nsay request : where are the toilets please\nsay closing1 : thanks bye",
    "v02": "say greeting1 : hi\npause 2500\nsay question : what is your name\nsay closing1 : bye",
    "v03": "say greeting1 : bonjour\nsay request : i need the wifi password\npause 900\nsay request : and a book\n"
           "say closing1 : goodbye",
}

machine = load_machine(example_machine_config())
root = Path(tempfile.mkdtemp(prefix="seqannot-demo-"))

for sid, script in SCRIPTS.items():
    log = simulate(machine, script)
    session = root / "sessions" / sid
    session.mkdir(parents=True)
    doc = log_to_document(log, machine, session_id=sid, recording_id=f"{sid}.mp4")
    (session / "annotations.jsonl").write_bytes(export_document(doc))
    rows = [f"{sid}-{cid}\t{a}\t{b}\t{labels}\n" for cid, a, b, labels in exchange_clips(log, machine)]
    (session / "clips.tsv").write_text("".join(rows))

index, diags = build_index(root)
print(f"{len(index.sessions)} sessions, {len(index.clips)} clips, {len(diags)} diagnostics  ({root})")

print("\nclips where the robot answers a human question or request")
for c, span in query_clips(index, "h*p panswerh"):
    print(f"  {c.clip_id}  [{c.start_ms},{c.end_ms}]")

report, _ = compute_stats(index)
print("\ntag counts", report.tags)
print("latency (ms)")
for cat, row in report.latency_table().items():
    print(f"  {cat:<10} n={row['n']}  median={row['median']}")

manifest = emit_cutlist(index, query="?greeting1?", command_template="ffmpeg -ss {start_ms}ms -to {end_ms}ms -i {source_recording_id}")
(root / "greetings.tsv").write_text(manifest.to_tsv())
print(f"\ncut-list of greeting clips: {len(manifest.rows)} rows, {manifest.total_duration_ms() / 1000:.1f}s")
print(manifest.to_tsv())
