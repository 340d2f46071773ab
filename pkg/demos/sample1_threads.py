"""Replay the first transcribed excerpt as sequential threads.

The robot greets and offers help in one turn, the visitor returns the
greeting, both visitors laugh between themselves, and the robot's long
silence eventually triggers a repair.  The script prints the ledger
thread by thread, classifies each measured silence, and shows the
tier export that an annotation editor would display.
"""

from seqannot.samples import SAMPLE1_LINES, sample1_silences, sample1_stream, sample1_transcript
from seqannot.sequence_engine import (
    ResponseGap,
    export_to_tiers,
    latencies,
    replay,
    stacking_string,
)
from seqannot.transcript import serialize_transcript

print(serialize_transcript(sample1_transcript()))

result = replay(sample1_stream(), sample1_silences())
ledger = result.ledger
line_of = {start: n for n, (start, _) in SAMPLE1_LINES.items()}


def line(ms):
    # latest transcript line starting at or before ms
    return max(n for s, n in line_of.items() if s <= ms)


print("threads")
for p in sorted(ledger.projections, key=lambda p: (p.thread, p.id)):
    opener = ledger.events[p.opened_by]
    end = "still open" if p.is_open else f"{p.status} at line {line(p.closed_at_ms)}"
    if p.abandon_reason:
        end += f" ({p.abandon_reason})"
    delays = f", delayed {len(p.delays)}x by byplay" if p.delays else ""
    print(f"  {p.thread}: {opener.category:<12} line {line(p.opened_at_ms)} -> {end}{delays}")

print("\nsilences")
for (start, end), cls in result.silences:
    if isinstance(cls, ResponseGap):
        what = "response gap, awaiting " + "; ".join(f"{t}: {'/'.join(sorted(aw))}" for t, aw in cls.awaiting)
    else:
        what = "lapse"
    print(f"  line {line(start)} ({(end - start) / 1000:.1f}s): {what}")

print("\nstacking", stacking_string(ledger))
print("latencies", dict(latencies(ledger)))

print("\nthread tiers")
doc = export_to_tiers(ledger, "sample1", 12400)
for tier in doc.tiers_of_kind("sequential"):
    for seg in tier.segments:
        print(f"  {tier.name:<12} {seg.start_ms:>6} {seg.end_ms:>6}  {seg.value}")
