"""How much silence precedes the robot's answer in the second excerpt?

Only parenthesised pauses carry a duration.  Laughter, in-breaths and
the body torque in between are unmeasured, so the sum is a lower bound
on the real delay.
"""

from seqannot.samples import sample2_transcript
from seqannot.transcript import Nonverbal, Silence, measured_gap

t = sample2_transcript()
for e in t.events:
    if isinstance(e, Silence) and e.duration_ms:
        print(f"{e.line_no:>3}  ({e.duration_ms / 1000:.1f})")
    elif isinstance(e, Nonverbal):
        print(f"{e.line_no:>3}  (({e.description}))  unmeasured")

gap = measured_gap(t, 1, 12)
kind = "exact" if gap.complete else "at least"
print(f"\nlines 1 -> 12: {kind} {gap.duration_ms / 1000:.1f}s of silence")
