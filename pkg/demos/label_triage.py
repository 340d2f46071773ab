"""Triage a handful of shortclip label strings.

Parses each string, reports lint warnings, then runs a few ordered
subsequence queries the way an annotator would when picking clips for
full transcription.
"""

from seqannot import lint_labels, match_label_query, parse_label_string

CLIPS = {
    "c01": "hgreeting1p, hquestionp, silence, pgreeting2h",
    "c02": "pgreeting1h, pofferh, silence, hgreeting2p, hacceptancep",
    "c03": "pofferh, laughter, torque, pofferh",
    "c04": "hquestionh, pclosing1h",
}

QUERIES = [
    "silence pgreeting2h",   # robot answers a greeting only after a silence
    "h*p h*p",               # two human-to-robot actions in a row
    "pofferh * pofferh",     # the robot re-issues its offer
]

parsed = {cid: parse_label_string(text) for cid, text in CLIPS.items()}

print("lint")
for cid, seq in parsed.items():
    warnings = lint_labels(seq)
    print(f"  {cid}: {len(seq)} tokens", "ok" if not warnings else "; ".join(d.message for d in warnings))

print()
for q in QUERIES:
    hits = []
    for cid, seq in parsed.items():
        m = match_label_query(seq, q)
        if m:
            hits.append(f"{cid}@{list(m.span)}")
    print(f"{q!r:24} -> {', '.join(hits) or 'no clips'}")
