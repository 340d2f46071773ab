"""The two transcribed excerpts used throughout the docs and tests.

Sample 1 is encoded as a replay stream with one action per analysed unit.
Times are invented but consistent with the transcript: the measured silences
(1.0, 1.5 and 2.0 s) are reproduced exactly.
"""

from __future__ import annotations

from importlib import resources

from .sequence_engine import Abandon, ActionEvent, Narrow
from .transcript import Transcript, parse_transcript

OFFER_RESPONSES = frozenset({"acceptance", "rejection", "request", "question"})
SERVICE_FOLLOW_UP = frozenset({"proposal", "offer", "request"})

SAMPLE1_LABELS = "hgreeting1p, hquestionp, silence, pgreeting2h"


def _text(name: str) -> str:
    return resources.files("seqannot.data").joinpath(name).read_text("utf-8")


def sample1_transcript() -> Transcript:
    return parse_transcript(_text("sample1_transcript.txt"))


def sample2_transcript() -> Transcript:
    return parse_transcript(_text("sample2_transcript.txt"))


# transcript line -> timeline span (ms)
SAMPLE1_LINES = {
    1: (0, 1500),
    2: (1500, 2500),
    3: (2500, 2900),
    4: (2900, 4200),
    5: (4200, 6400),
    6: (6400, 7900),
    7: (7900, 9200),
    8: (9200, 11200),
    9: (11200, 12400),
}


def sample1_stream() -> list:
    """Actions and directives for Sample 1, in replay order."""
    return [
        # 1 Pep: hi (.) can I help you?
        ActionEvent(0, 1500, "Pep", "greeting1", awaited_next={"greeting2"}),
        ActionEvent(0, 1500, "Pep", "offer", awaited_next=OFFER_RESPONSES),
        # 3 Hum1: hi
        ActionEvent(2500, 2900, "Hum1", "greeting2"),
        # 4 ((hum1 and hum2 laugh))
        ActionEvent(2900, 4200, "Hum1", "laughter", "byplay"),
        ActionEvent(2900, 4200, "Hum2", "laughter", "byplay"),
        # 5 Hum1: you alright? yes you can help me
        ActionEvent(4200, 5000, "Hum1", "howareyou", awaited_next={"answer"}),
        ActionEvent(5000, 6400, "Hum1", "acceptance", awaited_next=SERVICE_FOLLOW_UP),
        # 7 Hum1: if you do not respond
        ActionEvent(7900, 9200, "Hum1", "repair_init"),
        Narrow(7900, "B", {"proposal", "offer"}),
        # 9 Pep: how can I help you?
        ActionEvent(11200, 12400, "Pep", "offer", awaited_next=OFFER_RESPONSES),
        Abandon(11200, "A", "superseded"),
    ]


def sample1_silences() -> list[tuple[int, int]]:
    return [SAMPLE1_LINES[n] for n in (2, 6, 8)]
