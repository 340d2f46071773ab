"""Sequential annotation toolkit for naturally-occurring human-robot interaction."""

from .label_grammar import (
    Directed,
    LabelSequence,
    Plain,
    TagRegistry,
    default_registry,
    lint_labels,
    match_label_query,
    parse_label_string,
    serialize_label_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "Directed",
    "LabelSequence",
    "Plain",
    "TagRegistry",
    "default_registry",
    "lint_labels",
    "match_label_query",
    "parse_label_string",
    "serialize_label_sequence",
]
