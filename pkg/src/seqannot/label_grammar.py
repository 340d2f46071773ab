"""Shortclip label strings: ``hgreeting1p, hquestionp, silence, pgreeting2h``.

A directed token is ``<transmitter><tag>[1|2]<recipient>`` where both
parties are ``h`` (human) or ``p`` (robot).  Anything else is a plain token
(``silence``, ``laughter`` ...).  Which interiors count as directed tags is
decided by a :class:`TagRegistry`, so a plain tag that happens to start and
end with ``h``/``p`` is never misread as long as it is not registered.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .diagnostics import Diagnostic, LabelSyntaxError, warning

PARTIES = ("h", "p")
_IDENT = re.compile(r"^[a-z]+$")
_FIELD_CHARS = re.compile(r"^[a-z0-9]+$")
_INTERIOR = re.compile(r"^([a-z]+?)([12])?$")


@dataclass(frozen=True)
class TagRegistry:
    directed_tags: frozenset
    plain_tags: frozenset
    pairable_tags: frozenset

    def __post_init__(self):
        for name in (*self.directed_tags, *self.plain_tags):
            if not _IDENT.match(name):
                raise ValueError(f"tag {name!r} is not a lowercase ASCII identifier")
        both = self.directed_tags & self.plain_tags
        if both:
            raise ValueError(f"tags both directed and plain: {sorted(both)}")
        extra = self.pairable_tags - self.directed_tags
        if extra:
            raise ValueError(f"pairable tags not directed: {sorted(extra)}")

    @classmethod
    def build(cls, directed: Iterable[str], plain: Iterable[str], pairable: Iterable[str] = ()):
        pairable = frozenset(pairable)
        return cls(frozenset(directed) | pairable, frozenset(plain), pairable)

    def extended(self, directed=(), plain=(), pairable=()) -> "TagRegistry":
        return TagRegistry(
            self.directed_tags | frozenset(directed) | frozenset(pairable),
            self.plain_tags | frozenset(plain),
            self.pairable_tags | frozenset(pairable),
        )


def parse_registry_config(text: str) -> TagRegistry:
    """Read a registry file: one tag per line under ``[directed]``, ``[plain]``
    and ``[pairable]`` headers.  ``#`` starts a comment.  Pairable tags are
    implicitly directed."""
    sections = {"directed": set(), "plain": set(), "pairable": set()}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in sections:
                raise ValueError(f"registry line {lineno}: unknown section [{current}]")
            continue
        if current is None:
            raise ValueError(f"registry line {lineno}: tag outside of a section")
        sections[current].add(line)
    return TagRegistry.build(
        sections["directed"] | sections["pairable"], sections["plain"], sections["pairable"]
    )


def load_registry(path=None) -> TagRegistry:
    if path is None:
        return default_registry()
    with open(path, encoding="utf-8") as fh:
        return parse_registry_config(fh.read())


_DEFAULT: TagRegistry | None = None


def default_registry() -> TagRegistry:
    """The shipped canonical registry (``data/registry.conf``)."""
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("seqannot.data").joinpath("registry.conf").read_text("utf-8")
        _DEFAULT = parse_registry_config(text)
    return _DEFAULT


@dataclass(frozen=True)
class Directed:
    transmitter: str
    base: str
    pair_part: int | None
    recipient: str

    def __str__(self) -> str:
        part = "" if self.pair_part is None else str(self.pair_part)
        return f"{self.transmitter}{self.base}{part}{self.recipient}"

    @property
    def tag(self) -> str:
        return self.base


@dataclass(frozen=True)
class Plain:
    name: str
    known: bool = True

    def __str__(self) -> str:
        return self.name

    @property
    def tag(self) -> str:
        return self.name


LabelToken = Directed | Plain


@dataclass(frozen=True)
class LabelSequence:
    tokens: tuple
    source_text: str = field(default="", compare=False)
    diagnostics: tuple = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


def _split_fields(text: str) -> list[str]:
    if not text.strip():
        return []
    return [f.strip() for f in text.split(",")]


def _directed_from(field_text: str, registry: TagRegistry) -> Directed | None:
    if len(field_text) < 3 or field_text[0] not in PARTIES or field_text[-1] not in PARTIES:
        return None
    m = _INTERIOR.match(field_text[1:-1])
    if not m:
        return None
    base, digit = m.group(1), m.group(2)
    if base not in registry.directed_tags:
        return None
    if digit is not None and base not in registry.pairable_tags:
        return None
    return Directed(field_text[0], base, None if digit is None else int(digit), field_text[-1])


def parse_label_string(text: str, registry: TagRegistry | None = None) -> LabelSequence:
    registry = registry or default_registry()
    tokens: list = []
    diags: list[Diagnostic] = []
    for i, f in enumerate(_split_fields(text)):
        if not f:
            raise LabelSyntaxError(f"empty label field at index {i}", i)
        if not _FIELD_CHARS.match(f):
            raise LabelSyntaxError(f"illegal character in label field {i}: {f!r}", i)
        tok = _directed_from(f, registry)
        if tok is None:
            known = f in registry.plain_tags
            tok = Plain(f, known)
            if not known:
                diags.append(warning("unknown_tag", f"unknown tag {f!r}", f"token {i}"))
        tokens.append(tok)
    return LabelSequence(tuple(tokens), text, tuple(diags))


def serialize_label_sequence(seq: LabelSequence | Iterable) -> str:
    tokens = seq.tokens if isinstance(seq, LabelSequence) else tuple(seq)
    return ", ".join(str(t) for t in tokens)


def lint_labels(seq: LabelSequence, registry: TagRegistry | None = None) -> list[Diagnostic]:
    """Non-blocking warnings: unpaired pair parts, unknown tags, self-addressing."""
    registry = registry or default_registry()
    out: list[Diagnostic] = []
    # FIFO matching of first parts to later second parts, per base tag
    pending: dict[str, list[int]] = {}
    for i, tok in enumerate(seq.tokens):
        if isinstance(tok, Plain):
            if tok.name not in registry.plain_tags:
                out.append(warning("unknown_tag", f"unknown tag {tok.name!r}", f"token {i}"))
            continue
        if tok.base not in registry.directed_tags:
            out.append(warning("unknown_tag", f"unknown tag {tok.base!r}", f"token {i}"))
        if tok.transmitter == tok.recipient:
            out.append(warning("self_addressed", "self-addressed token", f"token {i}"))
        if tok.pair_part == 1:
            pending.setdefault(tok.base, []).append(i)
        elif tok.pair_part == 2:
            if pending.get(tok.base):
                pending[tok.base].pop(0)
            else:
                out.append(warning("unpaired", f"unpaired {tok.base}2", f"token {i}"))
    for base, idxs in pending.items():
        for i in idxs:
            out.append(warning("unpaired", f"unpaired {base}1", f"token {i}"))
    out.sort(key=lambda d: int(d.location.split()[-1]))
    return out


# -- queries ---------------------------------------------------------------


@dataclass(frozen=True)
class TokenPattern:
    """One query token.  ``None`` fields are wildcards."""

    directed: bool
    transmitter: str | None = None
    tag: str | None = None
    pair_part: int | None = None
    recipient: str | None = None

    def matches(self, tok) -> bool:
        if not self.directed:
            if self.tag is None:
                return True
            return isinstance(tok, Plain) and tok.name == self.tag
        if not isinstance(tok, Directed):
            return False
        return (
            (self.transmitter is None or tok.transmitter == self.transmitter)
            and (self.recipient is None or tok.recipient == self.recipient)
            and (self.tag is None or tok.base == self.tag)
            and (self.pair_part is None or tok.pair_part == self.pair_part)
        )


_PATTERN_FIELD = re.compile(r"^[a-z0-9?*]+$")


def parse_token_pattern(text: str, registry: TagRegistry | None = None) -> TokenPattern:
    """``h*p``, ``?greeting1h``, ``silence``; a bare ``*`` matches any token.

    A directed pattern without a pair-part digit matches every pair part."""
    registry = registry or default_registry()
    if not _PATTERN_FIELD.match(text):
        raise LabelSyntaxError(f"illegal character in query token {text!r}")
    if text == "*":
        return TokenPattern(False)
    if len(text) >= 3 and text[0] in "hp?" and text[-1] in "hp?":
        interior = text[1:-1]
        m = re.match(r"^(\*|[a-z]+?)([12])?$", interior)
        if m and (m.group(1) == "*" or m.group(1) in registry.directed_tags):
            tag = None if m.group(1) == "*" else m.group(1)
            return TokenPattern(
                True,
                None if text[0] == "?" else text[0],
                tag,
                None if m.group(2) is None else int(m.group(2)),
                None if text[-1] == "?" else text[-1],
            )
    if "?" in text or "*" in text:
        raise LabelSyntaxError(f"malformed query token {text!r}")
    return TokenPattern(False, tag=text)


def parse_query(pattern: str, registry: TagRegistry | None = None) -> list[TokenPattern]:
    return [parse_token_pattern(p, registry) for p in pattern.split()]


@dataclass(frozen=True)
class QueryMatch:
    matched: bool
    span: tuple = ()

    def __bool__(self) -> bool:
        return self.matched


def match_label_query(seq: LabelSequence, pattern, registry: TagRegistry | None = None) -> QueryMatch:
    """Ordered-subsequence match; reports the leftmost matching indices."""
    pats = parse_query(pattern, registry) if isinstance(pattern, str) else list(pattern)
    span: list[int] = []
    i = 0
    tokens = seq.tokens
    for pat in pats:
        while i < len(tokens) and not pat.matches(tokens[i]):
            i += 1
        if i == len(tokens):
            return QueryMatch(False)
        span.append(i)
        i += 1
    return QueryMatch(True, tuple(span))
