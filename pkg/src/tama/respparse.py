"""Parsing of model responses: JSON envelope plus the index-list grammar.

The grammar accepted for the abnormal-index field:

    list  ::= "[" ( entry ( "," entry )* )? "]"
    entry ::= span "/" confidence "/" label
    span  ::= "(" int "," int ")" | "(" int ")"

Whitespace between tokens is insignificant. Parsing is total: malformed
entries are skipped with a diagnostic, out-of-range indices are repaired
(swap / clamp), and bad confidences or labels drop the entry. The caller
always gets back a (detections, diagnostics) pair, never an exception.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .core import AnomalyInterval, AnomalyType, Detection

# Five-label prompt vocabulary -> canonical four-type taxonomy.
LABEL_MAP = {
    "global": AnomalyType.POINT,
    "contextual": AnomalyType.POINT,
    "point": AnomalyType.POINT,
    "frequency": AnomalyType.SEASONAL,
    "seasonal": AnomalyType.SEASONAL,
    "trend": AnomalyType.TREND,
    "shapelet": AnomalyType.SHAPELET,
}

_INDEX_KEYS = ("abnormal_index", "corrected_abnormal_index")

_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(.*)\n?```\s*$", re.DOTALL)


class ResponseFormatError(Exception):
    """The response envelope is unusable (not JSON / no index field)."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class UnknownLabelError(ValueError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str


@dataclass(frozen=True)
class ParsedAnalysis:
    detections: tuple[Detection, ...]
    diagnostics: tuple[Diagnostic, ...]
    abnormal_description: str = ""
    abnormal_type_description: str = ""
    raw: str = ""


def normalize_label(label: str) -> AnomalyType:
    """Map a prompt-vocabulary label onto the canonical taxonomy."""
    try:
        return LABEL_MAP[label.strip().lower()]
    except KeyError:
        raise UnknownLabelError(label) from None


class _Scanner:
    """Recursive-descent scanner over the index-list string."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise _EntryError(f"expected {ch!r} at position {self.pos}")
        self.pos += 1

    def integer(self) -> int:
        self.skip_ws()
        m = re.match(r"[+-]?\d+", self.text[self.pos :])
        if m is None:
            raise _EntryError(f"expected integer at position {self.pos}")
        self.pos += m.end()
        return int(m.group())

    def word(self) -> str:
        self.skip_ws()
        m = re.match(r"[A-Za-z_][A-Za-z0-9_]*", self.text[self.pos :])
        if m is None:
            raise _EntryError(f"expected label at position {self.pos}")
        self.pos += m.end()
        return m.group()

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def skip_to_entry_boundary(self) -> None:
        """Resync after a malformed entry: advance past the next top-level comma."""
        depth = 0
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            self.pos += 1
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth = max(0, depth - 1)
            elif ch == "]" and depth == 0:
                self.pos -= 1
                return
            elif ch == "," and depth == 0:
                return


class _EntryError(Exception):
    pass


def _parse_entry(sc: _Scanner, width: int, diags: list[Diagnostic]) -> Detection | None:
    sc.expect("(")
    start = sc.integer()
    if sc.peek() == ",":
        sc.expect(",")
        end = sc.integer()
    else:
        end = start
    sc.expect(")")
    sc.expect("/")
    confidence = sc.integer()
    sc.expect("/")
    label = sc.word()

    if start > end:
        diags.append(
            Diagnostic("swapped", f"interval ({start}, {end}) had start > end")
        )
        start, end = end, start
    clamped_start = min(max(start, 0), width - 1)
    clamped_end = min(max(end, 0), width - 1)
    if (clamped_start, clamped_end) != (start, end):
        diags.append(
            Diagnostic(
                "clamped",
                f"interval ({start}, {end}) clamped to window [0, {width - 1}]",
            )
        )
        start, end = clamped_start, clamped_end
    if confidence not in (1, 2, 3, 4):
        diags.append(
            Diagnostic("bad_confidence", f"confidence {confidence} outside 1..4")
        )
        return None
    try:
        kind = normalize_label(label)
    except UnknownLabelError:
        diags.append(Diagnostic("unknown_label", f"unknown anomaly label {label!r}"))
        return None
    return Detection(AnomalyInterval(start, end), confidence, kind)


def parse_index_list(s: str, width: int) -> tuple[list[Detection], list[Diagnostic]]:
    """Parse an abnormal-index string; total, never raises.

    Returns the recovered detections (window-local, repaired where needed)
    and the diagnostics describing every repair or skip.
    """
    detections: list[Detection] = []
    diags: list[Diagnostic] = []
    sc = _Scanner(s)

    if sc.peek() == "[":
        sc.pos += 1
    else:
        diags.append(Diagnostic("no_bracket", "index list does not start with '['"))

    while not sc.at_end() and sc.peek() != "]":
        before = sc.pos
        try:
            det = _parse_entry(sc, width, diags)
        except _EntryError as exc:
            diags.append(Diagnostic("malformed_entry", str(exc)))
            if sc.pos == before:
                sc.pos += 1
            sc.skip_to_entry_boundary()
            continue
        if det is not None:
            detections.append(det)
        if sc.peek() == ",":
            sc.pos += 1
        elif sc.peek() != "]" and not sc.at_end():
            diags.append(
                Diagnostic("malformed_entry", f"unexpected text at position {sc.pos}")
            )
            sc.skip_to_entry_boundary()

    if sc.peek() == "]":
        sc.pos += 1
        if not sc.at_end():
            diags.append(Diagnostic("trailing", "text after closing ']' ignored"))
    else:
        diags.append(Diagnostic("no_bracket", "index list is not closed with ']'"))
    return detections, diags


def serialize_detections(detections: list[Detection] | tuple[Detection, ...]) -> str:
    """Render detections in the grammar; parse_index_list inverts this exactly."""
    parts = []
    for d in detections:
        if d.interval.start == d.interval.end:
            span = f"({d.interval.start})"
        else:
            span = f"({d.interval.start}, {d.interval.end})"
        parts.append(f"{span}/{d.confidence}/{d.kind.value}")
    return "[" + ", ".join(parts) + "]"


def strip_fence(text: str) -> str:
    """Remove a single markdown code fence wrapping the whole payload."""
    m = _FENCE_RE.match(text.strip())
    return m.group(1) if m else text


def parse_analysis(text: str, width: int) -> ParsedAnalysis:
    """Parse a full analysis/reflection response envelope.

    Accepts both the analysis key (abnormal_index) and the reflection key
    (corrected_abnormal_index). Missing description fields default to empty.
    """
    try:
        doc = json.loads(strip_fence(text))
    except (json.JSONDecodeError, ValueError) as exc:
        raise ResponseFormatError(f"response is not valid JSON: {exc}", raw=text)
    if not isinstance(doc, dict):
        raise ResponseFormatError("response JSON is not an object", raw=text)

    index_value = None
    for key in _INDEX_KEYS:
        if key in doc:
            index_value = doc[key]
            break
    if index_value is None:
        raise ResponseFormatError(
            f"response has none of the index keys {_INDEX_KEYS}", raw=text
        )
    if not isinstance(index_value, str):
        raise ResponseFormatError("index field must be a string", raw=text)

    detections, diags = parse_index_list(index_value, width)
    return ParsedAnalysis(
        detections=tuple(detections),
        diagnostics=tuple(diags),
        abnormal_description=str(doc.get("abnormal_description", "") or ""),
        abnormal_type_description=str(doc.get("abnormal_type_description", "") or ""),
        raw=text,
    )
