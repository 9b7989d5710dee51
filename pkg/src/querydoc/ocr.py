"""OCR document model: words with normalized boxes, reading order, box quantization.

Pages serialize to JSONL, one page object per line:
    {"words":[{"t":<str>,"b":[x1,y1,x2,y2],"c":<optional float>}], "wh":[W,H]}
A document is framed by a header line {"doc":<id>,"pages":<n>} followed by
that many page lines. A headerless stream is read as a single anonymous
document, one page per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


class OcrParseError(ValueError):
    """Malformed serialized record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OcrValidationError(ValueError):
    """A word violates the coordinate/text invariants."""


@dataclass(frozen=True)
class OcrWord:
    text: str
    bbox: tuple  # (x1, y1, x2, y2), page fractions in [0, 1]
    confidence: float = 1.0

    def validate(self) -> None:
        if not self.text:
            raise OcrValidationError("word has empty text")
        if len(self.bbox) != 4:
            raise OcrValidationError(f"word {self.text!r}: bbox must have 4 coordinates")
        x1, y1, x2, y2 = self.bbox
        for c in self.bbox:
            if not (0.0 <= c <= 1.0) or not math.isfinite(c):
                raise OcrValidationError(f"word {self.text!r}: coordinate {c} outside [0, 1]")
        if x1 > x2:
            raise OcrValidationError(f"word {self.text!r}: x1 > x2 ({x1} > {x2})")
        if y1 > y2:
            raise OcrValidationError(f"word {self.text!r}: y1 > y2 ({y1} > {y2})")
        if not (0.0 <= self.confidence <= 1.0):
            raise OcrValidationError(f"word {self.text!r}: confidence {self.confidence} outside [0, 1]")

    @property
    def y_center(self) -> float:
        return 0.5 * (self.bbox[1] + self.bbox[3])


@dataclass(frozen=True)
class OcrPage:
    words: tuple = ()
    page_size_hint: tuple = (1000.0, 1000.0)

    def validate(self) -> None:
        for w in self.words:
            w.validate()


@dataclass(frozen=True)
class OcrDocument:
    pages: tuple
    doc_id: str = "doc"

    def __post_init__(self):
        if len(self.pages) < 1:
            raise OcrValidationError(f"document {self.doc_id!r} has no pages")

    def validate(self) -> None:
        for p in self.pages:
            p.validate()


@dataclass(frozen=True)
class QaSample:
    document: OcrDocument
    instruction: str
    answer: str
    requires_vision: bool = False

    def validate(self) -> None:
        if not self.answer:
            raise OcrValidationError("sample has empty answer")
        self.document.validate()


# ---------------------------------------------------------------------------
# Reading order
# ---------------------------------------------------------------------------

def reading_order(page: OcrPage, row_tolerance: float = 0.02) -> OcrPage:
    """Return the page with words in canonical row-major order.

    Words whose y-centers differ by less than ``row_tolerance`` (transitively,
    along the sorted y axis) share a row; rows are emitted top to bottom and
    words within a row left to right. The output is a permutation of the
    input and the operation is idempotent.
    """
    if row_tolerance <= 0:
        raise ValueError(f"row_tolerance must be > 0, got {row_tolerance}")
    if not page.words:
        return page
    by_y = sorted(page.words, key=lambda w: (w.y_center, w.bbox[0], w.bbox[1], w.text))
    rows: list[list[OcrWord]] = [[by_y[0]]]
    for w in by_y[1:]:
        # 1-D chaining: consecutive-gap grouping equals the full pairwise closure
        if w.y_center - rows[-1][-1].y_center < row_tolerance:
            rows[-1].append(w)
        else:
            rows.append([w])
    ordered: list[OcrWord] = []
    for row in rows:
        ordered.extend(sorted(row, key=lambda w: (w.bbox[0], w.bbox[1], w.bbox[2], w.text)))
    return OcrPage(words=tuple(ordered), page_size_hint=page.page_size_hint)


def quantize_bbox(coord: float, buckets: int) -> int:
    """Map a coordinate in [0, 1] to a bucket index in [0, buckets-1]."""
    if buckets < 2:
        raise ValueError(f"buckets must be >= 2, got {buckets}")
    if not (0.0 <= coord <= 1.0):
        raise ValueError(f"coordinate {coord} outside [0, 1]")
    return min(int(coord * buckets), buckets - 1)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _word_to_record(w: OcrWord) -> dict:
    rec = {"t": w.text, "b": [round(c, 9) for c in w.bbox]}
    if w.confidence != 1.0:
        rec["c"] = w.confidence
    return rec


def _page_to_record(p: OcrPage) -> dict:
    return {
        "words": [_word_to_record(w) for w in p.words],
        "wh": [p.page_size_hint[0], p.page_size_hint[1]],
    }


def serialize_document(doc: OcrDocument) -> str:
    lines = [json.dumps({"doc": doc.doc_id, "pages": len(doc.pages)}, sort_keys=True)]
    lines.extend(json.dumps(_page_to_record(p), sort_keys=True) for p in doc.pages)
    return "\n".join(lines) + "\n"


def _parse_page(obj: dict, line_no: int) -> OcrPage:
    if "words" not in obj or not isinstance(obj["words"], list):
        raise OcrParseError(line_no, "page record missing 'words' list")
    words = []
    for rec in obj["words"]:
        try:
            w = OcrWord(
                text=str(rec["t"]),
                bbox=tuple(float(c) for c in rec["b"]),
                confidence=float(rec.get("c", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise OcrParseError(line_no, f"malformed word record {rec!r}: {exc}") from exc
        w.validate()
        words.append(w)
    wh = obj.get("wh", [1000.0, 1000.0])
    return OcrPage(words=tuple(words), page_size_hint=(float(wh[0]), float(wh[1])))


def parse_ocr_document(data) -> OcrDocument:
    """Parse one serialized document; words are NOT reordered.

    Raises OcrParseError with the offending line number for malformed input
    and OcrValidationError when a word breaks the coordinate invariants.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [ln for ln in data.splitlines() if ln.strip()]
    if not lines:
        raise OcrParseError(1, "empty input")
    objs = []
    for i, ln in enumerate(lines, start=1):
        try:
            objs.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise OcrParseError(i, f"invalid JSON: {exc}") from exc
    doc_id = "doc"
    start = 0
    if isinstance(objs[0], dict) and "doc" in objs[0]:
        doc_id = str(objs[0]["doc"])
        declared = int(objs[0].get("pages", len(objs) - 1))
        if declared != len(objs) - 1:
            raise OcrParseError(1, f"header declares {declared} pages, found {len(objs) - 1}")
        start = 1
    pages = tuple(_parse_page(obj, i + start + 1) for i, obj in enumerate(objs[start:]))
    if not pages:
        raise OcrParseError(1, "document has no pages")
    return OcrDocument(pages=pages, doc_id=doc_id)


def load_ocr_file(path) -> dict:
    """Read a multi-document OCR JSONL file into {doc_id: OcrDocument}."""
    docs: dict[str, OcrDocument] = {}
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    i = 0
    line_no = 0
    while i < len(lines):
        line_no = i + 1
        try:
            head = json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise OcrParseError(line_no, f"invalid JSON: {exc}") from exc
        if not (isinstance(head, dict) and "doc" in head):
            raise OcrParseError(line_no, "expected a document header line")
        n = int(head["pages"])
        block = "\n".join(lines[i : i + 1 + n])
        doc = parse_ocr_document(block)
        docs[doc.doc_id] = doc
        i += 1 + n
    return docs


def save_ocr_file(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(serialize_document(doc))


# ---------------------------------------------------------------------------
# Token streams for the model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OcrToken:
    """One character token carrying its source word's box (or none)."""

    token_id: int
    bbox: tuple = None  # None -> no layout (separator rows)


def page_tokens(page: OcrPage, vocab, max_tokens: int | None = None) -> list:
    """Character tokens of a page in its stored order; chars inherit word boxes."""
    toks: list[OcrToken] = []
    for w in page.words:
        for tid in vocab.encode(w.text):
            toks.append(OcrToken(token_id=tid, bbox=w.bbox))
    if max_tokens is not None:
        toks = toks[:max_tokens]
    return toks


def page_text(page: OcrPage) -> str:
    """Space-joined word texts in the page's stored order."""
    return " ".join(w.text for w in page.words)
