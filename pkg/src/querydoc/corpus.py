"""Synthetic form-page corpus whose QA pairs require reading the page.

Each page is a grid of layout cells; a cell holds a (field name, value) word
pair, either side by side on one glyph row or stacked on two rows (the
harder interleaved layout). Questions ask for a field's value by name, or,
for the vision-flagged fraction, by page position ("in the top left"), which
is unanswerable from the word texts alone.

Corpus files: one sample per line {"doc":..,"q":..,"a":..,"rv":..} next to
an OCR JSONL file holding the referenced documents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .ocr import OcrDocument, OcrPage, OcrWord, QaSample, load_ocr_file, reading_order, save_ocr_file


class CorpusError(ValueError):
    pass


# 23 short field names with pairwise-distinct first letters
FIELD_NAMES = (
    "amt", "bal", "code", "date", "era", "fee", "gap", "hue", "id", "job",
    "kind", "lot", "max", "net", "own", "pay", "qty", "rate", "sum", "tag",
    "use", "vat", "wage",
)

QUADRANTS = ("top left", "top right", "bottom left", "bottom right")


@dataclass(frozen=True)
class CorpusSpec:
    n_samples: int = 256
    cell_rows: int = 4
    cell_cols: int = 2
    glyph_grid: int = 16  # raster side; layout cells tile this grid exactly
    fields_min: int = 4
    fields_max: int = 6
    field_names: tuple = FIELD_NAMES
    value_chars: str = "abcdefghijklmnopqrstuvwxyz0123456789"
    value_len_min: int = 2
    value_len_max: int = 3
    frac_multirow: float = 0.2
    frac_vision: float = 0.0
    pages_per_doc: int = 1
    doc_prefix: str = "d"

    @property
    def cell_width(self) -> int:
        return self.glyph_grid // self.cell_cols

    @property
    def cell_height(self) -> int:
        return self.glyph_grid // self.cell_rows

    def validate(self) -> None:
        cells = self.cell_rows * self.cell_cols
        if self.fields_max > cells:
            raise CorpusError(f"{self.fields_max} fields do not fit {cells} grid cells")
        if self.fields_min < 1 or self.fields_min > self.fields_max:
            raise CorpusError("fields_min must be in [1, fields_max]")
        if self.glyph_grid % self.cell_cols or self.glyph_grid % self.cell_rows:
            raise CorpusError("glyph_grid must be divisible by the cell grid")
        if self.cell_height < 3:
            raise CorpusError("cells too short for stacked layouts (need 3 glyph rows)")
        name_budget = self.fields_max * self.pages_per_doc
        if name_budget > len(self.field_names):
            raise CorpusError(f"need {name_budget} distinct field names, have {len(self.field_names)}")
        longest = max(len(n) for n in self.field_names)
        if longest + 1 + self.value_len_max > self.cell_width:
            raise CorpusError("cell width cannot fit 'name value' side by side")
        if self.frac_vision > 0:
            quad_cells = max(1, self.cell_rows // 2) * max(1, self.cell_cols // 2)
            if self.fields_max > 1 + (cells - quad_cells):
                raise CorpusError("vision samples need a quadrant holding a single field")


def _cell_quadrant(r: int, c: int, spec: CorpusSpec) -> int:
    top = r < spec.cell_rows / 2
    left = c < spec.cell_cols / 2
    return (0 if top else 2) + (0 if left else 1)


def _word(text: str, row: int, col0: int, grid: int, conf: float) -> OcrWord:
    return OcrWord(
        text=text,
        bbox=(col0 / grid, row / grid, (col0 + len(text)) / grid, (row + 1) / grid),
        confidence=conf,
    )


def _place_fields(rng, spec: CorpusSpec, names, values, cells) -> list:
    """Stamp (name, value) word pairs into the given layout cells."""
    g = spec.glyph_grid
    words = []
    for (r, c), name, value in zip(cells, names, values):
        row0 = r * spec.cell_height
        col0 = c * spec.cell_width
        stacked = rng.random() < spec.frac_multirow
        conf_n = round(float(rng.uniform(0.85, 1.0)), 4)
        conf_v = round(float(rng.uniform(0.85, 1.0)), 4)
        if stacked:
            words.append(_word(name, row0 + 1, col0, g, conf_n))
            words.append(_word(value, row0 + 2, col0, g, conf_v))
        else:
            words.append(_word(name, row0 + 1, col0, g, conf_n))
            words.append(_word(value, row0 + 1, col0 + len(name) + 1, g, conf_v))
    return words


def _gen_values(rng, spec: CorpusSpec, n: int) -> list:
    chars = spec.value_chars
    taken = set(spec.field_names)
    out = []
    while len(out) < n:
        k = int(rng.integers(spec.value_len_min, spec.value_len_max + 1))
        v = "".join(chars[int(i)] for i in rng.integers(0, len(chars), size=k))
        if v in taken:
            continue
        taken.add(v)
        out.append(v)
    return out


def _gen_sample(seed: int, idx: int, spec: CorpusSpec) -> QaSample:
    rng = np.random.default_rng([seed, idx])
    want_vision = spec.pages_per_doc == 1 and rng.random() < spec.frac_vision
    n_pages = spec.pages_per_doc
    all_cells = [(r, c) for r in range(spec.cell_rows) for c in range(spec.cell_cols)]

    name_pool = list(spec.field_names)
    rng.shuffle(name_pool)
    pages = []
    page_fields = []  # per page: list of (name, value, cell)
    for p in range(n_pages):
        n_fields = int(rng.integers(spec.fields_min, spec.fields_max + 1))
        names = name_pool[p * spec.fields_max : p * spec.fields_max + n_fields]
        values = _gen_values(rng, spec, n_fields)
        if want_vision:
            # reserve one quadrant for a single target field
            quad = int(rng.integers(0, 4))
            quad_cells = [cc for cc in all_cells if _cell_quadrant(*cc, spec) == quad]
            rest = [cc for cc in all_cells if _cell_quadrant(*cc, spec) != quad]
            target_cell = quad_cells[int(rng.integers(0, len(quad_cells)))]
            picks = list(rng.choice(len(rest), size=n_fields - 1, replace=False))
            cells = [target_cell] + [rest[int(i)] for i in picks]
        else:
            picks = list(rng.choice(len(all_cells), size=n_fields, replace=False))
            cells = [all_cells[int(i)] for i in picks]
        words = _place_fields(rng, spec, names, values, cells)
        page = reading_order(OcrPage(words=tuple(words), page_size_hint=(10.0 * spec.glyph_grid,) * 2))
        pages.append(page)
        page_fields.append(list(zip(names, values, cells)))

    doc = OcrDocument(pages=tuple(pages), doc_id=f"{spec.doc_prefix}{idx:06d}")
    target_page = int(rng.integers(0, n_pages))
    if want_vision:
        name, value, cell = page_fields[0][0]
        quad = QUADRANTS[_cell_quadrant(*cell, spec)]
        instruction = f"what is the value in the {quad}?"
        return QaSample(document=doc, instruction=instruction, answer=value, requires_vision=True)
    fields = page_fields[target_page]
    name, value, _ = fields[int(rng.integers(0, len(fields)))]
    return QaSample(document=doc, instruction=f"what is the value of {name}?", answer=value)


def generate_synthetic_corpus(seed: int, spec: CorpusSpec) -> list:
    """Deterministic corpus: sample i depends only on (seed, i, spec)."""
    spec.validate()
    return [_gen_sample(seed, i, spec) for i in range(spec.n_samples)]


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------

def corpus_paths(stem) -> tuple:
    stem = Path(stem)
    return stem.with_suffix(".qa.jsonl"), stem.with_suffix(".ocr.jsonl")


def save_corpus(samples, stem) -> tuple:
    """Write <stem>.qa.jsonl and <stem>.ocr.jsonl; returns both paths."""
    qa_path, ocr_path = corpus_paths(stem)
    qa_path.parent.mkdir(parents=True, exist_ok=True)
    with open(qa_path, "w", encoding="utf-8") as f:
        for s in samples:
            rec = {"doc": s.document.doc_id, "q": s.instruction, "a": s.answer, "rv": s.requires_vision}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    save_ocr_file([s.document for s in samples], ocr_path)
    return qa_path, ocr_path


def load_corpus(stem) -> list:
    qa_path, ocr_path = corpus_paths(stem)
    docs = load_ocr_file(ocr_path)
    samples = []
    with open(qa_path, "r", encoding="utf-8") as f:
        for i, ln in enumerate(f.read().splitlines(), start=1):
            if not ln.strip():
                continue
            rec = json.loads(ln)
            doc = docs.get(rec["doc"])
            if doc is None:
                raise CorpusError(f"{qa_path}: line {i} references unknown doc {rec['doc']!r}")
            samples.append(
                QaSample(document=doc, instruction=rec["q"], answer=rec["a"], requires_vision=bool(rec["rv"]))
            )
    return samples
