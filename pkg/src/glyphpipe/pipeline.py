"""End-to-end orchestration: plate image in, translation report out.

Stages: load -> grayscale -> binarize -> grid (detect, filter, snap) ->
per-cell contours plus optional external detections -> per-box classification
-> Gardiner codes -> transliteration -> decoding. A failure inside one cell
skips that cell with a warning instead of aborting the plate.

Report JSON is canonical and byte-stable for fixed inputs and seed; stage
timings are kept on the report object (and behind an opt-in flag) but stay
out of the canonical serialization, which would otherwise never be
reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GlyphPipeError
from .gardiner import GardinerCode, Lexicon, bundled_lexicon, load_lexicon, parse_gardiner, sequence_to_translit
from .imaging import BinaryRaster, Raster, binarize_otsu, invert, load_image, save_image, to_grayscale
from .layout import (
    Box,
    Detection,
    GridSpec,
    cell_rects,
    contour_boxes,
    default_tol,
    estimate_columns,
    estimate_rows,
    expected_grid,
    filter_and_snap,
    find_contours,
    hough_lines,
    hybrid_merge,
    import_detections,
    reading_order,
)
from .translate import DecodeScore, Translator, beam_decode, decode_scores, greedy_decode


class IoError(GlyphPipeError):
    """Overlay or report output could not be written."""


class BoxOutOfBounds(GlyphPipeError):
    """A report box falls outside the image it annotates."""


REPORT_SCHEMA = 1
STAGES = ("load", "preprocess", "grid", "segment", "classify", "transliterate", "translate")


@dataclass
class PipelineConfig:
    lexicon_path: str | None = None
    classifier_path: str | None = None
    translator_path: str | None = None
    detections_path: str | None = None
    n_cols: int | None = None  # None: estimate from the projection profile
    n_rows: int | None = None
    tol: int | None = None  # None: max(2, 2% of the axis extent)
    margin: float = 0.03
    min_area: int = 16
    iou_thresh: float = 0.5
    reading_order: str = "rtl"
    invert: bool = False
    topk: int = 3
    beam: int = 1
    max_len: int = 32
    seed: int = 0

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(raw) - known
        if unknown:
            raise GlyphPipeError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        for name in ("lexicon_path", "classifier_path", "translator_path", "detections_path"):
            value = getattr(cfg, name)
            if value is not None and not Path(value).exists():
                raise GlyphPipeError(f"{name} {value!r} does not exist")
        return cfg


@dataclass
class GlyphRecord:
    index: int
    cell: int
    box: Box
    topk: list[tuple[str, float]]

    @property
    def code(self) -> str:
        return self.topk[0][0]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "cell": self.cell,
            "box": [self.box.x0, self.box.y0, self.box.x1, self.box.y1],
            "code": self.code,
            "topk": [[label, round(float(p), 6)] for label, p in self.topk],
        }


@dataclass
class TranslationReport:
    image: str
    grid: dict
    glyphs: list[GlyphRecord] = field(default_factory=list)
    translit_tokens: list[str] = field(default_factory=list)
    dropped_codes: list[str] = field(default_factory=list)
    english: str = ""
    scores: DecodeScore | None = None
    warnings: list[str] = field(default_factory=list)
    seed: int = 0
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "schema": REPORT_SCHEMA,
            "image": self.image,
            "seed": self.seed,
            "grid": self.grid,
            "glyphs": [g.to_dict() for g in self.glyphs],
            "translit_tokens": self.translit_tokens,
            "dropped_codes": self.dropped_codes,
            "english": self.english,
            "scores": self.scores.to_dict() if self.scores else None,
            "warnings": self.warnings,
        }
        if include_timings:
            out["timings"] = self.timings
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True, indent=2)


def _external_in_cell(externals: list[Detection], rect: Box) -> list[Detection]:
    """External detections whose center falls in the cell, in cell coordinates."""
    out = []
    for det in externals:
        cx, cy = det.box.center
        if rect.x0 <= cx < rect.x1 and rect.y0 <= cy < rect.y1:
            box = Box(
                max(det.box.x0, rect.x0) - rect.x0,
                max(det.box.y0, rect.y0) - rect.y0,
                min(det.box.x1, rect.x1) - rect.x0,
                min(det.box.y1, rect.y1) - rect.y0,
            )
            out.append(Detection(box, det.score, det.source))
    return out


def run_pipeline(
    image_path,
    cfg: PipelineConfig,
    classifier=None,
    translator: Translator | None = None,
    lexicon: Lexicon | None = None,
    dump_dir=None,
) -> TranslationReport:
    """Execute the full plate-to-English pipeline.

    The classifier, translator, and lexicon may be passed as objects; paths
    in the config are loaded otherwise. A blank plate yields an empty report
    rather than an error.
    """
    if classifier is None:
        if cfg.classifier_path is None:
            raise GlyphPipeError("no classifier: set classifier_path or pass an object")
        from .classify import GlyphClassifier

        classifier = GlyphClassifier.load(cfg.classifier_path)
    if translator is None and cfg.translator_path is not None:
        translator = Translator.load(cfg.translator_path)
    if lexicon is None:
        lexicon = load_lexicon(cfg.lexicon_path) if cfg.lexicon_path else bundled_lexicon()

    dump = Path(dump_dir) if dump_dir else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    marks = [time.perf_counter()]
    timings: dict[str, float] = {}

    def mark(stage: str):
        marks.append(time.perf_counter())
        timings[stage] = marks[-1] - marks[-2]

    raster = load_image(image_path)
    if cfg.invert:
        raster = invert(raster)
    mark("load")

    gray = to_grayscale(raster)
    binary = binarize_otsu(gray)
    if dump:
        save_image(gray, dump / "00_gray.pgm")
        bits = binary.bits.astype("uint8")
        save_image(Raster(binary.width, binary.height, 1, ((1 - bits) * 255)[:, :, None]),
                   dump / "01_binary.pgm")
    mark("preprocess")

    n_cols = cfg.n_cols or estimate_columns(binary)
    n_rows = cfg.n_rows or estimate_rows(binary)
    spec = GridSpec(gray.width, gray.height, n_cols, n_rows, margin=cfg.margin)
    exp_cols, exp_rows = expected_grid(spec)
    col_tol = cfg.tol if cfg.tol is not None else default_tol(gray.width)
    row_tol = cfg.tol if cfg.tol is not None else default_tol(gray.height)
    vert = hough_lines(binary, [0, 1, 2, 3, 4, 5, 175, 176, 177, 178, 179],
                       vote_threshold=max(8, gray.height // 3))
    horiz = hough_lines(binary, [85, 86, 87, 88, 89, 90, 91, 92, 93, 94, 95],
                        vote_threshold=max(8, gray.width // 3))
    col_cuts = filter_and_snap(vert, exp_cols, col_tol, spec, axis="cols")
    row_cuts = filter_and_snap(horiz, exp_rows, row_tol, spec, axis="rows")
    grid_info = {
        "n_cols": n_cols,
        "n_rows": n_rows,
        "col_cuts": col_cuts,
        "row_cuts": row_cuts,
        "detected_vertical": len(vert),
        "detected_horizontal": len(horiz),
    }
    if dump:
        (dump / "02_grid.json").write_text(json.dumps(grid_info, sort_keys=True, indent=2))
    mark("grid")

    externals = (
        import_detections(cfg.detections_path, (gray.width, gray.height))
        if cfg.detections_path
        else []
    )
    rects = cell_rects(gray.width, gray.height, col_cuts, row_cuts, cfg.reading_order)
    report = TranslationReport(image=str(image_path), grid=grid_info, seed=cfg.seed)
    placed: list[tuple[int, Box]] = []  # (cell index, plate-coordinate box)
    for cell_idx, rect in enumerate(rects):
        try:
            cell_bits = binary.bits[rect.y0 : rect.y1, rect.x0 : rect.x1]
            # separator lines sit on the cell border; ignore a 2 px frame
            interior = cell_bits.copy()
            interior[:2, :] = False
            interior[-2:, :] = False
            interior[:, :2] = False
            interior[:, -2:] = False
            contours = find_contours(
                BinaryRaster(rect.x1 - rect.x0, rect.y1 - rect.y0, interior)
            )
            boxes = contour_boxes(contours, cfg.min_area)
            contour_dets = [Detection(b, 1.0, "contour") for b in boxes]
            cell_ext = _external_in_cell(externals, rect)
            merged = hybrid_merge(contour_dets, cell_ext, cfg.iou_thresh, cfg.reading_order)
            for det in merged:
                placed.append(
                    (cell_idx, Box(det.box.x0 + rect.x0, det.box.y0 + rect.y0,
                                   det.box.x1 + rect.x0, det.box.y1 + rect.y0))
                )
        except GlyphPipeError as exc:
            report.warnings.append(f"cell {cell_idx}: {exc}")
    mark("segment")

    codes: list[GardinerCode] = []
    for index, (cell_idx, box) in enumerate(placed):
        try:
            crop = Raster(
                box.x1 - box.x0,
                box.y1 - box.y0,
                1,
                gray.data[box.y0 : box.y1, box.x0 : box.x1, :].copy(),
            )
            topk = classifier.predict_topk(crop, min(cfg.topk, len(classifier_labels(classifier))))
            record = GlyphRecord(index=len(report.glyphs), cell=cell_idx, box=box, topk=topk)
            report.glyphs.append(record)
            codes.append(parse_gardiner(record.code))
        except GlyphPipeError as exc:
            report.warnings.append(f"glyph {index}: {exc}")
    if dump:
        (dump / "03_glyphs.json").write_text(
            json.dumps([g.to_dict() for g in report.glyphs], sort_keys=True, indent=2)
        )
    mark("classify")

    tokens, dropped = sequence_to_translit(codes, lexicon)
    report.translit_tokens = tokens
    report.dropped_codes = [str(c) for c in dropped]
    mark("transliterate")

    if translator is not None and tokens:
        if cfg.beam > 1:
            hyps = beam_decode(translator, tokens, cfg.beam, cfg.max_len)
            best = hyps[0]
        else:
            best = greedy_decode(translator, tokens, cfg.max_len)
        report.english = " ".join(best.tokens)
        if best.length > 0:
            report.scores = decode_scores([best])
    mark("translate")
    timings["total"] = marks[-1] - marks[0]
    report.timings = timings
    if dump:
        (dump / "04_report.json").write_text(report.to_json())
    return report


def classifier_labels(classifier) -> list[str]:
    if hasattr(classifier, "class_index"):
        return sorted(classifier.class_index)
    return list(classifier.labels)


# --- overlay rendering --------------------------------------------------------

_FONT = {
    "0": ("###", "#.#", "#.#", "#.#", "###"),
    "1": (".#.", "##.", ".#.", ".#.", "###"),
    "2": ("###", "..#", "###", "#..", "###"),
    "3": ("###", "..#", "###", "..#", "###"),
    "4": ("#.#", "#.#", "###", "..#", "..#"),
    "5": ("###", "#..", "###", "..#", "###"),
    "6": ("###", "#..", "###", "#.#", "###"),
    "7": ("###", "..#", "..#", "..#", "..#"),
    "8": ("###", "#.#", "###", "#.#", "###"),
    "9": ("###", "#.#", "###", "..#", "###"),
    "A": (".#.", "#.#", "###", "#.#", "#.#"),
    "B": ("##.", "#.#", "##.", "#.#", "##."),
    "C": ("###", "#..", "#..", "#..", "###"),
    "D": ("##.", "#.#", "#.#", "#.#", "##."),
    "E": ("###", "#..", "###", "#..", "###"),
    "F": ("###", "#..", "###", "#..", "#.."),
    "G": ("###", "#..", "#.#", "#.#", "###"),
    "H": ("#.#", "#.#", "###", "#.#", "#.#"),
    "I": ("###", ".#.", ".#.", ".#.", "###"),
    "J": ("..#", "..#", "..#", "#.#", "###"),
    "K": ("#.#", "#.#", "##.", "#.#", "#.#"),
    "L": ("#..", "#..", "#..", "#..", "###"),
    "M": ("#.#", "###", "#.#", "#.#", "#.#"),
    "N": ("##.", "#.#", "#.#", "#.#", "#.#"),
    "O": ("###", "#.#", "#.#", "#.#", "###"),
    "P": ("###", "#.#", "###", "#..", "#.."),
    "Q": ("###", "#.#", "#.#", "###", "..#"),
    "R": ("###", "#.#", "##.", "#.#", "#.#"),
    "S": ("###", "#..", "###", "..#", "###"),
    "T": ("###", ".#.", ".#.", ".#.", ".#."),
    "U": ("#.#", "#.#", "#.#", "#.#", "###"),
    "V": ("#.#", "#.#", "#.#", "#.#", ".#."),
    "W": ("#.#", "#.#", "#.#", "###", "#.#"),
    "X": ("#.#", "#.#", ".#.", "#.#", "#.#"),
    "Y": ("#.#", "#.#", ".#.", ".#.", ".#."),
    "Z": ("###", "..#", ".#.", "#..", "###"),
    ":": ("...", ".#.", "...", ".#.", "..."),
    "-": ("...", "...", "###", "...", "..."),
    "<": ("..#", ".#.", "#..", ".#.", "..#"),
    ">": ("#..", ".#.", "..#", ".#.", "#.."),
}

OVERLAY_COLOR = (255, 0, 0)


def _burn_text(data, text: str, x: int, y: int, color) -> None:
    h, w = data.shape[:2]
    cx = x
    for ch in text.upper():
        glyph = _FONT.get(ch)
        if glyph is None:
            cx += 4
            continue
        for dy, row in enumerate(glyph):
            for dx, cell in enumerate(row):
                if cell == "#" and 0 <= y + dy < h and 0 <= cx + dx < w:
                    data[y + dy, cx + dx] = color
        cx += 4


def emit_overlay(image: Raster, report: TranslationReport, path, draw_labels: bool = True) -> None:
    """Write a PPM with detection boxes outlined (and, by default, labels).

    With draw_labels=False exactly the box perimeter pixels change color;
    labels render reading-order index and code in a 3x5 font (uppercased).
    """
    import numpy as np

    if image.channels == 1:
        data = np.repeat(image.data, 3, axis=2).copy()
    else:
        data = image.data.copy()
    h, w = data.shape[:2]
    for glyph in report.glyphs:
        b = glyph.box
        if not (0 <= b.x0 < b.x1 <= w and 0 <= b.y0 < b.y1 <= h):
            raise BoxOutOfBounds(f"box {b} outside {w}x{h} image")
        data[b.y0, b.x0 : b.x1] = OVERLAY_COLOR
        data[b.y1 - 1, b.x0 : b.x1] = OVERLAY_COLOR
        data[b.y0 : b.y1, b.x0] = OVERLAY_COLOR
        data[b.y0 : b.y1, b.x1 - 1] = OVERLAY_COLOR
    if draw_labels:
        for glyph in report.glyphs:
            b = glyph.box
            _burn_text(data, f"{glyph.index}:{glyph.code}", b.x0 + 2, b.y0 + 2, OVERLAY_COLOR)
    try:
        save_image(Raster(w, h, 3, data), path)
    except OSError as exc:
        raise IoError(f"cannot write overlay to {path}: {exc}") from exc
