"""Synthetic desk-scale data: procedurally rendered glyph tiles, grid plates,
blob plates for segmentation, and small parallel corpora.

Tiles are deterministic functions of a pattern id (144 visually distinct
combinations of bars, diagonals, rings, and corner dots inside a frame), so
classifiers can be trained, and an exact template matcher can stand in as an
oracle classifier for end-to-end tests.
"""

from __future__ import annotations

import numpy as np

from .imaging import Raster
from .layout import cell_rects

INK = 0
PAPER = 255
MAX_PATTERNS = 144


def render_glyph_tile(pattern_id: int, size: int = 48) -> Raster:
    """Deterministic distinct tile for pattern_id in [0, 144)."""
    if not 0 <= pattern_id < MAX_PATTERNS:
        raise ValueError(f"pattern_id {pattern_id} outside [0, {MAX_PATTERNS})")
    a = np.full((size, size), PAPER, dtype=np.uint8)
    m = max(2, size // 12)  # frame margin
    th = max(2, size // 16)  # stroke thickness
    # frame, always present so every tile segments as one component
    a[m : size - m, m : m + th] = INK
    a[m : size - m, size - m - th : size - m] = INK
    a[m : m + th, m : size - m] = INK
    a[size - m - th : size - m, m : size - m] = INK

    inner0, inner1 = m + 2 * th, size - m - 2 * th
    n_h = pattern_id % 3
    n_v = (pattern_id // 3) % 3
    diag = (pattern_id // 9) % 2
    ring = (pattern_id // 18) % 2
    corners = (pattern_id // 36) % 4

    for i in range(n_h):
        y = inner0 + (i + 1) * (inner1 - inner0) // (n_h + 1)
        a[y : y + th, inner0:inner1] = INK
    for i in range(n_v):
        x = inner0 + (i + 1) * (inner1 - inner0) // (n_v + 1)
        a[inner0:inner1, x : x + th] = INK
    if diag:
        for d in range(inner1 - inner0):
            y = inner0 + d
            x = inner0 + d
            a[y, max(inner0, x - th // 2) : min(inner1, x + th)] = INK
    if ring:
        yy, xx = np.mgrid[0:size, 0:size]
        r = np.hypot(yy - size / 2, xx - size / 2)
        band = (r >= size // 5) & (r < size // 5 + th)
        a[band & (yy > inner0) & (yy < inner1) & (xx > inner0) & (xx < inner1)] = INK
    dot = max(3, size // 10)
    spots = [(inner0, inner0), (inner0, inner1 - dot), (inner1 - dot, inner0)]
    for i in range(corners):
        y, x = spots[i]
        a[y : y + dot, x : x + dot] = INK
    return Raster(size, size, 1, a[:, :, None])


def pattern_ids_for(labels: list[str]) -> dict[str, int]:
    """Stable label -> pattern id assignment (sorted order)."""
    ordered = sorted(set(labels))
    if len(ordered) > MAX_PATTERNS:
        raise ValueError(f"at most {MAX_PATTERNS} distinct labels supported")
    return {label: i for i, label in enumerate(ordered)}


def render_plate(
    codes: list[str],
    n_cols: int,
    n_rows: int,
    cell: int = 64,
    order: str = "rtl",
    separators: bool = True,
    pattern_ids: dict[str, int] | None = None,
    tile_size: int | None = None,
) -> Raster:
    """Grid plate carrying ``codes`` in reading order, one glyph per cell."""
    if len(codes) > n_cols * n_rows:
        raise ValueError("more codes than cells")
    width, height = n_cols * cell, n_rows * cell
    a = np.full((height, width), PAPER, dtype=np.uint8)
    col_cuts = [i * cell for i in range(1, n_cols)]
    row_cuts = [i * cell for i in range(1, n_rows)]
    if separators:
        for x in [0, width - 1] + col_cuts:
            a[:, x] = INK
        for y in [0, height - 1] + row_cuts:
            a[y, :] = INK
    ids = pattern_ids or pattern_ids_for(codes)
    tile = tile_size or (cell * 3 // 4)
    pad = (cell - tile) // 2
    rects = cell_rects(width, height, col_cuts, row_cuts, order)
    for code, rect in zip(codes, rects):
        glyph = render_glyph_tile(ids[code], tile).plane()
        y0, x0 = rect.y0 + pad, rect.x0 + pad
        region = a[y0 : y0 + tile, x0 : x0 + tile]
        a[y0 : y0 + tile, x0 : x0 + tile] = np.minimum(region, glyph)
    return Raster(width, height, 1, a[:, :, None])


def corrupt_plate(plate: Raster, seed: int, stroke_count: int = 3, gap_count: int = 4) -> Raster:
    """Add near-vertical glyph-like strokes and break separator lines.

    Strokes are tall thin bars inside cells (away from the true cuts), the
    kind of ink the line detector misreads as separators; gaps knock random
    chunks out of the real lines so they no longer span the image.
    """
    rng = np.random.default_rng(seed)
    a = plate.plane().copy()
    h, w = a.shape
    for _ in range(stroke_count):
        x = int(rng.integers(int(0.1 * w), int(0.9 * w)))
        y0 = int(rng.integers(0, h // 4))
        y1 = int(rng.integers(3 * h // 4, h))
        a[y0:y1, x : x + 2] = INK
    # erase pieces of whatever full-height/width lines exist
    dark_cols = np.nonzero((a < 128).mean(axis=0) > 0.9)[0]
    for x in dark_cols:
        for _ in range(gap_count):
            y = int(rng.integers(0, h - 8))
            a[y : y + int(rng.integers(3, 9)), x] = PAPER
    dark_rows = np.nonzero((a < 128).mean(axis=1) > 0.9)[0]
    for y in dark_rows:
        for _ in range(gap_count):
            x = int(rng.integers(0, w - 8))
            a[y, x : x + int(rng.integers(3, 9))] = PAPER
    return Raster(plate.width, plate.height, 1, a[:, :, None])


def blob_plate(k: int, seed: int = 0, cell: int = 28) -> tuple[Raster, list[tuple[int, int, int, int]]]:
    """K disjoint filled blobs on a clean background; returns (raster, boxes).

    Blobs sit on a jittered grid with guaranteed >= 2 px separation, so the
    8-connected component count is exactly K.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    grid = int(np.ceil(np.sqrt(k)))
    side = grid * cell
    a = np.full((side, side), PAPER, dtype=np.uint8)
    boxes = []
    for i in range(k):
        gy, gx = divmod(i, grid)
        max_size = cell - 6
        bw = int(rng.integers(max_size // 2, max_size))
        bh = int(rng.integers(max_size // 2, max_size))
        y0 = gy * cell + 3 + int(rng.integers(0, cell - bh - 5))
        x0 = gx * cell + 3 + int(rng.integers(0, cell - bw - 5))
        a[y0 : y0 + bh, x0 : x0 + bw] = INK
        boxes.append((x0, y0, x0 + bw, y0 + bh))
    return Raster(side, side, 1, a[:, :, None]), boxes


def touching_pair_plate(side: int = 60) -> tuple[Raster, tuple, tuple]:
    """Two vertically stacked squares that share an edge (one component).

    Returns the raster plus the two true glyph boxes, for exercising the
    hybrid merge: contours alone see one box, an external detection splits it.
    """
    a = np.full((side, side), PAPER, dtype=np.uint8)
    top = (10, 5, 50, 30)
    bottom = (10, 30, 50, 55)
    for x0, y0, x1, y1 in (top, bottom):
        a[y0:y1, x0:x1] = INK
    return Raster(side, side, 1, a[:, :, None]), top, bottom


class TemplateClassifier:
    """Oracle classifier: nearest rendered template by pixel distance.

    Implements the predict_topk protocol of GlyphClassifier so the pipeline
    can run end to end without a trained network.
    """

    def __init__(self, labels: list[str], tile_size: int = 48):
        from .classify import prepare_input

        self._prepare = prepare_input
        ids = pattern_ids_for(labels)
        self.labels = sorted(ids)
        # prepare_input tight-crops to ink, so full tiles and segmentation
        # boxes land on the same normalized view
        self.templates = {
            label: prepare_input(render_glyph_tile(ids[label], tile_size)) for label in self.labels
        }

    def predict_topk(self, raster: Raster, k: int) -> list[tuple[str, float]]:
        x = self._prepare(raster)
        ranked = sorted(
            self.labels,
            key=lambda lab: (float(((self.templates[lab] - x) ** 2).sum()), lab),
        )
        return [(lab, 1.0 if i == 0 else 0.0) for i, lab in enumerate(ranked[:k])]


TRANSLIT_WORDS = {
    "anx": "life",
    "nfr": "beautiful",
    "ra": "sun",
    "Htp": "offering",
    "nb": "lord",
    "tA": "land",
    "pr": "house",
    "mw": "water",
    "nTr": "god",
    "wr": "great",
    "km": "black",
    "HqA": "ruler",
    "ib": "heart",
    "mAa": "true",
    "xpr": "become",
    "sbA": "star",
    "Dd": "say",
    "ir": "make",
    "mr": "beloved",
    "sw": "king",
}


def toy_parallel_corpus(n_pairs: int, seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """Deterministic transliteration -> English pairs for overfit runs."""
    rng = np.random.default_rng(seed)
    words = sorted(TRANSLIT_WORDS)
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(3, 7))
        src = [words[int(j)] for j in rng.integers(0, len(words), n)]
        tgt = ["the"] + [TRANSLIT_WORDS[s] for s in src]
        pairs.append((src, tgt))
    return pairs


def bleu_divergence_corpus() -> list[tuple[str, str]]:
    """Ten (reference, hypothesis) sentence pairs whose BLEU depends sharply
    on the convention: sentence averaging with smoothing, corpus pooling
    without, and the case-folding/punctuation-splitting tokenizer all land
    far apart."""
    return [
        ("The cat sat on the mat.", "the cat sat on the mat ."),
        ("He opened the gate to the temple.", "he opened the gate to the temple ."),
        ("A scribe wrote the sacred words.", "a scribe wrote the sacred words ."),
        ("The king gave bread to the people.", "the king gave bread to the people ."),
        ("The priest praised the god daily.", "the priest praised god daily"),
        ("the keeper of the diadem", "keeper of the diadem"),
        ("offering", "offering"),
        ("bread and beer", "bread beer"),
        ("they sailed north", "north they sailed"),
        ("grain", "wheat"),
    ]
