"""Grid splitting, contour segmentation, and the contour/detector hybrid merge.

The grid path runs a Hough transform restricted to near-vertical and
near-horizontal angles, then applies three corrective steps before any cut is
trusted: stroke-born lines that match no expected cut are rejected, lines in
the margin bands are discarded, and any expected cut that was never detected
is inserted regardless. The net effect is that cut positions always come out
on the equal-cell grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GlyphPipeError
from .imaging import BinaryRaster, Raster


class TolTooLarge(GlyphPipeError):
    """Snapping tolerance is at least half the expected cut spacing."""


class BadCuts(GlyphPipeError):
    """Cut list is not strictly increasing inside the open image interval."""


class ParseError(GlyphPipeError):
    """Detections or annotation JSON does not match the expected schema."""


class ScoreOutOfRange(GlyphPipeError):
    """Detection score outside [0, 1]."""


@dataclass(frozen=True)
class Line:
    """Hough line: x*cos(theta) + y*sin(theta) = rho, theta in degrees [0, 180)."""

    rho: int
    theta: int
    votes: int


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    n_cols: int
    n_rows: int
    margin: float = 0.03  # margin band as a fraction of the axis extent

    def __post_init__(self):
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("grid needs at least one column and one row")
        if not 0.0 <= self.margin < 0.25:
            raise ValueError("margin must be in [0, 0.25)")


@dataclass(frozen=True, order=True)
class Box:
    """Half-open pixel box [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box ({self.x0},{self.y0},{self.x1},{self.y1})")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains(self, other: "Box") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    source: str  # "contour" or "external"

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ScoreOutOfRange(f"score {self.score} outside [0, 1]")
        if self.source not in ("contour", "external"):
            raise ValueError(f"unknown detection source {self.source!r}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def hough_lines(b: BinaryRaster, theta_set, vote_threshold: int) -> list[Line]:
    """Accumulate votes over (rho, theta) at 1 px / 1 degree quantization.

    Returns cells with votes >= vote_threshold after 3x3 non-maximum
    suppression in accumulator space (ties suppressed toward the smaller
    (rho, theta)), sorted by votes descending then (rho, theta) ascending.
    """
    thetas = sorted({int(round(t)) % 180 for t in theta_set})
    if not thetas:
        raise ValueError("theta_set must be nonempty")
    ys, xs = np.nonzero(b.bits)
    diag = int(math.ceil(math.hypot(b.width, b.height)))
    n_rho = 2 * diag + 1
    acc = np.zeros((n_rho, len(thetas)), dtype=np.int64)
    if len(xs):
        for j, theta in enumerate(thetas):
            rad = math.radians(theta)
            rho = np.floor(xs * math.cos(rad) + ys * math.sin(rad) + 0.5).astype(np.int64)
            acc[:, j] = np.bincount(rho + diag, minlength=n_rho)

    cand = np.argwhere(acc >= max(vote_threshold, 1))
    lines = []
    for ri, tj in cand:
        v = acc[ri, tj]
        suppressed = False
        for dr in (-1, 0, 1):
            for dt in (-1, 0, 1):
                if dr == 0 and dt == 0:
                    continue
                r2, t2 = ri + dr, tj + dt
                if 0 <= r2 < n_rho and 0 <= t2 < len(thetas):
                    v2 = acc[r2, t2]
                    if v2 > v or (v2 == v and (r2, t2) < (ri, tj)):
                        suppressed = True
                        break
            if suppressed:
                break
        if not suppressed:
            lines.append(Line(rho=int(ri - diag), theta=thetas[tj], votes=int(v)))
    lines.sort(key=lambda ln: (-ln.votes, ln.rho, ln.theta))
    return lines


def expected_grid(spec: GridSpec) -> tuple[list[int], list[int]]:
    """Interior cut positions of the equal-cell grid: round(i*extent/n)."""
    col_cuts = [_round_half_up(i * spec.width / spec.n_cols) for i in range(1, spec.n_cols)]
    row_cuts = [_round_half_up(i * spec.height / spec.n_rows) for i in range(1, spec.n_rows)]
    return col_cuts, row_cuts


def filter_and_snap(
    detected: list[Line],
    expected_cuts: list[int],
    tol: int,
    spec: GridSpec,
    axis: str = "cols",
) -> list[int]:
    """Reconcile detected separator lines with the expected equal-cell cuts.

    Three corrections are applied in order: detected lines inside the margin
    bands are discarded; a survivor is kept only if it lies within ``tol`` of
    some expected cut, and is snapped onto it (this rejects lines born from
    glyph strokes); finally every expected cut with no surviving match is
    inserted anyway. The result is therefore always exactly the expected cut
    list. ``axis`` selects which image extent the margin bands are measured
    against, since the row pass and the column pass use the same machinery.
    """
    if axis not in ("cols", "rows"):
        raise ValueError("axis must be 'cols' or 'rows'")
    extent = spec.width if axis == "cols" else spec.height
    if len(expected_cuts) >= 2:
        spacing = min(b - a for a, b in zip(expected_cuts, expected_cuts[1:]))
        if tol >= spacing / 2:
            raise TolTooLarge(f"tol {tol} >= half the min cut spacing {spacing}")
    band = spec.margin * extent
    survivors = set()
    for line in detected:
        # (rho, theta) and (-rho, theta - 180) parameterize the same line
        rho = line.rho if line.theta <= 90 else -line.rho
        if rho <= band or rho >= extent - band:
            continue  # margin band: incomplete border artifacts
        best = None
        for e in expected_cuts:
            if abs(rho - e) <= tol and (best is None or abs(rho - e) < abs(rho - best)):
                best = e
        if best is not None:
            survivors.add(best)  # snapped onto the expected position
        # otherwise: stroke-derived line, rejected
    # expected cuts with no surviving match are inserted regardless, so the
    # two corrective passes are idempotent: the output is the expected grid
    return sorted(survivors | set(expected_cuts))


def default_tol(extent: int) -> int:
    """Snapping tolerance: max(2 px, 2% of the relevant dimension)."""
    return max(2, _round_half_up(0.02 * extent))


def cell_rects(
    width: int,
    height: int,
    col_cuts: list[int],
    row_cuts: list[int],
    order: str = "rtl",
) -> list[Box]:
    """Grid cells in reading order: columns right-to-left (or ltr), top-to-bottom within a column."""
    for cuts, extent in ((col_cuts, width), (row_cuts, height)):
        if any(b <= a for a, b in zip(cuts, cuts[1:])) or any(
            not 0 < c < extent for c in cuts
        ):
            raise BadCuts(f"cuts {cuts} not strictly increasing inside (0, {extent})")
    if order not in ("rtl", "ltr"):
        raise ValueError("order must be 'rtl' or 'ltr'")
    xs = [0] + list(col_cuts) + [width]
    ys = [0] + list(row_cuts) + [height]
    col_idx = range(len(xs) - 2, -1, -1) if order == "rtl" else range(len(xs) - 1)
    rects = []
    for j in col_idx:
        for i in range(len(ys) - 1):
            rects.append(Box(xs[j], ys[i], xs[j + 1], ys[i + 1]))
    return rects


def split_cells(
    r: Raster, col_cuts: list[int], row_cuts: list[int], order: str = "rtl"
) -> list[Raster]:
    """Split a raster into grid cells, emitted in reading order (see cell_rects)."""
    out = []
    for rect in cell_rects(r.width, r.height, col_cuts, row_cuts, order):
        sub = r.data[rect.y0 : rect.y1, rect.x0 : rect.x1, :]
        out.append(Raster(rect.x1 - rect.x0, rect.y1 - rect.y0, r.channels, sub.copy()))
    return out


def _profile_valleys(profile: np.ndarray) -> int:
    """Count interior runs of the smoothed profile below 10% of its mean."""
    kernel = np.ones(5) / 5.0
    smoothed = np.convolve(profile.astype(np.float64), kernel, mode="same")
    mean = smoothed.mean()
    if mean <= 0:
        return 0
    low = smoothed < 0.1 * mean
    count = 0
    i = 0
    n = len(low)
    while i < n:
        if low[i]:
            j = i
            while j < n and low[j]:
                j += 1
            if i > 0 and j < n:  # runs touching the border are margins, not separators
                count += 1
            i = j
        else:
            i += 1
    return count


def estimate_columns(b: BinaryRaster) -> int:
    """Column count from vertical-projection valleys; a CLI override always wins."""
    return 1 + _profile_valleys(b.bits.sum(axis=0))


def estimate_rows(b: BinaryRaster) -> int:
    """Row count, same valley rule applied to the horizontal projection."""
    return 1 + _profile_valleys(b.bits.sum(axis=1))


# Moore neighborhood in clockwise order for image coordinates (y grows down):
# E, SE, S, SW, W, NW, N, NE
_DIRS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def _trace_boundary(bits: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Clockwise border following of the 8-connected component containing start.

    ``start`` must be the component's topmost-then-leftmost pixel, which
    guarantees its west neighbor is background. Stops by Jacob's criterion
    (re-entering the start pixel about to repeat the first move).
    """
    h, w = bits.shape
    x0, y0 = start

    def fg(x, y):
        return 0 <= x < w and 0 <= y < h and bits[y, x]

    def next_from(pos, back_dir):
        px, py = pos
        for i in range(1, 9):
            d = (back_dir + i) % 8
            nx, ny = px + _DIRS[d][0], py + _DIRS[d][1]
            if fg(nx, ny):
                return (nx, ny), d
        return None, None

    first, d0 = next_from(start, 4)  # entered from the west
    if first is None:
        return [start]  # isolated pixel
    contour = [start]
    cur, back = first, (d0 + 4) % 8
    limit = 4 * int(bits.sum()) + 8
    while limit > 0:
        limit -= 1
        if cur == start:
            nxt, _ = next_from(cur, back)
            if nxt == first:
                break
        contour.append(cur)
        nxt, d = next_from(cur, back)
        cur, back = nxt, (d + 4) % 8
    return contour


def find_contours(b: BinaryRaster) -> list[list[tuple[int, int]]]:
    """External boundary of every 8-connected foreground component.

    Components are discovered in raster order of their first pixel, which is
    also where each trace deterministically starts.
    """
    bits = b.bits
    h, w = bits.shape
    labels = np.zeros((h, w), dtype=np.int32)
    contours = []
    next_label = 0
    for y in range(h):
        row = bits[y]
        for x in range(w):
            if not row[x] or labels[y, x]:
                continue
            next_label += 1
            # BFS flood fill to mark the component
            stack = [(x, y)]
            labels[y, x] = next_label
            while stack:
                cx, cy = stack.pop()
                for dx, dy in _DIRS:
                    nx, ny = cx + dx, cy + dy
                    if 0 <= nx < w and 0 <= ny < h and bits[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = next_label
                        stack.append((nx, ny))
            comp = bits & (labels == next_label)
            contours.append(_trace_boundary(comp, (x, y)))
    return contours


def contour_boxes(contours: list[list[tuple[int, int]]], min_area: int = 4) -> list[Box]:
    """Tight bounding boxes; specks below min_area and fully nested boxes are dropped."""
    boxes = []
    for contour in contours:
        xs = [p[0] for p in contour]
        ys = [p[1] for p in contour]
        box = Box(min(xs), min(ys), max(xs) + 1, max(ys) + 1)
        if box.area >= min_area:
            boxes.append(box)
    kept = []
    for i, box in enumerate(boxes):
        swallowed = False
        for j, other in enumerate(boxes):
            if i == j:
                continue
            if other.contains(box) and (other.area > box.area or (other.area == box.area and j < i)):
                swallowed = True
                break
        if not swallowed:
            kept.append(box)
    return kept


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two half-open boxes."""
    iw = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
    ih = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = iw * ih
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def import_detections(path, image_size: tuple[int, int] | None = None) -> list[Detection]:
    """Load external detector output: a JSON array of {"box": [x0,y0,x1,y1], "score": s}.

    When image_size (width, height) is given, boxes are clipped to the image;
    boxes that clip to nothing are dropped.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read detections from {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError("detections file must contain a JSON array")
    detections = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "box" not in item or "score" not in item:
            raise ParseError(f"entry {i}: expected an object with 'box' and 'score'")
        coords = item["box"]
        if not (isinstance(coords, list) and len(coords) == 4):
            raise ParseError(f"entry {i}: box must be [x0, y0, x1, y1]")
        score = item["score"]
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ScoreOutOfRange(f"entry {i}: score {score} outside [0, 1]")
        x0, y0, x1, y1 = (int(round(c)) for c in coords)
        if not (x0 < x1 and y0 < y1):
            raise ParseError(f"entry {i}: degenerate box {coords}")
        if image_size is not None:
            w, h = image_size
            x0, y0 = max(0, x0), max(0, y0)
            x1, y1 = min(w, x1), min(h, y1)
            if x0 >= x1 or y0 >= y1:
                continue  # entirely outside the image
        detections.append(Detection(Box(x0, y0, x1, y1), float(score), "external"))
    return detections


def reading_order(detections: list[Detection], order: str = "rtl") -> list[Detection]:
    """Sort detections into column reading order.

    Boxes are clustered into columns by horizontal-interval overlap (at least
    half the narrower box), columns are ordered right-to-left (or ltr), and
    boxes within a column run top-to-bottom.
    """
    if order not in ("rtl", "ltr"):
        raise ValueError("order must be 'rtl' or 'ltr'")
    remaining = sorted(detections, key=lambda d: (-d.box.center[0], d.box.y0, d.box.x0))
    columns: list[dict] = []
    for det in remaining:
        placed = False
        for col in columns:
            lo = max(col["x0"], det.box.x0)
            hi = min(col["x1"], det.box.x1)
            narrow = min(col["x1"] - col["x0"], det.box.x1 - det.box.x0)
            if hi - lo >= 0.5 * narrow:
                col["dets"].append(det)
                col["x0"] = min(col["x0"], det.box.x0)
                col["x1"] = max(col["x1"], det.box.x1)
                placed = True
                break
        if not placed:
            columns.append({"x0": det.box.x0, "x1": det.box.x1, "dets": [det]})
    columns.sort(key=lambda c: -(c["x0"] + c["x1"]) / 2.0)
    if order == "ltr":
        columns.reverse()
    out = []
    for col in columns:
        col["dets"].sort(key=lambda d: (d.box.y0, -d.box.center[0], d.box.x0))
        out.extend(col["dets"])
    return out


def hybrid_merge(
    contour: list[Detection],
    external: list[Detection],
    iou_thresh: float = 0.5,
    order: str = "rtl",
) -> list[Detection]:
    """Merge contour boxes with external detector boxes.

    Every external detection is kept. A contour detection survives only when
    its IoU with every kept external box stays below iou_thresh, so contours
    backfill regions the detector missed without duplicating its hits.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError("iou_thresh must be in (0, 1]")
    kept = list(external)
    for det in contour:
        if all(iou(det.box, e.box) < iou_thresh for e in external):
            kept.append(det)
    return reading_order(kept, order)


@dataclass
class LabelmeAnnotation:
    width: int
    height: int
    items: list[tuple[str, Box]] = field(default_factory=list)


def load_labelme(path) -> LabelmeAnnotation:
    """Read the subset of a LabelMe JSON file used as segmentation ground truth.

    Polygons are converted to tight integer boxes, clipped to the image.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read LabelMe file {path}: {exc}") from exc
    try:
        width = int(raw["imageWidth"])
        height = int(raw["imageHeight"])
        shapes = raw["shapes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"missing LabelMe fields in {path}: {exc}") from exc
    ann = LabelmeAnnotation(width, height)
    for i, shape in enumerate(shapes):
        try:
            label = str(shape["label"])
            points = shape["points"]
            xs = [float(p[0]) for p in points]
            ys = [float(p[1]) for p in points]
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"bad shape {i} in {path}: {exc}") from exc
        if not xs:
            raise ParseError(f"shape {i} has no points")
        x0 = max(0, int(math.floor(min(xs))))
        y0 = max(0, int(math.floor(min(ys))))
        x1 = min(width, int(math.ceil(max(xs))))
        y1 = min(height, int(math.ceil(max(ys))))
        if x1 <= x0:
            x1 = min(width, x0 + 1)
        if y1 <= y0:
            y1 = min(height, y0 + 1)
        ann.items.append((label, Box(x0, y0, x1, y1)))
    return ann
