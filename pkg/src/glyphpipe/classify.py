"""Glyph-image classification: dataset protocol, a residual micro-CNN with a
frozen-backbone transfer mode, and a HOG + k-NN baseline.

The dataset layout is one directory per Gardiner code (directory name is the
code) with images inside, or a ``labels.tsv`` of ``path<TAB>code`` lines.
Model inputs are 64x64 grayscale, aspect-preserving padded, and standardized
per image inside the input stage, so brightness shifts cancel out before the
network sees anything.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neural as nn
from .errors import DivergedLoss, GlyphPipeError
from .imaging import AugSpec, Raster, augment, load_image, to_grayscale


class EmptyClass(GlyphPipeError):
    """A class with zero items cannot be split."""


class EmptyBank(GlyphPipeError):
    """k-NN needs at least one reference vector."""


INPUT_SIZE = 64
STANDARDIZE_EPS = 1e-6


@dataclass
class GlyphDataset:
    items: list[tuple[str, str]]  # (image path, class label)
    class_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.class_index:
            labels = sorted({label for _, label in self.items})
            self.class_index = {label: i for i, label in enumerate(labels)}
        for _, label in self.items:
            if label not in self.class_index:
                raise ValueError(f"label {label!r} missing from class index")

    @classmethod
    def from_dir(cls, root) -> "GlyphDataset":
        root = Path(root)
        items = []
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            for img in sorted(sub.iterdir()):
                if img.suffix.lower() in (".pgm", ".ppm"):
                    items.append((str(img), sub.name))
        return cls(items)

    @classmethod
    def from_labels_tsv(cls, path) -> "GlyphDataset":
        base = Path(path).parent
        items = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                rel, label = line.split("\t")
                items.append((str(base / rel), label))
        return cls(items)

    @property
    def labels(self) -> list[str]:
        return sorted(self.class_index)

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class SplitSpec:
    train: float = 0.6
    valid: float = 0.2
    test: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if abs(self.train + self.valid + self.test - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def _largest_remainder(n: int, fractions: tuple[float, ...]) -> list[int]:
    raw = [n * f for f in fractions]
    counts = [int(x) for x in raw]
    leftover = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split_dataset(
    ds: GlyphDataset, spec: SplitSpec
) -> tuple[GlyphDataset, GlyphDataset, GlyphDataset]:
    """Disjoint, exhaustive train/valid/test split, stratified per class.

    Sizes use floor counts with largest-remainder rounding (ties resolved in
    train, valid, test order), so per-class proportions stay within one item
    of the requested fractions. Deterministic under spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    fractions = (spec.train, spec.valid, spec.test)
    buckets: tuple[list, list, list] = ([], [], [])

    def deal(items):
        idx = rng.permutation(len(items))
        counts = _largest_remainder(len(items), fractions)
        start = 0
        for bucket, count in zip(buckets, counts):
            bucket.extend(items[i] for i in idx[start : start + count])
            start += count

    if spec.stratified:
        by_class: dict[str, list] = {label: [] for label in ds.class_index}
        for item in ds.items:
            by_class[item[1]].append(item)
        for label in sorted(by_class):
            if not by_class[label]:
                raise EmptyClass(f"class {label!r} has no items")
            deal(by_class[label])
    else:
        deal(ds.items)
    index = dict(ds.class_index)
    return tuple(GlyphDataset(list(b), dict(index)) for b in buckets)


def pad_to_square(g: Raster, fill: int = 255) -> Raster:
    side = max(g.width, g.height)
    canvas = np.full((side, side), fill, dtype=np.uint8)
    top = (side - g.height) // 2
    left = (side - g.width) // 2
    canvas[top : top + g.height, left : left + g.width] = g.plane()
    return Raster(side, side, 1, canvas[:, :, None])


def resize_nearest(g: Raster, size: int) -> Raster:
    src = g.plane()
    ys = np.minimum((np.arange(size) + 0.5) * g.height / size, g.height - 1).astype(int)
    xs = np.minimum((np.arange(size) + 0.5) * g.width / size, g.width - 1).astype(int)
    out = src[np.ix_(ys, xs)]
    return Raster(size, size, 1, out[:, :, None])


def crop_to_ink(g: Raster) -> Raster:
    """Tight-crop to the Otsu foreground; unchanged when nothing binarizes as ink.

    Training images carry background margins while segmentation boxes are
    already tight, so both views are normalized here before the model ever
    sees them.
    """
    from .imaging import binarize_otsu

    bits = binarize_otsu(g).bits
    if not bits.any():
        return g
    ys, xs = np.nonzero(bits)
    crop = g.plane()[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    return Raster(crop.shape[1], crop.shape[0], 1, crop[:, :, None].copy())


def prepare_input(raster: Raster) -> np.ndarray:
    """Raster -> standardized (1, 64, 64) float32 model input."""
    g = crop_to_ink(to_grayscale(raster))
    g = resize_nearest(pad_to_square(g), INPUT_SIZE)
    x = g.plane().astype(np.float64)
    x = (x - x.mean()) / (x.std() + STANDARDIZE_EPS)
    return x[None, :, :].astype(np.float32)


# --- HOG + k-NN baseline -----------------------------------------------------


@dataclass
class HogConfig:
    cell: int = 8
    bins: int = 9
    block: int = 2  # cells per block side, stride one cell
    clip: float = 0.2
    eps: float = 1e-6

    def descriptor_length(self, size: int = INPUT_SIZE) -> int:
        cells = size // self.cell
        blocks = cells - self.block + 1
        return blocks * blocks * self.block * self.block * self.bins


def hog_features(g: Raster, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Histogram of oriented gradients with unsigned bins and L2-hys blocks.

    Gradients are central differences on a replicate-padded image; votes are
    split linearly between the two nearest bin centers (centers at k*20 deg).
    """
    img = g.plane().astype(np.float64)
    if img.shape != (INPUT_SIZE, INPUT_SIZE):
        raise ValueError(f"hog_features expects {INPUT_SIZE}x{INPUT_SIZE} input")
    p = np.pad(img, 1, mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    span = 180.0 / cfg.bins
    coord = ang / span
    lo = np.floor(coord).astype(int) % cfg.bins
    frac = coord - np.floor(coord)
    hi = (lo + 1) % cfg.bins

    n_cells = INPUT_SIZE // cfg.cell
    hist = np.zeros((n_cells, n_cells, cfg.bins))
    cy = np.repeat(np.arange(INPUT_SIZE) // cfg.cell, INPUT_SIZE).reshape(INPUT_SIZE, INPUT_SIZE)
    cx = cy.T
    np.add.at(hist, (cy, cx, lo), mag * (1.0 - frac))
    np.add.at(hist, (cy, cx, hi), mag * frac)

    blocks = []
    span_cells = n_cells - cfg.block + 1
    for by in range(span_cells):
        for bx in range(span_cells):
            v = hist[by : by + cfg.block, bx : bx + cfg.block, :].reshape(-1)
            v = v / np.sqrt((v * v).sum() + cfg.eps**2)
            v = np.minimum(v, cfg.clip)
            v = v / np.sqrt((v * v).sum() + cfg.eps**2)
            blocks.append(v)
    return np.concatenate(blocks)


def knn_predict(query: np.ndarray, bank: list[tuple[np.ndarray, object]], k: int):
    """Majority label among the k nearest bank vectors by Euclidean distance.

    Ties on the vote break toward the smaller mean distance, then the smaller
    class id; ties on distance during selection break toward the earlier bank
    entry.
    """
    if not bank:
        raise EmptyBank("empty reference bank")
    if k > len(bank):
        raise ValueError(f"k={k} exceeds bank size {len(bank)}")
    dists = [(float(np.linalg.norm(np.asarray(v) - query)), i) for i, (v, _) in enumerate(bank)]
    dists.sort()
    chosen = dists[:k]
    votes: dict = {}
    for d, i in chosen:
        label = bank[i][1]
        votes.setdefault(label, []).append(d)
    ranked = sorted(
        votes.items(), key=lambda kv: (-len(kv[1]), sum(kv[1]) / len(kv[1]), kv[0])
    )
    return ranked[0][0]


# --- residual micro-CNN -------------------------------------------------------


@dataclass
class ClassifierConfig:
    stem_channels: int = 8
    blocks: int = 2
    head_hidden: int = 256
    dropout: float = 0.3
    freeze_backbone: bool = False

    def __post_init__(self):
        if self.stem_channels < 1 or self.blocks < 0:
            raise ValueError("bad classifier config")


class GlyphClassifier:
    """Residual CNN over standardized 64x64 glyphs.

    Backbone: stem conv + ``blocks`` residual blocks (layer-norm variant),
    downsampled by 2x2 max pooling. Head: global average pool, a hidden dense
    layer with relu and dropout, then the class projection, zero-initialized
    so an untrained model predicts the uniform distribution.
    """

    def __init__(self, cfg: ClassifierConfig, class_index: dict[str, int], seed: int = 0):
        if len(class_index) < 2:
            raise ValueError("need at least 2 classes")
        self.cfg = cfg
        self.class_index = dict(class_index)
        self.id_to_label = {i: lab for lab, i in self.class_index.items()}
        self.params: dict[str, nn.Tensor] = {}
        self._rng = np.random.default_rng(seed)
        self._build(seed)

    def _param(self, name: str, array: np.ndarray, trainable: bool = True) -> nn.Tensor:
        t = nn.Tensor(array.astype(np.float32), requires_grad=trainable, name=name)
        self.params[name] = t
        return t

    def _build(self, seed: int):
        rng = np.random.default_rng(seed)
        c = self.cfg.stem_channels
        k = len(self.class_index)

        def conv_init(cout, cin, kh, kw):
            fan_in = cin * kh * kw
            return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, kh, kw))

        self._param("stem.w", conv_init(c, 1, 3, 3))
        self._param("stem.b", np.zeros(c))
        for i in range(self.cfg.blocks):
            self._param(f"block{i}.conv1.w", conv_init(c, c, 3, 3))
            self._param(f"block{i}.conv1.b", np.zeros(c))
            self._param(f"block{i}.conv2.w", conv_init(c, c, 3, 3))
            self._param(f"block{i}.conv2.b", np.zeros(c))
            self._param(f"block{i}.ln.g", np.ones(c))
            self._param(f"block{i}.ln.b", np.zeros(c))
        h = self.cfg.head_hidden
        self._param("head.fc1.w", rng.normal(0.0, np.sqrt(2.0 / c), size=(c, h)))
        self._param("head.fc1.b", np.zeros(h))
        self._param("head.fc2.w", np.zeros((h, k)))
        self._param("head.fc2.b", np.zeros(k))
        if self.cfg.freeze_backbone:
            self.freeze_backbone()

    def freeze_backbone(self):
        for name, p in self.params.items():
            if not name.startswith("head."):
                p.requires_grad = False
        self.cfg = dataclasses.replace(self.cfg, freeze_backbone=True)

    def backbone_names(self) -> list[str]:
        return [n for n in self.params if not n.startswith("head.")]

    def trainable_params(self) -> dict[str, nn.Tensor]:
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def _chan(self, name: str) -> nn.Tensor:
        p = self.params[name]
        return nn.reshape(p, (1, p.shape[0], 1, 1))

    def logits(self, x: np.ndarray, train: bool = False) -> nn.Tensor:
        """x: (N, 1, 64, 64) standardized float32 -> (N, K) logits."""
        p = self.params
        h = nn.relu(nn.add(nn.conv2d(nn.Tensor(x), p["stem.w"], 1, 1), self._chan("stem.b")))
        h = nn.maxpool2(h)
        for i in range(self.cfg.blocks):
            r = nn.add(nn.conv2d(h, p[f"block{i}.conv1.w"], 1, 1), self._chan(f"block{i}.conv1.b"))
            r = nn.relu(r)
            r = nn.add(nn.conv2d(r, p[f"block{i}.conv2.w"], 1, 1), self._chan(f"block{i}.conv2.b"))
            r = nn.layer_norm(r, axis=(1, 2, 3))
            r = nn.add(nn.mul(r, self._chan(f"block{i}.ln.g")), self._chan(f"block{i}.ln.b"))
            h = nn.relu(nn.add(h, r))
            h = nn.maxpool2(h)
        z = nn.global_avg_pool(h)
        z = nn.relu(nn.add(nn.matmul(z, p["head.fc1.w"]), p["head.fc1.b"]))
        z = nn.dropout(z, self.cfg.dropout, train, self._rng)
        return nn.add(nn.matmul(z, p["head.fc2.w"]), p["head.fc2.b"])

    def predict_topk(self, raster: Raster, k: int) -> list[tuple[str, float]]:
        """(label, probability) pairs, descending; probabilities over all K classes sum to 1."""
        kk = len(self.class_index)
        if not 1 <= k <= kk:
            raise ValueError(f"k must be in [1, {kk}]")
        x = prepare_input(raster)[None, :, :, :]
        logits = self.logits(x, train=False).data[0]
        probs = np.exp(nn.log_softmax_np(logits))
        order = sorted(range(kk), key=lambda i: (-probs[i], i))[:k]
        return [(self.id_to_label[i], float(probs[i])) for i in order]

    def save(self, path) -> None:
        nn.save_checkpoint(self.params, path)
        meta = {
            "kind": "classifier",
            "class_index": self.class_index,
            "config": dataclasses.asdict(self.cfg),
        }
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))

    @classmethod
    def load(cls, path) -> "GlyphClassifier":
        meta = json.loads(Path(str(path) + ".meta.json").read_text())
        model = cls(ClassifierConfig(**meta["config"]), meta["class_index"])
        weights = nn.load_checkpoint(path)
        for name, p in model.params.items():
            p.data = weights[name].astype(np.float32)
        return model


def load_arrays(
    ds: GlyphDataset,
    augment_factor: int = 0,
    aug_spec: AugSpec | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Dataset -> (X (N,1,64,64) float32, y (N,) int64), optionally augmented.

    ``augment_factor`` extra deterministic variants are generated per item.
    """
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for path, label in ds.items:
        raster = to_grayscale(load_image(path))
        label_id = ds.class_index[label]
        xs.append(prepare_input(raster))
        ys.append(label_id)
        for _ in range(augment_factor):
            spec = dataclasses.replace(
                aug_spec or AugSpec(), seed=int(rng.integers(0, 2**63 - 1))
            )
            xs.append(prepare_input(augment(raster, spec)))
            ys.append(label_id)
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


def _epoch_eval(model: GlyphClassifier, x: np.ndarray, y: np.ndarray, batch: int):
    total_loss = 0.0
    correct = 0
    for start in range(0, len(y), batch):
        xb, yb = x[start : start + batch], y[start : start + batch]
        logits = model.logits(xb, train=False)
        lp = nn.log_softmax_np(logits.data)
        total_loss += float(-(lp[np.arange(len(yb)), yb]).sum())
        correct += int((logits.data.argmax(axis=1) == yb).sum())
    return total_loss / len(y), correct / len(y)


def train_classifier(
    train_ds: GlyphDataset,
    valid_ds: GlyphDataset,
    cfg: ClassifierConfig,
    epochs: int,
    lr: float,
    seed: int = 0,
    batch_size: int = 32,
    stop_at_train_acc: float | None = None,
    augment_factor: int = 0,
    aug_spec: AugSpec | None = None,
) -> tuple[GlyphClassifier, list[dict]]:
    """Adam cross-entropy training; history records per-epoch loss/accuracy.

    With cfg.freeze_backbone only head parameters receive updates. Raises
    DivergedLoss when the loss stops being finite.
    """
    if train_ds.class_index != valid_ds.class_index:
        raise ValueError("train and valid splits must share one class index")
    model = GlyphClassifier(cfg, train_ds.class_index, seed=seed)
    x_train, y_train = load_arrays(train_ds, augment_factor, aug_spec, seed=seed)
    x_valid, y_valid = load_arrays(valid_ds) if len(valid_ds) else (None, None)
    opt = nn.Adam(model.trainable_params(), lr=lr)
    shuffle_rng = np.random.default_rng(seed + 1)
    history: list[dict] = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(y_train))
        epoch_loss = 0.0
        correct = 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x_train[idx], y_train[idx]
            nn.zero_grads(model.params)
            with nn.Tape() as tape:
                logits = model.logits(xb, train=True)
                loss = nn.cross_entropy(logits, yb)
            if not np.isfinite(loss.item()):
                raise DivergedLoss(f"loss {loss.item()} at epoch {epoch}")
            tape.backward(loss)
            opt.step()
            epoch_loss += loss.item() * len(yb)
            correct += int((logits.data.argmax(axis=1) == yb).sum())
        record = {
            "epoch": epoch,
            "train_loss": epoch_loss / len(y_train),
            "train_acc": correct / len(y_train),
        }
        if x_valid is not None:
            vloss, vacc = _epoch_eval(model, x_valid, y_valid, batch_size)
            record["valid_loss"] = vloss
            record["valid_acc"] = vacc
        history.append(record)
        if stop_at_train_acc is not None and record["train_acc"] >= stop_at_train_acc:
            break
    return model, history


def evaluate_classifier(model: GlyphClassifier, ds: GlyphDataset, batch_size: int = 64):
    """(ConfusionMatrix, accuracy) over a dataset split."""
    from .metrics import ConfusionMatrix

    x, y = load_arrays(ds)
    k = len(ds.class_index)
    preds = []
    for start in range(0, len(y), batch_size):
        logits = model.logits(x[start : start + batch_size], train=False)
        preds.extend(logits.data.argmax(axis=1).tolist())
    cm = ConfusionMatrix.from_pairs(y.tolist(), preds, k)
    return cm, float((np.asarray(preds) == y).mean())
