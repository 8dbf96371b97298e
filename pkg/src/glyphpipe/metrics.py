"""Classification metrics, the BLEU family, and perplexity.

BLEU is exposed in the conventions that make published scores diverge:
corpus-pooled unsmoothed counts, per-sentence smoothed averaging, and a
pinned case-folding/punctuation-splitting tokenizer. A report always states
which mode and smoothing produced its number.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import GlyphPipeError


class EmptyMatrix(GlyphPipeError):
    pass


class LengthMismatch(GlyphPipeError):
    pass


class EmptyHypothesisSet(GlyphPipeError):
    pass


class Empty(GlyphPipeError):
    pass


@dataclass
class ConfusionMatrix:
    """K x K counts; cell (i, j) counts samples of true class i predicted as j."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be >= 0")

    @classmethod
    def from_pairs(cls, true_ids, pred_ids, k: int) -> "ConfusionMatrix":
        counts = np.zeros((k, k), dtype=np.int64)
        for t, p in zip(true_ids, pred_ids, strict=True):
            counts[t, p] += 1
        return cls(counts)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def class_counts(self, i: int) -> tuple[int, int, int, int]:
        """(TP, TN, FP, FN) treating class i as positive."""
        tp = int(self.counts[i, i])
        fp = int(self.counts[:, i].sum()) - tp
        fn = int(self.counts[i, :].sum()) - tp
        tn = self.total - tp - fp - fn
        return tp, tn, fp, fn


def _check_nonempty(cm: ConfusionMatrix):
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no samples")


def accuracy(cm: ConfusionMatrix) -> float:
    """(TP + TN) / (TP + TN + FP + FN); for multiclass this is trace / total."""
    _check_nonempty(cm)
    return float(np.trace(cm.counts)) / cm.total


def per_class_precision(cm: ConfusionMatrix) -> list[float]:
    """TP / (TP + FP) per class; zero-denominator classes yield 0 (see degenerate_classes)."""
    _check_nonempty(cm)
    out = []
    for i in range(cm.k):
        tp, _, fp, _ = cm.class_counts(i)
        out.append(tp / (tp + fp) if tp + fp else 0.0)
    return out


def per_class_recall(cm: ConfusionMatrix) -> list[float]:
    """TP / (TP + FN) per class; zero-denominator classes yield 0."""
    _check_nonempty(cm)
    out = []
    for i in range(cm.k):
        tp, _, _, fn = cm.class_counts(i)
        out.append(tp / (tp + fn) if tp + fn else 0.0)
    return out


def degenerate_classes(cm: ConfusionMatrix) -> list[int]:
    """Classes whose precision or recall denominator is zero."""
    _check_nonempty(cm)
    out = []
    for i in range(cm.k):
        tp, _, fp, fn = cm.class_counts(i)
        if tp + fp == 0 or tp + fn == 0:
            out.append(i)
    return out


def precision(cm: ConfusionMatrix, averaging: str = "macro") -> float:
    _check_nonempty(cm)
    if averaging == "macro":
        vals = per_class_precision(cm)
        return sum(vals) / len(vals)
    if averaging == "micro":
        tp = sum(cm.class_counts(i)[0] for i in range(cm.k))
        fp = sum(cm.class_counts(i)[2] for i in range(cm.k))
        return tp / (tp + fp) if tp + fp else 0.0
    raise ValueError(f"averaging must be macro or micro, not {averaging!r}")


def recall(cm: ConfusionMatrix, averaging: str = "macro") -> float:
    _check_nonempty(cm)
    if averaging == "macro":
        vals = per_class_recall(cm)
        return sum(vals) / len(vals)
    if averaging == "micro":
        tp = sum(cm.class_counts(i)[0] for i in range(cm.k))
        fn = sum(cm.class_counts(i)[3] for i in range(cm.k))
        return tp / (tp + fn) if tp + fn else 0.0
    raise ValueError(f"averaging must be macro or micro, not {averaging!r}")


def f1(p: float, r: float) -> float:
    """2 * P * R / (P + R), defined as 0 when both are 0."""
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class BleuReport:
    p_n: list[float]
    bp: float
    score: float  # in [0, 1]; display convention multiplies by 100
    mode: str  # "corpus" or "sentence-avg"
    smoothing: str  # "none" or "add-epsilon"
    degenerate: bool = False  # some p_n had an empty denominator

    @property
    def score_x100(self) -> float:
        return 100.0 * self.score

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "smoothing": self.smoothing,
            "p1": self.p_n[0],
            "p2": self.p_n[1],
            "p3": self.p_n[2],
            "p4": self.p_n[3],
            "bp": self.bp,
            "score_x100": self.score_x100,
        }


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _validate_pairs(refs, hyps):
    if len(refs) != len(hyps):
        raise LengthMismatch(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if not hyps:
        raise EmptyHypothesisSet("no hypotheses to score")


def bleu_corpus(refs: list[list[str]], hyps: list[list[str]], max_n: int = 4) -> BleuReport:
    """Corpus BLEU: clipped n-gram counts pooled over sentences, unsmoothed.

    score = BP * exp(mean of ln p_n); any p_n of zero zeroes the score.
    BP = 1 when the hypothesis corpus is no shorter than the reference
    corpus, else exp(1 - r/c). Single reference per hypothesis.
    """
    _validate_pairs(refs, hyps)
    match = [0] * max_n
    total = [0] * max_n
    ref_len = hyp_len = 0
    for ref, hyp in zip(refs, hyps):
        ref_len += len(ref)
        hyp_len += len(hyp)
        for n in range(1, max_n + 1):
            hc = _ngram_counts(hyp, n)
            rc = _ngram_counts(ref, n)
            match[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(len(hyp) - n + 1, 0)
    p_n = [m / t if t > 0 else 0.0 for m, t in zip(match, total)]
    if hyp_len == 0:
        return BleuReport(p_n, 0.0, 0.0, "corpus", "none", degenerate=True)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if any(p == 0.0 for p in p_n):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in p_n) / max_n)
    return BleuReport(p_n, bp, score, "corpus", "none", degenerate=any(t == 0 for t in total))


def bleu_sentence_avg(
    refs: list[list[str]],
    hyps: list[list[str]],
    max_n: int = 4,
    epsilon: float = 0.1,
) -> BleuReport:
    """Arithmetic mean of per-sentence BLEU with add-epsilon smoothing.

    Zero n-gram numerators are replaced by ``epsilon``; empty denominators
    (sentences shorter than n) are treated as 1 so short sentences still get
    a finite, small precision. The aggregated p_n/bp fields are per-sentence
    means kept for diagnostics; the score is the mean of per-sentence scores,
    which is exactly why this mode and corpus mode legitimately disagree.
    """
    _validate_pairs(refs, hyps)
    scores = []
    agg_p = np.zeros(max_n)
    agg_bp = 0.0
    degenerate = False
    for ref, hyp in zip(refs, hyps):
        p_n = []
        for n in range(1, max_n + 1):
            hc = _ngram_counts(hyp, n)
            rc = _ngram_counts(ref, n)
            m = sum(min(c, rc[g]) for g, c in hc.items())
            t = max(len(hyp) - n + 1, 0)
            if t == 0:
                degenerate = True
            p_n.append((m if m > 0 else epsilon) / max(t, 1))
        if len(hyp) == 0:
            scores.append(0.0)
            bp = 0.0
        else:
            bp = 1.0 if len(hyp) > len(ref) else math.exp(1.0 - len(ref) / len(hyp))
            scores.append(bp * math.exp(sum(math.log(p) for p in p_n) / max_n))
        agg_p += np.asarray(p_n)
        agg_bp += bp
    count = len(hyps)
    return BleuReport(
        list(agg_p / count),
        agg_bp / count,
        sum(scores) / count,
        "sentence-avg",
        "add-epsilon",
        degenerate=degenerate,
    )


_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def bleu_tokenize(text: str) -> list[str]:
    """Pinned BLEU tokenizer: case-fold, then split punctuation into its own tokens."""
    return _TOKEN_RE.findall(text.lower())


def perplexity(logprobs) -> float:
    """exp(-mean(logprobs)), logprobs in nats."""
    vals = list(logprobs)
    if not vals:
        raise Empty("no token log-probabilities")
    return math.exp(-sum(vals) / len(vals))


@dataclass
class MetricsReport:
    """The JSON-facing bundle of evaluation quantities."""

    accuracy: float | None = None
    precision_macro: float | None = None
    precision_micro: float | None = None
    recall_macro: float | None = None
    recall_micro: float | None = None
    f1_macro: float | None = None
    degenerate_classes: list[int] = field(default_factory=list)
    bleu: BleuReport | None = None
    ppl: float | None = None

    def to_dict(self) -> dict:
        out: dict = {}
        for key in (
            "accuracy",
            "precision_macro",
            "precision_micro",
            "recall_macro",
            "recall_micro",
            "f1_macro",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.degenerate_classes:
            out["degenerate_classes"] = self.degenerate_classes
        if self.bleu is not None:
            out["bleu"] = self.bleu.to_dict()
        if self.ppl is not None:
            out["ppl"] = self.ppl
        return out


def classification_report(cm: ConfusionMatrix) -> MetricsReport:
    p_macro = precision(cm, "macro")
    r_macro = recall(cm, "macro")
    return MetricsReport(
        accuracy=accuracy(cm),
        precision_macro=p_macro,
        precision_micro=precision(cm, "micro"),
        recall_macro=r_macro,
        recall_micro=recall(cm, "micro"),
        f1_macro=f1(p_macro, r_macro),
        degenerate_classes=degenerate_classes(cm),
    )
