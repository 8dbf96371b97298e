"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
complete. Tolerances are pinned here and nowhere else.
"""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from glyphpipe import neural as nn
from glyphpipe.classify import (
    ClassifierConfig,
    GlyphClassifier,
    GlyphDataset,
    SplitSpec,
    evaluate_classifier,
    split_dataset,
    train_classifier,
)
from glyphpipe.gardiner import bundled_lexicon, parse_gardiner, sequence_to_translit
from glyphpipe.imaging import AugSpec, BinaryRaster, augment, binarize_otsu, save_image, to_grayscale
from glyphpipe.layout import (
    Detection,
    GridSpec,
    cell_rects,
    contour_boxes,
    default_tol,
    expected_grid,
    filter_and_snap,
    find_contours,
    hough_lines,
    hybrid_merge,
    iou,
    split_cells,
)
from glyphpipe.metrics import (
    ConfusionMatrix,
    accuracy,
    bleu_corpus,
    bleu_sentence_avg,
    bleu_tokenize,
    f1,
    per_class_precision,
    per_class_recall,
    precision,
    recall,
)
from glyphpipe.pipeline import PipelineConfig, run_pipeline
from glyphpipe.synth import (
    TemplateClassifier,
    blob_plate,
    bleu_divergence_corpus,
    corrupt_plate,
    pattern_ids_for,
    render_glyph_tile,
    render_plate,
    toy_parallel_corpus,
    touching_pair_plate,
)
from glyphpipe.translate import (
    Hypothesis,
    TranslatorConfig,
    beam_decode,
    decode_scores,
    greedy_decode,
    train_translator,
)

from oracles import bleu_corpus_oracle, finite_difference_grad


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {number:02d}] {name}: FAIL")
        raise
    print(f"[criterion {number:02d}] {name}: PASS")


def _rel_err(a, b):
    na = np.linalg.norm(a.ravel())
    nb = np.linalg.norm(b.ravel())
    return np.linalg.norm((a - b).ravel()) / max(na, nb, 1e-12)


def test_criterion_01_gradient_suite():
    """Every neural primitive vs central finite differences: rel err < 1e-4, 10 seeds, < 60 s."""

    def probes(seed):
        rng = np.random.default_rng(seed)
        ids = rng.integers(0, 3, size=5)
        mask = np.triu(np.full((4, 4), -np.inf), k=1)[None, :, :]
        kv = rng.normal(size=(2, 1, 4, 3))
        conv_w = rng.normal(size=(3, 2, 3, 3))
        ce_targets = rng.integers(0, 4, size=5)
        weight = nn.Tensor(rng.normal(size=(4, 4)), dtype=np.float64)
        return {
            "matmul": (lambda rng: rng.normal(size=(4, 4)),
                       lambda x: nn.tsum(nn.mul(nn.matmul(x, weight), nn.matmul(x, weight)))),
            "conv2d": (lambda rng: rng.normal(size=(2, 2, 6, 6)),
                       lambda x: nn.tsum(nn.mul(
                           nn.conv2d(x, nn.Tensor(conv_w, dtype=np.float64), 2, 1),
                           nn.conv2d(x, nn.Tensor(conv_w, dtype=np.float64), 2, 1)))),
            "maxpool2x2": (lambda rng: rng.normal(size=(2, 2, 6, 6)) * 3,
                           lambda x: nn.tsum(nn.mul(nn.maxpool2(x), nn.maxpool2(x)))),
            "global-avg-pool": (lambda rng: rng.normal(size=(2, 3, 4, 4)),
                                lambda x: nn.tsum(nn.mul(nn.global_avg_pool(x),
                                                         nn.global_avg_pool(x)))),
            "relu": (lambda rng: rng.normal(size=(5, 5)) + 0.15,
                     lambda x: nn.tsum(nn.mul(nn.relu(x), nn.relu(x)))),
            "softmax": (lambda rng: rng.normal(size=(3, 5)),
                        lambda x: nn.tsum(nn.mul(nn.softmax(x, axis=-1),
                                                 nn.Tensor(np.arange(15.0).reshape(3, 5))))),
            "layer-norm": (lambda rng: rng.normal(size=(3, 6)) * 2 + 1,
                           lambda x: nn.tsum(nn.mul(nn.layer_norm(x, axis=-1),
                                                    nn.Tensor(np.arange(18.0).reshape(3, 6))))),
            "embedding": (lambda rng: rng.normal(size=(3, 4)),
                          lambda x: nn.tsum(nn.mul(nn.embedding(x, ids), nn.embedding(x, ids)))),
            "residual-add": (lambda rng: rng.normal(size=(4, 4)) + 0.2,
                             lambda x: nn.tsum(nn.mul(nn.add(x, nn.relu(x)), nn.add(x, nn.relu(x))))),
            "attention": (lambda rng: rng.normal(size=(1, 4, 3)),
                          lambda x: nn.tsum(nn.mul(
                              nn.attention(x, nn.Tensor(kv[0], dtype=np.float64),
                                           nn.Tensor(kv[1], dtype=np.float64), mask),
                              nn.attention(x, nn.Tensor(kv[0], dtype=np.float64),
                                           nn.Tensor(kv[1], dtype=np.float64), mask)))),
            "cross-entropy": (lambda rng: rng.normal(size=(5, 4)),
                              lambda x: nn.cross_entropy(x, ce_targets)),
        }

    with criterion(1, "gradient suite"):
        start = time.perf_counter()
        for seed in range(10):
            for name, (make, build) in probes(seed).items():
                rng = np.random.default_rng(seed + 1000)
                x0 = make(rng)
                xt = nn.Tensor(x0, requires_grad=True, dtype=np.float64)
                with nn.Tape() as tape:
                    loss = build(xt)
                tape.backward(loss)
                numeric = finite_difference_grad(lambda arr: build(nn.Tensor(arr, dtype=np.float64)).item(), x0)
                err = _rel_err(xt.grad, numeric)
                assert err < 1e-4, f"{name} seed {seed}: rel err {err:.2e}"
        # dropout: the forward mask is part of the function under test
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x0 = rng.normal(size=(4, 4))
            xt = nn.Tensor(x0, requires_grad=True, dtype=np.float64)
            with nn.Tape() as tape:
                y = nn.dropout(xt, 0.4, train=True, rng=np.random.default_rng(seed + 99))
                loss = nn.tsum(nn.mul(y, y))
            tape.backward(loss)

            def f(arr):
                y = nn.dropout(nn.Tensor(arr, dtype=np.float64), 0.4, train=True,
                               rng=np.random.default_rng(seed + 99))
                return nn.tsum(nn.mul(y, y)).item()

            assert _rel_err(xt.grad, finite_difference_grad(f, x0)) < 1e-4
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"


def test_criterion_02_ppl_consistency():
    """exp(0.3651) reproduces 1.4407 within 1e-3; exp(-avg) == ppl to 1e-9 on every decode."""
    with criterion(2, "PPL consistency"):
        assert abs(math.exp(0.3651) - 1.4407) < 1e-3
        rng = np.random.default_rng(0)
        pools = []
        for _ in range(50):
            hyps = [
                Hypothesis(["t"] * n, float(-rng.random() * (n + 1)), n)
                for n in rng.integers(1, 12, size=int(rng.integers(1, 6)))
            ]
            pools.append(decode_scores(hyps))
        pairs = toy_parallel_corpus(5, seed=1)
        model, _ = train_translator(
            pairs, TranslatorConfig(enc_layers=1, dec_layers=1, d_model=16, heads=2,
                                    ffn=32, max_len=16, dropout=0.0),
            epochs=30, lr=2e-3, seed=0)
        for src, _ in pairs:
            hyp = greedy_decode(model, src, max_len=10)
            if hyp.length:
                pools.append(decode_scores([hyp]))
        for score in pools:
            assert abs(score.pred_ppl - math.exp(-score.mean_logprob)) < 1e-9
            assert abs(score.pred_avg_score) == pytest.approx(abs(score.mean_logprob), abs=0)


def test_criterion_03_bleu_oracle():
    """bleu_corpus == brute-force clipped-n-gram oracle to 1e-12 on 100 random corpora."""
    with criterion(3, "BLEU oracle"):
        rng = np.random.default_rng(42)
        vocab = ["the", "cat", "sat", "on", "mat", "dog", "ran", "a", "far", "king"]
        for case in range(100):
            n_sent = int(rng.integers(1, 11))
            refs, hyps = [], []
            for _ in range(n_sent):
                rlen = int(rng.integers(4, 13))
                hlen = int(rng.integers(4, 13))
                refs.append([vocab[i] for i in rng.integers(0, len(vocab), rlen)])
                if case % 5 == 0:
                    hyps.append(list(refs[-1]))  # identical corpus case
                else:
                    hyps.append([vocab[i] for i in rng.integers(0, len(vocab), hlen)])
            rep = bleu_corpus(refs, hyps)
            score, p_n, bp = bleu_corpus_oracle(refs, hyps)
            assert abs(rep.score - score) <= 1e-12
            assert all(abs(a - b) <= 1e-12 for a, b in zip(rep.p_n, p_n))
            assert abs(rep.bp - bp) <= 1e-12
            if case % 5 == 0:
                assert rep.score == 1.0


def test_criterion_04_bleu_mode_divergence():
    """Sentence-avg-smoothed, corpus-unsmoothed, and pinned-tokenizer BLEU differ pairwise > 5 points."""
    with criterion(4, "BLEU mode divergence"):
        pairs = bleu_divergence_corpus()
        assert len(pairs) == 10
        refs_raw = [r.split() for r, _ in pairs]
        hyps_raw = [h.split() for _, h in pairs]
        a = bleu_sentence_avg(refs_raw, hyps_raw).score_x100
        b = bleu_corpus(refs_raw, hyps_raw).score_x100
        c = bleu_corpus([bleu_tokenize(r) for r, _ in pairs],
                        [bleu_tokenize(h) for _, h in pairs]).score_x100
        assert abs(a - b) > 5.0
        assert abs(a - c) > 5.0
        assert abs(b - c) > 5.0


def test_criterion_05_grid_fixes():
    """20 corrupted plates: snapped cuts within 2 px of i*W/N, no spurious cuts, equal cells, < 10 s."""
    with criterion(5, "grid fixes"):
        start = time.perf_counter()
        rng = np.random.default_rng(7)
        codes = sorted(bundled_lexicon().entries)[:30]
        for case in range(20):
            n_cols = int(rng.integers(2, 6))
            n_rows = int(rng.integers(2, 5))
            cell = int(rng.integers(48, 80))
            chosen = [codes[i] for i in rng.integers(0, len(codes), n_cols * n_rows)]
            plate = render_plate(chosen, n_cols, n_rows, cell=cell,
                                 pattern_ids=pattern_ids_for(codes))
            plate = corrupt_plate(plate, seed=case, stroke_count=3, gap_count=5)
            binary = binarize_otsu(plate)
            w, h = plate.width, plate.height
            spec = GridSpec(w, h, n_cols, n_rows)
            exp_cols, exp_rows = expected_grid(spec)
            vert = hough_lines(binary, list(range(0, 6)) + list(range(175, 180)),
                               vote_threshold=max(8, h // 3))
            horiz = hough_lines(binary, list(range(85, 96)), vote_threshold=max(8, w // 3))
            col_cuts = filter_and_snap(vert, exp_cols, default_tol(w), spec, axis="cols")
            row_cuts = filter_and_snap(horiz, exp_rows, default_tol(h), spec, axis="rows")
            assert len(col_cuts) == n_cols - 1  # zero spurious cuts
            assert len(row_cuts) == n_rows - 1
            for i, cut in enumerate(col_cuts, start=1):
                assert abs(cut - i * w / n_cols) <= 2.0
            for i, cut in enumerate(row_cuts, start=1):
                assert abs(cut - i * h / n_rows) <= 2.0
            cells = split_cells(plate, col_cuts, row_cuts)
            widths = sorted({c.width for c in cells})
            heights = sorted({c.height for c in cells})
            assert widths[-1] - widths[0] <= 1
            assert heights[-1] - heights[0] <= 1
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"grid suite took {elapsed:.1f}s"


def test_criterion_06_segmentation():
    """K ∈ [1,30] blobs yield exactly K boxes; an external box splits a touching pair."""
    with criterion(6, "segmentation"):
        for k in range(1, 31):
            raster, true_boxes = blob_plate(k, seed=k)
            binary = binarize_otsu(raster)
            boxes = contour_boxes(find_contours(binary), min_area=4)
            assert len(boxes) == k, f"K={k}: got {len(boxes)} boxes"
        plate, top, bottom = touching_pair_plate()
        binary = binarize_otsu(plate)
        contour_dets = [Detection(b, 1.0, "contour")
                        for b in contour_boxes(find_contours(binary), min_area=4)]
        assert len(contour_dets) == 1  # contours alone merge the touching pair
        from glyphpipe.layout import Box

        external = [Detection(Box(*top), 0.9, "external"),
                    Detection(Box(*bottom), 0.8, "external")]
        merged = hybrid_merge(contour_dets, external, iou_thresh=0.45)
        assert len(merged) == 2  # recall +1 over contour-only
        assert all(d.source == "external" for d in merged)


def test_criterion_07_classifier_desk_run(tmp_path):
    """10-class 200-image run: 100% train acc within 200 epochs, macro-F1 >= 0.9 on the
    stratified 20% test split, frozen backbone bitwise unchanged, < 10 min."""
    with criterion(7, "classifier desk run"):
        start = time.perf_counter()
        labels = ["A1", "D21", "D36", "G17", "G43", "I9", "M17", "N35", "Q3", "V31"]
        ids = pattern_ids_for(labels)
        rng = np.random.default_rng(0)
        for label in labels:
            sub = tmp_path / label
            sub.mkdir()
            tile = render_glyph_tile(ids[label], 48)
            for i in range(20):
                spec = AugSpec(rotation_range=6, scale_min=0.92, scale_max=1.08,
                               brightness_delta=25, noise_sigma=6,
                               seed=int(rng.integers(2**31)))
                save_image(augment(tile, spec), sub / f"{i:03d}.pgm")
        ds = GlyphDataset.from_dir(tmp_path)
        assert len(ds) == 200
        train, valid, test = split_dataset(ds, SplitSpec(seed=0))
        assert (len(train), len(valid), len(test)) == (120, 40, 40)
        model, history = train_classifier(
            train, valid, ClassifierConfig(), epochs=200, lr=1e-3, seed=0,
            stop_at_train_acc=1.0)
        assert history[-1]["train_acc"] == 1.0
        assert len(history) <= 200
        cm, test_acc = evaluate_classifier(model, test)
        macro_f1 = f1(precision(cm, "macro"), recall(cm, "macro"))
        assert macro_f1 >= 0.9, f"macro-F1 {macro_f1:.3f}"
        # frozen-backbone mode: backbone parameters bitwise unchanged
        frozen_cfg = ClassifierConfig(freeze_backbone=True)
        fresh = GlyphClassifier(frozen_cfg, train.class_index, seed=3)
        before = {n: fresh.params[n].data.tobytes() for n in fresh.backbone_names()}
        frozen_model, _ = train_classifier(train, valid, frozen_cfg, epochs=5, lr=1e-3, seed=3)
        for name in frozen_model.backbone_names():
            assert frozen_model.params[name].data.tobytes() == before[name]
        elapsed = time.perf_counter() - start
        assert elapsed < 600.0, f"classifier run took {elapsed:.1f}s"


def test_criterion_08_translator_desk_run():
    """50-pair overfit: >= 99% teacher-forced token accuracy, training-pair BLEU >= 0.99,
    beam=1 == greedy on every pair, within 500 epochs and < 10 min."""
    with criterion(8, "translator desk run"):
        start = time.perf_counter()
        pairs = toy_parallel_corpus(50, seed=0)
        model, history = train_translator(
            pairs, TranslatorConfig(dropout=0.0), epochs=500, lr=1e-3, seed=0,
            stop_at_token_acc=1.0, patience=5)
        assert len(history) <= 500
        assert history[-1]["token_acc"] >= 0.99
        refs, hyps = [], []
        for src, tgt in pairs:
            greedy = greedy_decode(model, src, max_len=16)
            beam = beam_decode(model, src, beam=1, max_len=16)
            assert beam[0].tokens == greedy.tokens
            refs.append(tgt)
            hyps.append(greedy.tokens)
        rep = bleu_corpus(refs, hyps)
        assert rep.score >= 0.99, f"training-pair BLEU {rep.score:.4f}"
        elapsed = time.perf_counter() - start
        assert elapsed < 600.0, f"translator run took {elapsed:.1f}s"


def test_criterion_09_end_to_end_round_trip(tmp_path):
    """12-sign plate: codes, order, and transliteration recovered exactly; the overfit
    translator emits the known English; report JSON bytes identical across runs."""
    with criterion(9, "end-to-end round trip"):
        codes = ["S34", "N35", "Aa1", "F35", "I9", "D21",
                 "N5", "V31", "G17", "X1", "D36", "V30"]
        lex = bundled_lexicon()
        tokens, dropped = sequence_to_translit([parse_gardiner(c) for c in codes], lex)
        assert dropped == []
        english = ["the", "lord", "gives", "life", "to", "the", "sun"]
        corpus = toy_parallel_corpus(20, seed=2) + [(tokens, english)]
        translator, history = train_translator(
            corpus, TranslatorConfig(dropout=0.0), epochs=500, lr=1e-3, seed=0,
            stop_at_token_acc=1.0, patience=5)
        plate = render_plate(codes, n_cols=3, n_rows=4, cell=64)
        img = tmp_path / "plate.pgm"
        save_image(plate, img)
        oracle = TemplateClassifier(codes)
        cfg = PipelineConfig(n_cols=3, n_rows=4, seed=11)
        report = run_pipeline(img, cfg, classifier=oracle, translator=translator, lexicon=lex)
        assert [g.code for g in report.glyphs] == codes
        assert report.translit_tokens == tokens
        assert report.english == " ".join(english)
        again = run_pipeline(img, cfg, classifier=oracle, translator=translator, lexicon=lex)
        assert report.to_json() == again.to_json()
        assert abs(report.scores.pred_ppl - math.exp(-report.scores.mean_logprob)) < 1e-9


def test_criterion_10_equation_arithmetic():
    """TP=50, TN=40, FP=5, FN=5: accuracy 0.9, precision = recall = F1 = 10/11, exact to 1e-12."""
    with criterion(10, "equation arithmetic"):
        cm = ConfusionMatrix(np.array([[50, 5], [5, 40]]))
        assert abs(accuracy(cm) - 0.9) <= 1e-12
        p = per_class_precision(cm)[0]
        r = per_class_recall(cm)[0]
        assert abs(p - 10 / 11) <= 1e-12
        assert abs(r - 10 / 11) <= 1e-12
        assert abs(f1(p, r) - 10 / 11) <= 1e-12
