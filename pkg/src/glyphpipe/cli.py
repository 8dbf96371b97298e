"""Command-line front end.

Subcommands: preprocess, segment, classify {train,eval,predict},
translate {train,eval,predict}, run, metrics. Exit codes: 0 success,
1 domain error, 2 usage error. All randomness funnels through --seed.

Report paths write delimited TSV and matplotlib PNG figures alongside their
JSON output when an output directory is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import GlyphPipeError


class UsageError(Exception):
    """Bad flag combination; maps to exit code 2 like argparse errors."""


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise UsageError(f"missing required flag(s): {', '.join('--' + n for n in missing)}")


def _write_history_tsv(history: list[dict], path) -> None:
    keys = list(history[0])
    lines = ["\t".join(keys)]
    for row in history:
        lines.append("\t".join(str(row[k]) for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def _cmd_preprocess(args) -> int:
    from .figures import plot_grid_profile
    from .imaging import binarize_otsu, invert, load_image, save_image, to_grayscale
    from .layout import (
        GridSpec, default_tol, estimate_columns, estimate_rows, expected_grid,
        filter_and_snap, hough_lines, split_cells,
    )

    raster = load_image(args.image)
    if args.invert:
        raster = invert(raster)
    gray = to_grayscale(raster)
    binary = binarize_otsu(gray)
    n_cols = args.cols or estimate_columns(binary)
    n_rows = args.rows or estimate_rows(binary)
    spec = GridSpec(gray.width, gray.height, n_cols, n_rows, margin=args.margin)
    exp_cols, exp_rows = expected_grid(spec)
    vert = hough_lines(binary, list(range(0, 6)) + list(range(175, 180)), max(8, gray.height // 3))
    horiz = hough_lines(binary, list(range(85, 96)), max(8, gray.width // 3))
    col_tol = args.tol if args.tol is not None else default_tol(gray.width)
    row_tol = args.tol if args.tol is not None else default_tol(gray.height)
    col_cuts = filter_and_snap(vert, exp_cols, col_tol, spec, axis="cols")
    row_cuts = filter_and_snap(horiz, exp_rows, row_tol, spec, axis="rows")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, cell in enumerate(split_cells(gray, col_cuts, row_cuts, args.reading_order)):
        save_image(cell, out / f"cell_{i:03d}.pgm")
    grid = {"n_cols": n_cols, "n_rows": n_rows, "col_cuts": col_cuts, "row_cuts": row_cuts}
    (out / "grid.json").write_text(json.dumps(grid, sort_keys=True, indent=2))
    plot_grid_profile(binary, col_cuts, row_cuts, out / "profile.png")
    print(json.dumps(grid, sort_keys=True))
    return 0


def _cmd_segment(args) -> int:
    from .imaging import binarize_otsu, invert, load_image, to_grayscale
    from .layout import (
        Detection, contour_boxes, find_contours, hybrid_merge, import_detections,
        iou, load_labelme,
    )

    raster = load_image(args.image)
    if args.invert:
        raster = invert(raster)
    gray = to_grayscale(raster)
    binary = binarize_otsu(gray)
    contours = find_contours(binary)
    boxes = contour_boxes(contours, args.min_area)
    contour_dets = [Detection(b, 1.0, "contour") for b in boxes]
    externals = (
        import_detections(args.detections, (gray.width, gray.height)) if args.detections else []
    )
    merged = hybrid_merge(contour_dets, externals, args.iou_thresh, args.reading_order)
    payload = {
        "detections": [
            {"box": [d.box.x0, d.box.y0, d.box.x1, d.box.y1], "score": d.score, "source": d.source}
            for d in merged
        ]
    }
    if args.truth:
        ann = load_labelme(args.truth)
        matched = 0
        for _, truth_box in ann.items:
            if any(iou(truth_box, d.box) >= args.iou_thresh for d in merged):
                matched += 1
        payload["truth"] = {
            "annotations": len(ann.items),
            "matched": matched,
            "recall": matched / len(ann.items) if ann.items else 0.0,
        }
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _load_dataset(root):
    """Directory-per-code layout, or a labels.tsv manifest when one is present."""
    from .classify import GlyphDataset

    manifest = Path(root) / "labels.tsv"
    if manifest.exists():
        return GlyphDataset.from_labels_tsv(manifest)
    return GlyphDataset.from_dir(root)


def _cmd_classify(args) -> int:
    from .classify import (
        ClassifierConfig, GlyphClassifier, SplitSpec,
        evaluate_classifier, split_dataset, train_classifier,
    )
    from .imaging import load_image
    from .metrics import classification_report

    if args.action == "train":
        _require(args, "data", "out")
        ds = _load_dataset(args.data)
        train, valid, _ = split_dataset(ds, SplitSpec(seed=args.seed))
        cfg = ClassifierConfig(dropout=args.dropout, freeze_backbone=args.freeze_backbone)
        model, history = train_classifier(
            train, valid, cfg, epochs=args.epochs, lr=args.lr, seed=args.seed,
            augment_factor=args.augment,
        )
        model.save(args.out)
        print(json.dumps({"epochs": len(history), **history[-1]}, sort_keys=True))
        if args.report_dir:
            from .figures import plot_history

            rep = Path(args.report_dir)
            rep.mkdir(parents=True, exist_ok=True)
            _write_history_tsv(history, rep / "history.tsv")
            plot_history(history, rep / "curves.png")
        return 0

    if args.action == "eval":
        _require(args, "ckpt", "data")
        model = GlyphClassifier.load(args.ckpt)
        ds = _load_dataset(args.data)
        if set(ds.class_index) != set(model.class_index):
            raise GlyphPipeError("dataset classes do not match the checkpoint")
        ds.class_index = dict(model.class_index)
        _, _, test = split_dataset(ds, SplitSpec(seed=args.seed))
        cm, acc = evaluate_classifier(model, test)
        report = classification_report(cm)
        payload = dict(report.to_dict(), confusion=cm.counts.tolist(),
                       labels=sorted(model.class_index))
        print(json.dumps(payload, sort_keys=True, indent=2))
        if args.report_dir:
            from .figures import plot_confusion

            rep = Path(args.report_dir)
            rep.mkdir(parents=True, exist_ok=True)
            (rep / "metrics.json").write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2))
            plot_confusion(cm, sorted(model.class_index), rep / "confusion.png")
        return 0

    _require(args, "ckpt", "image")
    model = GlyphClassifier.load(args.ckpt)
    raster = load_image(args.image)
    topk = model.predict_topk(raster, args.topk)
    print(json.dumps([[label, round(p, 6)] for label, p in topk]))
    return 0


def _cmd_translate(args) -> int:
    from .metrics import bleu_corpus, bleu_sentence_avg, bleu_tokenize
    from .translate import (
        Translator, TranslatorConfig, beam_decode, decode_scores, greedy_decode,
        load_parallel, train_translator,
    )

    if args.action == "train":
        _require(args, "corpus", "out")
        pairs = load_parallel(args.corpus)
        cfg = TranslatorConfig(max_len=args.max_len, dropout=args.dropout)
        model, history = train_translator(
            pairs, cfg, epochs=args.epochs, lr=args.lr, seed=args.seed,
            batch_size=args.batch_size,
        )
        model.save(args.out)
        print(json.dumps({"epochs": len(history), **history[-1]}, sort_keys=True))
        if args.report_dir:
            from .figures import plot_history

            rep = Path(args.report_dir)
            rep.mkdir(parents=True, exist_ok=True)
            _write_history_tsv(history, rep / "history.tsv")
            plot_history(history, rep / "curves.png")
        return 0

    if args.action == "eval":
        _require(args, "ckpt", "corpus")
        model = Translator.load(args.ckpt)
        pairs = load_parallel(args.corpus)
        hyps = []
        for src, _ in pairs:
            if args.beam > 1:
                hyps.append(beam_decode(model, src, args.beam, args.max_len)[0])
            else:
                hyps.append(greedy_decode(model, src, args.max_len))
        refs = [tgt for _, tgt in pairs]
        outs = [h.tokens for h in hyps]
        reports = {
            "corpus": bleu_corpus(refs, outs),
            "sentence_avg": bleu_sentence_avg(refs, outs),
            "corpus_tokenized": bleu_corpus(
                [bleu_tokenize(" ".join(r)) for r in refs],
                [bleu_tokenize(" ".join(o)) for o in outs],
            ),
        }
        score = decode_scores(hyps)
        payload = {
            "bleu": {name: rep.to_dict() for name, rep in reports.items()},
            "decode": score.to_dict(),
            "sentences": [
                {
                    "source": " ".join(s),
                    "reference": " ".join(r),
                    "hypothesis": " ".join(h.tokens),
                    "logprob_sum": h.logprob_sum,
                    "length": h.length,
                }
                for (s, r), h in zip(pairs, hyps)
            ],
        }
        print(json.dumps(payload, sort_keys=True, indent=2))
        if args.report_dir:
            from .figures import plot_bleu_modes

            rep = Path(args.report_dir)
            rep.mkdir(parents=True, exist_ok=True)
            (rep / "translation_eval.json").write_text(json.dumps(payload, sort_keys=True, indent=2))
            rows = ["source\treference\thypothesis"] + [
                f"{' '.join(s)}\t{' '.join(r)}\t{' '.join(h.tokens)}"
                for (s, r), h in zip(pairs, hyps)
            ]
            (rep / "translations.tsv").write_text("\n".join(rows) + "\n")
            plot_bleu_modes(reports, rep / "bleu_modes.png")
        return 0

    _require(args, "ckpt", "input")
    model = Translator.load(args.ckpt)
    src = args.input.split()
    if args.beam > 1:
        hyps = beam_decode(model, src, args.beam, args.max_len)
    else:
        hyps = [greedy_decode(model, src, args.max_len)]
    payload = [
        {"tokens": h.tokens, "logprob_sum": h.logprob_sum, "length": h.length} for h in hyps
    ]
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _cmd_run(args) -> int:
    from .imaging import load_image
    from .pipeline import PipelineConfig, emit_overlay, run_pipeline

    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.invert:
        cfg.invert = True
    report = run_pipeline(args.image, cfg, dump_dir=args.dump_dir)
    print(report.to_json(include_timings=args.timings))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        rows = ["index\tcell\tx0\ty0\tx1\ty1\tcode"]
        for g in report.glyphs:
            rows.append(
                f"{g.index}\t{g.cell}\t{g.box.x0}\t{g.box.y0}\t{g.box.x1}\t{g.box.y1}\t{g.code}"
            )
        (out / "glyphs.tsv").write_text("\n".join(rows) + "\n")
        emit_overlay(load_image(args.image), report, out / "overlay.ppm")
    return 0


def _cmd_metrics(args) -> int:
    from .metrics import (
        ConfusionMatrix, MetricsReport, bleu_corpus, bleu_sentence_avg, bleu_tokenize,
        classification_report,
    )

    report = MetricsReport()
    bleu_reports = {}
    if args.refs and args.hyps:
        refs_text = Path(args.refs).read_text(encoding="utf-8").splitlines()
        hyps_text = Path(args.hyps).read_text(encoding="utf-8").splitlines()
        if args.tokenize:
            refs = [bleu_tokenize(line) for line in refs_text]
            hyps = [bleu_tokenize(line) for line in hyps_text]
        else:
            refs = [line.split() for line in refs_text]
            hyps = [line.split() for line in hyps_text]
        bleu_reports = {
            "corpus": bleu_corpus(refs, hyps),
            "sentence_avg": bleu_sentence_avg(refs, hyps),
        }
        report.bleu = bleu_reports[args.bleu_mode]
    if args.pairs:
        rows = [
            line.split("\t")
            for line in Path(args.pairs).read_text(encoding="utf-8").splitlines()
            if line
        ]
        labels = sorted({r[0] for r in rows} | {r[1] for r in rows})
        index = {label: i for i, label in enumerate(labels)}
        cm = ConfusionMatrix.from_pairs(
            [index[r[0]] for r in rows], [index[r[1]] for r in rows], len(labels)
        )
        cls = classification_report(cm)
        for name in ("accuracy", "precision_macro", "precision_micro",
                     "recall_macro", "recall_micro", "f1_macro", "degenerate_classes"):
            setattr(report, name, getattr(cls, name))
    if not (args.pairs or (args.refs and args.hyps)):
        raise GlyphPipeError("metrics needs --pairs or both --refs and --hyps")
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    if args.report_dir and bleu_reports:
        from .figures import plot_bleu_modes

        rep = Path(args.report_dir)
        rep.mkdir(parents=True, exist_ok=True)
        plot_bleu_modes(bleu_reports, rep / "bleu_modes.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glyphpipe",
                                     description="Hieroglyph plates to English, stage by stage.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="grid-split a plate into cell images")
    p.add_argument("--image", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cols", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--tol", type=int)
    p.add_argument("--margin", type=float, default=0.03)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--reading-order", choices=("rtl", "ltr"), default="rtl")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("segment", help="detect glyph boxes on a plate or cell")
    p.add_argument("--image", required=True)
    p.add_argument("--detections", help="external detector JSON to merge")
    p.add_argument("--truth", help="LabelMe ground-truth JSON to score recall against")
    p.add_argument("--min-area", type=int, default=16)
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--reading-order", choices=("rtl", "ltr"), default="rtl")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("classify", help="train/eval/predict the glyph classifier")
    p.add_argument("action", choices=("train", "eval", "predict"))
    p.add_argument("--data", help="dataset root (one directory per code)")
    p.add_argument("--out", help="checkpoint output path (train)")
    p.add_argument("--ckpt", help="checkpoint path (eval/predict)")
    p.add_argument("--image", help="glyph image (predict)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--augment", type=int, default=0, help="extra augmented copies per image")
    p.add_argument("--freeze-backbone", action="store_true")
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--report-dir", help="write history.tsv and figures here")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("translate", help="train/eval/predict the translator")
    p.add_argument("action", choices=("train", "eval", "predict"))
    p.add_argument("--corpus", help="TSV parallel corpus (train/eval)")
    p.add_argument("--out", help="checkpoint output path (train)")
    p.add_argument("--ckpt", help="checkpoint path (eval/predict)")
    p.add_argument("--input", help="source transliteration tokens (predict)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=0, help="0 means full batch")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--report-dir", help="write eval TSV/JSON and figures here")
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("run", help="full pipeline: plate image to translation report")
    p.add_argument("--image", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--out-dir", help="write report.json, glyphs.tsv, overlay.ppm here")
    p.add_argument("--dump-dir", help="dump numbered per-stage artifacts here")
    p.add_argument("--timings", action="store_true", help="include stage timings in stdout JSON")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("metrics", help="score reference/hypothesis or label-pair files")
    p.add_argument("--refs", help="reference sentences, one per line")
    p.add_argument("--hyps", help="hypothesis sentences, one per line")
    p.add_argument("--pairs", help="TSV of true<TAB>predicted labels")
    p.add_argument("--bleu-mode", choices=("corpus", "sentence_avg"), default="corpus")
    p.add_argument("--tokenize", action="store_true",
                   help="apply the pinned case-folding/punctuation tokenizer")
    p.add_argument("--report-dir", help="write figures here")
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except GlyphPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
