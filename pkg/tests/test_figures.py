import numpy as np

from glyphpipe.figures import plot_bleu_modes, plot_confusion, plot_grid_profile, plot_history
from glyphpipe.imaging import BinaryRaster
from glyphpipe.metrics import ConfusionMatrix, bleu_corpus, bleu_sentence_avg


def _png(path):
    assert path.exists() and path.stat().st_size > 0
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_history_with_validation(tmp_path):
    history = [
        {"epoch": e, "train_loss": 1.0 / (e + 1), "train_acc": e / 10,
         "valid_loss": 1.2 / (e + 1), "valid_acc": e / 12}
        for e in range(10)
    ]
    out = tmp_path / "curves.png"
    plot_history(history, out)
    _png(out)


def test_plot_history_translator_keys(tmp_path):
    history = [{"epoch": e, "loss": 1.0 / (e + 1), "token_acc": e / 10} for e in range(5)]
    out = tmp_path / "curves.png"
    plot_history(history, out)
    _png(out)


def test_plot_confusion(tmp_path):
    cm = ConfusionMatrix(np.array([[5, 1], [0, 6]]))
    out = tmp_path / "cm.png"
    plot_confusion(cm, ["A1", "D21"], out)
    _png(out)


def test_plot_bleu_modes(tmp_path):
    refs = [["the", "cat", "sat", "on", "the", "mat"]]
    hyps = [["the", "cat", "sat", "on", "a", "mat"]]
    reports = {"corpus": bleu_corpus(refs, hyps), "sentence_avg": bleu_sentence_avg(refs, hyps)}
    out = tmp_path / "bleu.png"
    plot_bleu_modes(reports, out)
    _png(out)


def test_plot_grid_profile(tmp_path):
    bits = np.zeros((40, 60), dtype=bool)
    bits[5:35, 10:25] = True
    bits[5:35, 35:50] = True
    out = tmp_path / "profile.png"
    plot_grid_profile(BinaryRaster(60, 40, bits), [30], [20], out)
    _png(out)
