import math

import numpy as np
import pytest

from glyphpipe import neural as nn
from glyphpipe.translate import (
    BOS,
    EOS,
    PAD,
    UNK,
    DecodeScore,
    EmptyCorpus,
    Hypothesis,
    NoTokens,
    Translator,
    TranslatorConfig,
    Vocab,
    beam_decode,
    build_vocab,
    decode_scores,
    greedy_decode,
    load_parallel,
    train_translator,
    _batch_ids,
)
from glyphpipe.synth import toy_parallel_corpus

from oracles import enumerate_decodes


class TestVocab:
    def test_ordering_rule(self):
        v = build_vocab(["a b", "a"], min_count=1)
        assert v.token_to_id == {"<pad>": 0, "<bos>": 1, "<eos>": 2, "<unk>": 3, "a": 4, "b": 5}

    def test_min_count_threshold(self):
        v = build_vocab(["a b", "a"], min_count=2)
        assert "b" not in v.token_to_id
        assert v.encode(["b"]) == [UNK]

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocab([], min_count=1)
        with pytest.raises(EmptyCorpus):
            build_vocab(["", "  "], min_count=1)

    def test_count_desc_token_asc(self):
        v = build_vocab(["b b c a a", "c c"], min_count=1)
        assert v.id_to_token[4:] == ["c", "a", "b"]  # c:3, then a:2/b:2 alphabetical


class TestHypothesisInvariants:
    def test_length_must_match(self):
        with pytest.raises(ValueError):
            Hypothesis(tokens=["a"], logprob_sum=-1.0, length=2)

    def test_logprob_nonpositive(self):
        with pytest.raises(ValueError):
            Hypothesis(tokens=["a"], logprob_sum=0.5, length=1)


class TestDecodeScores:
    def test_certainty(self):
        score = decode_scores([Hypothesis(["a", "b"], 0.0, 2)])
        assert score.pred_avg_score == 0.0
        assert score.pred_ppl == 1.0

    def test_uniform_over_v(self):
        v = 11
        hyp = Hypothesis(["x"] * 4, 4 * math.log(1 / v), 4)
        assert decode_scores([hyp]).pred_ppl == pytest.approx(v, rel=1e-9)

    def test_paper_magnitude_convention(self):
        hyp = Hypothesis(["x"] * 10, -0.3651 * 10, 10)
        score = decode_scores([hyp])
        assert score.pred_avg_score == pytest.approx(0.3651, abs=1e-12)
        assert score.pred_ppl == pytest.approx(1.4407, abs=1e-3)

    def test_ppl_consistency_identity(self):
        rng = np.random.default_rng(0)
        hyps = [
            Hypothesis(["t"] * n, float(-rng.random() * n), n)
            for n in rng.integers(1, 9, size=20)
        ]
        score = decode_scores(hyps)
        assert score.pred_ppl == pytest.approx(math.exp(-score.mean_logprob), abs=1e-9)

    def test_no_tokens(self):
        with pytest.raises(NoTokens):
            decode_scores([Hypothesis([], -0.5, 0)])


def tiny_cfg(**kw):
    base = dict(enc_layers=1, dec_layers=1, d_model=16, heads=2, ffn=32, max_len=16, dropout=0.0)
    base.update(kw)
    return TranslatorConfig(**base)


class TestTraining:
    def test_lr_zero_constant_loss(self):
        pairs = toy_parallel_corpus(6, seed=1)
        _, history = train_translator(pairs, tiny_cfg(), epochs=4, lr=0.0, seed=0)
        losses = [h["loss"] for h in history]
        assert max(losses) - min(losses) < 1e-9

    def test_single_pair_memorization(self):
        pairs = [(["anx", "nfr"], ["the", "beautiful", "life"])]
        model, history = train_translator(pairs, tiny_cfg(), epochs=300, lr=3e-3, seed=0)
        assert history[-1]["loss"] < 0.05
        hyp = greedy_decode(model, ["anx", "nfr"], max_len=8)
        assert hyp.tokens == ["the", "beautiful", "life"]

    def test_deterministic_under_seed(self, tmp_path):
        pairs = toy_parallel_corpus(5, seed=2)
        m1, h1 = train_translator(pairs, tiny_cfg(), epochs=3, lr=1e-3, seed=9)
        m2, h2 = train_translator(pairs, tiny_cfg(), epochs=3, lr=1e-3, seed=9)
        assert h1 == h2
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        m1.save(p1)
        m2.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_pad_append_loss_invariance(self):
        pairs = toy_parallel_corpus(4, seed=3)
        model, _ = train_translator(pairs, tiny_cfg(), epochs=2, lr=1e-3, seed=0)
        src, tgt_in, tgt_out = _batch_ids(pairs, model.src_vocab, model.tgt_vocab, 16)

        def loss_of(src, tgt_in, tgt_out):
            logits = model.forward_logits(src, tgt_in, train=False)
            flat = nn.reshape(logits, (-1, len(model.tgt_vocab)))
            return nn.cross_entropy(flat, tgt_out.reshape(-1), ignore_id=PAD).item()

        base = loss_of(src, tgt_in, tgt_out)
        pad_cols = np.full((src.shape[0], 2), PAD, dtype=np.int64)
        padded = loss_of(
            np.concatenate([src, pad_cols], axis=1),
            np.concatenate([tgt_in, pad_cols], axis=1),
            np.concatenate([tgt_out, pad_cols], axis=1),
        )
        assert padded == pytest.approx(base, abs=1e-6)

    def test_causal_mask_future_invariance(self):
        pairs = toy_parallel_corpus(3, seed=4)
        model, _ = train_translator(pairs, tiny_cfg(), epochs=2, lr=1e-3, seed=0)
        src = np.asarray([model.src_vocab.encode(pairs[0][0])], dtype=np.int64)
        tgt = np.asarray([[BOS, 4, 5, 6]], dtype=np.int64)
        logits_a = model.forward_logits(src, tgt, train=False).data
        tgt_b = tgt.copy()
        tgt_b[0, 3] = 7  # perturb a future position
        logits_b = model.forward_logits(src, tgt_b, train=False).data
        assert np.array_equal(logits_a[0, :3, :], logits_b[0, :3, :])

    def test_softmax_rows_sum_to_one_model_level(self):
        pairs = toy_parallel_corpus(3, seed=5)
        model, _ = train_translator(pairs, tiny_cfg(), epochs=1, lr=1e-3, seed=0)
        lp = model.next_logits(pairs[0][0], [])
        probs = np.exp(nn.log_softmax_np(lp))
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_empty_pairs(self):
        with pytest.raises(EmptyCorpus):
            train_translator([], tiny_cfg(), epochs=1, lr=1e-3)


class TestGreedy:
    def test_uniform_logits_emit_lowest_real_token(self):
        # a fresh model has a zero-initialized output projection: uniform logits
        pairs = [(["anx"], ["life", "good"])]
        src_v = build_vocab(["anx"])
        tgt_v = build_vocab(["life good"])
        model = Translator(tiny_cfg(max_len=8), src_v, tgt_v, seed=0)
        hyp = greedy_decode(model, ["anx"], max_len=5)
        first_real = model.tgt_vocab.id_to_token[4]
        assert hyp.tokens == [first_real] * 5
        assert hyp.length == 5

    def test_max_len_one(self):
        src_v = build_vocab(["anx"])
        tgt_v = build_vocab(["life"])
        model = Translator(tiny_cfg(max_len=8), src_v, tgt_v, seed=0)
        hyp = greedy_decode(model, ["anx"], max_len=1)
        assert hyp.length == 1

    def test_logprob_sums_chosen_tokens(self):
        pairs = [(["anx"], ["life"])]
        model, _ = train_translator(pairs, tiny_cfg(), epochs=300, lr=3e-3, seed=0)
        hyp = greedy_decode(model, ["anx"], max_len=4)
        assert hyp.tokens == ["life"]
        # memorized: both the token and the terminator are near-certain
        assert hyp.logprob_sum > math.log(0.5)


class FakeModel:
    """Hand-set next-token distributions keyed by decoded prefix."""

    def __init__(self, table, vocab):
        self.table = table
        self.tgt_vocab = vocab

    def next_logits(self, src_tokens, prefix_tokens):
        words = tuple(
            self.tgt_vocab.id_to_token[t] if isinstance(t, (int, np.integer)) else t
            for t in prefix_tokens
        )
        probs = self.table[words]
        return np.log(np.asarray(probs, dtype=np.float64))


def fake_model():
    vocab = Vocab(["<pad>", "<bos>", "<eos>", "<unk>", "a", "b"])
    #            pad   bos   eos   unk   a     b
    table = {
        (): [1e-9, 1e-9, 0.10, 1e-9, 0.50, 0.40],
        ("a",): [1e-9, 1e-9, 0.20, 1e-9, 0.30, 0.50],
        ("b",): [1e-9, 1e-9, 0.60, 1e-9, 0.20, 0.20],
        ("a", "a"): [1e-9, 1e-9, 0.70, 1e-9, 0.15, 0.15],
        ("a", "b"): [1e-9, 1e-9, 0.90, 1e-9, 0.05, 0.05],
        ("b", "a"): [1e-9, 1e-9, 0.34, 1e-9, 0.33, 0.33],
        ("b", "b"): [1e-9, 1e-9, 0.40, 1e-9, 0.30, 0.30],
    }
    for p1 in ("a", "b"):
        for p2 in ("a", "b"):
            for p3 in ("a", "b"):
                table[(p1, p2, p3)] = [1e-9, 1e-9, 0.98, 1e-9, 0.01, 0.01]
    return FakeModel(table, vocab)


class TestBeam:
    def test_beam_one_equals_greedy_fake(self):
        model = fake_model()
        for max_len in (1, 2, 3):
            greedy = greedy_decode(model, [], max_len)
            beam = beam_decode(model, [], beam=1, max_len=max_len)
            assert beam[0].tokens == greedy.tokens
            assert beam[0].logprob_sum == pytest.approx(greedy.logprob_sum, abs=1e-12)

    def test_beam_one_equals_greedy_trained(self):
        pairs = toy_parallel_corpus(8, seed=6)
        model, _ = train_translator(pairs, tiny_cfg(), epochs=60, lr=2e-3, seed=0)
        for src, _ in pairs:
            greedy = greedy_decode(model, src, max_len=10)
            beam = beam_decode(model, src, beam=1, max_len=10)
            assert beam[0].tokens == greedy.tokens

    def test_matches_exhaustive_enumeration(self):
        model = fake_model()
        for alpha in (0.0, 0.7, 1.0):
            ranked = enumerate_decodes(
                model.next_logits, [], vocab_size=6, reserved={PAD, BOS, UNK},
                eos_id=EOS, max_len=3, alpha=alpha,
            )
            best_score, best_ids = ranked[0]
            hyps = beam_decode(model, [], beam=12, max_len=3, length_alpha=alpha)
            assert [model.tgt_vocab.id_to_token[i] for i in best_ids] == hyps[0].tokens
            norm = best_score / max(1, len(best_ids)) ** alpha
            got = hyps[0].logprob_sum / max(1, hyps[0].length) ** alpha
            assert got == pytest.approx(norm, abs=1e-12)

    def test_alpha_zero_ranked_by_raw_logprob(self):
        model = fake_model()
        hyps = beam_decode(model, [], beam=6, max_len=3, length_alpha=0.0)
        sums = [h.logprob_sum for h in hyps]
        assert sums == sorted(sums, reverse=True)

    def test_beam_validates(self):
        with pytest.raises(ValueError):
            beam_decode(fake_model(), [], beam=0, max_len=3)


def test_load_parallel(tmp_path):
    p = tmp_path / "corpus.tsv"
    p.write_text("anx nfr\tThe Beautiful LIFE\n# comment\nra\tsun\n")
    pairs = load_parallel(p)
    assert pairs == [(["anx", "nfr"], ["the", "beautiful", "life"]), (["ra"], ["sun"])]
    bad = tmp_path / "bad.tsv"
    bad.write_text("no tab here\n")
    with pytest.raises(EmptyCorpus):
        load_parallel(bad)
