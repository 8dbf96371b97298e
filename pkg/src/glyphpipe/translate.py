"""Transliteration-to-English translation with a small pre-layer-norm
transformer encoder-decoder, greedy/beam decoding, and decode scoring.

Tokenization is whitespace words on both sides. Reserved vocabulary ids are
fixed: 0 <pad>, 1 <bos>, 2 <eos>, 3 <unk>. Decoding never emits <pad>,
<bos>, or <unk>; on exact probability ties real tokens beat <eos> and the
lowest id wins, so a model with uniform logits deterministically emits the
first real token until the length cap.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import neural as nn
from .errors import DivergedLoss, GlyphPipeError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
NEG_INF = float("-inf")


class EmptyCorpus(GlyphPipeError):
    pass


class NoTokens(GlyphPipeError):
    """decode_scores needs at least one scored token."""


@dataclass
class Vocab:
    id_to_token: list[str]

    def __post_init__(self):
        if list(self.id_to_token[:4]) != list(RESERVED):
            raise ValueError("first four ids must be the reserved tokens")
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]


def build_vocab(lines, min_count: int = 1) -> Vocab:
    """Whitespace tokens with count >= min_count, ordered (count desc, token asc)."""
    counts: dict[str, int] = {}
    for line in lines:
        for tok in line.split():
            counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        raise EmptyCorpus("no tokens in corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(list(RESERVED) + kept)


def load_parallel(path) -> list[tuple[list[str], list[str]]]:
    """TSV parallel corpus: ``source<TAB>target`` per line; target is case-folded."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            try:
                src, tgt = line.split("\t")
            except ValueError:
                raise EmptyCorpus(f"{path}:{lineno}: expected source<TAB>target") from None
            pairs.append((src.split(), tgt.lower().split()))
    if not pairs:
        raise EmptyCorpus(f"{path}: no sentence pairs")
    return pairs


@dataclass
class TranslatorConfig:
    enc_layers: int = 2
    dec_layers: int = 2
    d_model: int = 64
    heads: int = 4
    ffn: int = 128
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")


@dataclass
class Hypothesis:
    """One decoded translation: tokens, their summed log-probability, length.

    ``logprob_sum`` covers the emitted tokens plus the terminating <eos> when
    decoding stopped on one; ``length`` counts only the visible tokens.
    """

    tokens: list[str]
    logprob_sum: float
    length: int

    def __post_init__(self):
        if self.length != len(self.tokens):
            raise ValueError("length must equal the token count")
        if self.logprob_sum > 0:
            raise ValueError("log-probabilities cannot be positive")


@dataclass
class DecodeScore:
    """Corpus-level decode quantities.

    mean_logprob is the signed per-token mean; pred_avg_score is its unsigned
    magnitude (the display convention), and pred_ppl = exp(-mean_logprob).
    """

    mean_logprob: float
    pred_avg_score: float
    pred_ppl: float

    def to_dict(self) -> dict:
        return {
            "mean_logprob": self.mean_logprob,
            "pred_avg_score": self.pred_avg_score,
            "pred_ppl": self.pred_ppl,
        }


def decode_scores(hyps: list[Hypothesis]) -> DecodeScore:
    total_lp = sum(h.logprob_sum for h in hyps)
    total_len = sum(h.length for h in hyps)
    if total_len == 0:
        raise NoTokens("no tokens across hypotheses")
    mean = total_lp / total_len
    return DecodeScore(mean_logprob=mean, pred_avg_score=abs(mean), pred_ppl=float(np.exp(-mean)))


def _sinusoidal_positions(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None].astype(np.float64)
    dim = np.arange(0, d, 2).astype(np.float64)
    angle = pos / np.power(10000.0, dim / d)
    enc = np.zeros((max_len, d))
    enc[:, 0::2] = np.sin(angle)
    enc[:, 1::2] = np.cos(angle)
    return enc.astype(np.float32)


class Translator:
    """Pre-layer-norm transformer encoder-decoder over word vocabularies."""

    def __init__(self, cfg: TranslatorConfig, src_vocab: Vocab, tgt_vocab: Vocab, seed: int = 0):
        self.cfg = cfg
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.params: dict[str, nn.Tensor] = {}
        self._rng = np.random.default_rng(seed)
        self.positions = _sinusoidal_positions(cfg.max_len, cfg.d_model)
        self._build(seed)

    def _param(self, name: str, array: np.ndarray) -> nn.Tensor:
        t = nn.Tensor(array.astype(np.float32), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _build(self, seed: int):
        rng = np.random.default_rng(seed)
        d, f = self.cfg.d_model, self.cfg.ffn

        def dense(name, din, dout):
            self._param(f"{name}.w", rng.normal(0.0, np.sqrt(1.0 / din), size=(din, dout)))
            self._param(f"{name}.b", np.zeros(dout))

        def ln(name):
            self._param(f"{name}.g", np.ones(d))
            self._param(f"{name}.b", np.zeros(d))

        self._param("src_embed", rng.normal(0.0, 0.02, size=(len(self.src_vocab), d)))
        self._param("tgt_embed", rng.normal(0.0, 0.02, size=(len(self.tgt_vocab), d)))
        for side, layers in (("enc", self.cfg.enc_layers), ("dec", self.cfg.dec_layers)):
            for i in range(layers):
                base = f"{side}{i}"
                ln(f"{base}.ln1")
                for proj in ("q", "k", "v", "o"):
                    dense(f"{base}.self.{proj}", d, d)
                if side == "dec":
                    ln(f"{base}.ln2")
                    for proj in ("q", "k", "v", "o"):
                        dense(f"{base}.cross.{proj}", d, d)
                ln(f"{base}.ln_ffn")
                dense(f"{base}.ffn1", d, f)
                dense(f"{base}.ffn2", f, d)
        ln("enc.final_ln")
        ln("dec.final_ln")
        # zero-initialized projection: a fresh model scores every token equally
        self._param("out.w", np.zeros((d, len(self.tgt_vocab))))
        self._param("out.b", np.zeros(len(self.tgt_vocab)))

    # --- forward pieces ---

    def _ln(self, x, name):
        g = self.params[f"{name}.g"]
        b = self.params[f"{name}.b"]
        return nn.add(nn.mul(nn.layer_norm(x, axis=-1), g), b)

    def _dense(self, x, name):
        return nn.add(nn.matmul(x, self.params[f"{name}.w"]), self.params[f"{name}.b"])

    def _split_heads(self, x, n, t):
        h, dk = self.cfg.heads, self.cfg.d_model // self.cfg.heads
        return nn.transpose(nn.reshape(x, (n, t, h, dk)), (0, 2, 1, 3))

    def _merge_heads(self, x, n, t):
        return nn.reshape(nn.transpose(x, (0, 2, 1, 3)), (n, t, self.cfg.d_model))

    def _mha(self, q_in, kv_in, base, mask, n, tq, tk, train):
        q = self._split_heads(self._dense(q_in, f"{base}.q"), n, tq)
        k = self._split_heads(self._dense(kv_in, f"{base}.k"), n, tk)
        v = self._split_heads(self._dense(kv_in, f"{base}.v"), n, tk)
        ctx = nn.attention(q, k, v, mask)
        out = self._dense(self._merge_heads(ctx, n, tq), f"{base}.o")
        return nn.dropout(out, self.cfg.dropout, train, self._rng)

    def _ffn(self, x, base, train):
        h = nn.relu(self._dense(x, f"{base}.ffn1"))
        h = self._dense(h, f"{base}.ffn2")
        return nn.dropout(h, self.cfg.dropout, train, self._rng)

    def _embed(self, table_name, ids, t):
        scale = np.sqrt(self.cfg.d_model).astype(np.float32)
        x = nn.scale(nn.embedding(self.params[table_name], ids), float(scale))
        return nn.add(x, nn.Tensor(self.positions[:t][None, :, :]))

    def encode(self, src_ids: np.ndarray, train: bool = False) -> nn.Tensor:
        n, s = src_ids.shape
        pad_mask = np.where(src_ids == PAD, NEG_INF, 0.0)[:, None, None, :].astype(np.float32)
        x = self._embed("src_embed", src_ids, s)
        for i in range(self.cfg.enc_layers):
            base = f"enc{i}"
            y = self._ln(x, f"{base}.ln1")
            x = nn.add(x, self._mha(y, y, f"{base}.self", pad_mask, n, s, s, train))
            x = nn.add(x, self._ffn(self._ln(x, f"{base}.ln_ffn"), base, train))
        return self._ln(x, "enc.final_ln")

    def decode_logits(
        self, enc_out: nn.Tensor, src_ids: np.ndarray, tgt_in: np.ndarray, train: bool = False
    ) -> nn.Tensor:
        n, t = tgt_in.shape
        s = src_ids.shape[1]
        causal = np.triu(np.full((t, t), NEG_INF, dtype=np.float32), k=1)[None, None, :, :]
        tgt_pad = np.where(tgt_in == PAD, NEG_INF, 0.0)[:, None, None, :].astype(np.float32)
        self_mask = causal + tgt_pad
        cross_mask = np.where(src_ids == PAD, NEG_INF, 0.0)[:, None, None, :].astype(np.float32)
        x = self._embed("tgt_embed", tgt_in, t)
        for i in range(self.cfg.dec_layers):
            base = f"dec{i}"
            y = self._ln(x, f"{base}.ln1")
            x = nn.add(x, self._mha(y, y, f"{base}.self", self_mask, n, t, t, train))
            y = self._ln(x, f"{base}.ln2")
            x = nn.add(x, self._mha(y, enc_out, f"{base}.cross", cross_mask, n, t, s, train))
            x = nn.add(x, self._ffn(self._ln(x, f"{base}.ln_ffn"), base, train))
        x = self._ln(x, "dec.final_ln")
        return self._dense(x, "out")

    def forward_logits(self, src_ids: np.ndarray, tgt_in: np.ndarray, train: bool = False) -> nn.Tensor:
        return self.decode_logits(self.encode(src_ids, train), src_ids, tgt_in, train)

    def next_logits(self, src_tokens: list[str], prefix_tokens: list[str]) -> np.ndarray:
        """Logits over the target vocabulary for the next position (no grad)."""
        src = np.asarray([self.src_vocab.encode(src_tokens) or [UNK]], dtype=np.int64)
        tgt_in = np.asarray([[BOS] + self.tgt_vocab.encode(prefix_tokens)], dtype=np.int64)
        logits = self.forward_logits(src, tgt_in, train=False)
        return logits.data[0, -1, :].astype(np.float64)

    def save(self, path) -> None:
        nn.save_checkpoint(self.params, path)
        meta = {
            "kind": "translator",
            "config": dataclasses.asdict(self.cfg),
            "src_vocab": self.src_vocab.id_to_token,
            "tgt_vocab": self.tgt_vocab.id_to_token,
        }
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))

    @classmethod
    def load(cls, path) -> "Translator":
        meta = json.loads(Path(str(path) + ".meta.json").read_text())
        model = cls(
            TranslatorConfig(**meta["config"]),
            Vocab(meta["src_vocab"]),
            Vocab(meta["tgt_vocab"]),
        )
        weights = nn.load_checkpoint(path)
        for name, p in model.params.items():
            p.data = weights[name].astype(np.float32)
        return model


def _batch_ids(pairs, src_vocab: Vocab, tgt_vocab: Vocab, max_len: int):
    """Pad a list of (src_tokens, tgt_tokens) into id matrices for teacher forcing."""
    srcs = [src_vocab.encode(s)[:max_len] for s, _ in pairs]
    tgts = [tgt_vocab.encode(t)[: max_len - 1] for _, t in pairs]
    s_len = max(len(s) for s in srcs)
    t_len = max(len(t) for t in tgts) + 1
    src = np.full((len(pairs), s_len), PAD, dtype=np.int64)
    tgt_in = np.full((len(pairs), t_len), PAD, dtype=np.int64)
    tgt_out = np.full((len(pairs), t_len), PAD, dtype=np.int64)
    for i, (s, t) in enumerate(zip(srcs, tgts)):
        src[i, : len(s)] = s
        tgt_in[i, 0] = BOS
        tgt_in[i, 1 : 1 + len(t)] = t
        tgt_out[i, : len(t)] = t
        tgt_out[i, len(t)] = EOS
    return src, tgt_in, tgt_out


def train_translator(
    pairs: list[tuple[list[str], list[str]]],
    cfg: TranslatorConfig,
    epochs: int,
    lr: float,
    seed: int = 0,
    batch_size: int = 0,
    min_count: int = 1,
    stop_at_token_acc: float | None = None,
    patience: int = 3,
) -> tuple[Translator, list[dict]]:
    """Teacher-forced cross-entropy training over shifted targets.

    <pad> positions are masked out of the loss; decoder self-attention is
    causal. History records per-epoch loss and teacher-forced token accuracy.
    ``stop_at_token_acc`` ends training once the accuracy holds for
    ``patience`` consecutive epochs.
    """
    if not pairs:
        raise EmptyCorpus("no training pairs")
    src_vocab = build_vocab((" ".join(s) for s, _ in pairs), min_count)
    tgt_vocab = build_vocab((" ".join(t) for _, t in pairs), min_count)
    model = Translator(cfg, src_vocab, tgt_vocab, seed=seed)
    opt = nn.Adam(model.params, lr=lr)
    shuffle_rng = np.random.default_rng(seed + 1)
    history: list[dict] = []
    streak = 0
    batch = batch_size if batch_size > 0 else len(pairs)
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(pairs))
        total_loss = 0.0
        correct = 0
        counted = 0
        for start in range(0, len(order), batch):
            chunk = [pairs[i] for i in order[start : start + batch]]
            src, tgt_in, tgt_out = _batch_ids(chunk, src_vocab, tgt_vocab, cfg.max_len)
            nn.zero_grads(model.params)
            with nn.Tape() as tape:
                logits = model.forward_logits(src, tgt_in, train=True)
                flat = nn.reshape(logits, (-1, len(tgt_vocab)))
                loss = nn.cross_entropy(flat, tgt_out.reshape(-1), ignore_id=PAD)
            if not np.isfinite(loss.item()):
                raise DivergedLoss(f"loss {loss.item()} at epoch {epoch}")
            tape.backward(loss)
            opt.step()
            mask = tgt_out != PAD
            preds = logits.data.argmax(axis=-1)
            correct += int((preds[mask] == tgt_out[mask]).sum())
            counted += int(mask.sum())
            total_loss += loss.item() * int(mask.sum())
        record = {"epoch": epoch, "loss": total_loss / counted, "token_acc": correct / counted}
        history.append(record)
        if stop_at_token_acc is not None and record["token_acc"] >= stop_at_token_acc:
            streak += 1
            if streak >= patience:
                break
        else:
            streak = 0
    return model, history


def _select_token(logprobs: np.ndarray) -> int:
    """Best next token: reserved filler masked off; ties prefer real tokens
    over <eos>, then the lowest id."""
    masked = logprobs.copy()
    masked[[PAD, BOS, UNK]] = NEG_INF
    best = masked.max()
    tied = np.nonzero(masked == best)[0]
    real = [t for t in tied if t != EOS]
    return int(real[0]) if real else int(tied[0])


def greedy_decode(model, src_tokens: list[str], max_len: int) -> Hypothesis:
    """Argmax decoding. Stops at <eos> (scored) or after max_len tokens."""
    tokens: list[int] = []
    logprob = 0.0
    for _ in range(max_len):
        lp = nn.log_softmax_np(model.next_logits(src_tokens, _decode_tokens(model, tokens)))
        choice = _select_token(lp)
        logprob += float(lp[choice])
        if choice == EOS:
            break
        tokens.append(choice)
    words = _decode_tokens(model, tokens)
    return Hypothesis(tokens=words, logprob_sum=min(logprob, 0.0), length=len(words))


def _decode_tokens(model, ids: list[int]) -> list[str]:
    return model.tgt_vocab.decode(ids)


def beam_decode(
    model,
    src_tokens: list[str],
    beam: int,
    max_len: int,
    length_alpha: float = 0.0,
) -> list[Hypothesis]:
    """Standard beam search, ranked by logprob_sum / max(1, length)^alpha.

    Finished hypotheses keep the <eos> log-probability in their score (so
    stopping early is not free); with beam=1 the token sequence matches
    greedy_decode, sharing its tie-break rule.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")

    def tie_key(token_id: int) -> tuple:
        return (token_id == EOS, token_id)  # real tokens first, then lowest id

    live: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(max_len):
        candidates: list[tuple[float, tuple, list[int], int]] = []
        for ids, logp in live:
            lp = nn.log_softmax_np(model.next_logits(src_tokens, _decode_tokens(model, ids)))
            lp[[PAD, BOS, UNK]] = NEG_INF
            for token_id in range(len(lp)):
                if lp[token_id] == NEG_INF:
                    continue
                candidates.append((logp + float(lp[token_id]), tie_key(token_id), ids, token_id))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        live = []
        for total, _, ids, token_id in candidates[:beam]:
            if token_id == EOS:
                finished.append((total, ids))
            else:
                live.append((ids + [token_id], total))
        if not live:
            break
    finished.extend((logp, ids) for ids, logp in live)  # truncated at max_len

    def rank(item):
        logp, ids = item
        return (-(logp / max(1, len(ids)) ** length_alpha), ids)

    finished.sort(key=rank)
    out = []
    for logp, ids in finished[:beam]:
        words = _decode_tokens(model, ids)
        out.append(Hypothesis(tokens=words, logprob_sum=min(logp, 0.0), length=len(words)))
    return out
