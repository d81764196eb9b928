"""Pluggable token encoders: per-token contextual vectors + one sentence vector.

Two implementations share the same contract:

* ``ToyEncoder`` — a small trainable encoder (embedding lookup with hashed
  OOV buckets, symmetric context averaging, a tanh linear mix, and a linear
  sentence head).  All parameters receive gradients during training.
* ``PrecomputedEncoder`` — replays vectors stored in a binary container, the
  integration path for embeddings produced by external pretrained models.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class TokenEncoding:
    token_vectors: np.ndarray   # (n, d_tok)
    sentence_vector: np.ndarray  # (d_sent,)


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "toy"  # "toy" | "precomputed"
    d_tok: int = 64
    d_sent: int = 64
    context_window: int = 1
    dropout_rate: float = 0.1
    oov_buckets: int = 4096

    def __post_init__(self):
        if self.d_tok < 1 or self.d_sent < 1:
            raise EncoderError("d_tok and d_sent must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise EncoderError("dropout_rate must be in [0, 1)")
        if self.kind not in ("toy", "precomputed"):
            raise EncoderError(f"unknown encoder kind {self.kind!r}")

    def to_obj(self) -> dict:
        return {
            "kind": self.kind,
            "d_tok": self.d_tok,
            "d_sent": self.d_sent,
            "context_window": self.context_window,
            "dropout_rate": self.dropout_rate,
            "oov_buckets": self.oov_buckets,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "EncoderConfig":
        return cls(**obj)


def _oov_bucket(word: str, buckets: int) -> int:
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


class ToyEncoder:
    """Trainable windowed-mixing encoder.

    token vector  t_i = tanh(W_m · mean(E[i-w .. i+w]) + b_m)
    sentence vec  c   = W_s · mean_i(t_i) + b_s

    Inverted dropout is applied to token vectors and the sentence vector in
    train mode only; inference is a pure function of (parameters, tokens).
    """

    PARAM_NAMES = ("embed", "mix_w", "mix_b", "sent_w", "sent_b")

    def __init__(self, config: EncoderConfig, vocab: list[str],
                 params: dict[str, np.ndarray] | None = None,
                 rng: np.random.Generator | None = None):
        if config.kind != "toy":
            raise EncoderError("ToyEncoder requires kind='toy'")
        self.config = config
        self.vocab = list(vocab)
        self.word_ids = {w: i for i, w in enumerate(self.vocab)}
        d = config.d_tok
        if params is not None:
            self.params = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            # Wide embeddings and a near-identity mix keep token identity
            # crisp through the tanh, which the small-step optimizer needs.
            rows = len(self.vocab) + config.oov_buckets
            self.params = {
                "embed": rng.normal(0.0, 2.0, size=(rows, d)),
                "mix_w": np.eye(d) + rng.normal(0.0, 0.01, size=(d, d)),
                "mix_b": np.zeros(d),
                "sent_w": rng.normal(0.0, 1.0 / np.sqrt(d), size=(config.d_sent, d)),
                "sent_b": np.zeros(config.d_sent),
            }

    @property
    def d_tok(self) -> int:
        return self.config.d_tok

    @property
    def d_sent(self) -> int:
        return self.config.d_sent

    def token_id(self, word: str) -> int:
        idx = self.word_ids.get(word)
        if idx is None:
            idx = len(self.vocab) + _oov_bucket(word, self.config.oov_buckets)
        return idx

    def forward(self, tokens: list[str], train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[TokenEncoding, dict]:
        if not tokens:
            raise EncoderError("cannot encode an empty token list")
        p = self.config.dropout_rate if train else 0.0
        if p > 0.0 and rng is None:
            raise EncoderError("train-mode encoding needs an RNG for dropout")
        n = len(tokens)
        w = self.config.context_window
        ids = np.array([self.token_id(t) for t in tokens], dtype=np.int64)
        emb = self.params["embed"][ids]                      # (n, d)
        windows = [(max(0, i - w), min(n, i + w + 1)) for i in range(n)]
        h = np.stack([emb[lo:hi].mean(axis=0) for lo, hi in windows])
        pre = h @ self.params["mix_w"].T + self.params["mix_b"]
        t0 = np.tanh(pre)
        if p > 0.0:
            tok_mask = (rng.random(t0.shape) >= p) / (1.0 - p)
        else:
            tok_mask = np.ones_like(t0)
        t = t0 * tok_mask
        mean_t = t.mean(axis=0)
        c0 = self.params["sent_w"] @ mean_t + self.params["sent_b"]
        if p > 0.0:
            sent_mask = (rng.random(c0.shape) >= p) / (1.0 - p)
        else:
            sent_mask = np.ones_like(c0)
        c = c0 * sent_mask
        cache = {
            "ids": ids, "windows": windows, "h": h, "t0": t0,
            "tok_mask": tok_mask, "sent_mask": sent_mask, "mean_t": mean_t, "n": n,
        }
        return TokenEncoding(token_vectors=t, sentence_vector=c), cache

    def encode(self, tokens: list[str], train: bool = False,
               rng: np.random.Generator | None = None) -> TokenEncoding:
        enc, _ = self.forward(tokens, train=train, rng=rng)
        return enc

    def backward(self, cache: dict, d_tokens: np.ndarray, d_sentence: np.ndarray,
                 grads: dict[str, np.ndarray]) -> None:
        """Accumulate parameter gradients given output gradients."""
        n = cache["n"]
        dc0 = d_sentence * cache["sent_mask"]
        grads["sent_w"] += np.outer(dc0, cache["mean_t"])
        grads["sent_b"] += dc0
        d_mean_t = self.params["sent_w"].T @ dc0
        dt = d_tokens + d_mean_t[None, :] / n
        dt0 = dt * cache["tok_mask"]
        dpre = dt0 * (1.0 - cache["t0"] ** 2)
        grads["mix_w"] += dpre.T @ cache["h"]
        grads["mix_b"] += dpre.sum(axis=0)
        dh = dpre @ self.params["mix_w"]
        d_embed = grads["embed"]
        ids = cache["ids"]
        for i, (lo, hi) in enumerate(cache["windows"]):
            share = dh[i] / (hi - lo)
            np.add.at(d_embed, ids[lo:hi], share[None, :])


class PrecomputedEncoder:
    """Replays stored per-token and sentence vectors keyed by the token sequence."""

    PARAM_NAMES = ()

    def __init__(self, d_tok: int, d_sent: int,
                 table: dict[str, tuple[np.ndarray, np.ndarray]],
                 source: str = ""):
        self.config = EncoderConfig(kind="precomputed", d_tok=d_tok, d_sent=d_sent,
                                    dropout_rate=0.0)
        self.table = table
        self.source = source
        self.params: dict[str, np.ndarray] = {}

    @property
    def d_tok(self) -> int:
        return self.config.d_tok

    @property
    def d_sent(self) -> int:
        return self.config.d_sent

    def forward(self, tokens: list[str], train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[TokenEncoding, dict]:
        if not tokens:
            raise EncoderError("cannot encode an empty token list")
        key = sentence_key(tokens)
        entry = self.table.get(key)
        if entry is None:
            raise EncoderError(f"no precomputed vectors for sentence {key!r}")
        tok, sent = entry
        if tok.shape[0] != len(tokens):
            raise EncoderError(f"stored token count {tok.shape[0]} != {len(tokens)}")
        return TokenEncoding(token_vectors=tok, sentence_vector=sent), {}

    def encode(self, tokens: list[str], train: bool = False,
               rng: np.random.Generator | None = None) -> TokenEncoding:
        enc, _ = self.forward(tokens, train=train, rng=rng)
        return enc

    def backward(self, cache: dict, d_tokens: np.ndarray, d_sentence: np.ndarray,
                 grads: dict[str, np.ndarray]) -> None:
        pass  # nothing trainable


def sentence_key(tokens: list[str]) -> str:
    return " ".join(tokens)


# ---------------------------------------------------------------------------
# Precomputed-embedding container: [u32 header length][JSON header][f32 blobs]

_MAGIC = b"LMEM"


def save_precomputed(path: str | Path,
                     entries: list[tuple[list[str], np.ndarray, np.ndarray]]) -> None:
    """Write sentence embeddings; entries are (tokens, token_vectors, sentence_vector)."""
    if not entries:
        raise EncoderError("refusing to write an empty embedding file")
    d_tok = entries[0][1].shape[1]
    d_sent = entries[0][2].shape[0]
    keys, counts, blobs = [], [], []
    for tokens, tok_vecs, sent_vec in entries:
        if tok_vecs.ndim != 2 or tok_vecs.shape[1] != d_tok or sent_vec.shape != (d_sent,):
            raise EncoderError("inconsistent embedding dimensions across sentences")
        if tok_vecs.shape[0] != len(tokens):
            raise EncoderError("token vector count does not match token count")
        keys.append(sentence_key(tokens))
        counts.append(tok_vecs.shape[0])
        blobs.append(np.ascontiguousarray(tok_vecs, dtype="<f4").tobytes())
        blobs.append(np.ascontiguousarray(sent_vec, dtype="<f4").tobytes())
    header = json.dumps({
        "d_tok": d_tok, "d_sent": d_sent, "count": len(keys),
        "keys": keys, "token_counts": counts,
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_precomputed(path: str | Path) -> PrecomputedEncoder:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC or len(raw) < 8:
        raise EncoderError(f"{path}: not a precomputed-embedding file")
    (header_len,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
        d_tok, d_sent = int(header["d_tok"]), int(header["d_sent"])
        keys, counts = header["keys"], header["token_counts"]
    except (json.JSONDecodeError, KeyError, UnicodeDecodeError, ValueError) as exc:
        raise EncoderError(f"{path}: corrupt header: {exc}") from exc
    if d_tok < 1 or d_sent < 1 or len(keys) != len(counts):
        raise EncoderError(f"{path}: invalid header fields")
    body = raw[8 + header_len:]
    expected = sum(4 * (n * d_tok + d_sent) for n in counts)
    if len(body) != expected:
        raise EncoderError(
            f"{path}: blob size {len(body)} does not match header "
            f"(expected {expected}); inconsistent dimensions?")
    table: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    off = 0
    for key, n in zip(keys, counts):
        tok = np.frombuffer(body, dtype="<f4", count=n * d_tok, offset=off)
        off += 4 * n * d_tok
        sent = np.frombuffer(body, dtype="<f4", count=d_sent, offset=off)
        off += 4 * d_sent
        tok_arr = tok.reshape(n, d_tok).astype(np.float64)
        sent_arr = sent.astype(np.float64)
        if not (np.all(np.isfinite(tok_arr)) and np.all(np.isfinite(sent_arr))):
            raise EncoderError(f"{path}: non-finite vector for sentence {key!r}")
        table[key] = (tok_arr, sent_arr)
    return PrecomputedEncoder(d_tok=d_tok, d_sent=d_sent, table=table, source=str(path))
