"""Transformer encoder-decoder (and decoder-only variant) over layout tokens.

Pre-norm blocks with learned absolute positional embeddings and a shared
token-embedding table. The encoder reads the constraint sequence
bidirectionally; the decoder attends causally to the layout prefix plus
cross-attends to the encoder. The decoder-only variant runs one causal
stream over ``input , target`` and reads logits at the target positions.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

ENCODER_DECODER = "encdec"
DECODER_ONLY = "dec"


class CapacityError(ValueError):
    """A sequence exceeds the model's configured length limits."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs. Defaults are the desk-scale configuration; the
    configuration reported for the full-scale experiments is ``paper_scale``."""

    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    max_input_len: int = 256
    max_output_len: int = 128
    architecture: str = ENCODER_DECODER
    output_order: str = "alphabetic"
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.architecture not in (ENCODER_DECODER, DECODER_ONLY):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.output_order not in ("alphabetic", "position"):
            raise ValueError(f"unknown output order {self.output_order!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def paper_scale(cls, **overrides) -> "ModelConfig":
        base = cls(layers=8, heads=8, d_model=512, d_ff=2048)
        return replace(base, **overrides) if overrides else base

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "heads": self.heads,
            "d_model": self.d_model,
            "d_ff": self.d_ff,
            "max_input_len": self.max_input_len,
            "max_output_len": self.max_output_len,
            "architecture": self.architecture,
            "output_order": self.output_order,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


def parameter_count(config: ModelConfig, vocab_size: int) -> int:
    """Closed-form parameter count; tests assert the model matches it."""
    d, ff, v = config.d_model, config.d_ff, vocab_size
    attn = 4 * (d * d + d)
    ffn = d * ff + ff + ff * d + d
    ln = 2 * d
    out = d * v + v
    total = v * d + out
    if config.architecture == ENCODER_DECODER:
        total += config.max_input_len * d + config.max_output_len * d
        total += config.layers * (attn + ffn + 2 * ln)  # encoder stack
        total += config.layers * (2 * attn + ffn + 3 * ln)  # decoder stack
        total += 2 * ln  # final norms
    else:
        total += (config.max_input_len + config.max_output_len) * d
        total += config.layers * (attn + ffn + 2 * ln)
        total += ln
    return total


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    lead = x.shape[:-1]
    flat = T.reshape(x, (-1, x.shape[-1]))
    y = T.add(T.matmul(flat, w), b)
    return T.reshape(y, (*lead, w.shape[-1]))


class TransformerModel:
    """Owns the parameter dict and the forward pass for either architecture."""

    def __init__(self, config: ModelConfig, vocab_size: int, pad_id: int = 0, seed: int = 0):
        self.config = config
        self.vocab_size = vocab_size
        self.pad_id = pad_id
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}

        def param(name: str, shape: tuple[int, ...], kind: str = "normal") -> None:
            if kind == "normal":
                data = rng.normal(0.0, 0.02, size=shape)
            elif kind == "zeros":
                data = np.zeros(shape)
            else:  # ones
                data = np.ones(shape)
            self.params[name] = Tensor(data, requires_grad=True)

        d, ff = config.d_model, config.d_ff
        param("tok_emb", (vocab_size, d))
        if config.architecture == ENCODER_DECODER:
            param("pos_enc", (config.max_input_len, d))
            param("pos_dec", (config.max_output_len, d))
            for i in range(config.layers):
                self._make_block(param, f"enc.{i}", cross=False)
            param("enc.ln.g", (d,), "ones")
            param("enc.ln.b", (d,), "zeros")
            for i in range(config.layers):
                self._make_block(param, f"dec.{i}", cross=True)
            param("dec.ln.g", (d,), "ones")
            param("dec.ln.b", (d,), "zeros")
        else:
            param("pos", (config.max_input_len + config.max_output_len, d))
            for i in range(config.layers):
                self._make_block(param, f"dec.{i}", cross=False)
            param("dec.ln.g", (d,), "ones")
            param("dec.ln.b", (d,), "zeros")
        param("out.w", (d, vocab_size))
        param("out.b", (vocab_size,), "zeros")

    def _make_block(self, param, prefix: str, cross: bool) -> None:
        d, ff = self.config.d_model, self.config.d_ff
        names = ["ln1", "self", "ln2"] + (["cross", "ln3"] if cross else []) + ["ff"]
        for name in names:
            if name.startswith("ln"):
                param(f"{prefix}.{name}.g", (d,), "ones")
                param(f"{prefix}.{name}.b", (d,), "zeros")
            elif name == "ff":
                param(f"{prefix}.ff.w1", (d, ff))
                param(f"{prefix}.ff.b1", (ff,), "zeros")
                param(f"{prefix}.ff.w2", (ff, d))
                param(f"{prefix}.ff.b2", (d,), "zeros")
            else:
                for proj in ("q", "k", "v", "o"):
                    param(f"{prefix}.{name}.w{proj}", (d, d))
                    param(f"{prefix}.{name}.b{proj}", (d,), "zeros")

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, value in arrays.items():
            if self.params[name].data.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}")
            self.params[name].data = value.astype(np.float64).copy()

    # --- forward ---------------------------------------------------------
    def _attend(
        self,
        prefix: str,
        x: Tensor,
        kv: Tensor,
        additive_mask: np.ndarray | None,
    ) -> Tensor:
        p = self.params
        heads = self.config.heads
        d = self.config.d_model
        dk = d // heads
        b, tq = x.shape[0], x.shape[1]
        tk = kv.shape[1]

        def split(t: Tensor, length: int) -> Tensor:
            t = T.reshape(t, (b, length, heads, dk))
            return T.transpose(t, (0, 2, 1, 3))

        q = split(_linear(x, p[f"{prefix}.wq"], p[f"{prefix}.bq"]), tq)
        k = split(_linear(kv, p[f"{prefix}.wk"], p[f"{prefix}.bk"]), tk)
        v = split(_linear(kv, p[f"{prefix}.wv"], p[f"{prefix}.bv"]), tk)
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dk))
        if additive_mask is not None:
            scores = T.mask_add(scores, additive_mask)
        weights = T.softmax(scores)
        mixed = T.matmul(weights, v)
        merged = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (b, tq, d))
        return _linear(merged, p[f"{prefix}.wo"], p[f"{prefix}.bo"])

    def _ff(self, prefix: str, x: Tensor) -> Tensor:
        p = self.params
        hidden = T.gelu(_linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
        return _linear(hidden, p[f"{prefix}.w2"], p[f"{prefix}.b2"])

    def _ln(self, prefix: str, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _drop(self, x: Tensor, training: bool, rng: np.random.Generator | None) -> Tensor:
        if training and self.config.dropout > 0:
            if rng is None:
                raise ValueError("training forward pass needs an rng for dropout")
            return T.dropout(x, self.config.dropout, rng)
        return x

    def _embed(self, ids: np.ndarray, pos_table: str, pos_offset: int = 0) -> Tensor:
        tok = T.embedding_lookup(self.params["tok_emb"], ids)
        positions = np.arange(pos_offset, pos_offset + ids.shape[1])
        pos = T.embedding_lookup(self.params[pos_table], positions)
        return T.add(tok, pos)

    @staticmethod
    def _key_pad_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
        # (B, 1, 1, Tk) additive mask hiding PAD keys from every query.
        return np.where(ids == pad_id, T.MASK_VALUE, 0.0)[:, None, None, :]

    def forward(
        self,
        input_ids: np.ndarray,
        decoder_ids: np.ndarray,
        *,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Logits of shape (batch, target length, vocab).

        ``input_ids`` and ``decoder_ids`` are right-padded int arrays;
        position i of the result scores the token following decoder_ids[:, i].
        """
        input_ids = np.atleast_2d(np.asarray(input_ids))
        decoder_ids = np.atleast_2d(np.asarray(decoder_ids))
        if input_ids.shape[0] != decoder_ids.shape[0]:
            raise ValueError("input and decoder batches differ")
        cfg = self.config
        if cfg.architecture == ENCODER_DECODER:
            if input_ids.shape[1] > cfg.max_input_len:
                raise CapacityError(
                    f"input length {input_ids.shape[1]} exceeds {cfg.max_input_len}"
                )
            if decoder_ids.shape[1] > cfg.max_output_len:
                raise CapacityError(
                    f"target length {decoder_ids.shape[1]} exceeds {cfg.max_output_len}"
                )
            return self._forward_encdec(input_ids, decoder_ids, training, rng)
        if input_ids.shape[1] > cfg.max_input_len or decoder_ids.shape[1] > cfg.max_output_len:
            raise CapacityError("sequence exceeds configured length limits")
        return self._forward_dec_only(input_ids, decoder_ids, training, rng)

    def _forward_encdec(self, input_ids, decoder_ids, training, rng) -> Tensor:
        pad_mask = self._key_pad_mask(input_ids, self.pad_id)
        x = self._drop(self._embed(input_ids, "pos_enc"), training, rng)
        for i in range(self.config.layers):
            normed = self._ln(f"enc.{i}.ln1", x)
            x = T.add(x, self._drop(self._attend(f"enc.{i}.self", normed, normed, pad_mask), training, rng))
            x = T.add(x, self._drop(self._ff(f"enc.{i}.ff", self._ln(f"enc.{i}.ln2", x)), training, rng))
        memory = self._ln("enc.ln", x)

        causal = T.causal_mask(decoder_ids.shape[1])
        y = self._drop(self._embed(decoder_ids, "pos_dec"), training, rng)
        for i in range(self.config.layers):
            normed = self._ln(f"dec.{i}.ln1", y)
            y = T.add(y, self._drop(self._attend(f"dec.{i}.self", normed, normed, causal), training, rng))
            y = T.add(
                y,
                self._drop(
                    self._attend(f"dec.{i}.cross", self._ln(f"dec.{i}.ln2", y), memory, pad_mask),
                    training,
                    rng,
                ),
            )
            y = T.add(y, self._drop(self._ff(f"dec.{i}.ff", self._ln(f"dec.{i}.ln3", y)), training, rng))
        y = self._ln("dec.ln", y)
        return _linear(y, self.params["out.w"], self.params["out.b"])

    def _forward_dec_only(self, input_ids, decoder_ids, training, rng) -> Tensor:
        # Left-pad the inputs so every row's target region starts at the same
        # index; positions are anchored to the first real token so padding is
        # inert under learned absolute embeddings.
        b, t_in = input_ids.shape
        t_out = decoder_ids.shape[1]
        seq = np.full((b, t_in + t_out), self.pad_id, dtype=np.int64)
        positions = np.zeros((b, t_in + t_out), dtype=np.int64)
        for row in range(b):
            real = input_ids[row][input_ids[row] != self.pad_id]
            if real.size:
                seq[row, t_in - real.size : t_in] = real
            offsets = np.arange(t_in + t_out) - (t_in - real.size)
            positions[row] = np.maximum(offsets, 0)
        seq[:, t_in:] = decoder_ids
        mask = self._key_pad_mask(seq, self.pad_id) + T.causal_mask(seq.shape[1])
        tok = T.embedding_lookup(self.params["tok_emb"], seq)
        pos = T.embedding_lookup(self.params["pos"], positions)
        x = self._drop(T.add(tok, pos), training, rng)
        for i in range(self.config.layers):
            normed = self._ln(f"dec.{i}.ln1", x)
            x = T.add(x, self._drop(self._attend(f"dec.{i}.self", normed, normed, mask), training, rng))
            x = T.add(x, self._drop(self._ff(f"dec.{i}.ff", self._ln(f"dec.{i}.ln2", x)), training, rng))
        x = self._ln("dec.ln", x)
        # Position t_in + i holds decoder token i and predicts its successor.
        region = T.slice_axis1(x, t_in, t_in + t_out)
        return _linear(region, self.params["out.w"], self.params["out.b"])

    def next_logits(self, input_ids: Sequence[int], decoder_prefix: Sequence[int]) -> np.ndarray:
        """Inference helper: logits for the next token after the prefix."""
        logits = self.forward(
            np.asarray([list(input_ids)], dtype=np.int64),
            np.asarray([list(decoder_prefix)], dtype=np.int64),
            training=False,
        )
        return logits.data[0, -1]


def _np_softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _np_ln(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered**2).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * g + b


def _np_gelu(x: np.ndarray) -> np.ndarray:
    from scipy.special import erf

    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


class DecodingSession:
    """Incremental batched decoding over a frozen model (inference only).

    Keeps per-layer key/value caches so each generated token costs one
    position worth of compute instead of a full re-encode. All rows share the
    same constraint input and advance in lockstep; per-row divergence happens
    in the caller's sampling loop.
    """

    def __init__(self, model: TransformerModel, input_ids: Sequence[int], batch: int = 1):
        self.model = model
        self.batch = batch
        cfg = model.config
        self.p = {name: t.data for name, t in model.params.items()}
        heads, d = cfg.heads, cfg.d_model
        self.dk = d // heads
        self.scale = 1.0 / np.sqrt(self.dk)
        input_ids = np.asarray(list(input_ids), dtype=np.int64)
        if cfg.architecture == ENCODER_DECODER:
            if input_ids.size > cfg.max_input_len:
                raise CapacityError(f"input length {input_ids.size} exceeds {cfg.max_input_len}")
            self.capacity = cfg.max_output_len
            self._cross_kv = self._encode_memory(input_ids)
            self._prefill: np.ndarray | None = None
            self.pos_table = self.p["pos_dec"]
        else:
            self.capacity = cfg.max_input_len + cfg.max_output_len
            self._cross_kv = None
            self._prefill = input_ids
            self.pos_table = self.p["pos"]
        layers = cfg.layers
        self.k_cache = [np.zeros((batch, heads, self.capacity, self.dk)) for _ in range(layers)]
        self.v_cache = [np.zeros((batch, heads, self.capacity, self.dk)) for _ in range(layers)]
        self.t = 0
        if self._prefill is not None and self._prefill.size:
            for token in self._prefill:
                self._step(np.full(batch, token, dtype=np.int64))

    def _heads(self, x: np.ndarray, length: int) -> np.ndarray:
        heads = self.model.config.heads
        return x.reshape(length, heads, self.dk).transpose(1, 0, 2)

    def _encode_memory(self, ids: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        p = self.p
        cfg = self.model.config
        x = p["tok_emb"][ids] + p["pos_enc"][: ids.size]
        for i in range(cfg.layers):
            h = _np_ln(x, p[f"enc.{i}.ln1.g"], p[f"enc.{i}.ln1.b"])
            q = self._heads(h @ p[f"enc.{i}.self.wq"] + p[f"enc.{i}.self.bq"], ids.size)
            k = self._heads(h @ p[f"enc.{i}.self.wk"] + p[f"enc.{i}.self.bk"], ids.size)
            v = self._heads(h @ p[f"enc.{i}.self.wv"] + p[f"enc.{i}.self.bv"], ids.size)
            weights = _np_softmax(np.einsum("hqd,hkd->hqk", q, k) * self.scale)
            mixed = np.einsum("hqk,hkd->hqd", weights, v)
            merged = mixed.transpose(1, 0, 2).reshape(ids.size, cfg.d_model)
            x = x + merged @ p[f"enc.{i}.self.wo"] + p[f"enc.{i}.self.bo"]
            h = _np_ln(x, p[f"enc.{i}.ln2.g"], p[f"enc.{i}.ln2.b"])
            x = x + _np_gelu(h @ p[f"enc.{i}.ff.w1"] + p[f"enc.{i}.ff.b1"]) @ p[f"enc.{i}.ff.w2"] + p[f"enc.{i}.ff.b2"]
        memory = _np_ln(x, p["enc.ln.g"], p["enc.ln.b"])
        cross = []
        for i in range(cfg.layers):
            ck = self._heads(memory @ p[f"dec.{i}.cross.wk"] + p[f"dec.{i}.cross.bk"], ids.size)
            cv = self._heads(memory @ p[f"dec.{i}.cross.wv"] + p[f"dec.{i}.cross.bv"], ids.size)
            cross.append((ck, cv))
        return cross

    def append(self, tokens: np.ndarray | Sequence[int]) -> np.ndarray:
        """Feed one token per row; returns next-token logits, shape (batch, vocab)."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.shape != (self.batch,):
            raise ValueError(f"expected {self.batch} tokens, got shape {tokens.shape}")
        return self._step(tokens)

    def _step(self, tokens: np.ndarray) -> np.ndarray:
        if self.t >= self.capacity:
            raise CapacityError(f"decoding exceeded capacity {self.capacity}")
        p = self.p
        cfg = self.model.config
        heads = cfg.heads
        cross = cfg.architecture == ENCODER_DECODER
        x = p["tok_emb"][tokens] + self.pos_table[self.t]  # (B, d)
        for i in range(cfg.layers):
            h = _np_ln(x, p[f"dec.{i}.ln1.g"], p[f"dec.{i}.ln1.b"])
            q = (h @ p[f"dec.{i}.self.wq"] + p[f"dec.{i}.self.bq"]).reshape(self.batch, heads, self.dk)
            k = (h @ p[f"dec.{i}.self.wk"] + p[f"dec.{i}.self.bk"]).reshape(self.batch, heads, self.dk)
            v = (h @ p[f"dec.{i}.self.wv"] + p[f"dec.{i}.self.bv"]).reshape(self.batch, heads, self.dk)
            self.k_cache[i][:, :, self.t] = k
            self.v_cache[i][:, :, self.t] = v
            keys = self.k_cache[i][:, :, : self.t + 1]
            values = self.v_cache[i][:, :, : self.t + 1]
            weights = _np_softmax(np.einsum("bhd,bhtd->bht", q, keys) * self.scale)
            mixed = np.einsum("bht,bhtd->bhd", weights, values).reshape(self.batch, cfg.d_model)
            x = x + mixed @ p[f"dec.{i}.self.wo"] + p[f"dec.{i}.self.bo"]
            if cross:
                h = _np_ln(x, p[f"dec.{i}.ln2.g"], p[f"dec.{i}.ln2.b"])
                q = (h @ p[f"dec.{i}.cross.wq"] + p[f"dec.{i}.cross.bq"]).reshape(self.batch, heads, self.dk)
                ck, cv = self._cross_kv[i]
                weights = _np_softmax(np.einsum("bhd,htd->bht", q, ck) * self.scale)
                mixed = np.einsum("bht,htd->bhd", weights, cv).reshape(self.batch, cfg.d_model)
                x = x + mixed @ p[f"dec.{i}.cross.wo"] + p[f"dec.{i}.cross.bo"]
            ff_ln = "ln3" if cross else "ln2"
            h = _np_ln(x, p[f"dec.{i}.{ff_ln}.g"], p[f"dec.{i}.{ff_ln}.b"])
            x = x + _np_gelu(h @ p[f"dec.{i}.ff.w1"] + p[f"dec.{i}.ff.b1"]) @ p[f"dec.{i}.ff.w2"] + p[f"dec.{i}.ff.b2"]
        self.t += 1
        x = _np_ln(x, p["dec.ln.g"], p["dec.ln.b"])
        return x @ p["out.w"] + p["out.b"]


def coord_embedding_similarity(model: TransformerModel, coord_base: int, bins: int) -> np.ndarray:
    """Cosine similarity between every pair of coordinate-token embeddings.

    Returns a (bins, bins) symmetric matrix with an exact unit diagonal.
    """
    rows = model.params["tok_emb"].data[coord_base : coord_base + bins]
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    normed = rows / np.maximum(norms, 1e-12)
    sim = normed @ normed.T
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    return sim
