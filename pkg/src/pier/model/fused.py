"""Frozen base encoder-decoder, frozen adapters, trainable fusion routing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..exceptions import InvalidInputError, TruncationError
from ..numerics import Tensor, no_grad
from ..numerics import kernels as K
from .config import ModelConfig
from .layers import INIT_STD, Adapter, DecoderLayer, EncoderLayer, FusionLayer, LayerNorm, Module, ModuleList

ROUTES = ("base", "adapter", "fusion")
_ROUTE_OF_VARIANT = {"base-only": "base", "adapter-only": "adapter", "fusion": "fusion"}
PARAM_GROUPS = ("base", "adapters", "fusion")
BOS, EOS = 1, 2


class BaseTransformer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        d = cfg.d_model
        self.add_param("tok_emb", rng.normal(0.0, INIT_STD, size=(cfg.vocab_size, d)))
        self.add_param("enc_pos", rng.normal(0.0, INIT_STD, size=(cfg.max_seq_len, d)))
        self.add_param("dec_pos", rng.normal(0.0, INIT_STD, size=(cfg.max_seq_len, d)))
        self.add_child("enc_ln", LayerNorm(d))
        self.add_child("dec_ln", LayerNorm(d))
        self.add_child("encoder", ModuleList(EncoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_layers)))
        self.add_child("decoder", ModuleList(DecoderLayer(d, cfg.n_heads, cfg.d_ff, rng) for _ in range(cfg.n_layers)))


class _Sided(Module):
    def __init__(self, encoder, decoder):
        super().__init__()
        self.add_child("encoder", ModuleList(encoder))
        self.add_child("decoder", ModuleList(decoder))


@dataclass
class EncoderOutput:
    final: Tensor
    layers: list[Tensor] = field(default_factory=list)
    fusion_weights: list[np.ndarray] = field(default_factory=list)


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to a (B, T) id matrix plus a boolean mask of real positions."""
    if not seqs:
        raise InvalidInputError("empty batch")
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def span_weights(spans: Sequence[tuple[int, int]], T: int, dtype=np.float32) -> np.ndarray:
    """(B, T) averaging weights over each row's half-open span."""
    w = np.zeros((len(spans), T), dtype=dtype)
    for i, (s, e) in enumerate(spans):
        if e <= s:
            raise InvalidInputError(f"empty span {(s, e)}")
        if s < 0 or e > T:
            raise InvalidInputError(f"span {(s, e)} outside sequence of length {T}")
        w[i, s:e] = 1.0 / (e - s)
    return w


class FusedModel(Module):
    """Encoder-decoder whose every layer output can be routed three ways.

    ``base``: the plain transformer. ``adapter``: each layer output passes
    through its adapter before the next layer. ``fusion``: each layer output
    ``b`` and its adapter output ``g`` are mixed by that layer's fusion
    attention, and the mix feeds the next layer.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        base_ss, adapter_ss, fusion_ss = np.random.SeedSequence(int(seed)).spawn(3)
        cfg = config
        self.add_child("base", BaseTransformer(cfg, np.random.default_rng(base_ss)))
        arng = np.random.default_rng(adapter_ss)
        self.add_child("adapters", _Sided(
            [Adapter(cfg.d_model, cfg.adapter_bottleneck, arng) for _ in range(cfg.n_layers)],
            [Adapter(cfg.d_model, cfg.adapter_bottleneck, arng) for _ in range(cfg.n_layers)],
        ))
        frng = np.random.default_rng(fusion_ss)
        self.add_child("fusion", _Sided(
            [FusionLayer(cfg.d_model, frng) for _ in range(cfg.n_layers)],
            [FusionLayer(cfg.d_model, frng) for _ in range(cfg.n_layers if cfg.fuse_decoder else 0)],
        ))
        self.dtype = np.float32

    # ------------------------------------------------------------ plumbing

    @property
    def default_route(self) -> str:
        return _ROUTE_OF_VARIANT[self.config.variant]

    def astype(self, dtype) -> "FusedModel":
        super().astype(dtype)
        self.dtype = dtype
        return self

    def group_parameters(self, group: str) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.named_parameters() if n.split(".", 1)[0] == group]

    def set_trainable(self, groups: Sequence[str]) -> list[Tensor]:
        params = []
        for name, t in self.named_parameters():
            t.requires_grad = name.split(".", 1)[0] in groups
            t.grad = None
            if t.requires_grad:
                params.append(t)
        return params

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.shape[-1] > self.config.max_seq_len:
            raise TruncationError(
                f"sequence length {ids.shape[-1]} exceeds max_seq_len={self.config.max_seq_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise InvalidInputError("token id outside the vocabulary")

    def _route(self, b: Tensor, side: str, layer: int, route: str, weights: list | None) -> Tensor:
        if route == "base":
            return b
        if side == "decoder" and route == "fusion" and not self.config.fuse_decoder:
            return b
        g = self.adapters._children[side][layer](b)
        if route == "adapter":
            return g
        o, a = self.fusion._children[side][layer](b, g, return_weights=True)
        if weights is not None:
            weights.append(a)
        return o

    # ------------------------------------------------------------ batched forward

    def encode(self, ids: np.ndarray, mask: np.ndarray | None = None, route: str | None = None) -> EncoderOutput:
        route = route or self.default_route
        if route not in ROUTES:
            raise InvalidInputError(f"unknown route {route!r}")
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        self._check_ids(ids)
        if mask is None:
            mask = np.ones(ids.shape, dtype=bool)
        T = ids.shape[1]
        base = self.base
        x = base.enc_ln(K.add(K.embedding(ids, base.tok_emb), _rows(base.enc_pos, T)))
        attn_mask = mask[:, None, None, :]
        out = EncoderOutput(final=x)
        for i, layer in enumerate(base.encoder):
            b = layer(x, attn_mask)
            out.layers.append(b)
            x = self._route(b, "encoder", i, route, out.fusion_weights)
        out.final = x
        return out

    def decode(self, tgt_in: np.ndarray, tgt_mask: np.ndarray, memory: Tensor, src_mask: np.ndarray,
               route: str | None = None, weights: list | None = None) -> Tensor:
        route = route or self.default_route
        tgt_in = np.atleast_2d(np.asarray(tgt_in, dtype=np.int64))
        self._check_ids(tgt_in)
        T = tgt_in.shape[1]
        base = self.base
        y = base.dec_ln(K.add(K.embedding(tgt_in, base.tok_emb), _rows(base.dec_pos, T)))
        causal = np.tril(np.ones((T, T), dtype=bool))
        self_mask = causal[None, None] & tgt_mask[:, None, None, :]
        cross_mask = src_mask[:, None, None, :]
        for i, layer in enumerate(base.decoder):
            b = layer(y, memory, self_mask, cross_mask)
            y = self._route(b, "decoder", i, route, weights)
        # output projection tied to the token embedding
        return K.linear(y, K.transpose(base.tok_emb))

    def forward(self, src: Sequence[Sequence[int]], tgt: Sequence[Sequence[int]], route: str | None = None):
        """Teacher-forced pass: returns (encoder output, logits, decoder targets, target mask)."""
        src_ids, src_mask = pad_batch(src)
        tgt_in, tgt_mask = pad_batch([[BOS] + list(t) for t in tgt])
        tgt_out, _ = pad_batch([list(t) + [EOS] for t in tgt])
        enc = self.encode(src_ids, src_mask, route)
        logits = self.decode(tgt_in, tgt_mask, enc.final, src_mask, route, enc.fusion_weights)
        return enc, logits, tgt_out, tgt_mask

    def pooled(self, enc_final: Tensor, spans: Sequence[tuple[int, int]]) -> Tensor:
        """Mean of encoder outputs over each row's span, shape (B, d_model)."""
        B, T, D = enc_final.shape
        w = Tensor(span_weights(spans, T, dtype=enc_final.dtype)[:, None, :])
        return K.reshape(K.matmul(w, enc_final), (B, D))

    # ------------------------------------------------------------ single-sequence views

    def base_forward(self, tokens: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Per-layer base encoder outputs (n_layers, T, d) and the final layer (T, d)."""
        with no_grad():
            enc = self.encode(np.asarray([tokens]), route="base")
        layers = np.stack([b.data[0] for b in enc.layers])
        return layers, enc.final.data[0]

    def adapter_forward(self, b: Tensor, layer: int, side: str = "encoder") -> Tensor:
        b = b if isinstance(b, Tensor) else Tensor(b, dtype=self.dtype)
        if b.shape[-1] != self.config.d_model:
            raise InvalidInputError(f"expected last dim {self.config.d_model}, got {b.shape}")
        return self.adapters._children[side][layer](b)

    def fused_forward(self, tokens: Sequence[int], route: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Final encoder embeddings (T, d) and copy-objective logits (T + 1, V)."""
        with no_grad():
            enc, logits, _, _ = self.forward([list(tokens)], [list(tokens)], route)
        return enc.final.data[0], logits.data[0]

    def pie_embedding(self, tokens: Sequence[int], span: tuple[int, int], route: str | None = None) -> np.ndarray:
        start, end = span
        if end <= start:
            raise InvalidInputError(f"empty span {span}")
        if start < 0 or end > len(tokens):
            raise InvalidInputError(f"span {span} outside sentence of length {len(tokens)}")
        with no_grad():
            enc = self.encode(np.asarray([tokens]), route=route)
            return self.pooled(enc.final, [span]).data[0]

    def embed_tokens(self, seqs: Sequence[Sequence[int]], route: str | None = None,
                     batch_size: int = 64) -> list[np.ndarray]:
        """Final encoder embeddings for many sequences, one (T_i, d) array each."""
        out: list[np.ndarray] = []
        with no_grad():
            for i in range(0, len(seqs), batch_size):
                chunk = seqs[i:i + batch_size]
                ids, mask = pad_batch(chunk)
                fin = self.encode(ids, mask, route).final.data
                out += [fin[j, :len(s)].copy() for j, s in enumerate(chunk)]
        return out

    def count_parameters(self, group: str | None = None) -> int:
        items = self.named_parameters() if group is None else self.group_parameters(group)
        return int(sum(t.size for _, t in items))


def _rows(table: Tensor, T: int) -> Tensor:
    return K.embedding(np.arange(T), table)
