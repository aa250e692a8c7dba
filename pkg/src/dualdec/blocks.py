"""Transformer building blocks: attention variants, layers, embedding.

Three attention patterns cover the whole model: full bidirectional
self-attention (encoder and understanding stack), causal self-attention
(generation stack), and cross-attention onto encoder states (keys masked
by encoder padding only). Sub-layers use residual + post-layer-norm and a
GELU feed-forward of width ffn_mult * hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

# Finite stand-in for -inf: exp underflows to exactly 0 after the softmax
# shift, which keeps masked positions bit-exactly out of the output.
MASK_BIAS = -1e30


class ConfigurationError(ValueError):
    """Bad block/model wiring detected at construction time."""


@dataclass
class AttentionMask:
    """Additive-bias attention mask.

    kind: 'full' masks padded keys only; 'causal' additionally forbids
    attending to later positions; 'keys_only' is the cross-attention case
    (pad_mask describes the key side, queries are unrestricted).
    pad_mask: bool (B, S_k), True at real tokens.
    """

    kind: str
    pad_mask: np.ndarray

    def __post_init__(self):
        if self.kind not in ("full", "causal", "keys_only"):
            raise ConfigurationError(f"unknown mask kind {self.kind!r}")
        self.pad_mask = np.asarray(self.pad_mask, dtype=bool)
        if self.pad_mask.ndim != 2:
            raise ConfigurationError("pad_mask must be (batch, seq)")

    def bias(self, q_len: int) -> np.ndarray:
        """(B, 1, q_len, k_len) additive bias, 0 = attend, MASK_BIAS = blocked."""
        b, k_len = self.pad_mask.shape
        bias = np.where(self.pad_mask[:, None, None, :], 0.0, MASK_BIAS)
        bias = np.broadcast_to(bias, (b, 1, q_len, k_len)).copy()
        if self.kind == "causal":
            if q_len != k_len:
                raise ConfigurationError("causal mask requires q_len == k_len")
            future = np.triu(np.ones((q_len, k_len), dtype=bool), k=1)
            bias[:, :, future] = MASK_BIAS
        return bias


@dataclass
class LinearWeights:
    w: Tensor
    b: Tensor


@dataclass
class AttentionWeights:
    q: LinearWeights
    k: LinearWeights
    v: LinearWeights
    o: LinearWeights


@dataclass
class NormWeights:
    gain: Tensor
    bias: Tensor


@dataclass
class FeedForwardWeights:
    w_in: LinearWeights
    w_out: LinearWeights


@dataclass
class EncoderLayerWeights:
    attn: AttentionWeights
    norm1: NormWeights
    ffn: FeedForwardWeights
    norm2: NormWeights


@dataclass
class DecoderLayerWeights:
    self_attn: AttentionWeights
    norm1: NormWeights
    cross: AttentionWeights | None
    norm2: NormWeights
    ffn: FeedForwardWeights
    norm3: NormWeights


@dataclass
class EmbeddingWeights:
    token: Tensor      # (vocab, hidden)
    position: Tensor   # (max_positions, hidden)
    norm: NormWeights


def linear(x: Tensor, w: LinearWeights) -> Tensor:
    return T.add(T.matmul(x, w.w), w.b)


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(B, S, H) -> (B, A, S, H/A)."""
    b, s, h = x.shape
    return T.transpose(T.reshape(x, (b, s, n_heads, h // n_heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    """(B, A, S, H/A) -> (B, S, H)."""
    b, a, s, d = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, s, a * d))


def multi_head_attention(queries: Tensor, keys_values: Tensor,
                         weights: AttentionWeights, n_heads: int,
                         mask: AttentionMask) -> Tensor:
    """Scaled dot-product attention with per-head scale 1/sqrt(H/A)."""
    h = queries.shape[-1]
    if h % n_heads:
        raise ConfigurationError(f"hidden {h} not divisible by {n_heads} heads")
    q = split_heads(linear(queries, weights.q), n_heads)
    k = split_heads(linear(keys_values, weights.k), n_heads)
    v = split_heads(linear(keys_values, weights.v), n_heads)
    scale = 1.0 / np.sqrt(h // n_heads)
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale)
    scores = T.add(scores, T.constant(mask.bias(queries.shape[1])))
    probs = T.softmax(scores, axis=-1)
    ctx = merge_heads(T.matmul(probs, v))
    return linear(ctx, weights.o)


def attention_probs(queries_data: np.ndarray, keys_data: np.ndarray,
                    weights: AttentionWeights, n_heads: int,
                    mask: AttentionMask) -> np.ndarray:
    """Attention weight matrix (B, A, S_q, S_k) for inspection and tests."""
    with T.no_grad():
        q = split_heads(linear(Tensor(queries_data), weights.q), n_heads)
        k = split_heads(linear(Tensor(keys_data), weights.k), n_heads)
        h = queries_data.shape[-1]
        scale = 1.0 / np.sqrt(h // n_heads)
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale)
        scores = T.add(scores, T.constant(mask.bias(queries_data.shape[1])))
        return T.softmax(scores, axis=-1).data


def feed_forward(x: Tensor, w: FeedForwardWeights) -> Tensor:
    return linear(T.gelu(linear(x, w.w_in)), w.w_out)


def encoder_layer(x: Tensor, mask: AttentionMask, w: EncoderLayerWeights,
                  n_heads: int, eps: float = 1e-5,
                  drop: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    a = multi_head_attention(x, x, w.attn, n_heads, mask)
    a = T.dropout(a, drop, rng) if drop else a
    x = T.layer_norm(T.add(x, a), w.norm1.gain, w.norm1.bias, eps)
    f = feed_forward(x, w.ffn)
    f = T.dropout(f, drop, rng) if drop else f
    return T.layer_norm(T.add(x, f), w.norm2.gain, w.norm2.bias, eps)


def decoder_layer(x: Tensor, enc_out: Tensor, causal_mask: AttentionMask,
                  cross_mask: AttentionMask, w: DecoderLayerWeights,
                  n_heads: int, eps: float = 1e-5,
                  drop: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    if w.cross is None:
        raise ConfigurationError("decoder layer given encoder states but has no cross-attention weights")
    a = multi_head_attention(x, x, w.self_attn, n_heads, causal_mask)
    a = T.dropout(a, drop, rng) if drop else a
    x = T.layer_norm(T.add(x, a), w.norm1.gain, w.norm1.bias, eps)
    c = multi_head_attention(x, enc_out, w.cross, n_heads, cross_mask)
    c = T.dropout(c, drop, rng) if drop else c
    x = T.layer_norm(T.add(x, c), w.norm2.gain, w.norm2.bias, eps)
    f = feed_forward(x, w.ffn)
    f = T.dropout(f, drop, rng) if drop else f
    return T.layer_norm(T.add(x, f), w.norm3.gain, w.norm3.bias, eps)


def embed(token_ids: np.ndarray, position_offset: int,
          w: EmbeddingWeights, eps: float = 1e-5) -> Tensor:
    """Token + learned absolute position embedding, then layer norm."""
    ids = np.asarray(token_ids)
    vocab, _ = w.token.shape
    max_pos, _ = w.position.shape
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids.flat[np.argmax((ids < 0) | (ids >= vocab))])
        raise IndexError(f"token id {bad} outside vocabulary of size {vocab}")
    seq = ids.shape[-1]
    if position_offset < 0 or position_offset + seq > max_pos:
        raise IndexError(
            f"positions {position_offset}..{position_offset + seq - 1} exceed "
            f"max_positions {max_pos}")
    tok = T.gather_rows(w.token, ids)
    pos = T.slice_(w.position, slice(position_offset, position_offset + seq))
    return T.layer_norm(T.add(tok, pos), w.norm.gain, w.norm.bias, eps)
