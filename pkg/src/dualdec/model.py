"""The dual-decoder model: one deep shared encoder feeding two stacks.

The understanding path runs the shared encoder then `und_layers` further
bidirectional layers; the generation path runs the shared encoder and a
causal decoder of `gen_layers` layers with cross-attention. Both paths
activate the same total depth by construction (und_layers == gen_layers).
One token-embedding matrix is shared by the encoder input, the decoder
input, and both output heads (transpose tying).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .blocks import (AttentionMask, AttentionWeights, ConfigurationError,
                     DecoderLayerWeights, EmbeddingWeights, EncoderLayerWeights,
                     FeedForwardWeights, LinearWeights, NormWeights,
                     decoder_layer, embed, encoder_layer)
from .tensor import Tensor, parameter

# Fixed special token ids; synthetic vocabularies start after these.
PAD, UNK, CLS, SEP, MASK, BOS, EOS = range(7)
SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[BOS]", "[EOS]"]
N_SPECIALS = len(SPECIAL_TOKENS)

INIT_STD = 0.02
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int
    heads: int
    enc_layers: int
    und_layers: int
    gen_layers: int
    max_positions: int = 512
    ffn_mult: int = 4
    dropout: float = 0.0

    def validate(self) -> "ModelConfig":
        if self.vocab_size <= N_SPECIALS:
            raise ConfigurationError(
                f"vocab_size {self.vocab_size} leaves no room beyond the "
                f"{N_SPECIALS} special tokens")
        if self.hidden % self.heads:
            raise ConfigurationError(
                f"hidden {self.hidden} not divisible by heads {self.heads}")
        if min(self.enc_layers, self.und_layers, self.gen_layers) < 1:
            raise ConfigurationError("every stack needs at least one layer")
        if self.und_layers != self.gen_layers:
            raise ConfigurationError(
                "task paths must activate equal depth: "
                f"und_layers {self.und_layers} != gen_layers {self.gen_layers}")
        if self.max_positions < 2:
            raise ConfigurationError("max_positions too small")
        return self


PRESETS = {
    # Reference sizes; the full-corpus vocabulary they are counted against.
    "base": ModelConfig(vocab_size=21128, hidden=768, heads=12,
                        enc_layers=10, und_layers=2, gen_layers=2),
    "large": ModelConfig(vocab_size=21128, hidden=1024, heads=16,
                         enc_layers=20, und_layers=4, gen_layers=4),
    # Desk scale: 256 synthetic symbols + the 7 specials.
    "desk": ModelConfig(vocab_size=256 + N_SPECIALS, hidden=64, heads=4,
                        enc_layers=4, und_layers=1, gen_layers=1,
                        max_positions=128),
}


def preset(name: str, **overrides) -> ModelConfig:
    cfg = PRESETS[name]
    return replace(cfg, **overrides).validate() if overrides else cfg.validate()


def activated_depth(config: ModelConfig, task_path: str) -> int:
    """Layers actually executed for a task path."""
    if task_path == "understanding":
        return config.enc_layers + config.und_layers
    if task_path == "generation":
        return config.enc_layers + config.gen_layers
    raise ValueError(f"unknown task path {task_path!r}")


def count_params(config: ModelConfig) -> int:
    """Closed-form parameter count; tied arrays counted once."""
    config.validate()
    h, v, p, f = config.hidden, config.vocab_size, config.max_positions, config.ffn_mult
    attn = 4 * (h * h + h)
    norm = 2 * h
    ffn = (h * (f * h) + f * h) + ((f * h) * h + h)
    enc_layer = attn + norm + ffn + norm
    dec_layer = enc_layer + attn + norm
    embedding = v * h + p * h + norm
    heads_bias = 2 * v  # understanding-head and generation-head output biases
    n_enc_style = config.enc_layers + config.und_layers
    return (embedding
            + n_enc_style * enc_layer
            + config.gen_layers * dec_layer
            + heads_bias)


class ModelParams:
    """All named weight arrays, with one shared token-embedding storage."""

    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        h = config.hidden

        def mat(*shape):
            return parameter(rng.normal(0.0, INIT_STD, size=shape))

        def vec(n, fill=0.0):
            return parameter(np.full(n, fill))

        def lin(n_in, n_out):
            return LinearWeights(w=mat(n_in, n_out), b=vec(n_out))

        def attn():
            return AttentionWeights(q=lin(h, h), k=lin(h, h), v=lin(h, h), o=lin(h, h))

        def norm():
            return NormWeights(gain=vec(h, 1.0), bias=vec(h))

        def ffn():
            return FeedForwardWeights(w_in=lin(h, config.ffn_mult * h),
                                      w_out=lin(config.ffn_mult * h, h))

        self.embed = EmbeddingWeights(
            token=mat(config.vocab_size, h),
            position=mat(config.max_positions, h),
            norm=norm())
        self.enc = [EncoderLayerWeights(attn=attn(), norm1=norm(), ffn=ffn(), norm2=norm())
                    for _ in range(config.enc_layers)]
        self.und = [EncoderLayerWeights(attn=attn(), norm1=norm(), ffn=ffn(), norm2=norm())
                    for _ in range(config.und_layers)]
        self.gen = [DecoderLayerWeights(self_attn=attn(), norm1=norm(), cross=attn(),
                                        norm2=norm(), ffn=ffn(), norm3=norm())
                    for _ in range(config.gen_layers)]
        self.und_head_bias = vec(config.vocab_size)
        self.gen_head_bias = vec(config.vocab_size)

    # Tied views: both output heads and the decoder input reuse embed.token,
    # stored once under its canonical name.
    ALIASES = {
        "und_head.w": "embed.token",
        "gen_head.w": "embed.token",
        "gen_embed.token": "embed.token",
    }

    def named(self) -> dict[str, Tensor]:
        """Canonical dotted name -> Tensor, each storage exactly once."""
        out = {
            "embed.token": self.embed.token,
            "embed.position": self.embed.position,
            "embed.norm.gain": self.embed.norm.gain,
            "embed.norm.bias": self.embed.norm.bias,
        }

        def add_lin(prefix, lw):
            out[prefix + ".w"] = lw.w
            out[prefix + ".b"] = lw.b

        def add_attn(prefix, aw):
            for part in "qkvo":
                add_lin(f"{prefix}.{part}", getattr(aw, part))

        def add_norm(prefix, nw):
            out[prefix + ".gain"] = nw.gain
            out[prefix + ".bias"] = nw.bias

        def add_ffn(prefix, fw):
            add_lin(prefix + ".in", fw.w_in)
            add_lin(prefix + ".out", fw.w_out)

        for group, layers in (("enc", self.enc), ("und", self.und)):
            for i, lw in enumerate(layers):
                add_attn(f"{group}.{i}.attn", lw.attn)
                add_norm(f"{group}.{i}.norm1", lw.norm1)
                add_ffn(f"{group}.{i}.ffn", lw.ffn)
                add_norm(f"{group}.{i}.norm2", lw.norm2)
        for i, lw in enumerate(self.gen):
            add_attn(f"gen.{i}.attn", lw.self_attn)
            add_norm(f"gen.{i}.norm1", lw.norm1)
            add_attn(f"gen.{i}.cross", lw.cross)
            add_norm(f"gen.{i}.norm2", lw.norm2)
            add_ffn(f"gen.{i}.ffn", lw.ffn)
            add_norm(f"gen.{i}.norm3", lw.norm3)
        out["und_head.b"] = self.und_head_bias
        out["gen_head.b"] = self.gen_head_bias
        return out

    def n_params(self) -> int:
        return sum(t.size for t in self.named().values())


def _check_length(ids: np.ndarray, config: ModelConfig):
    if ids.shape[-1] > config.max_positions:
        raise ValueError(
            f"sequence length {ids.shape[-1]} exceeds max_positions "
            f"{config.max_positions}")


def encode(token_ids: np.ndarray, pad_mask: np.ndarray, params: ModelParams) -> Tensor:
    """Shared-encoder states: embed then enc_layers of full self-attention."""
    cfg = params.config
    ids = np.atleast_2d(np.asarray(token_ids))
    _check_length(ids, cfg)
    mask = AttentionMask("full", np.atleast_2d(pad_mask))
    x = embed(ids, 0, params.embed, LN_EPS)
    for lw in params.enc:
        x = encoder_layer(x, mask, lw, cfg.heads, LN_EPS)
    return x


def understand(enc_states: Tensor, pad_mask: np.ndarray, params: ModelParams) -> Tensor:
    """Understanding stack: further bidirectional layers over encoder output."""
    cfg = params.config
    mask = AttentionMask("full", np.atleast_2d(pad_mask))
    x = enc_states
    for lw in params.und:
        x = encoder_layer(x, mask, lw, cfg.heads, LN_EPS)
    return x


def generate_forward(dec_token_ids: np.ndarray, enc_states: Tensor,
                     enc_pad_mask: np.ndarray, params: ModelParams,
                     dec_pad_mask: np.ndarray | None = None) -> Tensor:
    """Generation stack: causal self-attention + cross-attention states."""
    cfg = params.config
    ids = np.atleast_2d(np.asarray(dec_token_ids))
    _check_length(ids, cfg)
    if dec_pad_mask is None:
        dec_pad_mask = np.ones(ids.shape, dtype=bool)
    causal = AttentionMask("causal", np.atleast_2d(dec_pad_mask))
    cross = AttentionMask("keys_only", np.atleast_2d(enc_pad_mask))
    x = embed(ids, 0, params.embed, LN_EPS)
    for lw in params.gen:
        x = decoder_layer(x, enc_states, causal, cross, lw, cfg.heads, LN_EPS)
    return x


def und_logits(states: Tensor, params: ModelParams) -> Tensor:
    """Token logits for the understanding head (tied embedding transpose)."""
    flat = T.reshape(states, (-1, params.config.hidden))
    w = T.transpose(params.embed.token, (1, 0))
    return T.add(T.matmul(flat, w), params.und_head_bias)


def gen_logits(states: Tensor, params: ModelParams) -> Tensor:
    """Next-token logits for the generation head (tied embedding transpose)."""
    flat = T.reshape(states, (-1, params.config.hidden))
    w = T.transpose(params.embed.token, (1, 0))
    return T.add(T.matmul(flat, w), params.gen_head_bias)


def ignore_id(config: ModelConfig) -> int:
    """Loss-target sentinel: first id past the vocabulary."""
    return config.vocab_size
