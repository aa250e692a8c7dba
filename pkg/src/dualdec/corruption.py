"""The two pre-training corruptions: whole-word masking and denoising.

Masked-token instances select whole words i.i.d. and corrupt every token
of a selected word with the mask/random/keep mixture; denoising instances
permute sentences and collapse selected words to a single [MASK], with
the uncorrupted token sequence as reconstruction target.

All randomness flows through per-document streams derived from
(global seed, doc_id), so corruption is reproducible and independent of
document processing order.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import Document, Vocab, encode_document
from .model import BOS, CLS, EOS, MASK, N_SPECIALS, PAD, SEP

log = logging.getLogger(__name__)


@dataclass
class CorruptionConfig:
    word_mask_rate: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1
    dae_infill_rate: float = 0.15
    permute_sentences: bool = True
    seed: int = 0
    # The mask/random/keep draw is per character token within a selected
    # word; flip to draw once per word instead.
    per_word_draw: bool = False

    def __post_init__(self):
        if abs(self.mask_frac + self.random_frac + self.keep_frac - 1.0) > 1e-12:
            raise ValueError("mask/random/keep fractions must sum to 1")
        for name in ("word_mask_rate", "mask_frac", "random_frac", "keep_frac",
                     "dae_infill_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def doc_rng(seed: int, doc_id: str) -> np.random.Generator:
    """Stable per-document stream; independent of processing order."""
    digest = hashlib.sha256(f"{seed}:{doc_id}".encode()).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))


@dataclass
class MLMInstance:
    doc_id: str
    input_ids: np.ndarray    # [CLS] tokens [SEP], corrupted
    target_ids: np.ndarray   # original id at corrupted positions, else ignore


@dataclass
class DAEInstance:
    doc_id: str
    source_ids: np.ndarray          # permuted + infilled document tokens
    target_ids: np.ndarray          # original tokens + [EOS]
    decoder_input_ids: np.ndarray   # [BOS] + target shifted right
    permutation: list[int] = field(default_factory=list)
    infills: list[tuple[int, list[int]]] = field(default_factory=list)
    truncated: bool = False


def _word_ids(doc: Document, vocab: Vocab) -> list[list[int]]:
    return [word for sent in encode_document(doc, vocab) for word in sent]


def make_mlm_instance(doc: Document, vocab: Vocab, cfg: CorruptionConfig,
                      rng: np.random.Generator, ignore: int) -> MLMInstance | None:
    """Whole-word masking: all tokens of a selected word are corrupted
    together and all of them become prediction targets."""
    words = _word_ids(doc, vocab)
    n_tokens = sum(len(w) for w in words)
    if n_tokens < 2:
        log.warning("skipping %s: only %d token(s)", doc.doc_id, n_tokens)
        return None
    inputs, targets = [CLS], [ignore]
    for word in words:
        selected = rng.random() < cfg.word_mask_rate
        if selected and cfg.per_word_draw:
            word_draw = rng.random()
        for tok in word:
            if not selected:
                inputs.append(tok)
                targets.append(ignore)
                continue
            u = word_draw if cfg.per_word_draw else rng.random()
            if u < cfg.mask_frac:
                inputs.append(MASK)
            elif u < cfg.mask_frac + cfg.random_frac:
                inputs.append(int(rng.integers(N_SPECIALS, len(vocab))))
            else:
                inputs.append(tok)
            targets.append(tok)
    inputs.append(SEP)
    targets.append(ignore)
    return MLMInstance(doc.doc_id,
                       np.array(inputs, dtype=np.int64),
                       np.array(targets, dtype=np.int64))


def token_infill(doc: Document, vocab: Vocab, cfg: CorruptionConfig,
                 rng: np.random.Generator) -> tuple[list[int], list[tuple[int, list[int]]]]:
    """Collapse each selected word to a single [MASK], however many tokens
    it has. Returns (corrupted ids, records of (mask position, original ids))."""
    out: list[int] = []
    records: list[tuple[int, list[int]]] = []
    for word in _word_ids(doc, vocab):
        if rng.random() < cfg.dae_infill_rate:
            records.append((len(out), list(word)))
            out.append(MASK)
        else:
            out.extend(word)
    return out, records


def sentence_permute(doc: Document, rng: np.random.Generator) -> Document:
    """Uniform random reorder of sentences; content untouched."""
    perm = rng.permutation(len(doc.sentences))
    return Document(doc.doc_id, [doc.sentences[i] for i in perm])


def make_dae_instance(doc: Document, vocab: Vocab, cfg: CorruptionConfig,
                      rng: np.random.Generator, max_source_len: int | None = None
                      ) -> DAEInstance:
    """Permute sentences (when enabled), then infill; the target is the
    original, unpermuted token sequence plus [EOS]."""
    original = [tok for word in _word_ids(doc, vocab) for tok in word]
    if cfg.permute_sentences:
        perm = [int(i) for i in rng.permutation(len(doc.sentences))]
        permuted = Document(doc.doc_id, [doc.sentences[i] for i in perm])
    else:
        perm = list(range(len(doc.sentences)))
        permuted = doc
    source, infills = token_infill(permuted, vocab, cfg, rng)
    truncated = False
    if max_source_len is not None and len(source) > max_source_len:
        source = source[:max_source_len]
        infills = [(p, orig) for p, orig in infills if p < max_source_len]
        truncated = True
    target = original + [EOS]
    if max_source_len is not None and len(target) > max_source_len:
        target = target[:max_source_len]
        truncated = True
    decoder_input = [BOS] + target[:-1]
    return DAEInstance(doc.doc_id,
                       np.array(source, dtype=np.int64),
                       np.array(target, dtype=np.int64),
                       np.array(decoder_input, dtype=np.int64),
                       permutation=perm, infills=infills, truncated=truncated)


def undo_corruption(inst: DAEInstance, doc: Document) -> list[str]:
    """Reconstruction identity: invert infill records, then the recorded
    permutation, recovering the original token strings."""
    sent_words = [[list(w) for w in s] for s in doc.sentences]
    permuted_tokens = [tok for i in inst.permutation
                       for word in sent_words[i] for tok in word]
    rebuilt: list[str] = []
    infills = dict(inst.infills)
    consumed = 0
    for pos, tok_id in enumerate(inst.source_ids.tolist()):
        if pos in infills:
            n = len(infills[pos])
            rebuilt.extend(permuted_tokens[consumed:consumed + n])
            consumed += n
        else:
            rebuilt.append(permuted_tokens[consumed])
            consumed += 1
    rebuilt.extend(permuted_tokens[consumed:])  # tail lost to truncation

    # Invert the sentence permutation by replaying sentence lengths.
    sent_lens = [sum(len(w) for w in sent_words[i]) for i in inst.permutation]
    pieces = []
    at = 0
    for n in sent_lens:
        pieces.append(rebuilt[at:at + n])
        at += n
    inverse = [0] * len(inst.permutation)
    for where, orig_idx in enumerate(inst.permutation):
        inverse[orig_idx] = where
    return [tok for orig_idx in range(len(pieces))
            for tok in pieces[inverse[orig_idx]]]


def mlm_instance_for(doc: Document, vocab: Vocab, cfg: CorruptionConfig,
                     ignore: int) -> MLMInstance | None:
    """Deterministic instance keyed by (cfg.seed, doc_id)."""
    return make_mlm_instance(doc, vocab, cfg, doc_rng(cfg.seed, doc.doc_id), ignore)


def dae_instance_for(doc: Document, vocab: Vocab, cfg: CorruptionConfig,
                     max_source_len: int | None = None) -> DAEInstance:
    # Salted so the two tasks never share a stream for the same document.
    rng = doc_rng(cfg.seed, doc.doc_id + "#dae")
    return make_dae_instance(doc, vocab, cfg, rng, max_source_len)


@dataclass
class MLMBatch:
    input_ids: np.ndarray   # (B, S)
    pad_mask: np.ndarray    # (B, S) bool, True = real token
    target_ids: np.ndarray  # (B, S), ignore sentinel at pads
    doc_ids: list[str]


@dataclass
class DAEBatch:
    source_ids: np.ndarray
    source_mask: np.ndarray
    decoder_input_ids: np.ndarray
    target_ids: np.ndarray
    decoder_mask: np.ndarray
    doc_ids: list[str]


def _pad_rows(rows: list[np.ndarray], pad_to: int, fill: int, what: str,
              names: list[str]) -> tuple[np.ndarray, np.ndarray]:
    for row, name in zip(rows, names):
        if len(row) > pad_to:
            raise ValueError(
                f"instance {name!r}: {what} length {len(row)} exceeds pad_to {pad_to}")
    out = np.full((len(rows), pad_to), fill, dtype=np.int64)
    mask = np.zeros((len(rows), pad_to), dtype=bool)
    for i, row in enumerate(rows):
        out[i, :len(row)] = row
        mask[i, :len(row)] = True
    return out, mask


def build_batch(instances: list, pad_to: int | None = None, ignore: int | None = None):
    """Right-pad one task kind's instances; pads carry [PAD] inputs, the
    ignore sentinel as target, and False in the pad mask."""
    if not instances:
        raise ValueError("empty batch")
    kinds = {type(i) for i in instances}
    if len(kinds) != 1:
        raise ValueError("all instances in a batch must be the same task kind")
    names = [i.doc_id for i in instances]
    if isinstance(instances[0], MLMInstance):
        if ignore is None:
            raise ValueError("MLM batches need the ignore sentinel")
        length = pad_to or max(len(i.input_ids) for i in instances)
        inputs, mask = _pad_rows([i.input_ids for i in instances], length, PAD,
                                 "input", names)
        targets, _ = _pad_rows([i.target_ids for i in instances], length, ignore,
                               "target", names)
        return MLMBatch(inputs, mask, targets, names)
    if ignore is None:
        raise ValueError("DAE batches need the ignore sentinel")
    src_len = pad_to or max(len(i.source_ids) for i in instances)
    tgt_len = pad_to or max(len(i.target_ids) for i in instances)
    src, src_mask = _pad_rows([i.source_ids for i in instances], src_len, PAD,
                              "source", names)
    dec, dec_mask = _pad_rows([i.decoder_input_ids for i in instances], tgt_len, PAD,
                              "decoder input", names)
    tgt, _ = _pad_rows([i.target_ids for i in instances], tgt_len, ignore,
                       "target", names)
    return DAEBatch(src, src_mask, dec, tgt, dec_mask, names)
