"""Corruption statistics and structural invariants.

Interval oracles, frozen from their derivations:
- masked-word rate: binomial 99% interval at p=0.15, n=10000 words is
  0.15 +- 2.576*sqrt(.15*.85/10000) = [0.1408, 0.1592].
- mask/random/keep mixture: multinomial share +-2% per bucket covers >3
  sigma at the corrupted-token counts used here.
- permutation frequencies: each of 3! orders within 1/6 +- 0.02 over 6000
  draws (sigma ~= 0.0048).
"""

import numpy as np
import pytest

from dualdec import corruption as corr
from dualdec.corpus import Document, Vocab
from dualdec.corruption import (CorruptionConfig, DAEBatch, MLMBatch,
                                build_batch, dae_instance_for, doc_rng,
                                make_dae_instance, make_mlm_instance,
                                mlm_instance_for, sentence_permute,
                                token_infill, undo_corruption)
from dualdec.model import BOS, CLS, EOS, MASK, SEP
from dualdec.synth import make_corpus

VOCAB = Vocab.synthetic(64)
IGNORE = len(VOCAB)


def cfg(**kw):
    return CorruptionConfig(**kw)


def doc_of(words, doc_id="d0"):
    return Document(doc_id, [[list(w) for w in words]])


class TestMLM:
    def test_zero_rate_no_corruption(self):
        docs = make_corpus(5, seed=0, n_symbols=64)
        for d in docs:
            inst = mlm_instance_for(d, VOCAB, cfg(word_mask_rate=0.0), IGNORE)
            assert (inst.target_ids == IGNORE).all()
            assert inst.input_ids[0] == CLS and inst.input_ids[-1] == SEP

    def test_framing_never_corrupted(self):
        docs = make_corpus(20, seed=1, n_symbols=64)
        for d in docs:
            inst = mlm_instance_for(d, VOCAB, cfg(word_mask_rate=0.9), IGNORE)
            assert inst.input_ids[0] == CLS and inst.input_ids[-1] == SEP
            assert inst.target_ids[0] == IGNORE and inst.target_ids[-1] == IGNORE

    def test_lengths_match(self):
        d = make_corpus(1, seed=2, n_symbols=64)[0]
        inst = mlm_instance_for(d, VOCAB, cfg(), IGNORE)
        assert len(inst.input_ids) == len(inst.target_ids) == d.n_tokens() + 2

    def test_too_short_doc_skipped(self):
        d = doc_of([["s001"]])
        assert make_mlm_instance(d, VOCAB, cfg(), doc_rng(0, "x"), IGNORE) is None

    def test_whole_word_atomicity(self):
        docs = make_corpus(30, seed=3, n_symbols=64, tokens=(2, 4))
        for d in docs:
            inst = mlm_instance_for(d, VOCAB, cfg(word_mask_rate=0.4), IGNORE)
            pos = 1  # skip [CLS]
            for word in d.words():
                flags = inst.target_ids[pos:pos + len(word)] != IGNORE
                assert flags.all() or (~flags).all(), (d.doc_id, word)
                pos += len(word)

    def test_masked_word_rate_in_binomial_interval(self):
        docs = make_corpus(700, seed=4, n_symbols=64)
        total_words = sum(d.n_words() for d in docs)
        assert total_words >= 10_000
        masked_words = 0
        for d in docs:
            inst = mlm_instance_for(d, VOCAB, cfg(seed=11), IGNORE)
            pos = 1
            for word in d.words():
                if inst.target_ids[pos] != IGNORE:
                    masked_words += 1
                pos += len(word)
        rate = masked_words / total_words
        assert 0.141 <= rate <= 0.159, rate

    def test_mask_random_keep_mixture(self):
        docs = make_corpus(400, seed=5, n_symbols=64)
        n_mask = n_keep = n_random = 0
        for d in docs:
            inst = mlm_instance_for(d, VOCAB, cfg(seed=13), IGNORE)
            sel = inst.target_ids != IGNORE
            for inp, orig in zip(inst.input_ids[sel], inst.target_ids[sel]):
                if inp == MASK:
                    n_mask += 1
                elif inp == orig:
                    n_keep += 1
                else:
                    n_random += 1
        total = n_mask + n_keep + n_random
        assert total > 2000
        assert abs(n_mask / total - 0.80) < 0.02
        assert abs(n_random / total - 0.10) < 0.02
        assert abs(n_keep / total - 0.10) < 0.02

    def test_random_replacement_never_special(self):
        docs = make_corpus(50, seed=6, n_symbols=64)
        for d in docs:
            inst = mlm_instance_for(d, VOCAB, cfg(word_mask_rate=0.9, seed=3), IGNORE)
            sel = inst.target_ids != IGNORE
            replaced = inst.input_ids[sel]
            non_mask = replaced[replaced != MASK]
            assert (non_mask >= 7).all()

    def test_per_word_draw_mode(self):
        docs = make_corpus(40, seed=7, n_symbols=64, tokens=(2, 4))
        for d in docs:
            inst = mlm_instance_for(
                d, VOCAB, cfg(word_mask_rate=0.5, per_word_draw=True, seed=5), IGNORE)
            pos = 1
            for word in d.words():
                if len(word) < 2 or inst.target_ids[pos] == IGNORE:
                    pos += len(word)
                    continue
                span_in = inst.input_ids[pos:pos + len(word)]
                span_tg = inst.target_ids[pos:pos + len(word)]
                # One draw per word: all-masked, all-kept, or all-random.
                assert ((span_in == MASK).all()
                        or (span_in == span_tg).all()
                        or ((span_in != MASK) & (span_in != span_tg)).all())
                pos += len(word)


class TestInfill:
    def test_multi_token_word_shrinks_by_len_minus_one(self):
        d = doc_of([["s001", "s002", "s003"]])
        out, records = token_infill(d, VOCAB, cfg(dae_infill_rate=1.0),
                                    doc_rng(0, "a"))
        assert out == [MASK]
        assert records == [(0, [VOCAB.encode("s001"), VOCAB.encode("s002"),
                                VOCAB.encode("s003")])]

    def test_rate_zero_is_identity(self):
        d = make_corpus(1, seed=8, n_symbols=64)[0]
        out, records = token_infill(d, VOCAB, cfg(dae_infill_rate=0.0),
                                    doc_rng(0, "b"))
        assert records == []
        assert out == [VOCAB.encode(t) for t in d.tokens()]

    def test_removing_masks_leaves_subsequence(self):
        docs = make_corpus(25, seed=9, n_symbols=64)
        for d in docs:
            out, _ = token_infill(d, VOCAB, cfg(dae_infill_rate=0.3),
                                  doc_rng(1, d.doc_id))
            kept = [t for t in out if t != MASK]
            orig = [VOCAB.encode(t) for t in d.tokens()]
            it = iter(orig)
            assert all(any(o == k for o in it) for k in kept), d.doc_id

    def test_length_arithmetic(self):
        docs = make_corpus(25, seed=10, n_symbols=64)
        for d in docs:
            rng = doc_rng(2, d.doc_id)
            out, records = token_infill(d, VOCAB, cfg(dae_infill_rate=0.4), rng)
            shrink = sum(len(orig) - 1 for _, orig in records)
            assert len(out) == d.n_tokens() - shrink


class TestPermutation:
    def test_single_sentence_unchanged(self):
        d = doc_of([["s001", "s002"]])
        assert sentence_permute(d, doc_rng(0, "c")) == d

    def test_multiset_preserved(self):
        docs = make_corpus(20, seed=11, n_symbols=64)
        for d in docs:
            p = sentence_permute(d, doc_rng(3, d.doc_id))
            key = lambda s: sorted(map(str, s))
            assert sorted(map(str, p.sentences)) == sorted(map(str, d.sentences))

    def test_uniform_over_orders(self):
        d = Document("d", [[["s001"]], [["s002"]], [["s003"]]])
        rng = np.random.default_rng(12)
        counts = {}
        n = 6000
        for _ in range(n):
            p = sentence_permute(d, rng)
            key = tuple(s[0][0] for s in p.sentences)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        for k, c in counts.items():
            assert abs(c / n - 1 / 6) < 0.02, (k, c / n)


class TestDAE:
    def test_disabled_corruptions_give_copy(self):
        d = make_corpus(1, seed=13, n_symbols=64)[0]
        inst = make_dae_instance(d, VOCAB,
                                 cfg(dae_infill_rate=0.0, permute_sentences=False),
                                 doc_rng(0, d.doc_id))
        orig = [VOCAB.encode(t) for t in d.tokens()]
        assert inst.source_ids.tolist() == orig
        assert inst.target_ids.tolist() == orig + [EOS]

    def test_shift_rule(self):
        docs = make_corpus(10, seed=14, n_symbols=64)
        for d in docs:
            inst = dae_instance_for(d, VOCAB, cfg(seed=7))
            assert inst.decoder_input_ids[0] == BOS
            assert (inst.decoder_input_ids[1:] == inst.target_ids[:-1]).all()
            assert len(inst.decoder_input_ids) == len(inst.target_ids)

    def test_source_never_contains_bos_eos(self):
        docs = make_corpus(30, seed=15, n_symbols=64)
        for d in docs:
            inst = dae_instance_for(d, VOCAB, cfg(seed=9))
            assert BOS not in inst.source_ids
            assert EOS not in inst.source_ids

    def test_target_is_unpermuted_original(self):
        docs = make_corpus(10, seed=16, n_symbols=64)
        for d in docs:
            inst = dae_instance_for(d, VOCAB, cfg(seed=10))
            orig = [VOCAB.encode(t) for t in d.tokens()]
            assert inst.target_ids.tolist() == orig + [EOS]

    def test_reconstruction_identity(self):
        docs = make_corpus(30, seed=17, n_symbols=64)
        for d in docs:
            inst = dae_instance_for(d, VOCAB, cfg(seed=21))
            assert undo_corruption(inst, d) == d.tokens()

    def test_truncation_flagged(self):
        d = make_corpus(1, seed=18, n_symbols=64, sentences=(4, 4))[0]
        inst = make_dae_instance(d, VOCAB, cfg(dae_infill_rate=0.0),
                                 doc_rng(0, d.doc_id), max_source_len=5)
        assert inst.truncated
        assert len(inst.source_ids) == 5

    def test_expected_shrink_rate(self):
        # Expected source shortening per word: (avg_word_len - 1) * rate.
        docs = make_corpus(300, seed=19, n_symbols=64)
        total_words = sum(d.n_words() for d in docs)
        total_tokens = sum(d.n_tokens() for d in docs)
        avg_len = total_tokens / total_words
        shrink = 0
        for d in docs:
            inst = dae_instance_for(d, VOCAB, cfg(seed=23))
            shrink += len(inst.target_ids) - 1 - len(inst.source_ids)
        expected = (avg_len - 1) * 0.15 * total_words
        assert abs(shrink - expected) / expected < 0.15


class TestDeterminism:
    def test_same_seed_same_instances(self):
        docs = make_corpus(6, seed=20, n_symbols=64)
        a = [mlm_instance_for(d, VOCAB, cfg(seed=5), IGNORE) for d in docs]
        b = [mlm_instance_for(d, VOCAB, cfg(seed=5), IGNORE) for d in reversed(docs)]
        for x, y in zip(a, reversed(b)):
            assert np.array_equal(x.input_ids, y.input_ids)
            assert np.array_equal(x.target_ids, y.target_ids)

    def test_different_seed_differs(self):
        docs = make_corpus(6, seed=21, n_symbols=64)
        a = [mlm_instance_for(d, VOCAB, cfg(seed=5), IGNORE) for d in docs]
        b = [mlm_instance_for(d, VOCAB, cfg(seed=6), IGNORE) for d in docs]
        assert any(not np.array_equal(x.input_ids, y.input_ids)
                   for x, y in zip(a, b))

    def test_mlm_and_dae_streams_independent(self):
        d = make_corpus(1, seed=22, n_symbols=64)[0]
        mlm = mlm_instance_for(d, VOCAB, cfg(seed=5), IGNORE)
        dae = dae_instance_for(d, VOCAB, cfg(seed=5))
        assert mlm is not None and dae is not None


class TestBatching:
    def docs(self):
        return make_corpus(4, seed=23, n_symbols=64)

    def test_exact_fit_no_padding(self):
        d = self.docs()[0]
        inst = mlm_instance_for(d, VOCAB, cfg(seed=1), IGNORE)
        batch = build_batch([inst], pad_to=len(inst.input_ids), ignore=IGNORE)
        assert isinstance(batch, MLMBatch)
        assert batch.pad_mask.all()

    def test_mixed_lengths_padded(self):
        short = mlm_instance_for(doc_of([["s001", "s002"], ["s003"]], "short"),
                                 VOCAB, cfg(word_mask_rate=0.0, seed=1), IGNORE)
        long = mlm_instance_for(self.docs()[0], VOCAB, cfg(seed=1), IGNORE)
        pad_to = max(len(short.input_ids), len(long.input_ids))
        batch = build_batch([short, long], pad_to=pad_to, ignore=IGNORE)
        n_pad = pad_to - len(short.input_ids)
        assert (batch.input_ids[0, len(short.input_ids):] == 0).sum() == n_pad
        assert (batch.target_ids[0, len(short.input_ids):] == IGNORE).all()
        assert (~batch.pad_mask[0, len(short.input_ids):]).all()

    def test_overlong_instance_names_doc(self):
        inst = mlm_instance_for(self.docs()[0], VOCAB, cfg(seed=1), IGNORE)
        with pytest.raises(ValueError, match=inst.doc_id):
            build_batch([inst], pad_to=3, ignore=IGNORE)

    def test_mixed_kinds_rejected(self):
        d = self.docs()[0]
        mlm = mlm_instance_for(d, VOCAB, cfg(seed=1), IGNORE)
        dae = dae_instance_for(d, VOCAB, cfg(seed=1))
        with pytest.raises(ValueError, match="same task kind"):
            build_batch([mlm, dae], ignore=IGNORE)

    def test_dae_batch_shapes(self):
        docs = self.docs()
        insts = [dae_instance_for(d, VOCAB, cfg(seed=2)) for d in docs]
        batch = build_batch(insts, ignore=IGNORE)
        assert isinstance(batch, DAEBatch)
        assert batch.decoder_input_ids.shape == batch.target_ids.shape
        assert batch.source_ids.shape[0] == len(docs)
