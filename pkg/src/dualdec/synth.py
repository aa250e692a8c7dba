"""Seeded synthetic corpora and task datasets; keeps every run hermetic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, Vocab


def symbol(i: int) -> str:
    return f"s{i:03d}"


def make_corpus(n_docs: int, seed: int, n_symbols: int = 256,
                sentences=(2, 5), words=(3, 6), tokens=(1, 4)) -> list[Document]:
    """Random documents over the synthetic symbol vocabulary."""
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        n_sent = int(rng.integers(sentences[0], sentences[1] + 1))
        doc_sents = []
        for _ in range(n_sent):
            n_words = int(rng.integers(words[0], words[1] + 1))
            sent = []
            for _ in range(n_words):
                n_tok = int(rng.integers(tokens[0], tokens[1] + 1))
                sent.append([symbol(int(rng.integers(0, n_symbols)))
                             for _ in range(n_tok)])
            doc_sents.append(sent)
        docs.append(Document(f"doc{d:04d}", doc_sents).validate())
    return docs


@dataclass
class LabeledExample:
    tokens: list[str]
    label: str


@dataclass
class ClassificationTask:
    train: list[LabeledExample]
    test: list[LabeledExample]
    labels: list[str]
    # One distinctive marker token per label; doubles as the verbalizer word.
    markers: dict[str, str]


def classification_task(n_train: int = 64, n_test: int = 32, seed: int = 0,
                        length: int = 8) -> ClassificationTask:
    """Linearly separable two-class task: the class is given by which
    marker symbol appears somewhere in the sequence."""
    rng = np.random.default_rng(seed)
    labels = ["A", "B"]
    markers = {"A": symbol(0), "B": symbol(1)}
    filler_lo, filler_hi = 8, 64

    def example():
        label = labels[int(rng.integers(0, 2))]
        toks = [symbol(int(rng.integers(filler_lo, filler_hi)))
                for _ in range(length)]
        toks[int(rng.integers(0, length))] = markers[label]
        return LabeledExample(toks, label)

    return ClassificationTask([example() for _ in range(n_train)],
                              [example() for _ in range(n_test)],
                              labels, markers)


@dataclass
class TaggedExample:
    tokens: list[str]
    tags: list[str]


@dataclass
class SeqLabelTask:
    train: list[TaggedExample]
    test: list[TaggedExample]
    tags: list[str]


def seqlabel_task(n_train: int = 64, n_test: int = 32, seed: int = 1,
                  length: int = 10) -> SeqLabelTask:
    """BIO tagging: find the planted two-token pattern."""
    rng = np.random.default_rng(seed)
    pattern = [symbol(100), symbol(101)]

    def example():
        toks = [symbol(int(rng.integers(8, 96))) for _ in range(length)]
        tags = ["O"] * length
        at = int(rng.integers(0, length - 1))
        toks[at], toks[at + 1] = pattern
        tags[at], tags[at + 1] = "B", "I"
        return TaggedExample(toks, tags)

    return SeqLabelTask([example() for _ in range(n_train)],
                        [example() for _ in range(n_test)],
                        ["O", "B", "I"])


@dataclass
class SpanExample:
    question: list[str]
    passage: list[str]
    start: int  # inclusive token index into passage
    end: int    # inclusive


@dataclass
class SpanTask:
    train: list[SpanExample]
    test: list[SpanExample]


def span_task(n_train: int = 96, n_test: int = 32, seed: int = 2,
              passage_len: int = 12, span_len: int = 2) -> SpanTask:
    """Copy-span reading comprehension: the question quotes a span that
    occurs exactly once in the passage; predict its location."""
    rng = np.random.default_rng(seed)

    def example():
        ids = rng.choice(np.arange(8, 200), size=passage_len, replace=False)
        passage = [symbol(int(i)) for i in ids]
        start = int(rng.integers(0, passage_len - span_len + 1))
        end = start + span_len - 1
        return SpanExample(passage[start:end + 1], passage, start, end)

    return SpanTask([example() for _ in range(n_train)],
                    [example() for _ in range(n_test)])


@dataclass
class PairExample:
    source: list[str]
    target: list[str]


@dataclass
class PairTask:
    train: list[PairExample]
    test: list[PairExample]


def copy_task(n_train: int = 128, n_test: int = 32, seed: int = 3,
              length: int = 8, n_symbols: int = 32) -> PairTask:
    rng = np.random.default_rng(seed)

    def example():
        toks = [symbol(int(rng.integers(0, n_symbols))) for _ in range(length)]
        return PairExample(toks, list(toks))

    return PairTask([example() for _ in range(n_train)],
                    [example() for _ in range(n_test)])


def reversal_task(n_train: int = 128, n_test: int = 32, seed: int = 4,
                  length: int = 8, n_symbols: int = 32) -> PairTask:
    rng = np.random.default_rng(seed)

    def example():
        toks = [symbol(int(rng.integers(0, n_symbols))) for _ in range(length)]
        return PairExample(toks, toks[::-1])

    return PairTask([example() for _ in range(n_train)],
                    [example() for _ in range(n_test)])


def encode_tokens(tokens: list[str], vocab: Vocab) -> np.ndarray:
    return np.array([vocab.encode(t) for t in tokens], dtype=np.int64)
