"""Corpus ingestion with externally supplied word segmentation.

A corpus file holds one JSON document per line:
    {"doc_id": "...", "sentences": [[["tok", ...], ...], ...]}
with nesting sentence -> word -> token. Segmentation is an input-format
obligation: the file already carries word boundaries, so the pipeline
stays language-agnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import N_SPECIALS, SPECIAL_TOKENS, UNK

UNK_TOKEN = SPECIAL_TOKENS[UNK]


class CorpusFormatError(ValueError):
    """Line did not parse to the document schema."""


class Vocab:
    """Token-string table; id 0..6 are the fixed special tokens."""

    def __init__(self, tokens: list[str]):
        if tokens[:N_SPECIALS] != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(tokens)}
        self.unknown_count = 0

    def __len__(self):
        return len(self.tokens)

    @classmethod
    def synthetic(cls, n_symbols: int = 256) -> "Vocab":
        return cls(SPECIAL_TOKENS + [f"s{i:03d}" for i in range(n_symbols)])

    def encode(self, token: str) -> int:
        """Id for token; unknown strings map to [UNK] and are counted."""
        i = self.index.get(token)
        if i is None:
            self.unknown_count += 1
            return UNK
        return i

    def encode_strict(self, token: str) -> int:
        i = self.index.get(token)
        if i is None:
            raise KeyError(f"token {token!r} not in vocabulary")
        return i

    def decode(self, token_id: int) -> str:
        return self.tokens[token_id]

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls(Path(path).read_text().splitlines())


@dataclass
class Document:
    """doc -> sentences -> words -> token strings."""

    doc_id: str
    sentences: list[list[list[str]]]

    def validate(self) -> "Document":
        if not isinstance(self.doc_id, str) or not self.doc_id:
            raise CorpusFormatError("doc_id must be a non-empty string")
        if not self.sentences:
            raise CorpusFormatError(f"{self.doc_id}: document has no sentences")
        for si, sent in enumerate(self.sentences):
            if not sent:
                raise CorpusFormatError(f"{self.doc_id}: sentence {si} is empty")
            for wi, word in enumerate(sent):
                if not word:
                    raise CorpusFormatError(
                        f"{self.doc_id}: empty word at sentence {si} position {wi}")
                for tok in word:
                    if not isinstance(tok, str) or not tok:
                        raise CorpusFormatError(
                            f"{self.doc_id}: bad token in sentence {si} word {wi}")
                    # [UNK] may appear (unknown-token fallback); the control
                    # tokens never belong inside document words.
                    if tok in SPECIAL_TOKENS and tok != UNK_TOKEN:
                        raise CorpusFormatError(
                            f"{self.doc_id}: special token {tok} inside a word")
        return self

    def words(self):
        for sent in self.sentences:
            yield from sent

    def tokens(self) -> list[str]:
        return [tok for word in self.words() for tok in word]

    def n_tokens(self) -> int:
        return sum(len(w) for w in self.words())

    def n_words(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass
class CorpusStats:
    documents: int = 0
    sentences: int = 0
    words: int = 0
    tokens: int = 0
    unknown_tokens: int = 0
    skipped: int = 0
    truncated: int = 0
    notes: list = field(default_factory=list)


def load_corpus(path, vocab: Vocab | None = None) -> list[Document]:
    """Parse and validate all documents in file order.

    With a vocabulary, token strings it cannot resolve are rewritten to
    [UNK] and counted on vocab.unknown_count.
    """
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                doc = Document(doc_id=obj["doc_id"], sentences=obj["sentences"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            try:
                doc.validate()
            except CorpusFormatError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            if vocab is not None:
                doc = Document(
                    doc_id=doc.doc_id,
                    sentences=[[[tok if tok in vocab.index else _count_unk(vocab)
                                 for tok in word] for word in sent]
                               for sent in doc.sentences])
            docs.append(doc)
    return docs


def _count_unk(vocab: Vocab) -> str:
    vocab.unknown_count += 1
    return UNK_TOKEN


def write_corpus(docs: list[Document], path):
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps({"doc_id": doc.doc_id, "sentences": doc.sentences},
                               ensure_ascii=False) + "\n")


def encode_document(doc: Document, vocab: Vocab) -> list[list[list[int]]]:
    """Id-space mirror of the sentence/word/token nesting."""
    return [[[vocab.encode(tok) for tok in word] for word in sent]
            for sent in doc.sentences]
