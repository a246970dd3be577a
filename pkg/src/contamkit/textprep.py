"""Normalization, tokenizers, and benchmark-sample ingestion.

The two hash-fraction metrics compare lowercased, punctuation-stripped
text on both the corpus and the benchmark side; the extend-based metrics
compare raw text. Both views of a sample are produced here.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from .errors import ConfigError, InvalidRecord

# All Unicode punctuation categories plus the ASCII symbols that commonly
# decorate benchmark prompts but carry no lexical content.
_PUNCT_CATEGORIES = frozenset({"Po", "Ps", "Pe", "Pd", "Pc", "Pi", "Pf"})
_EXTRA_PUNCT = frozenset("~^|<>=+$")


@lru_cache(maxsize=None)
def _is_punct(ch: str) -> bool:
    return ch in _EXTRA_PUNCT or unicodedata.category(ch) in _PUNCT_CATEGORIES


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, and collapse whitespace runs.

    Total and idempotent; the output contains no uppercase letters, no
    punctuation, and single spaces between words.
    """
    lowered = text.lower()
    kept = "".join(ch for ch in lowered if not _is_punct(ch))
    return " ".join(kept.split())


@dataclass(frozen=True)
class NormalizationMode:
    """Whether lowercasing + punctuation stripping is applied before tokenizing."""

    enabled: bool


RAW = NormalizationMode(enabled=False)
NORMALIZED = NormalizationMode(enabled=True)


class Tokenizer(Protocol):
    """Deterministic text -> token-id mapping.

    Implementations must be immutable after construction and return ids in
    ``[0, vocab_size)`` as a uint32 array.
    """

    vocab_id: str
    vocab_size: int

    def token(self, text: str) -> np.ndarray: ...


SPACE_ID = 32  # the UTF-8 space byte doubles as the word separator id


class WordByteTokenizer:
    """Whitespace words through an optional vocab, UTF-8 bytes for the rest.

    Ids 0-255 are reserved for bytes; vocab word ids start at 256. Words are
    joined with a single space-byte token, so whitespace runs collapse but
    word boundaries survive. With an empty vocab this degrades to a pure
    byte tokenizer, which keeps the toolkit runnable with no model assets;
    a production run plugs in the subject model's tokenizer instead.
    """

    def __init__(self, vocab: Mapping[str, int] | None = None):
        self._vocab = dict(vocab or {})
        for word, wid in self._vocab.items():
            if wid < 256:
                raise ConfigError(f"vocab id for {word!r} collides with byte ids: {wid}")
        if self._vocab:
            digest = hashlib.blake2b(
                "\n".join(f"{w}\t{i}" for w, i in sorted(self._vocab.items())).encode("utf-8"),
                digest_size=8,
            ).hexdigest()
            self.vocab_id = f"wordbyte/{digest}"
            self.vocab_size = max(self._vocab.values()) + 1
        else:
            self.vocab_id = "wordbyte/bytes"
            self.vocab_size = 256

    @classmethod
    def from_word_file(cls, path: str | Path) -> "WordByteTokenizer":
        """One word per line; ids assigned 256, 257, ... in file order."""
        words = Path(path).read_text(encoding="utf-8").splitlines()
        return cls({w: 256 + i for i, w in enumerate(words) if w})

    def token(self, text: str) -> np.ndarray:
        ids: list[int] = []
        for k, word in enumerate(text.split()):
            if k:
                ids.append(SPACE_ID)
            wid = self._vocab.get(word)
            if wid is None:
                ids.extend(word.encode("utf-8"))
            else:
                ids.append(wid)
        return np.asarray(ids, dtype=np.uint32)


class IntTokenizer:
    """Parses whitespace-separated integer token ids.

    Used for synthetic corpora whose documents are written as literal token
    ids; normalization is the identity on this alphabet, so the raw and
    normalized views coincide.
    """

    vocab_id = "intstr/u32"
    vocab_size = 2**32

    def token(self, text: str) -> np.ndarray:
        words = text.split()
        try:
            return np.asarray([int(w) for w in words], dtype=np.uint32)
        except (ValueError, OverflowError) as exc:
            raise InvalidRecord(f"not a token-id string: {exc}") from None


_TOKENIZERS = {
    "wordbyte": WordByteTokenizer,
    "intstr": IntTokenizer,
}


def get_tokenizer(spec: str) -> Tokenizer:
    """Resolve a tokenizer spec string: ``wordbyte``, ``wordbyte:<vocab file>``, ``intstr``."""
    name, _, arg = spec.partition(":")
    if name == "wordbyte" and arg:
        return WordByteTokenizer.from_word_file(arg)
    try:
        return _TOKENIZERS[name]()
    except KeyError:
        raise ConfigError(f"unknown tokenizer {spec!r}; known: {sorted(_TOKENIZERS)}") from None


@dataclass
class BenchmarkSampleRecord:
    """One raw benchmark sample as read from the input JSONL."""

    sample_id: str
    prompt: str
    answer: str | None = None
    choices: list[str] | None = None
    correct_choice: int | None = None

    def answer_text(self) -> str:
        if self.answer is not None:
            return self.answer
        if self.choices is not None:
            if self.correct_choice is None:
                raise InvalidRecord(f"sample {self.sample_id}: choices without correct_choice")
            if not 0 <= self.correct_choice < len(self.choices):
                raise InvalidRecord(
                    f"sample {self.sample_id}: correct_choice {self.correct_choice} "
                    f"out of range for {len(self.choices)} choices"
                )
            return self.choices[self.correct_choice]
        return ""


@dataclass(eq=False)
class TokenizedSample:
    """A tokenized sample with the prompt/answer boundary recorded.

    ``full_tokens`` is the concatenation of prompt and answer tokens and
    ``boundary_index`` equals the prompt length, so choice benchmarks score
    contamination over prompt-plus-correct-choice.
    """

    sample_id: str
    prompt_tokens: np.ndarray
    answer_tokens: np.ndarray
    full_tokens: np.ndarray = field(repr=False)
    boundary_index: int = 0

    def __len__(self) -> int:
        return int(self.full_tokens.shape[0])


def tokenize_sample(
    record: BenchmarkSampleRecord, mode: NormalizationMode, tok: Tokenizer
) -> TokenizedSample:
    """Tokenize one record under the given normalization mode."""
    if not record.prompt:
        raise InvalidRecord(f"sample {record.sample_id!r}: missing prompt text")
    prompt_text = record.prompt
    answer_text = record.answer_text()
    if mode.enabled:
        prompt_text = normalize(prompt_text)
        answer_text = normalize(answer_text)
    prompt_tokens = tok.token(prompt_text)
    answer_tokens = tok.token(answer_text)
    full = np.concatenate([prompt_tokens, answer_tokens]) if len(answer_tokens) else prompt_tokens.copy()
    return TokenizedSample(
        sample_id=record.sample_id,
        prompt_tokens=prompt_tokens,
        answer_tokens=answer_tokens,
        full_tokens=full,
        boundary_index=int(prompt_tokens.shape[0]),
    )


def read_benchmark(path: str | Path) -> list[BenchmarkSampleRecord]:
    """Read benchmark samples from JSONL; one object per sample."""
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidRecord(f"{path} line {lineno}: bad JSON: {exc}") from None
            if "id" not in obj or "prompt" not in obj:
                raise InvalidRecord(f"{path} line {lineno}: record needs 'id' and 'prompt'")
            sid = str(obj["id"])
            if sid in seen:
                raise InvalidRecord(f"{path} line {lineno}: duplicate sample id {sid!r}")
            seen.add(sid)
            records.append(
                BenchmarkSampleRecord(
                    sample_id=sid,
                    prompt=obj["prompt"],
                    answer=obj.get("answer"),
                    choices=obj.get("choices"),
                    correct_choice=obj.get("correct_choice"),
                )
            )
    return records


def tokenize_benchmark(
    records: Iterable[BenchmarkSampleRecord], tok: Tokenizer
) -> tuple[list[TokenizedSample], list[TokenizedSample]]:
    """Raw and normalized tokenizations of a benchmark, index-aligned."""
    raw = []
    norm = []
    for rec in records:
        raw.append(tokenize_sample(rec, RAW, tok))
        norm.append(tokenize_sample(rec, NORMALIZED, tok))
    return raw, norm
