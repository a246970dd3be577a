"""Sharded tokenized corpora and the rolling-hash n-gram index.

File formats
------------
Raw corpus shard: UTF-8 text, one document per line, with ``\\n`` and
``\\\\`` escapes for newlines/backslashes inside a document.

Tokenized shard (``CTAMTOK1``), all little-endian::

    magic "CTAMTOK1" | u32 vocab-id hash | u64 token count | u32 tokens...
    | u64 boundary count | u64 doc-end offsets...

Index file (``CTAMIDX1``)::

    magic "CTAMIDX1" | u32 n | u64 hash base | u64 hash modulus
    | u64 entry count | entries sorted by hash, each:
      u64 hash | u64 count | u8 postings_len | postings_len x (u32 shard, u64 offset)

Counts are full corpus frequencies; postings keep only the first
``POSTINGS_CAP`` occurrences in (shard_id, offset) order, which is all the
match-extension step needs for exemplar contexts.
"""

from __future__ import annotations

import hashlib
import re
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import kernels
from .errors import PostingOutOfRange, ShardReadError, TokenizerMismatch
from .textprep import NormalizationMode, Tokenizer, normalize

HASH_BASE = kernels.DEFAULT_BASE
HASH_MODULUS = kernels.MOD61
POSTINGS_CAP = 16

TOK_MAGIC = b"CTAMTOK1"
IDX_MAGIC = b"CTAMIDX1"

MINCOUNT_GRID = (1, 5, 10, 20, 100)


def vocab_hash32(vocab_id: str) -> int:
    """Stable 32-bit digest of a tokenizer's vocab identifier."""
    return int.from_bytes(hashlib.blake2b(vocab_id.encode("utf-8"), digest_size=4).digest(), "little")


@dataclass(eq=False)
class CorpusShard:
    """One shard of tokenized corpus text.

    ``doc_boundaries`` holds the end offset of every document, strictly
    increasing, with the last entry equal to the token count.
    """

    shard_id: int
    tokens: np.ndarray
    doc_boundaries: np.ndarray

    def __post_init__(self):
        self.tokens = np.ascontiguousarray(self.tokens, dtype=np.uint32)
        self.doc_boundaries = np.ascontiguousarray(self.doc_boundaries, dtype=np.uint64)
        n = self.tokens.shape[0]
        b = self.doc_boundaries
        if b.shape[0]:
            if int(b[-1]) != n:
                raise ShardReadError(f"shard {self.shard_id}: last boundary {int(b[-1])} != token count {n}")
            if np.any(b[1:] <= b[:-1]) or int(b[0]) == 0:
                raise ShardReadError(f"shard {self.shard_id}: boundaries not strictly increasing")
        elif n:
            raise ShardReadError(f"shard {self.shard_id}: tokens present but no boundaries")

    def doc_bounds_at(self, offset: int) -> tuple[int, int]:
        """Start/end of the document containing ``offset``."""
        if not 0 <= offset < self.tokens.shape[0]:
            raise PostingOutOfRange(f"offset {offset} outside shard {self.shard_id}")
        d = int(np.searchsorted(self.doc_boundaries, offset, side="right"))
        lo = int(self.doc_boundaries[d - 1]) if d else 0
        return lo, int(self.doc_boundaries[d])

    def window_starts(self, n: int) -> np.ndarray:
        """Start offsets of every n-gram window that stays inside one document."""
        m = self.tokens.shape[0] - n + 1
        if m <= 0:
            return np.empty(0, dtype=np.int64)
        starts = np.arange(m, dtype=np.uint64)
        doc_end = self.doc_boundaries[np.searchsorted(self.doc_boundaries, starts, side="right")]
        return starts[starts + np.uint64(n) <= doc_end].astype(np.int64)


class ShardStore:
    """An ordered, immutable collection of shards addressed by shard_id."""

    def __init__(self, shards: Sequence[CorpusShard], vocab_hash: int | None = None):
        self._shards = {s.shard_id: s for s in shards}
        if len(self._shards) != len(shards):
            raise ShardReadError("duplicate shard ids")
        self.vocab_hash = vocab_hash

    @classmethod
    def load_dir(cls, directory: str | Path) -> "ShardStore":
        """Load every ``*.tok`` file, shard ids assigned by sorted filename."""
        files = sorted(Path(directory).glob("*.tok"))
        shards = []
        vocab_hash: int | None = None
        for i, path in enumerate(files):
            tokens, bounds, vh = read_token_shard(path)
            if vocab_hash is None:
                vocab_hash = vh
            elif vh != vocab_hash:
                raise TokenizerMismatch(f"{path}: vocab hash {vh:#x} differs from {vocab_hash:#x}")
            shards.append(CorpusShard(shard_id=i, tokens=tokens, doc_boundaries=bounds))
        return cls(shards, vocab_hash=vocab_hash)

    def shard(self, shard_id: int) -> CorpusShard:
        try:
            return self._shards[shard_id]
        except KeyError:
            raise PostingOutOfRange(f"unknown shard id {shard_id}") from None

    def read_context(self, shard_id: int, offset: int, left: int, right: int) -> np.ndarray:
        """Tokens in ``[offset-left, offset+right)`` clipped to the containing document."""
        shard = self.shard(shard_id)
        lo, hi = shard.doc_bounds_at(offset)
        return shard.tokens[max(lo, offset - left) : min(hi, offset + right)]

    def __iter__(self) -> Iterator[CorpusShard]:
        return iter(sorted(self._shards.values(), key=lambda s: s.shard_id))

    def __len__(self) -> int:
        return len(self._shards)


def roll_hashes(tokens: np.ndarray, n: int, base: int = HASH_BASE) -> np.ndarray:
    """Polynomial rolling hash of every length-``n`` window."""
    return kernels.window_hashes(tokens, n, base)


# ---------------------------------------------------------------------------
# shard file IO
# ---------------------------------------------------------------------------

_TOK_HEADER = struct.Struct("<8sIQ")


def write_token_shard(path: str | Path, tokens: np.ndarray, boundaries: np.ndarray, vocab_hash: int) -> None:
    tokens = np.ascontiguousarray(tokens, dtype="<u4")
    boundaries = np.ascontiguousarray(boundaries, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(_TOK_HEADER.pack(TOK_MAGIC, vocab_hash, tokens.shape[0]))
        fh.write(tokens.tobytes())
        fh.write(struct.pack("<Q", boundaries.shape[0]))
        fh.write(boundaries.tobytes())


def read_token_shard(path: str | Path) -> tuple[np.ndarray, np.ndarray, int]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ShardReadError(f"{path}: {exc}") from None
    if len(blob) < _TOK_HEADER.size or blob[:8] != TOK_MAGIC:
        raise ShardReadError(f"{path}: not a CTAMTOK1 shard")
    _, vocab_hash, count = _TOK_HEADER.unpack_from(blob)
    pos = _TOK_HEADER.size
    end_tokens = pos + 4 * count
    if len(blob) < end_tokens + 8:
        raise ShardReadError(f"{path}: truncated token payload")
    tokens = np.frombuffer(blob, dtype="<u4", count=count, offset=pos).astype(np.uint32)
    (n_bounds,) = struct.unpack_from("<Q", blob, end_tokens)
    if len(blob) != end_tokens + 8 + 8 * n_bounds:
        raise ShardReadError(f"{path}: truncated boundary payload")
    bounds = np.frombuffer(blob, dtype="<u8", count=n_bounds, offset=end_tokens + 8).astype(np.uint64)
    return tokens, bounds, vocab_hash


_UNESCAPE = re.compile(r"\\(.)")


def _unescape_doc(line: str) -> str:
    return _UNESCAPE.sub(lambda m: "\n" if m.group(1) == "n" else m.group(1), line)


def escape_doc(doc: str) -> str:
    return doc.replace("\\", "\\\\").replace("\n", "\\n")


def iter_documents(path: str | Path) -> Iterator[str]:
    """Documents of a raw text shard: one per line, escapes resolved."""
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                yield _unescape_doc(line.rstrip("\n"))
    except UnicodeDecodeError as exc:
        raise ShardReadError(f"{path}: not valid UTF-8: {exc}") from None
    except OSError as exc:
        raise ShardReadError(f"{path}: {exc}") from None


def tokenize_text_shard(
    path: str | Path, tokenizer: Tokenizer, mode: NormalizationMode
) -> tuple[np.ndarray, np.ndarray]:
    """Tokenize one raw text shard; documents that tokenize to nothing are dropped."""
    parts: list[np.ndarray] = []
    bounds: list[int] = []
    total = 0
    for lineno, doc in enumerate(iter_documents(path), start=1):
        text = normalize(doc) if mode.enabled else doc
        try:
            toks = tokenizer.token(text)
        except Exception as exc:
            raise ShardReadError(f"{path} line {lineno}: {exc}") from None
        if toks.shape[0] == 0:
            continue
        parts.append(toks)
        total += int(toks.shape[0])
        bounds.append(total)
    tokens = np.concatenate(parts) if parts else np.empty(0, dtype=np.uint32)
    return tokens, np.asarray(bounds, dtype=np.uint64)


# ---------------------------------------------------------------------------
# index build / query / serialization
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class NGramIndex:
    """hash -> (corpus frequency, first postings) over all corpus n-grams.

    Entries live in hash-sorted parallel arrays so lookup is a binary
    search and serialization is canonical.
    """

    n: int
    base: int
    modulus: int
    hashes: np.ndarray  # u64, sorted ascending
    counts: np.ndarray  # u64
    post_len: np.ndarray  # u8
    post_start: np.ndarray  # i64, offsets into the posting arrays
    post_shard: np.ndarray  # u32
    post_offset: np.ndarray  # u64

    @property
    def entry_count(self) -> int:
        return int(self.hashes.shape[0])

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())

    def counts_for(self, hashes: np.ndarray) -> np.ndarray:
        """Corpus frequency of each query hash (0 when absent)."""
        if self.entry_count == 0 or hashes.shape[0] == 0:
            return np.zeros(hashes.shape[0], dtype=np.uint64)
        pos = np.searchsorted(self.hashes, hashes)
        pos_c = np.minimum(pos, self.entry_count - 1)
        hit = self.hashes[pos_c] == hashes
        out = np.zeros(hashes.shape[0], dtype=np.uint64)
        out[hit] = self.counts[pos_c[hit]]
        return out

    def lookup(self, h: int, mincount: int = 1) -> tuple[int, list[tuple[int, int]]] | None:
        """Entry for ``h`` iff present with corpus frequency >= ``mincount``."""
        pos = int(np.searchsorted(self.hashes, np.uint64(h)))
        if pos >= self.entry_count or int(self.hashes[pos]) != int(h):
            return None
        count = int(self.counts[pos])
        if count < mincount:
            return None
        s = int(self.post_start[pos])
        k = int(self.post_len[pos])
        postings = [
            (int(self.post_shard[s + j]), int(self.post_offset[s + j])) for j in range(k)
        ]
        return count, postings

    def save(self, path: str | Path) -> None:
        n_entries = self.entry_count
        post_total = int(self.post_len.astype(np.int64).sum())
        header = struct.pack("<8sIQQQ", IDX_MAGIC, self.n, self.base, self.modulus, n_entries)
        body = np.zeros(17 * n_entries + 12 * post_total, dtype=np.uint8)
        if n_entries:
            lens = self.post_len.astype(np.int64)
            entry_off = 17 * np.arange(n_entries, dtype=np.int64)
            entry_off[1:] += 12 * np.cumsum(lens)[:-1]
            byte_idx = entry_off[:, None]
            body[byte_idx + np.arange(8)] = self.hashes.astype("<u8").view(np.uint8).reshape(-1, 8)
            body[byte_idx + np.arange(8, 16)] = self.counts.astype("<u8").view(np.uint8).reshape(-1, 8)
            body[entry_off + 16] = self.post_len
            if post_total:
                owner = np.repeat(np.arange(n_entries, dtype=np.int64), lens)
                within = np.arange(post_total, dtype=np.int64) - np.repeat(
                    np.cumsum(lens) - lens, lens
                )
                post_off = entry_off[owner] + 17 + 12 * within
                body[post_off[:, None] + np.arange(4)] = (
                    self.post_shard.astype("<u4").view(np.uint8).reshape(-1, 4)
                )
                body[post_off[:, None] + np.arange(4, 12)] = (
                    self.post_offset.astype("<u8").view(np.uint8).reshape(-1, 8)
                )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "NGramIndex":
        blob = Path(path).read_bytes()
        head = struct.Struct("<8sIQQQ")
        if len(blob) < head.size or blob[:8] != IDX_MAGIC:
            raise ShardReadError(f"{path}: not a CTAMIDX1 index")
        _, n, base, modulus, n_entries = head.unpack_from(blob)
        body = np.frombuffer(blob, dtype=np.uint8, offset=head.size)
        if n_entries == 0:
            return cls(n=n, base=base, modulus=modulus, **_empty_columns())
        entry_off, lens = kernels.scan_index_layout(body, n_entries)
        if entry_off[-1] < 0 or entry_off[-1] + 17 + 12 * lens[-1] != body.shape[0]:
            raise ShardReadError(f"{path}: truncated index body")
        hashes = body[entry_off[:, None] + np.arange(8)].reshape(-1).view("<u8").astype(np.uint64)
        counts = body[entry_off[:, None] + np.arange(8, 16)].reshape(-1).view("<u8").astype(np.uint64)
        post_len = body[entry_off + 16].astype(np.uint8)
        post_total = int(lens.sum())
        post_start = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(np.int64)
        if post_total:
            owner = np.repeat(np.arange(n_entries, dtype=np.int64), lens)
            within = np.arange(post_total, dtype=np.int64) - np.repeat(post_start, lens)
            post_off = entry_off[owner] + 17 + 12 * within
            post_shard = body[post_off[:, None] + np.arange(4)].reshape(-1).view("<u4").astype(np.uint32)
            post_offset = body[post_off[:, None] + np.arange(4, 12)].reshape(-1).view("<u8").astype(np.uint64)
        else:
            post_shard = np.empty(0, dtype=np.uint32)
            post_offset = np.empty(0, dtype=np.uint64)
        return cls(
            n=n,
            base=base,
            modulus=modulus,
            hashes=hashes,
            counts=counts,
            post_len=post_len,
            post_start=post_start,
            post_shard=post_shard,
            post_offset=post_offset,
        )


def _empty_columns() -> dict:
    return dict(
        hashes=np.empty(0, dtype=np.uint64),
        counts=np.empty(0, dtype=np.uint64),
        post_len=np.empty(0, dtype=np.uint8),
        post_start=np.empty(0, dtype=np.int64),
        post_shard=np.empty(0, dtype=np.uint32),
        post_offset=np.empty(0, dtype=np.uint64),
    )


def _shard_windows(shard: CorpusShard, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    starts = shard.window_starts(n)
    if starts.shape[0] == 0:
        return (
            np.empty(0, dtype=np.uint64),
            np.empty(0, dtype=np.uint32),
            np.empty(0, dtype=np.uint64),
        )
    hashes = roll_hashes(shard.tokens, n)[starts]
    shard_ids = np.full(starts.shape[0], shard.shard_id, dtype=np.uint32)
    return hashes, shard_ids, starts.astype(np.uint64)


def build_index(
    shards: Iterable[CorpusShard],
    n: int,
    *,
    postings_cap: int = POSTINGS_CAP,
    threads: int = 1,
) -> NGramIndex:
    """Index every n-gram window that does not cross a document boundary.

    Shards may be hashed in parallel; the final sort by (hash, shard_id,
    offset) makes the result independent of shard processing order.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    shard_list = sorted(shards, key=lambda s: s.shard_id)
    if threads > 1 and len(shard_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: _shard_windows(s, n), shard_list))
    else:
        parts = [_shard_windows(s, n) for s in shard_list]
    if not parts:
        return NGramIndex(n=n, base=HASH_BASE, modulus=HASH_MODULUS, **_empty_columns())
    hashes = np.concatenate([p[0] for p in parts])
    shard_ids = np.concatenate([p[1] for p in parts])
    offsets = np.concatenate([p[2] for p in parts])
    if hashes.shape[0] == 0:
        return NGramIndex(n=n, base=HASH_BASE, modulus=HASH_MODULUS, **_empty_columns())

    order = np.lexsort((offsets, shard_ids, hashes))
    hashes = hashes[order]
    shard_ids = shard_ids[order]
    offsets = offsets[order]

    group_start = np.flatnonzero(np.concatenate([[True], hashes[1:] != hashes[:-1]]))
    uniq = hashes[group_start]
    counts = np.diff(np.concatenate([group_start, [hashes.shape[0]]]))
    within = np.arange(hashes.shape[0], dtype=np.int64) - np.repeat(group_start, counts)
    keep = within < postings_cap
    post_len = np.minimum(counts, postings_cap).astype(np.uint8)
    post_start = np.concatenate([[0], np.cumsum(post_len.astype(np.int64))[:-1]]).astype(np.int64)
    return NGramIndex(
        n=n,
        base=HASH_BASE,
        modulus=HASH_MODULUS,
        hashes=uniq,
        counts=counts.astype(np.uint64),
        post_len=post_len,
        post_start=post_start,
        post_shard=shard_ids[keep],
        post_offset=offsets[keep],
    )


def lookup(index: NGramIndex, h: int, mincount: int = 1):
    """Functional form of :meth:`NGramIndex.lookup`."""
    return index.lookup(h, mincount)
