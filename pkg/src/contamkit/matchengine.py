"""Seed matching and left/right extension into maximal contaminated spans.

Seeds are exact n-token windows of a sample found in the corpus via hash
lookup; each seed is extended against the corpus context of each of its
postings, tolerating up to ``skip_budget`` token substitutions per span.
Extension is greedy and deterministic: right to exhaustion, trim the right
edge back to an exact match (budget spent past the last match is refunded,
since spans never end on a substitution), then left with the remainder,
then trim the left edge. Insertions/deletions are never bridged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .corpusindex import NGramIndex, ShardStore, roll_hashes
from .textprep import TokenizedSample

SKIP_BUDGET_GRID = (0, 1, 2, 3, 4, 5)


class Location(str, Enum):
    QUESTION = "question"
    ANSWER = "answer"
    CROSS_BOUNDARY = "cross_boundary"


@dataclass(frozen=True, order=True)
class MatchSpan:
    """A contaminated token interval ``[start, end)`` of a sample.

    ``source`` is the (shard_id, corpus offset) of the corpus window aligned
    with ``start``. ``skip_positions`` are the sample offsets of substituted
    tokens; span edges are always exact matches.
    """

    start: int
    end: int
    source: tuple[int, int]
    skip_positions: tuple[int, ...] = field(default=())

    @property
    def skips_used(self) -> int:
        return len(self.skip_positions)

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class SpanSet:
    """Deduplicated spans of one sample, sorted by start offset."""

    spans: list[MatchSpan]

    def __iter__(self):
        return iter(self.spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __bool__(self) -> bool:
        return bool(self.spans)


def dedup_spans(spans: Iterable[MatchSpan]) -> list[MatchSpan]:
    """Drop spans equal to or fully contained in another span."""
    ordered = sorted(spans, key=lambda s: (s.start, -s.end, s.source))
    kept: list[MatchSpan] = []
    max_end = -1
    for span in ordered:
        if span.end <= max_end:
            continue
        kept.append(span)
        max_end = span.end
    return kept


def find_seeds(
    sample: TokenizedSample, index: NGramIndex, mincount: int = 1
) -> list[tuple[int, list[tuple[int, int]]]]:
    """Sample offsets whose n-gram hash clears the mincount filter, with postings."""
    tokens = sample.full_tokens
    if tokens.shape[0] < index.n:
        return []
    hashes = roll_hashes(tokens, index.n, index.base)
    counts = index.counts_for(hashes)
    seeds = []
    for off in np.flatnonzero(counts >= np.uint64(max(1, mincount))):
        entry = index.lookup(int(hashes[off]), mincount)
        if entry is not None:
            seeds.append((int(off), entry[1]))
    return seeds


def extend_seed(
    sample: TokenizedSample,
    sample_offset: int,
    store: ShardStore,
    shard_id: int,
    corpus_offset: int,
    n: int,
    budget: int,
) -> MatchSpan | None:
    """Extend one verified seed against one corpus posting.

    Returns None when the posting is a hash collision (the corpus window
    does not equal the sample window token-for-token).
    """
    shard = store.shard(shard_id)
    doc_lo, doc_hi = shard.doc_bounds_at(corpus_offset)
    tokens = sample.full_tokens
    corpus = shard.tokens
    if not np.array_equal(tokens[sample_offset : sample_offset + n], corpus[corpus_offset : corpus_offset + n]):
        return None
    start, end = kernels.extend_match(
        tokens,
        sample_offset,
        corpus,
        corpus_offset,
        n,
        budget,
        0,
        tokens.shape[0],
        doc_lo,
        doc_hi,
    )
    c_start = corpus_offset - (sample_offset - start)
    aligned = corpus[c_start : c_start + (end - start)]
    mism = np.flatnonzero(tokens[start:end] != aligned)
    return MatchSpan(
        start=start,
        end=end,
        source=(shard_id, c_start),
        skip_positions=tuple(int(p) + start for p in mism),
    )


def all_spans(
    sample: TokenizedSample,
    index: NGramIndex,
    store: ShardStore,
    budget: int,
    mincount: int = 1,
) -> SpanSet:
    """Every maximal extended span of a sample, deduplicated and sorted.

    Seeds sharing a diagonal (same shard, same corpus-minus-sample offset)
    at consecutive sample offsets lie in one exact run and extend to the
    same span, so only the first of each run is extended.
    """
    seeds = find_seeds(sample, index, mincount)
    by_diagonal: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for off, postings in seeds:
        for shard_id, c_off in postings:
            by_diagonal.setdefault((shard_id, c_off - off), []).append((off, c_off))
    spans: list[MatchSpan] = []
    for (shard_id, _), pairs in sorted(by_diagonal.items()):
        pairs.sort()
        prev_off = None
        prev_exact = False
        for off, c_off in pairs:
            if prev_exact and off == prev_off + 1:
                prev_off = off
                continue
            span = extend_seed(sample, off, store, shard_id, c_off, index.n, budget)
            prev_off = off
            prev_exact = span is not None
            if span is not None:
                spans.append(span)
    return SpanSet(dedup_spans(spans))


def longest_span(spans: SpanSet) -> MatchSpan | None:
    """The longest span; ties break toward the smallest start offset."""
    if not spans:
        return None
    return max(spans, key=lambda s: (s.length, -s.start))


def classify_location(span: MatchSpan, sample: TokenizedSample) -> Location:
    """Which side of the prompt/answer boundary a span falls on."""
    boundary = sample.boundary_index
    if span.end <= boundary:
        return Location.QUESTION
    if span.start >= boundary:
        return Location.ANSWER
    return Location.CROSS_BOUNDARY


def write_span_dump(
    path: str | Path, entries: Sequence[tuple[TokenizedSample, SpanSet]]
) -> None:
    """Debug dump: one JSON line per span."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample, spans in entries:
            for span in spans:
                fh.write(
                    json.dumps(
                        {
                            "sample_id": sample.sample_id,
                            "start": span.start,
                            "end": span.end,
                            "skips": span.skips_used,
                            "shard": span.source[0],
                            "offset": span.source[1],
                            "location": classify_location(span, sample).value,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
