import json

import numpy as np
import pytest

from contamkit.corpusindex import ShardStore, build_index
from contamkit.matchengine import (
    Location,
    MatchSpan,
    SpanSet,
    all_spans,
    classify_location,
    dedup_spans,
    extend_seed,
    find_seeds,
    longest_span,
    write_span_dump,
)
from contamkit.synthoracle import brute_force_spans_store

from conftest import make_sample, make_shard


def naive_seed_offsets(sample_tokens, shards, n):
    """Oracle: O(S*C) scan for exact n-token windows present in the corpus."""
    hits = []
    for i in range(len(sample_tokens) - n + 1):
        window = sample_tokens[i : i + n]
        found = False
        for shard in shards:
            prev = 0
            for bound in shard.doc_boundaries:
                doc = shard.tokens[prev : int(bound)]
                for j in range(len(doc) - n + 1):
                    if np.array_equal(window, doc[j : j + n]):
                        found = True
                prev = int(bound)
        if found:
            hits.append(i)
    return hits


def spans_as_intervals(spans):
    return sorted((s.start, s.end) for s in spans)


def test_find_seeds_full_overlap():
    tokens = np.arange(100, 120, dtype=np.uint32)
    shard = make_shard(tokens)
    index = build_index([shard], 8)
    sample = make_sample(tokens)
    seeds = find_seeds(sample, index)
    assert [off for off, _ in seeds] == list(range(13))  # 20 - 8 + 1
    assert all(postings == [(0, off)] for off, postings in seeds)


def test_find_seeds_no_overlap():
    shard = make_shard(np.arange(0, 50, dtype=np.uint32))
    index = build_index([shard], 8)
    sample = make_sample(np.arange(1000, 1020, dtype=np.uint32))
    assert find_seeds(sample, index) == []


def test_find_seeds_matches_naive_scan():
    rng = np.random.default_rng(9)
    for trial in range(10):
        shards = [
            make_shard(rng.integers(0, 30, size=80, dtype=np.uint32), [40, 80], shard_id=i)
            for i in range(2)
        ]
        sample_tokens = rng.integers(0, 30, size=30, dtype=np.uint32)
        # plant one exact window so there is usually something to find
        shards[0].tokens[5:13] = sample_tokens[10:18]
        index = build_index(shards, 8)
        sample = make_sample(sample_tokens)
        got = [off for off, _ in find_seeds(sample, index)]
        assert got == naive_seed_offsets(sample_tokens, shards, 8)


def test_extend_crosses_substitution_only_with_budget(planted_world):
    # the "[84] cars and 73 motorcycles" shape: one substituted token stops
    # a zero-budget extension and is crossed once a skip is available
    sample = planted_world["sample"]
    store = planted_world["store"]
    index = planted_world["index"]
    sub = planted_world["substitution"]
    lo, hi = planted_world["plant"]
    spans0 = all_spans(sample, index, store, budget=0)
    assert spans_as_intervals(spans0) == [(sub + 1, hi)]
    spans1 = all_spans(sample, index, store, budget=1)
    assert spans_as_intervals(spans1) == [(lo, hi)]
    assert spans1.spans[0].skip_positions == (sub,)


def test_extend_seed_rejects_hash_collision_shaped_mismatch(planted_world):
    # a seed whose corpus window differs token-for-token is dropped
    sample = planted_world["sample"]
    store = planted_world["store"]
    assert extend_seed(sample, 0, store, 0, 400, 8, 0) is None


def test_extend_pure_extension_no_skips():
    rng = np.random.default_rng(10)
    corpus = rng.integers(0, 10_000, size=200, dtype=np.uint32)
    sample_tokens = rng.integers(10_000, 20_000, size=16, dtype=np.uint32)
    corpus[50:62] = sample_tokens[2:14]  # 12-token verbatim region
    shard = make_shard(corpus)
    store = ShardStore([shard])
    index = build_index([shard], 8)
    spans = all_spans(make_sample(sample_tokens), index, store, budget=0)
    assert spans_as_intervals(spans) == [(2, 14)]
    assert spans.spans[0].skips_used == 0


def test_extension_monotone_in_budget():
    rng = np.random.default_rng(11)
    for trial in range(20):
        corpus = rng.integers(0, 40, size=300, dtype=np.uint32)
        sample_tokens = rng.integers(0, 40, size=40, dtype=np.uint32)
        pos = int(rng.integers(0, 290))
        corpus[pos : pos + 10] = sample_tokens[5:15]
        shard = make_shard(corpus)
        store = ShardStore([shard])
        index = build_index([shard], 8)
        sample = make_sample(sample_tokens)
        prev = {}
        for budget in range(6):
            spans = {s.source: (s.start, s.end) for s in all_spans(sample, index, store, budget)}
            for source, (start, end) in prev.items():
                # the span from the same alignment only grows
                grown = [s for s in spans.values() if s[0] <= start and end <= s[1]]
                assert grown, (trial, budget, source)
            prev = spans


def test_spans_match_corpus_window_outside_skips():
    rng = np.random.default_rng(12)
    corpus = rng.integers(0, 1000, size=400, dtype=np.uint32)
    sample_tokens = rng.integers(0, 1000, size=50, dtype=np.uint32)
    span = sample_tokens[10:40].copy()
    span[7] = (span[7] + 1) % 1000
    span[19] = (span[19] + 3) % 1000
    corpus[200:230] = span
    shard = make_shard(corpus)
    store = ShardStore([shard])
    index = build_index([shard], 8)
    sample = make_sample(sample_tokens)
    for budget in (2, 5):
        for s in all_spans(sample, index, store, budget):
            shard_id, c_start = s.source
            window = store.read_context(shard_id, c_start, 0, s.length)
            diff = np.flatnonzero(sample_tokens[s.start : s.end] != window)
            assert tuple(int(d) + s.start for d in diff) == s.skip_positions
            assert s.skips_used <= budget
            # edges are exact matches
            assert s.start not in s.skip_positions
            assert (s.end - 1) not in s.skip_positions


def test_all_spans_two_disjoint_plants():
    rng = np.random.default_rng(13)
    corpus = rng.integers(0, 100_000, size=300, dtype=np.uint32)
    sample_tokens = rng.integers(0, 100_000, size=30, dtype=np.uint32)
    corpus[40:48] = sample_tokens[0:8]
    corpus[200:210] = sample_tokens[15:25]
    shard = make_shard(corpus)
    index = build_index([shard], 8)
    spans = all_spans(make_sample(sample_tokens), index, ShardStore([shard]), 0)
    assert spans_as_intervals(spans) == [(0, 8), (15, 25)]


def test_all_spans_empty_when_no_seeds():
    shard = make_shard(np.arange(100, dtype=np.uint32))
    index = build_index([shard], 8)
    sample = make_sample(np.arange(5000, 5020, dtype=np.uint32))
    assert len(all_spans(sample, index, ShardStore([shard]), 3)) == 0


def test_all_spans_contiguous_region_dedups_to_single_span():
    rng = np.random.default_rng(14)
    corpus = rng.integers(0, 100_000, size=200, dtype=np.uint32)
    sample_tokens = rng.integers(0, 100_000, size=24, dtype=np.uint32)
    corpus[100:124] = sample_tokens  # the whole sample, giving 17 overlapping seeds
    shard = make_shard(corpus)
    index = build_index([shard], 8)
    spans = all_spans(make_sample(sample_tokens), index, ShardStore([shard]), 0)
    assert spans_as_intervals(spans) == [(0, 24)]


def test_all_spans_budget0_matches_brute_force_common_substrings():
    rng = np.random.default_rng(15)
    for trial in range(15):
        corpus = rng.integers(0, 25, size=250, dtype=np.uint32)
        sample_tokens = rng.integers(0, 25, size=40, dtype=np.uint32)
        pos = int(rng.integers(0, 240))
        corpus[pos : pos + 9] = sample_tokens[20:29]
        shard = make_shard(corpus, boundaries=[125, 250])
        index = build_index([shard], 8)
        store = ShardStore([shard])
        sample = make_sample(sample_tokens)
        for budget in (0, 3):
            engine = all_spans(sample, index, store, budget)
            oracle = dedup_spans(brute_force_spans_store(sample_tokens, [shard], 8, budget))
            assert spans_as_intervals(engine) == spans_as_intervals(oracle), (trial, budget)


def test_longest_span_selection():
    mk = lambda s, e: MatchSpan(start=s, end=e, source=(0, 0))
    spans = SpanSet([mk(0, 8), mk(12, 22)])
    assert longest_span(spans).length == 10
    assert longest_span(SpanSet([])) is None
    tie = SpanSet([mk(3, 11), mk(40, 48)])
    assert longest_span(tie).start == 3  # equal length, smaller start wins


def test_classify_location():
    sample = make_sample(np.zeros(20, dtype=np.uint32), boundary=10)
    mk = lambda s, e: MatchSpan(start=s, end=e, source=(0, 0))
    assert classify_location(mk(2, 9), sample) is Location.QUESTION
    assert classify_location(mk(2, 10), sample) is Location.QUESTION
    assert classify_location(mk(10, 19), sample) is Location.ANSWER
    assert classify_location(mk(6, 14), sample) is Location.CROSS_BOUNDARY


def test_dedup_drops_contained_and_duplicate_spans():
    mk = lambda s, e, src=0: MatchSpan(start=s, end=e, source=(0, src))
    spans = [mk(0, 10), mk(2, 8), mk(0, 10, src=5), mk(5, 15), mk(5, 15)]
    kept = dedup_spans(spans)
    assert [(s.start, s.end) for s in kept] == [(0, 10), (5, 15)]
    assert kept[0].source == (0, 0)  # smallest source wins among duplicates


def test_span_dump_format(tmp_path, planted_world):
    sample = planted_world["sample"]
    spans = all_spans(sample, planted_world["index"], planted_world["store"], 1)
    path = tmp_path / "spans.jsonl"
    write_span_dump(path, [(sample, spans)])
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows == [
        {
            "sample_id": "s",
            "start": 10,
            "end": 30,
            "skips": 1,
            "shard": 0,
            "offset": 100,
            "location": "cross_boundary",
        }
    ]
