"""The four contamination scores in [0, 1] per sample and parameter setting.

=================  =============  ========================  ==============
metric             normalisation  search                    score
=================  =============  ========================  ==============
``token_match``    yes            n-gram hash lookup        covered tokens / sample tokens
``ngram_match``    yes            n-gram hash lookup        matching windows / sample windows
``token_extend``   no             seed + extend             covered tokens / sample tokens
``longest_match``  no             seed + extend             longest span / sample tokens
=================  =============  ========================  ==============

The hash metrics take a ``mincount`` corpus-frequency filter; the extend
metrics take a ``skip_budget``. Extend metrics at n > 8 are computed
post-hoc from the n=8 span set by discarding spans shorter than n, so a
single seed index serves the whole n sweep.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpusindex import MINCOUNT_GRID, NGramIndex, ShardStore
from .errors import EmptySample, MissingIndex
from .matchengine import (
    SKIP_BUDGET_GRID,
    Location,
    MatchSpan,
    SpanSet,
    all_spans,
    classify_location,
    longest_span,
    roll_hashes,
)
from .textprep import TokenizedSample

N_GRID = (8, 10, 13, 20)
SEED_N = 8

LOCATION_FULL = "full"
LOCATION_FILTERS = (LOCATION_FULL,) + tuple(loc.value for loc in Location)


class Metric(str, Enum):
    TOKEN_MATCH = "token_match"
    NGRAM_MATCH = "ngram_match"
    TOKEN_EXTEND = "token_extend"
    LONGEST_MATCH = "longest_match"

    @property
    def uses_mincount(self) -> bool:
        return self in (Metric.TOKEN_MATCH, Metric.NGRAM_MATCH)

    @property
    def uses_skip_budget(self) -> bool:
        return self in (Metric.TOKEN_EXTEND, Metric.LONGEST_MATCH)

    @property
    def normalized(self) -> bool:
        # Table-1 pairing: the hash metrics compare normalized text, the
        # extend metrics compare raw text.
        return self.uses_mincount


@dataclass(frozen=True)
class MetricParams:
    """One cell of the hyperparameter grid."""

    metric: Metric
    n: int = SEED_N
    mincount: int | None = None
    skip_budget: int | None = None
    location: str = LOCATION_FULL

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.metric.uses_mincount:
            if self.mincount is None:
                object.__setattr__(self, "mincount", 1)
            if self.mincount < 1:
                raise ValueError(f"mincount must be >= 1, got {self.mincount}")
            if self.skip_budget is not None:
                raise ValueError(f"{self.metric.value} does not take a skip budget")
        else:
            if self.skip_budget is None:
                object.__setattr__(self, "skip_budget", 0)
            if self.skip_budget < 0:
                raise ValueError(f"skip budget must be >= 0, got {self.skip_budget}")
            if self.mincount is not None:
                raise ValueError(f"{self.metric.value} does not take a mincount")
        if self.location not in LOCATION_FILTERS:
            raise ValueError(f"unknown location filter {self.location!r}")

    @property
    def normalized(self) -> bool:
        """Normalization is forced by the metric, never chosen independently."""
        return self.metric.normalized

    def key(self) -> tuple:
        return (
            self.metric.value,
            self.n,
            -1 if self.mincount is None else self.mincount,
            -1 if self.skip_budget is None else self.skip_budget,
            self.location,
        )

    def label(self) -> str:
        bits = [f"n={self.n}"]
        if self.mincount is not None:
            bits.append(f"mincount={self.mincount}")
        if self.skip_budget is not None:
            bits.append(f"skip={self.skip_budget}")
        if self.location != LOCATION_FULL:
            bits.append(f"loc={self.location}")
        return f"{self.metric.value}({','.join(bits)})"


@dataclass(eq=False)
class ContaminationScore:
    sample_id: str
    params: MetricParams
    score: float
    evidence: SpanSet | np.ndarray | None
    longest_len: int | None = None


def default_grid(location: str = LOCATION_FULL) -> list[MetricParams]:
    """The paper-style sweep: hash metrics over n x mincount, extend metrics over n x skip."""
    grid = []
    for metric in (Metric.TOKEN_MATCH, Metric.NGRAM_MATCH):
        for n in N_GRID:
            for mc in MINCOUNT_GRID:
                grid.append(MetricParams(metric=metric, n=n, mincount=mc, location=location))
    for metric in (Metric.TOKEN_EXTEND, Metric.LONGEST_MATCH):
        for n in N_GRID:
            for sb in SKIP_BUDGET_GRID:
                grid.append(MetricParams(metric=metric, n=n, skip_budget=sb, location=location))
    return grid


# ---------------------------------------------------------------------------
# scoring internals
# ---------------------------------------------------------------------------


def _window_location_mask(offsets: np.ndarray, n: int, boundary: int, location: str) -> np.ndarray:
    if location == LOCATION_FULL:
        return np.ones(offsets.shape[0], dtype=bool)
    ends = offsets + n
    if location == Location.QUESTION.value:
        return ends <= boundary
    if location == Location.ANSWER.value:
        return offsets >= boundary
    return (offsets < boundary) & (ends > boundary)


def _coverage(starts: np.ndarray, ends: np.ndarray, length: int) -> tuple[int, int]:
    """Covered-token count and the longest covered run for a set of intervals."""
    if starts.shape[0] == 0:
        return 0, 0
    delta = np.zeros(length + 1, dtype=np.int64)
    np.add.at(delta, starts, 1)
    np.add.at(delta, ends, -1)
    covered = np.cumsum(delta[:-1]) > 0
    total = int(covered.sum())
    if total == 0:
        return 0, 0
    edges = np.diff(np.concatenate([[0], covered.astype(np.int8), [0]]))
    run_starts = np.flatnonzero(edges == 1)
    run_ends = np.flatnonzero(edges == -1)
    return total, int((run_ends - run_starts).max())


def _matched_window_offsets(
    sample: TokenizedSample, index: NGramIndex, mincount: int
) -> np.ndarray:
    tokens = sample.full_tokens
    if tokens.shape[0] < index.n:
        return np.empty(0, dtype=np.int64)
    hashes = roll_hashes(tokens, index.n, index.base)
    counts = index.counts_for(hashes)
    return np.flatnonzero(counts >= np.uint64(mincount))


def _require_tokens(sample: TokenizedSample) -> int:
    length = int(sample.full_tokens.shape[0])
    if length == 0:
        raise EmptySample(f"sample {sample.sample_id!r} has no tokens")
    return length


def score_token_match(sample: TokenizedSample, index: NGramIndex, params: MetricParams) -> ContaminationScore:
    """Fraction of sample tokens covered by any matching n-gram window.

    Expects the normalized tokenization of the sample and an index built
    over the normalized corpus with ``index.n == params.n``.
    """
    length = _require_tokens(sample)
    offsets = _matched_window_offsets(sample, index, params.mincount)
    offsets = offsets[_window_location_mask(offsets, params.n, sample.boundary_index, params.location)]
    covered, longest = _coverage(offsets, offsets + params.n, length)
    return ContaminationScore(
        sample_id=sample.sample_id,
        params=params,
        score=covered / length,
        evidence=offsets,
        longest_len=longest,
    )


def score_ngram_match(sample: TokenizedSample, index: NGramIndex, params: MetricParams) -> ContaminationScore:
    """Fraction of the sample's n-gram windows that occur in the corpus."""
    length = _require_tokens(sample)
    total = length - params.n + 1
    offsets = _matched_window_offsets(sample, index, params.mincount)
    offsets = offsets[_window_location_mask(offsets, params.n, sample.boundary_index, params.location)]
    _, longest = _coverage(offsets, offsets + params.n, length)
    score = offsets.shape[0] / total if total > 0 else 0.0
    return ContaminationScore(
        sample_id=sample.sample_id,
        params=params,
        score=score,
        evidence=offsets,
        longest_len=longest,
    )


def _filter_spans(spans: SpanSet, sample: TokenizedSample, params: MetricParams) -> list[MatchSpan]:
    out = []
    for span in spans:
        if span.length < params.n:
            continue
        if params.location != LOCATION_FULL and classify_location(span, sample).value != params.location:
            continue
        out.append(span)
    return out


def _score_spans(
    sample: TokenizedSample, spans: SpanSet, params: MetricParams
) -> ContaminationScore:
    length = _require_tokens(sample)
    kept = _filter_spans(spans, sample, params)
    if params.metric is Metric.LONGEST_MATCH:
        best = longest_span(SpanSet(kept))
        score = best.length / length if best else 0.0
        longest = best.length if best else 0
    else:
        starts = np.asarray([s.start for s in kept], dtype=np.int64)
        ends = np.asarray([s.end for s in kept], dtype=np.int64)
        covered, _ = _coverage(starts, ends, length)
        score = covered / length
        longest = max((s.length for s in kept), default=0)
    return ContaminationScore(
        sample_id=sample.sample_id,
        params=params,
        score=score,
        evidence=SpanSet(kept),
        longest_len=longest,
    )


def score_token_extend(
    sample: TokenizedSample,
    index: NGramIndex,
    store: ShardStore,
    params: MetricParams,
) -> ContaminationScore:
    """Fraction of sample tokens covered by extended spans of length >= n."""
    if params.n < index.n:
        raise MissingIndex(f"extend metrics need seed length <= n; index n={index.n}, params n={params.n}")
    _require_tokens(sample)
    spans = all_spans(sample, index, store, params.skip_budget)
    return _score_spans(sample, spans, params)


def score_longest_match(
    sample: TokenizedSample,
    index: NGramIndex,
    store: ShardStore,
    params: MetricParams,
) -> ContaminationScore:
    """Length of the single longest extended span over the sample length."""
    if params.n < index.n:
        raise MissingIndex(f"extend metrics need seed length <= n; index n={index.n}, params n={params.n}")
    _require_tokens(sample)
    spans = all_spans(sample, index, store, params.skip_budget)
    return _score_spans(sample, spans, params)


# ---------------------------------------------------------------------------
# grid driver
# ---------------------------------------------------------------------------

IndexProvider = Callable[[str, int], NGramIndex]
"""(mode, n) -> index, where mode is "raw" or "norm"; raises MissingIndex."""


def _score_one_sample(
    raw: TokenizedSample,
    norm: TokenizedSample,
    index_for: IndexProvider,
    store: ShardStore | None,
    grid: Sequence[MetricParams],
    seed_n: int,
) -> list[ContaminationScore]:
    span_cache: dict[int, SpanSet] = {}
    count_cache: dict[int, np.ndarray] = {}
    rows = []
    for params in grid:
        if params.metric.uses_mincount:
            if params.n not in count_cache:
                index = index_for("norm", params.n)
                tokens = norm.full_tokens
                if tokens.shape[0] < params.n:
                    count_cache[params.n] = np.empty(0, dtype=np.uint64)
                else:
                    count_cache[params.n] = index.counts_for(
                        roll_hashes(tokens, params.n, index.base)
                    )
            offsets = np.flatnonzero(count_cache[params.n] >= np.uint64(params.mincount))
            offsets = offsets[
                _window_location_mask(offsets, params.n, norm.boundary_index, params.location)
            ]
            length = _require_tokens(norm)
            covered, longest = _coverage(offsets, offsets + params.n, length)
            if params.metric is Metric.TOKEN_MATCH:
                score = covered / length
            else:
                total = length - params.n + 1
                score = offsets.shape[0] / total if total > 0 else 0.0
            rows.append(
                ContaminationScore(
                    sample_id=norm.sample_id,
                    params=params,
                    score=score,
                    evidence=offsets,
                    longest_len=longest,
                )
            )
        else:
            if params.n < seed_n:
                raise MissingIndex(
                    f"extend metrics run post-hoc from the n={seed_n} span set; got n={params.n}"
                )
            if store is None:
                raise MissingIndex("extend metrics need the raw tokenized corpus for context reads")
            if params.skip_budget not in span_cache:
                index = index_for("raw", seed_n)
                span_cache[params.skip_budget] = all_spans(raw, index, store, params.skip_budget)
            rows.append(_score_spans(raw, span_cache[params.skip_budget], params))
    return rows


def score_grid(
    samples_raw: Sequence[TokenizedSample],
    samples_norm: Sequence[TokenizedSample],
    index_for: IndexProvider,
    store: ShardStore | None,
    grid: Sequence[MetricParams],
    *,
    seed_n: int = SEED_N,
    threads: int = 1,
) -> list[ContaminationScore]:
    """One score per (sample, params), deterministic and stably sorted.

    ``samples_raw`` and ``samples_norm`` are index-aligned views of the same
    benchmark. Samples are scored independently (optionally in parallel);
    output order is (sample_id, params) regardless of thread count.
    """
    if len(samples_raw) != len(samples_norm):
        raise ValueError("raw/norm sample lists must be aligned")
    work = list(zip(samples_raw, samples_norm))

    def run(pair: tuple[TokenizedSample, TokenizedSample]) -> list[ContaminationScore]:
        return _score_one_sample(pair[0], pair[1], index_for, store, grid, seed_n)

    if threads > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, work))
    else:
        chunks = [run(pair) for pair in work]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.sample_id, r.params.key()))
    return rows


def params_for_posthoc(params: MetricParams, n: int) -> MetricParams:
    """The same metric cell at a different n (used by the post-hoc sweep)."""
    return replace(params, n=n)
