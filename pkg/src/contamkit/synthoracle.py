"""Synthetic corpora with planted contamination, plus a brute-force matcher.

The generator plants token spans from synthetic benchmark samples into a
random-token corpus (optionally with interior substitutions and multiple
copies) and computes exact ground-truth scores for every metric cell by
brute force. The brute-force matcher enumerates every sample-corpus
alignment directly from token equality -- no hashing, no index -- so it is
an independent oracle for the seed-and-extend engine.

Scores are stored as exact fractions; all randomness comes from a named,
seedable generator (numpy PCG64) recorded in the ground truth.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpusindex import CorpusShard, ShardStore
from .errors import SpecInfeasible, TooLarge
from .matchengine import Location, MatchSpan
from .metrics import LOCATION_FULL, Metric, MetricParams, default_grid
from .textprep import TokenizedSample

RNG_ALGORITHM = "numpy-pcg64"
MAX_PAIRS = 10_000_000
_PLACEMENT_TRIES = 2000


@dataclass(frozen=True)
class PlantedSpan:
    """One contaminated region: a sample span copied into the corpus."""

    sample_id: str
    span_len: int
    n_substitutions: int = 0
    copies_in_corpus: int = 1


@dataclass(frozen=True)
class ScriptedModel:
    """Synthetic per-sample results: contaminated samples score higher."""

    model_id: str = "scripted"
    clean_rate: float = 0.4
    contaminated_boost: float = 0.3
    deterministic: bool = True


@dataclass
class PlantSpec:
    seed: int
    corpus_docs: int = 16
    doc_len: int = 100
    vocab: int = 50_000
    n_samples: int = 4
    sample_len: int = 48
    answer_len: int = 0
    n_shards: int = 1
    planted: list[PlantedSpan] = field(default_factory=list)
    model: ScriptedModel | None = None

    def sample_ids(self) -> list[str]:
        return [f"s{i:04d}" for i in range(self.n_samples)]

    def validate(self) -> None:
        if self.vocab < 2:
            raise SpecInfeasible("vocab must have at least 2 tokens")
        if self.n_samples < 1 or self.sample_len < 1 or self.corpus_docs < 1 or self.doc_len < 1:
            raise SpecInfeasible("corpus and benchmark sizes must be positive")
        if not 0 <= self.answer_len <= self.sample_len:
            raise SpecInfeasible(f"answer_len {self.answer_len} outside [0, {self.sample_len}]")
        if not 1 <= self.n_shards <= self.corpus_docs:
            raise SpecInfeasible(f"n_shards {self.n_shards} outside [1, {self.corpus_docs}]")
        ids = set(self.sample_ids())
        for plant in self.planted:
            if plant.sample_id not in ids:
                raise SpecInfeasible(f"planted sample {plant.sample_id!r} does not exist")
            if plant.span_len < 8:
                raise SpecInfeasible(f"span_len must be >= 8, got {plant.span_len}")
            if plant.span_len > self.sample_len:
                raise SpecInfeasible(f"span_len {plant.span_len} exceeds sample_len {self.sample_len}")
            if plant.span_len > self.doc_len:
                raise SpecInfeasible(f"span_len {plant.span_len} exceeds doc_len {self.doc_len}")
            if plant.copies_in_corpus < 1:
                raise SpecInfeasible("copies_in_corpus must be >= 1")
            if not 0 <= plant.n_substitutions <= max(0, plant.span_len - 2):
                raise SpecInfeasible(
                    f"n_substitutions {plant.n_substitutions} does not fit strictly inside "
                    f"a span of {plant.span_len} tokens"
                )
            if plant.n_substitutions and plant.span_len < plant.n_substitutions + 9:
                # no placement leaves an exact 8-token run, so no n-gram
                # method could ever seed on the plant
                raise SpecInfeasible(
                    f"span of {plant.span_len} tokens with {plant.n_substitutions} substitutions "
                    f"cannot keep a seedable 8-token run"
                )

    def to_json(self) -> dict:
        obj = asdict(self)
        if self.model is None:
            obj.pop("model")
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "PlantSpec":
        planted = [PlantedSpan(**p) for p in obj.get("planted", [])]
        model = ScriptedModel(**obj["model"]) if obj.get("model") else None
        fields = {k: v for k, v in obj.items() if k not in ("planted", "model")}
        return cls(planted=planted, model=model, **fields)


@dataclass
class CopyLocation:
    shard_id: int
    offset: int
    substitutions: tuple[int, ...]  # offsets within the span


@dataclass
class SampleTruth:
    planted: list[tuple[int, int]]
    copies: list[CopyLocation]
    scores: dict[str, Fraction]


@dataclass
class GroundTruth:
    rng_algorithm: str
    samples: dict[str, SampleTruth]

    def score(self, sample_id: str, params: MetricParams) -> Fraction:
        return self.samples[sample_id].scores[params.label()]


@dataclass
class SynthInstance:
    spec: PlantSpec
    shards: list[CorpusShard]
    store: ShardStore
    samples: list[TokenizedSample]
    truth: GroundTruth
    results: dict[str, dict[str, float]] | None


# ---------------------------------------------------------------------------
# brute-force matcher (oracle)
# ---------------------------------------------------------------------------


def _greedy_extend(eq: np.ndarray, run_start: int, n: int, budget: int) -> tuple[int, int]:
    # Same substitution rules as the engine: right to exhaustion, trim the
    # right edge back to a match (refunding the trimmed budget), then left
    # with what remains, then trim the left edge.
    hi = eq.shape[0]
    bud = budget
    j = run_start + n
    while j < hi:
        if not eq[j]:
            if bud == 0:
                break
            bud -= 1
        j += 1
    end = j
    while not eq[end - 1]:
        end -= 1
        bud += 1
    j = run_start - 1
    while j >= 0:
        if not eq[j]:
            if bud == 0:
                break
            bud -= 1
        j -= 1
    start = j + 1
    while not eq[start]:
        start += 1
    return start, end


def brute_force_spans(
    sample_tokens: np.ndarray,
    corpus_tokens: np.ndarray,
    n: int,
    budget: int,
    *,
    shard_id: int = 0,
    corpus_base: int = 0,
) -> list[MatchSpan]:
    """Maximal extended spans from an exhaustive alignment search.

    Enumerates every diagonal of the sample x corpus equality matrix, finds
    exact runs of at least ``n`` tokens, and greedily extends the first seed
    of each run. Desk-scale only; raises TooLarge beyond 10^7 token pairs.
    """
    s_len = int(sample_tokens.shape[0])
    c_len = int(corpus_tokens.shape[0])
    if s_len * c_len > MAX_PAIRS:
        raise TooLarge(f"{s_len} x {c_len} token pairs exceed the {MAX_PAIRS} brute-force cap")
    if s_len < n or c_len < n:
        return []
    eq = sample_tokens[:, None] == corpus_tokens[None, :]
    seed = eq[: s_len - n + 1, : c_len - n + 1].copy()
    for k in range(1, n):
        seed &= eq[k : s_len - n + 1 + k, k : c_len - n + 1 + k]
    seed_i, seed_j = np.nonzero(seed)
    spans: list[MatchSpan] = []
    for d in np.unique(seed_j - seed_i):
        d = int(d)
        # np.diagonal walks eq[k, k+d] for d >= 0 and eq[k-d, k] for d < 0,
        # so diagonal coordinate k maps to sample index k - min(d, 0) and
        # corpus index k + max(d, 0).
        sample_base = -min(d, 0)
        corpus_shift = max(d, 0)
        on_diag = seed_i[seed_j - seed_i == d]
        eq_diag = np.diagonal(eq, offset=d)
        prev = None
        for i in sorted(int(x) for x in on_diag):
            k = i - sample_base
            if prev is not None and k == prev + 1:
                prev = k
                continue
            prev = k
            start, end = _greedy_extend(eq_diag, k, n, budget)
            mism = np.flatnonzero(~eq_diag[start:end])
            spans.append(
                MatchSpan(
                    start=start + sample_base,
                    end=end + sample_base,
                    source=(shard_id, corpus_base + start + corpus_shift),
                    skip_positions=tuple(int(p) + start + sample_base for p in mism),
                )
            )
    return spans


def brute_force_spans_store(
    sample_tokens: np.ndarray,
    shards: Iterable[CorpusShard],
    n: int,
    budget: int,
) -> list[MatchSpan]:
    """Brute-force spans against every document of every shard."""
    spans: list[MatchSpan] = []
    for shard in shards:
        prev = 0
        for bound in shard.doc_boundaries:
            bound = int(bound)
            spans.extend(
                brute_force_spans(
                    sample_tokens,
                    shard.tokens[prev:bound],
                    n,
                    budget,
                    shard_id=shard.shard_id,
                    corpus_base=prev,
                )
            )
            prev = bound
    return spans


# ---------------------------------------------------------------------------
# ground-truth scoring (exact fractions, no hashing, no index)
# ---------------------------------------------------------------------------


def _corpus_ngram_counts(shards: Sequence[CorpusShard], n: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for shard in shards:
        prev = 0
        for bound in shard.doc_boundaries:
            bound = int(bound)
            doc = shard.tokens[prev:bound]
            for i in range(bound - prev - n + 1):
                key = tuple(int(t) for t in doc[i : i + n])
                counts[key] = counts.get(key, 0) + 1
            prev = bound
    return counts


def _span_location(start: int, end: int, boundary: int) -> str:
    if end <= boundary:
        return Location.QUESTION.value
    if start >= boundary:
        return Location.ANSWER.value
    return Location.CROSS_BOUNDARY.value


def _interval_coverage(intervals: list[tuple[int, int]], length: int) -> int:
    covered = np.zeros(length, dtype=bool)
    for start, end in intervals:
        covered[start:end] = True
    return int(covered.sum())


def brute_force_scores(
    sample: TokenizedSample,
    shards: Sequence[CorpusShard],
    grid: Sequence[MetricParams],
) -> dict[str, Fraction]:
    """Exact score for every grid cell, straight from the metric definitions."""
    tokens = sample.full_tokens
    length = int(tokens.shape[0])
    boundary = sample.boundary_index
    ngram_counts: dict[int, dict[tuple, int]] = {}
    span_cache: dict[int, list[MatchSpan]] = {}
    scores: dict[str, Fraction] = {}
    for params in grid:
        if params.metric.uses_mincount:
            if length < params.n:
                scores[params.label()] = Fraction(0)
                continue
            if params.n not in ngram_counts:
                ngram_counts[params.n] = _corpus_ngram_counts(shards, params.n)
            table = ngram_counts[params.n]
            matched = []
            for i in range(length - params.n + 1):
                if table.get(tuple(int(t) for t in tokens[i : i + params.n]), 0) >= params.mincount:
                    matched.append(i)
            if params.location != LOCATION_FULL:
                matched = [
                    i
                    for i in matched
                    if _span_location(i, i + params.n, boundary) == params.location
                ]
            if params.metric is Metric.TOKEN_MATCH:
                covered = _interval_coverage([(i, i + params.n) for i in matched], length)
                scores[params.label()] = Fraction(covered, length)
            else:
                scores[params.label()] = Fraction(len(matched), length - params.n + 1)
        else:
            if params.skip_budget not in span_cache:
                span_cache[params.skip_budget] = brute_force_spans_store(
                    tokens, shards, 8, params.skip_budget
                )
            kept = [
                s
                for s in span_cache[params.skip_budget]
                if s.length >= params.n
                and (
                    params.location == LOCATION_FULL
                    or _span_location(s.start, s.end, boundary) == params.location
                )
            ]
            if params.metric is Metric.TOKEN_EXTEND:
                covered = _interval_coverage([(s.start, s.end) for s in kept], length)
                scores[params.label()] = Fraction(covered, length)
            else:
                best = max((s.length for s in kept), default=0)
                scores[params.label()] = Fraction(best, length)
    return scores


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _max_clean_run(subs: tuple[int, ...], span_len: int) -> int:
    best = 0
    prev = -1
    for p in subs + (span_len,):
        best = max(best, p - prev - 1)
        prev = p
    return best


def _draw_substitutions(rng: np.random.Generator, span_len: int, k: int) -> tuple[int, ...]:
    # interior positions only, re-drawn until a seedable 8-token run survives
    interior = np.arange(1, span_len - 1)
    for _ in range(_PLACEMENT_TRIES):
        subs = tuple(sorted(int(p) for p in rng.choice(interior, size=k, replace=False)))
        if _max_clean_run(subs, span_len) >= 8:
            return subs
    raise SpecInfeasible(
        f"could not place {k} substitutions in a {span_len}-token span while keeping an 8-token run"
    )


def _place_nonoverlapping(
    rng: np.random.Generator, occupied: list[tuple[int, int]], region_len: int, span_len: int
) -> int:
    for _ in range(_PLACEMENT_TRIES):
        pos = int(rng.integers(0, region_len - span_len + 1))
        if all(pos + span_len <= s or pos >= e for s, e in occupied):
            occupied.append((pos, pos + span_len))
            return pos
    raise SpecInfeasible("could not place a span without overlap; corpus or samples too crowded")


def generate(spec: PlantSpec, grid: Sequence[MetricParams] | None = None) -> SynthInstance:
    """Build the corpus, benchmark, ground truth, and scripted results.

    Deterministic for a given seed. Ground-truth scores are computed by the
    brute-force matcher for every cell of ``grid`` (the paper-style default
    grid when omitted).
    """
    spec.validate()
    if grid is None:
        grid = default_grid()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    vocab = spec.vocab

    docs = [
        rng.integers(0, vocab, size=spec.doc_len, dtype=np.uint32)
        for _ in range(spec.corpus_docs)
    ]
    sample_tokens = [
        rng.integers(0, vocab, size=spec.sample_len, dtype=np.uint32)
        for _ in range(spec.n_samples)
    ]
    ids = spec.sample_ids()
    id_to_idx = {sid: i for i, sid in enumerate(ids)}

    sample_occupied: dict[int, list[tuple[int, int]]] = {}
    doc_occupied: dict[int, list[tuple[int, int]]] = {}
    planted_intervals: dict[str, list[tuple[int, int]]] = {sid: [] for sid in ids}
    copy_slots: dict[str, list[tuple[int, int, tuple[int, ...]]]] = {sid: [] for sid in ids}

    for plant in spec.planted:
        s_idx = id_to_idx[plant.sample_id]
        pos = _place_nonoverlapping(
            rng, sample_occupied.setdefault(s_idx, []), spec.sample_len, plant.span_len
        )
        planted_intervals[plant.sample_id].append((pos, pos + plant.span_len))
        span = sample_tokens[s_idx][pos : pos + plant.span_len]
        for _ in range(plant.copies_in_corpus):
            doc_idx, doc_pos = _place_in_corpus(rng, doc_occupied, spec, plant.span_len)
            copy = span.copy()
            subs: tuple[int, ...] = ()
            if plant.n_substitutions:
                subs = _draw_substitutions(rng, plant.span_len, plant.n_substitutions)
                for p in subs:
                    while True:
                        repl = int(rng.integers(0, vocab))
                        if repl != int(span[p]):
                            break
                    copy[p] = repl
            docs[doc_idx][doc_pos : doc_pos + plant.span_len] = copy
            copy_slots[plant.sample_id].append((doc_idx, doc_pos, subs))

    # contiguous doc ranges per shard; remainders go to the leading shards
    per_shard = spec.corpus_docs // spec.n_shards
    extra = spec.corpus_docs % spec.n_shards
    shards = []
    doc_to_pos: dict[int, tuple[int, int]] = {}
    doc_cursor = 0
    for shard_id in range(spec.n_shards):
        take = per_shard + (1 if shard_id < extra else 0)
        chunk = docs[doc_cursor : doc_cursor + take]
        base = 0
        for local, doc in enumerate(chunk):
            doc_to_pos[doc_cursor + local] = (shard_id, base)
            base += doc.shape[0]
        tokens = np.concatenate(chunk) if chunk else np.empty(0, dtype=np.uint32)
        bounds = np.cumsum([d.shape[0] for d in chunk]).astype(np.uint64)
        shards.append(CorpusShard(shard_id=shard_id, tokens=tokens, doc_boundaries=bounds))
        doc_cursor += take
    store = ShardStore(shards)

    boundary = spec.sample_len - spec.answer_len
    samples = [
        TokenizedSample(
            sample_id=sid,
            prompt_tokens=sample_tokens[i][:boundary],
            answer_tokens=sample_tokens[i][boundary:],
            full_tokens=sample_tokens[i],
            boundary_index=boundary,
        )
        for i, sid in enumerate(ids)
    ]

    truth_samples = {}
    for i, sid in enumerate(ids):
        truth_samples[sid] = SampleTruth(
            planted=sorted(planted_intervals[sid]),
            copies=[
                CopyLocation(
                    shard_id=doc_to_pos[doc_idx][0],
                    offset=doc_to_pos[doc_idx][1] + doc_pos,
                    substitutions=subs,
                )
                for doc_idx, doc_pos, subs in copy_slots[sid]
            ],
            scores=brute_force_scores(samples[i], shards, grid),
        )
    truth = GroundTruth(rng_algorithm=RNG_ALGORITHM, samples=truth_samples)

    results = None
    if spec.model is not None:
        model = spec.model
        contaminated = {sid for sid in ids if planted_intervals[sid]}
        values = {}
        for sid in ids:
            rate = model.clean_rate + (model.contaminated_boost if sid in contaminated else 0.0)
            if model.deterministic:
                values[sid] = rate
            else:
                values[sid] = 1.0 if rng.random() < rate else 0.0
        results = {model.model_id: values}

    return SynthInstance(
        spec=spec, shards=shards, store=store, samples=samples, truth=truth, results=results
    )


def write_ground_truth(path: str | Path, instance: SynthInstance) -> None:
    """groundtruth.json: the spec, RNG id, plants, copies, and exact scores."""
    payload = {
        "rng_algorithm": instance.truth.rng_algorithm,
        "spec": instance.spec.to_json(),
        "samples": {
            sid: {
                "planted": [list(iv) for iv in st.planted],
                "copies": [
                    {"shard": c.shard_id, "offset": c.offset, "substitutions": list(c.substitutions)}
                    for c in st.copies
                ],
                "scores": {
                    label: {"num": f.numerator, "den": f.denominator}
                    for label, f in sorted(st.scores.items())
                },
            }
            for sid, st in sorted(instance.truth.samples.items())
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
