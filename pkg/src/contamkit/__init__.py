"""contamkit: n-gram contamination metrics grounded in estimated performance gain.

Scores benchmark samples against a pre-training corpus with four
contamination metrics (token/ngram hash fractions and two seed-and-extend
span metrics), then grounds the scores in downstream effect via EPG,
z-score threshold selection, and ConTAM curves.
"""

__version__ = "0.1.0"

from .corpusindex import CorpusShard, NGramIndex, ShardStore, build_index, roll_hashes
from .epganalysis import (
    ContamCurve,
    OptimalThreshold,
    ThresholdPoint,
    epg,
    gain_per_pct,
    ordering_correlation,
    select_threshold,
    threshold_sweep,
)
from .matchengine import Location, MatchSpan, SpanSet, all_spans, classify_location, longest_span
from .metrics import (
    ContaminationScore,
    Metric,
    MetricParams,
    default_grid,
    score_grid,
    score_longest_match,
    score_ngram_match,
    score_token_extend,
    score_token_match,
)
from .textprep import (
    BenchmarkSampleRecord,
    IntTokenizer,
    NormalizationMode,
    TokenizedSample,
    WordByteTokenizer,
    normalize,
    tokenize_sample,
)

__all__ = [
    "BenchmarkSampleRecord",
    "ContamCurve",
    "ContaminationScore",
    "CorpusShard",
    "IntTokenizer",
    "Location",
    "MatchSpan",
    "Metric",
    "MetricParams",
    "NGramIndex",
    "NormalizationMode",
    "OptimalThreshold",
    "ShardStore",
    "SpanSet",
    "ThresholdPoint",
    "TokenizedSample",
    "WordByteTokenizer",
    "all_spans",
    "build_index",
    "classify_location",
    "default_grid",
    "epg",
    "gain_per_pct",
    "longest_span",
    "normalize",
    "ordering_correlation",
    "roll_hashes",
    "score_grid",
    "score_longest_match",
    "score_ngram_match",
    "score_token_extend",
    "score_token_match",
    "select_threshold",
    "threshold_sweep",
    "tokenize_sample",
]
