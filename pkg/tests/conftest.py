import numpy as np
import pytest

from contamkit.corpusindex import CorpusShard, ShardStore, build_index
from contamkit.textprep import TokenizedSample


class CharTokenizer:
    """Test tokenizer mapping each character to its codepoint."""

    vocab_id = "char/test"
    vocab_size = 0x110000

    def token(self, text: str) -> np.ndarray:
        return np.asarray([ord(c) for c in text], dtype=np.uint32)


def make_shard(tokens, boundaries=None, shard_id=0) -> CorpusShard:
    tokens = np.asarray(tokens, dtype=np.uint32)
    if boundaries is None:
        boundaries = [len(tokens)] if len(tokens) else []
    return CorpusShard(
        shard_id=shard_id,
        tokens=tokens,
        doc_boundaries=np.asarray(boundaries, dtype=np.uint64),
    )


def make_sample(tokens, boundary=None, sample_id="s") -> TokenizedSample:
    tokens = np.asarray(tokens, dtype=np.uint32)
    if boundary is None:
        boundary = len(tokens)
    return TokenizedSample(
        sample_id=sample_id,
        prompt_tokens=tokens[:boundary],
        answer_tokens=tokens[boundary:],
        full_tokens=tokens,
        boundary_index=boundary,
    )


@pytest.fixture
def char_tokenizer():
    return CharTokenizer()


@pytest.fixture
def planted_world():
    """A corpus with one 20-token planted span (1 substitution) in a 40-token sample."""
    rng = np.random.default_rng(42)
    corpus = rng.integers(0, 50_000, size=500, dtype=np.uint32)
    sample_tokens = rng.integers(0, 50_000, size=40, dtype=np.uint32)
    span = sample_tokens[10:30].copy()
    span[5] = (span[5] + 1) % 50_000  # substitution at sample offset 15
    corpus[100:120] = span
    shard = make_shard(corpus)
    return {
        "store": ShardStore([shard]),
        "shards": [shard],
        "index": build_index([shard], 8),
        "sample": make_sample(sample_tokens, boundary=20),
        "plant": (10, 30),
        "substitution": 15,
    }
