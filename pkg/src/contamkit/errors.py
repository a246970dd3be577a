"""Exception hierarchy shared across the toolkit."""


class ContamkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ContamkitError):
    """Invalid run configuration (bad flag, malformed config file, bad grid)."""


class InvalidRecord(ContamkitError):
    """A benchmark or results record is malformed (e.g. missing prompt text)."""


class ShardReadError(ContamkitError):
    """A corpus shard file could not be read or parsed."""


class TokenizerMismatch(ContamkitError):
    """Shards or indexes were produced with different tokenizers."""


class PostingOutOfRange(ContamkitError):
    """A (shard_id, offset) posting does not point inside the corpus."""


class EmptySample(ContamkitError):
    """Scoring was requested for a sample with no tokens."""


class MissingIndex(ContamkitError):
    """No n-gram index is available for the requested (mode, n)."""


class MissingResults(ContamkitError):
    """Sample ids in scores and model results do not line up."""


class EmptyCleanSet(ContamkitError):
    """EPG requested against an empty clean subset."""


class ZeroContamination(ContamkitError):
    """Gain-per-percent requested at zero percent contaminated."""


class DegenerateOrdering(ContamkitError):
    """Rank correlation is undefined because a score vector is constant."""


class SpecInfeasible(ContamkitError):
    """A synthetic-data plan cannot be realised (span too long, etc.)."""


class TooLarge(ContamkitError):
    """Brute-force search was asked to cover too many token pairs."""
