import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contamkit import kernels


def direct_window_hashes(tokens, n, base=kernels.DEFAULT_BASE):
    """Independent oracle: per-window polynomial evaluation with big ints."""
    mod = kernels.MOD61
    out = []
    for i in range(len(tokens) - n + 1):
        h = 0
        for j in range(n):
            h = (h * base + int(tokens[i + j])) % mod
        out.append(h)
    return out


def test_window_shorter_than_input_is_empty():
    tokens = np.arange(7, dtype=np.uint32)
    assert kernels.window_hashes(tokens, 8).shape == (0,)


def test_identical_windows_hash_equal():
    tokens = np.asarray(list(range(8)) + [99, 98] + list(range(8)), dtype=np.uint32)
    hashes = kernels.window_hashes(tokens, 8)
    assert hashes[0] == hashes[10]


def test_rolling_equals_direct_evaluation_random():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 21))
        length = int(rng.integers(n, 120))
        tokens = rng.integers(0, 2**32, size=length, dtype=np.uint32)
        got = [int(h) for h in kernels.window_hashes(tokens, n)]
        assert got == direct_window_hashes(tokens, n)


@given(st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=40), st.integers(1, 12))
@settings(max_examples=150, deadline=None)
def test_rolling_equals_direct_evaluation_property(token_list, n):
    tokens = np.asarray(token_list, dtype=np.uint32)
    got = [int(h) for h in kernels.window_hashes(tokens, n)]
    assert got == direct_window_hashes(tokens, n)


def test_numpy_backend_matches_oracle():
    rng = np.random.default_rng(11)
    for n in (1, 2, 8, 13, 20):
        tokens = rng.integers(0, 2**32, size=300, dtype=np.uint32)
        got = [int(h) for h in kernels.window_hashes_numpy(tokens, n)]
        assert got == direct_window_hashes(tokens, n)


@pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba backend disabled")
def test_backends_bit_identical():
    rng = np.random.default_rng(3)
    for n in (1, 3, 8, 13, 20):
        tokens = rng.integers(0, 2**32, size=500, dtype=np.uint32)
        assert np.array_equal(
            kernels.window_hashes_numba(tokens, n), kernels.window_hashes_numpy(tokens, n)
        )


def _random_extension_case(rng):
    length = int(rng.integers(20, 80))
    sample = rng.integers(0, 50, size=length, dtype=np.uint32)  # tiny vocab: many chance matches
    corpus = rng.integers(0, 50, size=length + 40, dtype=np.uint32)
    c_seed = int(rng.integers(0, 40))
    s_seed = int(rng.integers(0, length - 8 + 1))
    corpus[c_seed : c_seed + 8] = sample[s_seed : s_seed + 8]
    budget = int(rng.integers(0, 6))
    return sample, s_seed, corpus, c_seed, budget


@pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba backend disabled")
def test_extend_backends_agree():
    rng = np.random.default_rng(5)
    for _ in range(300):
        sample, s_seed, corpus, c_seed, budget = _random_extension_case(rng)
        args = (sample, s_seed, corpus, c_seed, 8, budget, 0, len(sample), 0, len(corpus))
        assert kernels.extend_match_python(*args) == tuple(
            int(x) for x in kernels._extend_match_nb(*args)
        )


def test_extend_respects_bounds():
    sample = np.zeros(20, dtype=np.uint32)
    corpus = np.zeros(20, dtype=np.uint32)
    start, end = kernels.extend_match(sample, 5, corpus, 5, 8, 5, 3, 16, 4, 15)
    assert start >= 4 and end <= 15  # corpus doc bounds are tighter here
    start, end = kernels.extend_match(sample, 5, corpus, 5, 8, 5, 0, 20, 0, 20)
    assert (start, end) == (0, 20)


def test_scan_layout_roundtrip():
    # two entries: 1 posting and 0 postings
    body = bytearray()
    body += b"\x00" * 16 + bytes([1]) + b"\x00" * 12
    body += b"\x00" * 16 + bytes([0])
    buf = np.frombuffer(bytes(body), dtype=np.uint8)
    offsets, lens = kernels.scan_index_layout(buf, 2)
    assert offsets.tolist() == [0, 29]
    assert lens.tolist() == [1, 0]


def test_scan_layout_truncation_sentinel():
    buf = np.zeros(10, dtype=np.uint8)  # too short for even one entry
    offsets, _ = kernels.scan_index_layout(buf, 1)
    assert offsets[0] == -1
