"""Hot inner loops: n-gram window hashing, match extension, index layout scans.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy (or
plain Python) fallback. The active backend is chosen once at import time:
numba is used when it imports cleanly and the environment variable
``CONTAMKIT_NUMBA`` is not set to ``0``/``false``/``off``. Both paths do
exact integer arithmetic modulo the Mersenne prime 2^61 - 1 and produce
bit-identical outputs; ``benchmarks/bench_kernels.py`` times one against
the other.

Hashing is a polynomial rolling hash: hash(t[i..i+n)) =
sum_j t[i+j] * B^(n-1-j) mod M with B = 1_000_000_007 and M = 2^61 - 1.
Token ids are uint32, so every token value is already reduced mod M.
"""

from __future__ import annotations

import os

import numpy as np

MOD61 = (1 << 61) - 1
DEFAULT_BASE = 1_000_000_007

_U = np.uint64
_MOD = _U(MOD61)
_MASK31 = _U(0x7FFFFFFF)
_MASK30 = _U(0x3FFFFFFF)

_env = os.environ.get("CONTAMKIT_NUMBA", "").strip().lower()
if _env in {"0", "false", "off"}:
    NUMBA_AVAILABLE = False
else:
    try:
        from numba import njit

        NUMBA_AVAILABLE = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_AVAILABLE = False

ACTIVE_BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"


# ---------------------------------------------------------------------------
# modular arithmetic mod 2^61 - 1
#
# Products of two 61-bit values overflow uint64, so multiplication splits
# the operands into 31/30-bit halves and folds the partial products back
# using 2^61 ≡ 1 (mod M). All intermediates stay below 2^64.
# ---------------------------------------------------------------------------


def _mulmod_np(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    au = a >> _U(31)
    ad = a & _MASK31
    bu = b >> _U(31)
    bd = b & _MASK31
    mid = ad * bu + au * bd
    x = au * bu * _U(2) + (mid >> _U(30)) + ((mid & _MASK30) << _U(31)) + ad * bd
    x = (x & _MOD) + (x >> _U(61))
    return np.where(x >= _MOD, x - _MOD, x)


def _addmod_np(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = a + b
    return np.where(x >= _MOD, x - _MOD, x)


def window_hashes_numpy(tokens: np.ndarray, n: int, base: int = DEFAULT_BASE) -> np.ndarray:
    """All length-``n`` window hashes, computed by binary lifting.

    Builds window hashes for power-of-two lengths and merges them following
    the binary expansion of ``n``; each pass is one vectorised mulmod over
    the shard, so total work is O(len * log n) with no Python-level loop.
    """
    t = np.ascontiguousarray(tokens, dtype=np.uint32).astype(np.uint64)
    length = t.shape[0]
    m = length - n + 1
    if m <= 0:
        return np.empty(0, dtype=np.uint64)
    acc: np.ndarray | None = None
    acc_n = 0
    cur = t
    cur_n = 1
    nn = n
    while True:
        if nn & 1:
            if acc is None:
                acc = cur
                acc_n = cur_n
            else:
                cnt = length - (acc_n + cur_n) + 1
                shift = _U(pow(base, cur_n, MOD61))
                acc = _addmod_np(_mulmod_np(acc[:cnt], shift), cur[acc_n : acc_n + cnt])
                acc_n += cur_n
        nn >>= 1
        if nn == 0:
            break
        cnt = length - 2 * cur_n + 1
        shift = _U(pow(base, cur_n, MOD61))
        cur = _addmod_np(_mulmod_np(cur[:cnt], shift), cur[cur_n : cur_n + cnt])
        cur_n *= 2
    assert acc is not None and acc_n == n
    return np.ascontiguousarray(acc[:m])


def extend_match_python(
    sample: np.ndarray,
    s_seed: int,
    corpus: np.ndarray,
    c_seed: int,
    n: int,
    budget: int,
    s_lo: int,
    s_hi: int,
    c_lo: int,
    c_hi: int,
) -> tuple[int, int]:
    """Greedy seed extension; returns the span ``[start, end)`` in sample coords.

    Extends right until the boundary or a mismatch with no budget left, trims
    trailing substitutions (refunding their budget: a span never ends on a
    mismatch, so budget burned past the last match was never used), then
    extends left the same way with what remains and trims the left edge.
    """
    bud = budget
    s = s_seed + n
    c = c_seed + n
    while s < s_hi and c < c_hi:
        if sample[s] != corpus[c]:
            if bud == 0:
                break
            bud -= 1
        s += 1
        c += 1
    end = s
    while end > s_seed + n and sample[end - 1] != corpus[c_seed + (end - 1 - s_seed)]:
        end -= 1
        bud += 1
    s = s_seed - 1
    c = c_seed - 1
    while s >= s_lo and c >= c_lo:
        if sample[s] != corpus[c]:
            if bud == 0:
                break
            bud -= 1
        s -= 1
        c -= 1
    start = s + 1
    while start < s_seed and sample[start] != corpus[c_seed + (start - s_seed)]:
        start += 1
    return start, end


def scan_index_layout_python(buf: np.ndarray, n_entries: int) -> tuple[np.ndarray, np.ndarray]:
    """Byte offsets and posting counts of each entry in a serialized index body.

    Entries are variable-length (17 bytes + 12 per posting), so the layout is
    a sequential scan over the posting-count byte at offset +16. A truncated
    body yields a -1 offset sentinel for the first entry that overruns.
    """
    offsets = np.empty(n_entries, dtype=np.int64)
    lens = np.zeros(n_entries, dtype=np.int64)
    total = buf.shape[0]
    pos = 0
    for i in range(n_entries):
        if pos + 17 > total:
            offsets[i:] = -1
            break
        offsets[i] = pos
        k = int(buf[pos + 16])
        lens[i] = k
        pos += 17 + 12 * k
    return offsets, lens


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _mulmod61(a, b):
        au = a >> np.uint64(31)
        ad = a & np.uint64(0x7FFFFFFF)
        bu = b >> np.uint64(31)
        bd = b & np.uint64(0x7FFFFFFF)
        mid = ad * bu + au * bd
        x = au * bu * np.uint64(2) + (mid >> np.uint64(30)) + ((mid & np.uint64(0x3FFFFFFF)) << np.uint64(31)) + ad * bd
        x = (x & np.uint64(MOD61)) + (x >> np.uint64(61))
        if x >= np.uint64(MOD61):
            x -= np.uint64(MOD61)
        return x

    @njit(cache=True)
    def _addmod61(a, b):
        x = a + b
        if x >= np.uint64(MOD61):
            x -= np.uint64(MOD61)
        return x

    @njit(cache=True)
    def _window_hashes_nb(tokens, n, base):
        length = tokens.shape[0]
        m = length - n + 1
        out = np.empty(m, dtype=np.uint64)
        b = np.uint64(base)
        h = np.uint64(0)
        for j in range(n):
            h = _addmod61(_mulmod61(h, b), np.uint64(tokens[j]))
        out[0] = h
        bp = np.uint64(1)
        for _ in range(n - 1):
            bp = _mulmod61(bp, b)
        for i in range(1, m):
            drop = _mulmod61(np.uint64(tokens[i - 1]), bp)
            h = _addmod61(h, np.uint64(MOD61) - drop)
            h = _addmod61(_mulmod61(h, b), np.uint64(tokens[i + n - 1]))
            out[i] = h
        return out

    @njit(cache=True)
    def _extend_match_nb(sample, s_seed, corpus, c_seed, n, budget, s_lo, s_hi, c_lo, c_hi):
        bud = budget
        s = s_seed + n
        c = c_seed + n
        while s < s_hi and c < c_hi:
            if sample[s] != corpus[c]:
                if bud == 0:
                    break
                bud -= 1
            s += 1
            c += 1
        end = s
        while end > s_seed + n and sample[end - 1] != corpus[c_seed + (end - 1 - s_seed)]:
            end -= 1
            bud += 1
        s = s_seed - 1
        c = c_seed - 1
        while s >= s_lo and c >= c_lo:
            if sample[s] != corpus[c]:
                if bud == 0:
                    break
                bud -= 1
            s -= 1
            c -= 1
        start = s + 1
        while start < s_seed and sample[start] != corpus[c_seed + (start - s_seed)]:
            start += 1
        return start, end

    @njit(cache=True)
    def _scan_index_layout_nb(buf, n_entries):
        offsets = np.empty(n_entries, dtype=np.int64)
        lens = np.zeros(n_entries, dtype=np.int64)
        total = buf.shape[0]
        pos = 0
        for i in range(n_entries):
            if pos + 17 > total:
                for j in range(i, n_entries):
                    offsets[j] = -1
                break
            offsets[i] = pos
            k = np.int64(buf[pos + 16])
            lens[i] = k
            pos += 17 + 12 * k
        return offsets, lens

    def window_hashes_numba(tokens: np.ndarray, n: int, base: int = DEFAULT_BASE) -> np.ndarray:
        t = np.ascontiguousarray(tokens, dtype=np.uint32)
        if t.shape[0] - n + 1 <= 0:
            return np.empty(0, dtype=np.uint64)
        return _window_hashes_nb(t, n, base)

else:  # pragma: no cover - exercised only when numba is unavailable/disabled
    window_hashes_numba = None
    _extend_match_nb = None
    _scan_index_layout_nb = None


def window_hashes(tokens: np.ndarray, n: int, base: int = DEFAULT_BASE) -> np.ndarray:
    """Polynomial hashes of every length-``n`` window, on the active backend."""
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    if NUMBA_AVAILABLE:
        return window_hashes_numba(tokens, n, base)
    return window_hashes_numpy(tokens, n, base)


def extend_match(
    sample: np.ndarray,
    s_seed: int,
    corpus: np.ndarray,
    c_seed: int,
    n: int,
    budget: int,
    s_lo: int,
    s_hi: int,
    c_lo: int,
    c_hi: int,
) -> tuple[int, int]:
    """Extend an exact seed match on the active backend."""
    if NUMBA_AVAILABLE:
        start, end = _extend_match_nb(
            sample, s_seed, corpus, c_seed, n, budget, s_lo, s_hi, c_lo, c_hi
        )
        return int(start), int(end)
    start, end = extend_match_python(
        sample, s_seed, corpus, c_seed, n, budget, s_lo, s_hi, c_lo, c_hi
    )
    return int(start), int(end)


def scan_index_layout(buf: np.ndarray, n_entries: int) -> tuple[np.ndarray, np.ndarray]:
    """Entry layout scan on the active backend."""
    if NUMBA_AVAILABLE:
        return _scan_index_layout_nb(buf, n_entries)
    return scan_index_layout_python(buf, n_entries)
