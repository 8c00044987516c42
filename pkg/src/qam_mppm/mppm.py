"""MPPM pattern combinatorics: expurgated set, rank/unrank codec, correction.

Patterns are length-N binary vectors of Hamming weight w.  The expurgated
set keeps the first 2^floor(log2 C(N,w)) patterns in lexicographic order of
their sorted support lists, so a pattern's codeword is simply its rank.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import erfc

# Support tables above this set size are not materialized; tx generation and
# pairwise-distance enumeration fall back per-pattern or are refused.
_TABLE_LIMIT = 1 << 20


def bits_per_mppm(n_slots: int, weight: int) -> int:
    """floor(log2 C(N, w)) computed in exact integer arithmetic."""
    if not (1 <= weight <= n_slots - 1):
        raise ValueError(f"weight must be in [1, {n_slots - 1}], got {weight}")
    return math.comb(n_slots, weight).bit_length() - 1


@dataclass(frozen=True)
class MppmCode:
    """Expurgated fixed-weight pattern code over N slots.

    size = 2^q patterns are usable; table holds their sorted supports when
    small enough to materialize.  rank_prefix[j][t] accumulates the
    combinatorial prefix sums used by the (vectorizable) lex rank formula.
    """

    n_slots: int
    weight: int
    q_mppm: int
    size: int
    rank_prefix: np.ndarray = field(repr=False)
    table: np.ndarray | None = field(default=None, repr=False)
    table_bits: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_patterns_total(self) -> int:
        return math.comb(self.n_slots, self.weight)


def make_code(n_slots: int, weight: int) -> MppmCode:
    if n_slots < 2:
        raise ValueError("need at least 2 slots")
    q = bits_per_mppm(n_slots, weight)
    size = 1 << q
    n, w = n_slots, weight
    # rank_prefix[j][t] = sum_{u < t} C(n-1-u, w-1-j)
    prefix = np.zeros((w, n + 1), dtype=np.int64)
    for j in range(w):
        terms = [math.comb(n - 1 - u, w - 1 - j) for u in range(n)]
        prefix[j, 1:] = np.cumsum(terms)
    table = None
    table_bits = None
    if size <= _TABLE_LIMIT:
        table = np.empty((size, w), dtype=np.int16)
        support = list(range(w))
        for r in range(size):
            table[r] = support
            # next combination in lex order
            for j in range(w - 1, -1, -1):
                if support[j] < n - (w - j):
                    support[j] += 1
                    for jj in range(j + 1, w):
                        support[jj] = support[jj - 1] + 1
                    break
        if n <= 64:
            bits = np.zeros(size, dtype=np.uint64)
            for j in range(w):
                bits |= np.uint64(1) << table[:, j].astype(np.uint64)
            table_bits = bits
    return MppmCode(
        n_slots=n, weight=w, q_mppm=q, size=size, rank_prefix=prefix,
        table=table, table_bits=table_bits,
    )


def rank_support(support, code: MppmCode) -> int:
    """Lexicographic rank of a sorted support list among all weight-w patterns."""
    r = 0
    prev = -1
    for j, c in enumerate(support):
        r += int(code.rank_prefix[j, c]) - int(code.rank_prefix[j, prev + 1])
        prev = c
    return r


def rank_supports(supports: np.ndarray, code: MppmCode) -> np.ndarray:
    """Vectorized lex rank for an (n, w) array of sorted supports."""
    w = code.weight
    prev = np.concatenate(
        [np.full((supports.shape[0], 1), -1, dtype=supports.dtype), supports[:, :-1]],
        axis=1,
    )
    j = np.arange(w)
    return (
        code.rank_prefix[j, supports.astype(np.int64)]
        - code.rank_prefix[j, prev.astype(np.int64) + 1]
    ).sum(axis=1)


def unrank(r: int, code: MppmCode) -> tuple[int, ...]:
    """Sorted support of the pattern with lexicographic rank r."""
    n, w = code.n_slots, code.weight
    support = []
    c = 0
    for j in range(w):
        while True:
            block = math.comb(n - 1 - c, w - 1 - j)
            if r < block:
                break
            r -= block
            c += 1
        support.append(c)
        c += 1
    return tuple(support)


def pattern_from_support(support, n_slots: int) -> np.ndarray:
    p = np.zeros(n_slots, dtype=np.uint8)
    p[list(support)] = 1
    return p


def encode_mppm(word: int, code: MppmCode) -> np.ndarray:
    """Pattern carrying the given q_mppm-bit word (unrank of the word)."""
    if not (0 <= word < code.size):
        raise ValueError(f"word out of range [0, {code.size})")
    if code.table is not None:
        support = code.table[word]
    else:
        support = unrank(word, code)
    return pattern_from_support(support, code.n_slots)


def decode_mppm(pattern: np.ndarray, code: MppmCode) -> int:
    """Rank of an expurgated-set pattern, i.e. its bit word."""
    support = np.flatnonzero(pattern)
    r = rank_support(support, code)
    if r >= code.size:
        raise ValueError("pattern not in the expurgated set")
    return r


def correct_pattern(detected: np.ndarray, code: MppmCode, rng: np.random.Generator) -> np.ndarray:
    """Map a weight-w pattern outside the usable set to a closest member.

    Members at minimal squared Hamming distance are drawn uniformly with the
    supplied generator; patterns already in the set pass through unchanged.
    """
    detected = np.asarray(detected, dtype=np.uint8)
    support = np.flatnonzero(detected)
    if len(support) != code.weight:
        raise ValueError("detected pattern must have popcount w")
    r = rank_support(support, code)
    if r < code.size:
        return detected
    if code.table_bits is not None:
        det_bits = np.uint64(0)
        for c in support:
            det_bits |= np.uint64(1) << np.uint64(c)
        overlap = np.bitwise_count(code.table_bits & det_bits)
        best = overlap == overlap.max()
        choice = rng.choice(np.flatnonzero(best))
        return pattern_from_support(code.table[choice], code.n_slots)
    # Large sets: scan distance shells (swap one slot, then two, ...).
    inactive = np.setdiff1d(np.arange(code.n_slots), support)
    from itertools import combinations

    for shell in range(1, code.weight + 1):
        cands = []
        for rem in combinations(support, shell):
            keep = [c for c in support if c not in rem]
            for add in combinations(inactive, shell):
                cand = tuple(sorted(keep + list(add)))
                if rank_support(cand, code) < code.size:
                    cands.append(cand)
        if cands:
            choice = cands[rng.integers(len(cands))]
            return pattern_from_support(choice, code.n_slots)
    raise RuntimeError("empty expurgated set")  # unreachable for valid codes


@dataclass(frozen=True)
class CorrectionStats:
    """Code-geometry averages over erroneous sorted-slot patterns.

    All quantities are means over a transmitted pattern drawn from the
    usable set and a uniformly random l-slot swap (l active slots replaced
    by l inactive ones), followed by the nearest-member correction rule.
    Tuples are indexed by l - 1 for l = 1 .. min(w, N - w):

    rescue_prob  probability that a single-swap detection decodes back to
                 the transmitted pattern (multi-swap rescues are impossible
                 because the correction moves Hamming distance 2 while the
                 detected pattern is at distance >= 4),
    pat_bits[l-1]  expected Hamming distance between the transmitted and
                 decoded pattern words (rescues contribute zero),
    align_v/align_p[l-1]  expected number of positions at which the decoded
                 support lists the same slot as the transmitted one, split
                 by the slot's fate in the sort: align_v counts retained
                 signal slots (metric above the selection threshold),
                 align_p displaced signal slots re-included by correction.

    Misaligned positions are tallied in classes[l-1] as a 2x4 count matrix
    indexed by the word source on the transmitted side (retained signal,
    displaced signal) and the slot type on the decoded side (entered noise
    slot, other noise slot, retained signal slot, displaced signal slot).
    These splits let the error-rate machinery pair each side with its
    metric-conditioned symbol-label distribution instead of assuming
    uniform labels.
    """

    rescue_prob: float
    pat_bits: tuple[float, ...]
    align_v: tuple[float, ...]
    align_p: tuple[float, ...]
    classes: tuple[tuple[tuple[float, ...], ...], ...]
    exact: bool

    @property
    def max_swaps(self) -> int:
        return len(self.pat_bits)

    def aligned(self, swaps: int) -> float:
        return self.align_v[swaps - 1] + self.align_p[swaps - 1]

    @property
    def pat_bits_1(self) -> float:
        return self.pat_bits[0]

    @property
    def aligned_1(self) -> float:
        return self.aligned(1)


_STATS_CACHE: dict[tuple[int, int], CorrectionStats] = {}
_STATS_EXACT_EVENTS = 300_000
_STATS_SAMPLES = 20_000
_STATS_SEED = 0x5EED


def _single_swaps(sup: np.ndarray, n_slots: int) -> np.ndarray:
    """All sorted single-swap neighbors: (n, w*(N-w), w)."""
    n, w = sup.shape
    mask = np.zeros((n, n_slots), dtype=bool)
    mask[np.arange(n)[:, None], sup] = True
    inact = np.nonzero(~mask)[1].reshape(n, n_slots - w)
    cands = np.repeat(sup[:, None, :], w * (n_slots - w), axis=1)
    cands = cands.reshape(n, w, n_slots - w, w)
    for j in range(w):
        cands[:, j, :, j] = inact
    return np.sort(cands.reshape(n, w * (n_slots - w), w), axis=2)


def _classify_positions(tx_sup, det, mask_tx, mask_w):
    """Position classes of decoded supports against the transmitted one.

    det has shape (rows, members, w); mask_tx / mask_w are (rows, N_slots)
    membership masks for the transmitted support and the raw sorted
    selection.  Returns per (row, member): aligned counts split by retained
    vs displaced slots and a (2, 4) misaligned class count matrix (word
    side: retained/displaced; slot side: entered noise / other noise /
    retained signal / displaced signal).
    """
    n_rows = len(tx_sup)
    r3 = np.arange(n_rows)[:, None, None]
    al = det == tx_sup[:, None, :]
    in_tx = mask_tx[r3, det]
    in_w = mask_w[r3, det]
    disp_d = in_tx & ~in_w
    surv_d = in_tx & in_w
    ent_d = ~in_tx & in_w
    noise_d = ~in_tx & ~in_w
    a_v = (al & surv_d).sum(axis=2)
    a_p = (al & disp_d).sum(axis=2)
    mis = ~al
    tx_disp = ~mask_w[np.arange(n_rows)[:, None], tx_sup]
    tx_d = tx_disp[:, None, :]
    cls = np.empty(det.shape[:2] + (2, 4))
    for ti, tmask in ((0, ~tx_d), (1, tx_d)):
        for di, dmask in enumerate((ent_d, noise_d, surv_d, disp_d)):
            cls[:, :, ti, di] = (mis & tmask & dmask).sum(axis=2)
    return a_v, a_p, cls


def _decode_swap_rows(tx_sup, tx_rank, cands, code):
    """Per-row decoded-pattern expectations for detected candidates.

    Returns (rescue, pat_bits, align_v, align_p, classes) row means,
    applying the correction rule to candidates outside the usable set.
    """
    n_rows = len(cands)
    w = code.weight
    n = code.n_slots
    r = rank_supports(cands, code)
    inside = r < code.size
    rescue = np.zeros(n_rows)
    pat = np.zeros(n_rows)
    a_v = np.zeros(n_rows)
    a_p = np.zeros(n_rows)
    classes = np.zeros((n_rows, 2, 4))
    rows_all = np.arange(n_rows)[:, None]
    mask_tx = np.zeros((n_rows, n), dtype=bool)
    mask_tx[rows_all, tx_sup] = True
    mask_w = np.zeros((n_rows, n), dtype=bool)
    mask_w[rows_all, cands] = True
    idx_in = np.flatnonzero(inside)
    if len(idx_in):
        pat[idx_in] = np.bitwise_count((tx_rank[idx_in] ^ r[idx_in]).astype(np.uint64))
        av, ap, cl = _classify_positions(
            tx_sup[idx_in], cands[idx_in][:, None, :], mask_tx[idx_in], mask_w[idx_in]
        )
        a_v[idx_in] = av[:, 0]
        a_p[idx_in] = ap[:, 0]
        classes[idx_in] = cl[:, 0]
    idx_out = np.flatnonzero(~inside)
    chunk = 2048
    for lo in range(0, len(idx_out), chunk):
        rows = idx_out[lo : lo + chunk]
        nb = _single_swaps(cands[rows], code.n_slots)
        rk = rank_supports(nb.reshape(-1, w), code).reshape(len(rows), -1)
        ok = rk < code.size
        n_mem = ok.sum(axis=1)
        mem_pat = np.bitwise_count((tx_rank[rows, None] ^ rk).astype(np.uint64))
        av, ap, cl = _classify_positions(tx_sup[rows], nb, mask_tx[rows], mask_w[rows])
        is_tx = (av + ap) == w
        rescue[rows] = (is_tx & ok).sum(axis=1) / n_mem
        pat[rows] = np.where(ok, mem_pat, 0).sum(axis=1) / n_mem
        a_v[rows] = np.where(ok, av, 0).sum(axis=1) / n_mem
        a_p[rows] = np.where(ok, ap, 0).sum(axis=1) / n_mem
        classes[rows] = (cl * ok[:, :, None, None]).sum(axis=1) / n_mem[:, None, None]
    return rescue, pat, a_v, a_p, classes


def correction_stats(code: MppmCode) -> CorrectionStats:
    """Sorted-detection error geometry averages for the usable set.

    Exact enumeration for small codes; large codes are sampled with a fixed
    internal seed so the result is still deterministic.
    """
    key = (code.n_slots, code.weight)
    if key in _STATS_CACHE:
        return _STATS_CACHE[key]
    if code.table is None:
        raise ValueError("correction statistics require a materialized table")
    n, w, size = code.n_slots, code.weight, code.size
    rng = np.random.Generator(np.random.Philox(_STATS_SEED))
    exact = True
    rescue = 0.0
    pat_bits: list[float] = []
    align_v: list[float] = []
    align_p: list[float] = []
    classes: list[tuple] = []
    for l in range(1, min(w, n - w) + 1):
        jp = np.array(list(itertools.combinations(range(w), l)))
        kp = np.array(list(itertools.combinations(range(n - w), l)))
        n_events = size * len(jp) * len(kp)
        if n_events <= _STATS_EXACT_EVENTS:
            tx_l = np.repeat(np.arange(size, dtype=np.int64), len(jp) * len(kp))
            jj = np.tile(np.repeat(jp, len(kp), axis=0), (size, 1))
            kk = np.tile(np.tile(kp, (len(jp), 1)), (size, 1))
        else:
            exact = False
            tx_l = rng.integers(0, size, _STATS_SAMPLES)
            jj = jp[rng.integers(0, len(jp), _STATS_SAMPLES)]
            kk = kp[rng.integers(0, len(kp), _STATS_SAMPLES)]
        sup = code.table[tx_l].astype(np.int64)
        mask = np.zeros((len(sup), n), dtype=bool)
        rows = np.arange(len(sup))
        mask[rows[:, None], sup] = True
        inact = np.nonzero(~mask)[1].reshape(len(sup), n - w)
        det = sup.copy()
        det[rows[:, None], jj] = inact[rows[:, None], kk]
        det = np.sort(det, axis=1)
        resc, pb, av, ap, cl = _decode_swap_rows(sup, tx_l, det, code)
        if l == 1:
            rescue = float(resc.mean())
        pat_bits.append(float(pb.mean()))
        align_v.append(float(av.mean()))
        align_p.append(float(ap.mean()))
        classes.append(
            tuple(tuple(float(v) for v in row) for row in cl.mean(axis=0))
        )

    stats = CorrectionStats(
        rescue_prob=rescue,
        pat_bits=tuple(pat_bits),
        align_v=tuple(align_v),
        align_p=tuple(align_p),
        classes=tuple(classes),
        exact=exact,
    )
    _STATS_CACHE[key] = stats
    return stats


def k_l(n_slots: int, weight: int, missed: int) -> Fraction:
    """Weight of the event that an erroneous pattern misses exactly l slots."""
    if not (1 <= missed <= min(weight, n_slots - weight)):
        raise ValueError("missed-slot count out of range")
    return Fraction(
        math.comb(weight, missed) * math.comb(n_slots - weight, missed),
        math.comb(n_slots, weight) - 1,
    )


def ne_mppm(q_mppm: int) -> float:
    """Expected erroneous pattern bits per pattern detection error."""
    if q_mppm < 1:
        raise ValueError("q_mppm must be >= 1")
    return q_mppm * (1 << (q_mppm - 1)) / ((1 << q_mppm) - 1)


def distance_spectrum(code: MppmCode) -> dict[int, int]:
    """Ordered pair counts by squared distance over the usable set."""
    if code.table_bits is None or code.size > (1 << 13):
        raise ValueError("distance spectrum limited to sets of at most 8192 patterns")
    bits = code.table_bits
    spectrum: dict[int, int] = {}
    block = 1024
    for lo in range(0, code.size, block):
        overlap = np.bitwise_count(bits[lo : lo + block, None] & bits[None, :])
        d2 = 2 * (code.weight - overlap.astype(np.int64))
        vals, counts = np.unique(d2, return_counts=True)
        for v, cnt in zip(vals, counts):
            spectrum[int(v)] = spectrum.get(int(v), 0) + int(cnt)
    spectrum.pop(0, None)  # self pairs
    return spectrum


def mppm_ser_ub(code: MppmCode, scale: float, clamp: bool = False) -> float:
    """Union bound on the pattern symbol error probability.

    scale is T_s*I_ph^2 / sigma_n^2; pairwise terms erfc(sqrt(scale*d^2/8))
    are averaged over transmitted patterns of the usable set.
    """
    if scale < 0:
        raise ValueError("scale must be >= 0")
    spec = distance_spectrum(code)
    total = 0.0
    for d2, cnt in spec.items():
        total += cnt * erfc(np.sqrt(scale * d2 / 8.0))
    val = total / (2.0 * code.size)
    return float(min(val, 1.0)) if clamp else float(val)
