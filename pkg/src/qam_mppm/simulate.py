"""Seeded, parallel-deterministic Monte-Carlo simulation of both detectors.

Frames are simulated at the sufficient-statistic level: per slot the two
QAM correlator outputs and the matched-filter output, each with independent
Gaussian noise.  Batches draw their random streams from a counter-based
generator keyed on (master seed, sweep point, batch index), so results are
bitwise independent of the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .constellation import Constellation, build_constellation
from .link import LinkParams
from .mppm import MppmCode, make_code, rank_supports, unrank

BATCH_FRAMES = 50_000
MIN_ERRORS = 100
MIN_FRAMES = 100_000
_CORRECTION_CHUNK = 2048

WORKER_ENV_VAR = "QAM_MPPM_MAX_WORKERS"


@dataclass
class TrialCounters:
    """Aggregated per-detector counters for one sweep point."""

    frames: int = 0
    sym_errors: int = 0
    bit_errors: int = 0
    bit_errors_sq: int = 0  # sum of squared per-frame bit error counts
    mppm_errors: int = 0
    qam_cond_errors: int = 0
    qam_cond_opportunities: int = 0

    def merge(self, other: "TrialCounters") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def ser(self) -> float:
        return self.sym_errors / self.frames if self.frames else math.nan

    def ser_stderr(self) -> float:
        if not self.frames:
            return math.nan
        p = self.ser()
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.frames)

    def ber(self, q_total: int) -> float:
        return self.bit_errors / (q_total * self.frames) if self.frames else math.nan

    def ber_stderr(self, q_total: int) -> float:
        """Frame-clustered standard error of the BER estimate."""
        if not self.frames:
            return math.nan
        mean = self.bit_errors / self.frames
        var = max(self.bit_errors_sq / self.frames - mean**2, 0.0)
        return math.sqrt(var / self.frames) / q_total

    def mppm_ser(self) -> float:
        return self.mppm_errors / self.frames if self.frames else math.nan

    def qam_cond_ser(self) -> float:
        if not self.qam_cond_opportunities:
            return math.nan
        return self.qam_cond_errors / self.qam_cond_opportunities


@dataclass(frozen=True)
class FrameTx:
    """One transmitted frame: pattern rank, symbols at active slots, bits."""

    pattern_rank: int
    support: tuple[int, ...]
    qam_indices: tuple[int, ...]
    bits: int


def assemble_bits(pattern_rank, qam_labels, n_q: int):
    """Frame bit word: pattern bits first, then QAM words in slot order."""
    word = np.asarray(pattern_rank, dtype=np.int64)
    labels = np.asarray(qam_labels, dtype=np.int64)
    if labels.ndim == 1:
        labels = labels[None, :]
        word = word[None] if word.ndim == 0 else word
    for j in range(labels.shape[1]):
        word = (word << n_q) | labels[:, j]
    return word


def generate_frame(rng: np.random.Generator, code: MppmCode, c: Constellation) -> FrameTx:
    """Draw one uniform frame (pattern word and QAM symbols)."""
    rank = int(rng.integers(0, code.size))
    support = tuple(code.table[rank]) if code.table is not None else unrank(rank, code)
    qam = tuple(int(v) for v in rng.integers(0, c.m_q, code.weight))
    bits = int(assemble_bits(rank, c.labels[list(qam)], c.n_q)[0])
    return FrameTx(pattern_rank=rank, support=tuple(int(s) for s in support),
                   qam_indices=qam, bits=bits)


def channel(frame: FrameTx, c: Constellation, link: LinkParams,
            rng: np.random.Generator):
    """Slot statistics (r_i, r_q, r_dc) for one frame, with AWGN.

    The three noise components per slot are mutually independent: the DC
    matched filter and the two carrier correlators are orthogonal over a
    slot for an integer number of carrier cycles.
    """
    n = link.n_slots
    amp = math.sqrt(link.t_s / 2.0) * link.i_ph * link.m
    mu = math.sqrt(link.t_s) * link.i_ph
    r_i = np.zeros(n)
    r_q = np.zeros(n)
    r_dc = np.zeros(n)
    for j, slot in enumerate(frame.support):
        r_i[slot] = amp * c.points[frame.qam_indices[j], 0]
        r_q[slot] = amp * c.points[frame.qam_indices[j], 1]
        r_dc[slot] = mu
    sigma = math.sqrt(link.sigma2)
    r_i += rng.normal(0.0, sigma, n)
    r_q += rng.normal(0.0, sigma, n)
    r_dc += rng.normal(0.0, sigma, n)
    return r_i, r_q, r_dc


def _correct_patterns(supports: np.ndarray, code: MppmCode,
                      rng: np.random.Generator) -> np.ndarray:
    """Vectorized nearest-member correction for out-of-set patterns.

    All single-swap neighbors (squared distance 2) are ranked; a uniform
    random in-set neighbor is taken.  Rows with no in-set neighbor (possible
    only for tiny expurgated sets) fall back to a full scan.
    """
    n, w = code.n_slots, code.weight
    out = supports.copy()
    for lo in range(0, len(supports), _CORRECTION_CHUNK):
        sub = supports[lo : lo + _CORRECTION_CHUNK]
        nb = len(sub)
        mask = np.zeros((nb, n), dtype=bool)
        mask[np.arange(nb)[:, None], sub] = True
        inactive = np.nonzero(~mask)[1].reshape(nb, n - w)
        # candidates: drop active j, add inactive b -> (nb, w*(n-w), w)
        cands = np.repeat(sub[:, None, :], w * (n - w), axis=1).reshape(nb, w, n - w, w)
        for j in range(w):
            cands[:, j, :, j] = inactive
        cands = np.sort(cands.reshape(nb, w * (n - w), w), axis=2)
        ranks = rank_supports(cands.reshape(-1, w), code).reshape(nb, w * (n - w))
        ok = ranks < code.size
        u = rng.random(ok.shape)
        u[~ok] = -1.0
        pick = np.argmax(u, axis=1)
        chosen = cands[np.arange(nb), pick]
        none = ~ok.any(axis=1)
        if np.any(none):
            for row in np.flatnonzero(none):
                chosen[row] = _full_scan_correct(sub[row], code, rng)
        out[lo : lo + _CORRECTION_CHUNK] = chosen
    return out


def _full_scan_correct(support, code: MppmCode, rng) -> np.ndarray:
    bits = np.uint64(0)
    for c in support:
        bits |= np.uint64(1) << np.uint64(c)
    if code.table_bits is not None:
        overlap = np.bitwise_count(code.table_bits & bits)
        best = np.flatnonzero(overlap == overlap.max())
        return code.table[best[rng.integers(len(best))]]
    raise RuntimeError("full-scan correction requires a materialized table")


def _detect(metric: np.ndarray, r_i: np.ndarray, r_q: np.ndarray,
            code: MppmCode, c: Constellation, rng: np.random.Generator):
    """Shared slot-selection + correction + demap for one metric choice."""
    nb, _ = metric.shape
    w = code.weight
    top = np.argpartition(-metric, w - 1, axis=1)[:, :w]
    det_support = np.sort(top, axis=1).astype(np.int16)
    det_rank = rank_supports(det_support, code)
    bad = det_rank >= code.size
    if np.any(bad):
        det_support = det_support.copy()
        det_support[bad] = _correct_patterns(det_support[bad], code, rng)
        det_rank = det_rank.copy()
        det_rank[bad] = rank_supports(det_support[bad], code)
    rows = np.arange(nb)[:, None]
    yi = r_i[rows, det_support]
    yq = r_q[rows, det_support]
    # ML demap against scaled points; scale cancels in the argmin ordering
    # only if applied to the points, so compare in statistic units.
    return det_support, det_rank, yi, yq


def _demap(yi, yq, c: Constellation, amp: float):
    pi = amp * c.points[:, 0]
    pq = amp * c.points[:, 1]
    d2 = (yi[..., None] - pi) ** 2 + (yq[..., None] - pq) ** 2
    return np.argmin(d2, axis=-1)


def _popcount64(v: np.ndarray) -> np.ndarray:
    return np.bitwise_count(v.astype(np.uint64)).astype(np.int64)


def _detect_single(metric, r_i, r_q, code, c, amp, rng):
    det_support, det_rank, yi, yq = _detect(
        metric[None, :], r_i[None, :], r_q[None, :], code, c, rng
    )
    det_idx = _demap(yi, yq, c, amp)
    bits = int(assemble_bits(det_rank, c.labels[det_idx], c.n_q)[0])
    pattern = np.zeros(code.n_slots, dtype=np.uint8)
    pattern[det_support[0]] = 1
    return pattern, tuple(int(v) for v in det_idx[0]), bits


def detect_cmd(stats, code: MppmCode, c: Constellation, link: LinkParams,
               rng: np.random.Generator):
    """Power-metric detection of one frame's (r_i, r_q, r_dc) statistics."""
    r_i, r_q, _ = stats
    amp = math.sqrt(link.t_s / 2.0) * link.i_ph * link.m
    metric = np.asarray(r_i) ** 2 + np.asarray(r_q) ** 2
    return _detect_single(metric, np.asarray(r_i), np.asarray(r_q), code, c, amp, rng)


def detect_imd(stats, code: MppmCode, c: Constellation, link: LinkParams,
               rng: np.random.Generator):
    """Matched-filter detection of one frame's statistics."""
    r_i, r_q, r_dc = stats
    amp = math.sqrt(link.t_s / 2.0) * link.i_ph * link.m
    return _detect_single(np.asarray(r_dc, dtype=float), np.asarray(r_i),
                          np.asarray(r_q), code, c, amp, rng)


def simulate_batch(code: MppmCode, c: Constellation, link: LinkParams,
                   detectors: tuple[str, ...], n_frames: int,
                   seed_key) -> dict[str, TrialCounters]:
    """Simulate n_frames frames and count errors for each requested detector."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))
    n, w, m_q, n_q = link.n_slots, link.weight, c.m_q, c.n_q
    tx_rank = rng.integers(0, code.size, n_frames)
    if code.table is not None:
        tx_support = code.table[tx_rank].astype(np.int64)
    else:
        tx_support = np.array([unrank(int(r), code) for r in tx_rank], dtype=np.int64)
    qam_idx = rng.integers(0, m_q, (n_frames, w))
    amp = math.sqrt(link.t_s / 2.0) * link.i_ph * link.m
    mu = math.sqrt(link.t_s) * link.i_ph
    sigma = math.sqrt(link.sigma2)
    rows = np.arange(n_frames)[:, None]

    r_i = rng.normal(0.0, sigma, (n_frames, n))
    r_q = rng.normal(0.0, sigma, (n_frames, n))
    r_i[rows, tx_support] += amp * c.points[qam_idx, 0]
    r_q[rows, tx_support] += amp * c.points[qam_idx, 1]
    r_dc = None
    if "imd" in detectors:
        r_dc = rng.normal(0.0, sigma, (n_frames, n))
        r_dc[rows, tx_support] += mu

    tx_bits = assemble_bits(tx_rank, c.labels[qam_idx], n_q)
    tx_slot_sym = np.full((n_frames, n), -1, dtype=np.int64)
    tx_slot_sym[rows, tx_support] = qam_idx

    out: dict[str, TrialCounters] = {}
    for det in detectors:
        metric = r_i**2 + r_q**2 if det == "cmd" else r_dc
        det_support, det_rank, yi, yq = _detect(metric, r_i, r_q, code, c, rng)
        det_idx = _demap(yi, yq, c, amp)
        rx_bits = assemble_bits(det_rank, c.labels[det_idx], n_q)
        diff = _popcount64(np.bitwise_xor(tx_bits, rx_bits))
        mppm_err = det_rank != tx_rank
        rx_slot_sym = np.full((n_frames, n), -2, dtype=np.int64)
        rx_slot_sym[rows, det_support] = det_idx
        common = (tx_slot_sym >= 0) & (rx_slot_sym >= 0)  # slot active in both
        cond_err = int(np.sum((tx_slot_sym != rx_slot_sym) & common))
        out[det] = TrialCounters(
            frames=n_frames,
            sym_errors=int(np.sum(diff > 0)),
            bit_errors=int(np.sum(diff)),
            bit_errors_sq=int(np.sum(diff * diff)),
            mppm_errors=int(np.sum(mppm_err)),
            qam_cond_errors=cond_err,
            qam_cond_opportunities=int(np.sum(common)),
        )
    return out


def _batch_worker(args):
    code_args, n_q, link, detectors, n_frames, seed_key = args
    code = _worker_code(code_args)
    c = _worker_const(n_q)
    return simulate_batch(code, c, link, detectors, n_frames, seed_key)


_CODE_CACHE: dict = {}


def _worker_code(code_args):
    if code_args not in _CODE_CACHE:
        _CODE_CACHE[code_args] = make_code(*code_args)
    return _CODE_CACHE[code_args]


def _worker_const(n_q):
    key = ("const", n_q)
    if key not in _CODE_CACHE:
        _CODE_CACHE[key] = build_constellation(n_q)
    return _CODE_CACHE[key]


def max_workers() -> int:
    env = os.environ.get(WORKER_ENV_VAR)
    if env:
        return max(1, int(env))
    return min(os.cpu_count() or 1, 8)


def run_point(code: MppmCode, c: Constellation, link: LinkParams,
              detectors: tuple[str, ...], budget: int, seed: int, point_index: int,
              workers: int | None = None, batch_frames: int = BATCH_FRAMES,
              min_errors: int = MIN_ERRORS, min_frames: int = MIN_FRAMES,
              ) -> dict[str, TrialCounters]:
    """Simulate one sweep point with deterministic early stopping.

    Batches are merged strictly in index order and the stop decision is a
    function of the in-order cumulative counters only, so the result is
    identical for any worker count.
    """
    if budget < 1:
        raise ValueError("budget must be at least one frame")
    workers = workers or max_workers()
    n_batches = (budget + batch_frames - 1) // batch_frames
    sizes = [min(batch_frames, budget - i * batch_frames) for i in range(n_batches)]
    totals = {det: TrialCounters() for det in detectors}

    def arg(i):
        return ((code.n_slots, code.weight), c.n_q, link, detectors, sizes[i],
                [seed, point_index, i])

    def stopped() -> bool:
        frames = totals[detectors[0]].frames
        if frames < min(min_frames, budget):
            return False
        return all(t.sym_errors >= min_errors for t in totals.values())

    if workers <= 1:
        for i in range(n_batches):
            res = simulate_batch(code, c, link, detectors, sizes[i], [seed, point_index, i])
            for det in detectors:
                totals[det].merge(res[det])
            if stopped():
                break
        return totals

    with ProcessPoolExecutor(max_workers=workers) as pool:
        i = 0
        while i < n_batches:
            wave = list(range(i, min(i + workers, n_batches)))
            results = list(pool.map(_batch_worker, [arg(j) for j in wave]))
            done = False
            for res in results:
                for det in detectors:
                    totals[det].merge(res[det])
                if stopped():
                    done = True
                    break
            if done:
                break
            i = wave[-1] + 1
    return totals


def run_sweep(code: MppmCode, c: Constellation, links: list[LinkParams],
              detectors: tuple[str, ...], budget: int, seed: int,
              workers: int | None = None, **kwargs) -> list[dict[str, TrialCounters]]:
    """Simulate every sweep point; budget is the per-point frame cap."""
    return [
        run_point(code, c, link, detectors, budget, seed, idx, workers, **kwargs)
        for idx, link in enumerate(links)
    ]


def waveform_crosscheck(frame: FrameTx, c: Constellation, link: LinkParams,
                        n_c: int, samples_per_slot: int,
                        rng: np.random.Generator | None = None):
    """Sampled-waveform synthesis and discrete correlators for one frame.

    Returns (r_i, r_q, r_dc) per slot from Riemann-sum approximations of the
    continuous correlators; with no noise these converge to the statistic
    means as the sample count grows.
    """
    if int(n_c) != n_c or n_c < 2:
        raise ValueError("carrier cycles per slot must be an integer >= 2")
    if samples_per_slot % (4 * n_c) != 0:
        raise ValueError("samples_per_slot must be a multiple of 4*n_c")
    n = link.n_slots
    ns = samples_per_slot
    dt = link.t_s / ns
    f_c = n_c / link.t_s
    t = (np.arange(n * ns) + 0.5) * dt
    active = np.zeros(n)
    ai = np.zeros(n)
    aq = np.zeros(n)
    for j, slot in enumerate(frame.support):
        active[slot] = 1.0
        ai[slot] = c.points[frame.qam_indices[j], 0]
        aq[slot] = c.points[frame.qam_indices[j], 1]
    slot_of = np.repeat(np.arange(n), ns)
    s = link.i_ph * active[slot_of] * (
        1.0
        + link.m * (ai[slot_of] * np.cos(2 * np.pi * f_c * t)
                    + aq[slot_of] * np.sin(2 * np.pi * f_c * t))
    )
    if rng is not None:
        # white noise with PSD 2*sigma2 over the sampled bandwidth
        s = s + rng.normal(0.0, math.sqrt(2.0 * link.sigma2 / dt), len(s))
    cos_corr = np.sqrt(2.0 / link.t_s) * np.cos(2 * np.pi * f_c * t)
    sin_corr = np.sqrt(2.0 / link.t_s) * np.sin(2 * np.pi * f_c * t)
    rect = 1.0 / np.sqrt(link.t_s)
    sl = s.reshape(n, ns)
    r_i = np.sum(sl * cos_corr.reshape(n, ns), axis=1) * dt
    r_q = np.sum(sl * sin_corr.reshape(n, ns), axis=1) * dt
    r_dc = np.sum(sl * rect, axis=1) * dt
    return r_i, r_q, r_dc
