"""Desk-scale block coding with decoder side information, plus a classical
rate-distortion reference solver.

Everything here is deliberately tiny (V <= 8, block length <= 16, horizons
<= 2^14): the point is to exhibit the covering/packing phase transitions
exactly (by enumeration) and the window-scaling trends (by simulation), not
asymptotic constants.

Typicality is strong typicality with multiplicative slack delta: a block is
typical when every joint symbol-pair count n(a,b) lies within
[B P(a,b)(1-delta), B P(a,b)(1+delta)]. The integer count bounds are
precomputed with exact rational arithmetic so borderline blocks never
depend on float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .dist import kl as _kl, tv as _tv
from .source import SyntheticSource

V_CAP = 8
B_CAP = 16
N_CAP = 2 ** 14


# ---------------------------------------------------------------------------
# classical rate-distortion reference (Blahut-Arimoto)


@dataclass
class RDCurve:
    distortions: np.ndarray
    rates: np.ndarray            # bits/symbol

    def rate_at(self, d: float) -> float:
        return float(np.interp(d, self.distortions, self.rates))


def _ba_point(p_x, dist_mat, beta, tol=1e-10, max_iter=10 ** 5):
    """One Blahut-Arimoto operating point at Lagrange parameter beta."""
    v, vh = dist_mat.shape
    q = np.tile(p_x, (vh, 1)).T / vh
    q = q / q.sum(axis=1, keepdims=True)
    prev_d = np.inf
    for _ in range(max_iter):
        p_hat = p_x @ q
        log_w = -beta * dist_mat + np.log(np.maximum(p_hat, 1e-300))[None, :]
        log_w -= log_w.max(axis=1, keepdims=True)
        q = np.exp(log_w)
        q /= q.sum(axis=1, keepdims=True)
        d = float(p_x @ (q * dist_mat).sum(axis=1))
        if abs(d - prev_d) < tol:
            break
        prev_d = d
    else:
        raise RuntimeError("Blahut-Arimoto failed to converge")
    p_hat = p_x @ q
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, q / np.maximum(p_hat[None, :], 1e-300), 1.0)
        info = np.where(q > 0, q * np.log2(np.maximum(ratio, 1e-300)), 0.0)
    r = float(p_x @ info.sum(axis=1))
    return max(r, 0.0), d


def rd_reference(p_x, dist_mat, d_grid) -> RDCurve:
    """R(D) at the requested distortion grid, via bisection on the BA slope.

    The returned curve is convex and non-increasing; D at or above the
    zero-rate distortion min_xhat E[d(X, xhat)] maps to rate 0, and D = 0
    maps to the source entropy when the distortion measure permits exact
    reproduction.
    """
    p_x = np.asarray(p_x, dtype=np.float64)
    dist_mat = np.asarray(dist_mat, dtype=np.float64)
    if p_x.ndim != 1 or dist_mat.shape[0] != p_x.size:
        raise ValueError("shape mismatch between p_x and dist_mat")
    d_max = float(np.min(p_x @ dist_mat))        # best zero-rate reproduction
    entropy = float(-(p_x[p_x > 0] * np.log2(p_x[p_x > 0])).sum())
    rates = []
    d_grid = np.asarray(sorted(d_grid), dtype=np.float64)
    for d in d_grid:
        if d >= d_max:
            rates.append(0.0)
            continue
        if d <= 0:
            rates.append(entropy)
            continue
        lo, hi = 0.0, 1.0
        while _ba_point(p_x, dist_mat, hi)[1] > d:
            hi *= 2
            if hi > 1e8:
                break
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            r, dd = _ba_point(p_x, dist_mat, mid)
            if dd > d:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12:
                break
        rates.append(_ba_point(p_x, dist_mat, hi)[0])
    return RDCurve(distortions=d_grid, rates=np.asarray(rates))


def binary_hamming_rd(d: float) -> float:
    """Closed-form check value: R(D) = 1 - h2(D) for the uniform binary source."""
    if d <= 0:
        return 1.0
    if d >= 0.5:
        return 0.0
    h2 = -d * math.log2(d) - (1 - d) * math.log2(1 - d)
    return 1.0 - h2


# ---------------------------------------------------------------------------
# typicality with exact integer count bounds


def count_bounds(joint: np.ndarray, block_len: int, delta: float):
    """Integer bounds (n_min, n_max) per joint cell for strong typicality.

    Computed with Fractions of the exact binary values of `joint`, so ties
    at the band edges are resolved exactly. Cells with zero probability
    require zero count.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    b = Fraction(block_len)
    dlt = Fraction(delta)
    n_min = np.zeros(joint.shape, dtype=np.int64)
    n_max = np.zeros(joint.shape, dtype=np.int64)
    it = np.nditer(joint, flags=["multi_index"])
    for val in it:
        p = Fraction(float(val))
        idx = it.multi_index
        if p == 0:
            continue
        lo = b * p * (1 - dlt)
        hi = b * p * (1 + dlt)
        n_min[idx] = max(0, math.ceil(lo)) if lo > 0 else 0
        n_max[idx] = min(block_len, math.floor(hi))
    return n_min, n_max


def joint_counts(a_block: np.ndarray, b_block: np.ndarray, na: int, nb: int) -> np.ndarray:
    counts = np.zeros((na, nb), dtype=np.int64)
    np.add.at(counts, (a_block, b_block), 1)
    return counts


def is_typical(a_block, b_block, bounds) -> bool:
    n_min, n_max = bounds
    counts = joint_counts(np.asarray(a_block), np.asarray(b_block),
                          n_min.shape[0], n_min.shape[1])
    return bool(np.all(counts >= n_min) and np.all(counts <= n_max))


# ---------------------------------------------------------------------------
# desk channel model and codebooks


@dataclass(frozen=True)
class CodingConfig:
    V: int
    aux_size: int
    block_len: int
    window: int
    rate: float          # codebook rate R, bits/symbol
    bin_rate: float      # transmitted rate R', bits/symbol
    delta: float
    seed: int = 0

    def __post_init__(self):
        if not (2 <= self.V <= V_CAP):
            raise ValueError(f"V must lie in [2, {V_CAP}]")
        if not (1 <= self.aux_size <= self.V + 2):
            raise ValueError("aux alphabet size must be <= V + 2")
        if not (1 <= self.block_len <= B_CAP):
            raise ValueError(f"block length must lie in [1, {B_CAP}]")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not (self.rate >= self.bin_rate >= 0):
            raise ValueError("need R >= R' >= 0")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def n_words(self) -> int:
        return max(1, round(2 ** (self.block_len * self.rate)))

    @property
    def n_bins(self) -> int:
        return max(1, round(2 ** (self.block_len * self.bin_rate)))


@dataclass(frozen=True)
class DeskChannels:
    """Memoryless desk model: source marginal, auxiliary test channel
    W[u|x], and side-information channel Q[q|x]."""
    p_x: np.ndarray
    aux_channel: np.ndarray     # (V, U)
    side_channel: np.ndarray    # (V, Vq)

    def joint_xu(self) -> np.ndarray:
        return self.p_x[:, None] * self.aux_channel

    def p_u(self) -> np.ndarray:
        return self.p_x @ self.aux_channel

    def joint_uq(self) -> np.ndarray:
        # u and q are conditionally independent given x
        out = np.zeros((self.aux_channel.shape[1], self.side_channel.shape[1]))
        for x in range(self.p_x.size):
            out += self.p_x[x] * np.outer(self.aux_channel[x], self.side_channel[x])
        return out


def symmetric_channel(v: int, flip: float) -> np.ndarray:
    """Keep the symbol with probability 1 - flip, else uniform over all symbols."""
    if not (0 <= flip <= 1):
        raise ValueError("flip must lie in [0, 1]")
    return (1 - flip) * np.eye(v) + flip * np.full((v, v), 1.0 / v)


def mutual_information(joint: np.ndarray) -> float:
    """I(A; B) in bits from a joint pmf."""
    joint = np.asarray(joint, dtype=np.float64)
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    return float(np.sum(joint[mask] * np.log2(joint[mask] / (pa @ pb)[mask])))


@dataclass
class Codebook:
    words: np.ndarray     # (N, B) aux symbols
    bins: np.ndarray      # (N,)
    xu_bounds: tuple
    uq_bounds: tuple


def generate_codebook(config: CodingConfig, channels: DeskChannels,
                      rng: Optional[np.random.Generator] = None) -> Codebook:
    """Draw the codebook i.i.d. from the auxiliary marginal and bin it
    uniformly; the typicality count bounds are frozen alongside."""
    rng = rng or np.random.default_rng(config.seed)
    p_u = channels.p_u()
    words = rng.choice(p_u.size, size=(config.n_words, config.block_len), p=p_u)
    if config.n_bins >= config.n_words:
        # R' = R: singleton bins, i.e. the bin index simply names the codeword
        bins = np.arange(config.n_words)
    else:
        bins = rng.integers(0, config.n_bins, size=config.n_words)
    return Codebook(
        words=words, bins=bins,
        xu_bounds=count_bounds(channels.joint_xu(), config.block_len, config.delta),
        uq_bounds=count_bounds(channels.joint_uq(), config.block_len, config.delta),
    )


@dataclass
class EncodeResult:
    bin_index: int
    word_index: int
    failure: bool


def encode_block(config: CodingConfig, codebook: Codebook, x_block) -> EncodeResult:
    """First jointly typical codeword's bin index; failure falls back to the
    default (first) codeword, flagged."""
    x_block = np.asarray(x_block)
    n_min, n_max = codebook.xu_bounds
    # joint counts for all codewords at once via one-hot accumulation
    n, b = codebook.words.shape
    counts = np.zeros((n, n_min.shape[0], n_min.shape[1]), dtype=np.int64)
    rows = np.repeat(np.arange(n), b)
    np.add.at(counts, (rows, np.tile(x_block, n), codebook.words.ravel()), 1)
    ok = np.all((counts >= n_min) & (counts <= n_max), axis=(1, 2))
    hits = np.nonzero(ok)[0]
    if hits.size == 0:
        return EncodeResult(bin_index=int(codebook.bins[0]), word_index=0, failure=True)
    k = int(hits[0])
    return EncodeResult(bin_index=int(codebook.bins[k]), word_index=k, failure=False)


@dataclass
class DecodeResult:
    word_index: Optional[int]
    failure: bool

    def word(self, codebook: Codebook) -> Optional[np.ndarray]:
        return None if self.word_index is None else codebook.words[self.word_index]


def decode_block(config: CodingConfig, codebook: Codebook, bin_index: int,
                 q_block) -> DecodeResult:
    """Unique jointly typical codeword within the bin; none or multiple is a
    flagged failure."""
    q_block = np.asarray(q_block)
    members = np.nonzero(codebook.bins == bin_index)[0]
    n_min, n_max = codebook.uq_bounds
    hits = []
    for k in members:
        if is_typical(codebook.words[k], q_block, (n_min, n_max)):
            hits.append(int(k))
            if len(hits) > 1:
                return DecodeResult(word_index=None, failure=True)
    if len(hits) != 1:
        return DecodeResult(word_index=None, failure=True)
    return DecodeResult(word_index=hits[0], failure=False)


# ---------------------------------------------------------------------------
# exact (enumeration) failure probabilities for the phase-transition checks


def exact_covering_failure(config: CodingConfig, channels: DeskChannels) -> float:
    """P(no codeword jointly typical with the source block), exact.

    Codewords are i.i.d. from the auxiliary marginal, so the probability is
    E_x[(1 - P_typ(x))^N] with P_typ(x) enumerated over all auxiliary blocks.
    """
    b = config.block_len
    v, u = channels.p_x.size, channels.p_u().size
    bounds = count_bounds(channels.joint_xu(), b, config.delta)
    p_u = channels.p_u()
    total = 0.0
    for x in product(range(v), repeat=b):
        px = float(np.prod(channels.p_x[list(x)]))
        if px == 0:
            continue
        p_typ = 0.0
        for uw in product(range(u), repeat=b):
            if is_typical(np.array(x), np.array(uw), bounds):
                p_typ += float(np.prod(p_u[list(uw)]))
        total += px * (1.0 - p_typ) ** config.n_words
    return total


def exact_packing_wrong_typical(config: CodingConfig, channels: DeskChannels) -> float:
    """P(some non-sent bin-mate is jointly typical with the side info), exact.

    The other N - 1 codewords are i.i.d. and land in the sent bin with
    probability 1/n_bins, so the probability is
    E_q[1 - (1 - P_typ(q)/n_bins)^(N-1)] with q enumerated blockwise.
    """
    b = config.block_len
    u = channels.p_u().size
    vq = channels.side_channel.shape[1]
    bounds = count_bounds(channels.joint_uq(), b, config.delta)
    p_u = channels.p_u()
    p_q = channels.p_x @ channels.side_channel
    total = 0.0
    for q in product(range(vq), repeat=b):
        pq = float(np.prod(p_q[list(q)]))
        if pq == 0:
            continue
        p_typ = 0.0
        for uw in product(range(u), repeat=b):
            if is_typical(np.array(uw), np.array(q), bounds):
                p_typ += float(np.prod(p_u[list(uw)]))
        total += pq * (1.0 - (1.0 - p_typ / config.n_bins) ** (config.n_words - 1))
    return total


# ---------------------------------------------------------------------------
# achievability runs on a synthetic source


@dataclass
class CodingOutcome:
    n: int
    window: int
    block_len: int
    rate_bits_per_token: float
    kl_per_token: float          # nats, distribution reconstruction distortion
    tv_per_token: float
    token_error_rate: float      # coding-layer symbol errors in the decoded window
    encode_failures: int
    decode_failures: int
    n_blocks: int


def achievability_config(source: SyntheticSource, n: int, alpha: float,
                         delta: float = 1.5, side_flip: float = 0.2,
                         rate_margin: float = 0.25, block_cap: int = 8,
                         seed: int = 0) -> tuple:
    """Derive a desk CodingConfig and channels for one horizon n.

    Window w_n = ceil(n^(1/(alpha+1))); block length follows the window up
    to a cap that keeps the codebook enumerable at desk scale. The
    auxiliary channel is a copy of the token (the code describes the tokens
    themselves; the conditional reconstruction is computed from the decoded
    window), the side channel a symmetric corruption wide enough that the
    sent codeword stays jointly typical with the side info. The codebook
    rate covers I(X;U) with margin; bins give back I(U;Q) minus the margin.
    """
    if n > N_CAP:
        raise ValueError(f"horizon n capped at {N_CAP} for desk-scale runs")
    v = source.spec.V
    if v > 4:
        raise ValueError("achievability runs are capped at V <= 4")
    w = max(1, math.ceil(n ** (1.0 / (alpha + 1.0))))
    b = min(w, min(block_cap, B_CAP))
    channels = DeskChannels(
        p_x=np.full(v, 1.0 / v),
        aux_channel=np.eye(v),
        side_channel=symmetric_channel(v, side_flip),
    )
    i_xu = mutual_information(channels.joint_xu())
    rate = i_xu + rate_margin
    # singleton bins: at desk block lengths the count-typicality test cannot
    # disambiguate bin mates against the side info reliably, and a corrupted
    # window would drown the truncation signal this run is measuring; the
    # bin-rate savings are exercised separately by the packing oracle
    cfg = CodingConfig(V=v, aux_size=v, block_len=b, window=w, rate=rate,
                       bin_rate=rate, delta=delta, seed=seed)
    return cfg, channels


def run_achievability(source: SyntheticSource, n: int, alpha: float,
                      delta: float = 1.5, side_flip: float = 0.2,
                      rate_margin: float = 0.25, seed: int = 0) -> CodingOutcome:
    """Stream one length-n sample through the block coder and measure the
    reconstruction distortion of the window-truncated conditional.

    Encoding failures (blocks whose empirical statistics fall outside the
    typical band, e.g. long copy runs) take an escape path: the block is
    sent raw at log2(V) bits/symbol plus a one-bit flag, so the decoded
    window stays exact and the failure cost is rate, not distortion.
    Decode failures fall back to the side-information tokens for that block.
    Distortion is measured at each block boundary against the true full
    conditional.
    """
    cfg, channels = achievability_config(source, n, alpha, delta=delta,
                                         side_flip=side_flip,
                                         rate_margin=rate_margin, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, n]))
    codebook = generate_codebook(cfg, channels, rng)
    x = source.sample_prefix(n, seed=seed)
    q = x.copy()
    flips = rng.random(n) < side_flip
    q[flips] = rng.integers(0, cfg.V, size=int(flips.sum()))

    b = cfg.block_len
    n_blocks = n // b
    if n_blocks < 2:
        raise ValueError("horizon too small for the derived block length")
    decoded = np.empty(n_blocks * b, dtype=np.int64)
    enc_fail = dec_fail = 0
    bits_sent = 0.0
    kl_sum = tv_sum = 0.0
    n_meas = 0
    for m in range(n_blocks):
        lo = m * b
        xb = x[lo:lo + b]
        # distortion at the block boundary, before coding this block
        if m > 0:
            t = lo
            h_true = x[:t]
            win = decoded[max(0, t - cfg.window):t]
            h_dec = np.concatenate([x[:t - win.size], win])
            p_true = source.full_conditional(h_true)
            p_hat = source.truncated_conditional(h_dec, cfg.window)
            kl_sum += _kl(p_true, p_hat)
            tv_sum += _tv(p_true, p_hat)
            n_meas += 1
        enc = encode_block(cfg, codebook, xb)
        bits_sent += 1.0          # escape flag
        if enc.failure:
            enc_fail += 1
            bits_sent += b * math.log2(cfg.V)
            decoded[lo:lo + b] = xb
            continue
        bits_sent += b * cfg.bin_rate
        if cfg.n_bins >= cfg.n_words:
            # singleton bins: the bin index names the codeword directly
            decoded[lo:lo + b] = codebook.words[enc.bin_index]
        else:
            dec = decode_block(cfg, codebook, enc.bin_index, q[lo:lo + b])
            if dec.failure:
                dec_fail += 1
                decoded[lo:lo + b] = q[lo:lo + b]
            else:
                decoded[lo:lo + b] = dec.word(codebook)
    token_errors = int(np.sum(decoded != x[:n_blocks * b]))
    return CodingOutcome(
        n=n, window=cfg.window, block_len=b,
        rate_bits_per_token=bits_sent / (n_blocks * b),
        kl_per_token=kl_sum / max(n_meas, 1),
        tv_per_token=tv_sum / max(n_meas, 1),
        token_error_rate=token_errors / (n_blocks * b),
        encode_failures=enc_fail, decode_failures=dec_fail, n_blocks=n_blocks)
