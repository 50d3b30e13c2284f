"""Decay-oblivious window selection: a logarithmic grid of window sizes
tracked by exponential weights over Lagrangian per-block losses.

The grid spacing 1 / ln(n) guarantees a point within one spacing of any
exponent in [alpha_min, alpha_max]; the windows n^(1/(alpha_j + 1)) are
nested suffixes of the largest one, so the physical cache only ever holds
w_0 = n^(1/(alpha_min + 1)) tokens and switching experts needs no state
reconstruction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dist import kl as _kl
from .source import SyntheticSource


@dataclass(frozen=True)
class WindowGrid:
    alpha_min: float
    alpha_max: float
    n: int
    points: np.ndarray     # alpha_j, j = 0..J
    windows: np.ndarray    # n^(1/(alpha_j + 1)), strictly decreasing in j

    @property
    def spacing(self) -> float:
        return 1.0 / math.log(self.n)

    @property
    def n_experts(self) -> int:
        return self.points.size


def build_grid(alpha_min: float, alpha_max: float, n: int) -> WindowGrid:
    """Grid alpha_j = alpha_min + j / ln(n), j = 0..ceil((alpha_max-alpha_min) ln n)."""
    if not (0 < alpha_min <= alpha_max):
        raise ValueError("need 0 < alpha_min <= alpha_max")
    if n < 3:
        raise ValueError("horizon n must be >= 3")
    ln_n = math.log(n)
    J = math.ceil((alpha_max - alpha_min) * ln_n)
    points = alpha_min + np.arange(J + 1) / ln_n
    windows = float(n) ** (1.0 / (points + 1.0))
    return WindowGrid(alpha_min=alpha_min, alpha_max=alpha_max, n=n,
                      points=points, windows=windows)


@dataclass(frozen=True)
class HedgeState:
    beta: float
    loss_bound: float
    lam: float
    cum_losses: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        z = -self.beta * (self.cum_losses - self.cum_losses.min())
        w = np.exp(z)
        return w / w.sum()

    @property
    def selected(self) -> int:
        """Weight argmax; ties resolve to the larger window (smaller index)."""
        w = self.weights
        return int(np.argmax(w >= w.max() - 1e-15))


def init_hedge(n_experts: int, n_rounds: int, loss_bound: float,
               lam: float) -> HedgeState:
    if n_experts < 1 or n_rounds < 1:
        raise ValueError("need at least one expert and one round")
    beta = math.sqrt(8.0 * math.log(n_experts) / n_rounds) if n_experts > 1 else 0.0
    return HedgeState(beta=beta, loss_bound=loss_bound, lam=lam,
                      cum_losses=np.zeros(n_experts))


def hedge_step(state: HedgeState, losses) -> tuple[int, HedgeState]:
    """Select with the current weights, then absorb this block's losses."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != state.cum_losses.shape:
        raise ValueError("loss vector length does not match expert count")
    if np.any(losses < 0) or np.any(losses > state.loss_bound + 1e-12):
        raise ValueError(f"losses must lie in [0, {state.loss_bound}]")
    choice = state.selected
    return choice, replace(state, cum_losses=state.cum_losses + losses)


@dataclass
class UniversalTrace:
    grid: WindowGrid
    block_len: int
    lam: float
    loss_bound: float
    rates: np.ndarray          # per-expert proxy rate, bits/token
    block_kl: np.ndarray       # (n_blocks, n_experts) mean block KL, nats/token
    selections: np.ndarray     # expert index chosen per block
    mixture_loss: np.ndarray   # weight-averaged loss per block

    @property
    def losses(self) -> np.ndarray:
        return self.rates[None, :] + self.lam * self.block_kl

    @property
    def totals(self) -> np.ndarray:
        return self.losses.sum(axis=0)

    @property
    def best_expert(self) -> int:
        return int(np.argmin(self.totals))

    @property
    def selected_loss(self) -> float:
        m = np.arange(self.selections.size)
        return float(self.losses[m, self.selections].sum())

    @property
    def regret(self) -> float:
        return self.selected_loss - float(self.totals.min())

    @property
    def mixture_regret(self) -> float:
        return float(self.mixture_loss.sum()) - float(self.totals.min())

    @property
    def regret_bound(self) -> float:
        t = self.selections.size
        return self.loss_bound * math.sqrt(
            0.5 * t * math.log(self.grid.n_experts)) if self.grid.n_experts > 1 else 0.0

    @property
    def cache_tokens(self) -> int:
        """Tokens the shared physical cache must hold: the largest grid window."""
        return math.ceil(float(self.grid.windows[0]))

    @property
    def final_selection(self) -> int:
        return int(self.selections[-1])

    def rows(self):
        for m in range(self.selections.size):
            yield {"block": m, "selected_expert": int(self.selections[m]),
                   "selected_window": math.ceil(float(self.grid.windows[self.selections[m]])),
                   "mixture_loss": float(self.mixture_loss[m]),
                   **{f"kl_expert_{j}": float(self.block_kl[m, j])
                      for j in range(self.grid.n_experts)}}


def expert_frontier(source: SyntheticSource, grid: WindowGrid, n_pilot: int = 2048,
                    block_len: Optional[int] = None, seed: int = 0):
    """Pilot estimate of each expert's (rate, distortion) operating point."""
    windows = [max(1, math.ceil(float(w))) for w in grid.windows]
    b = block_len or max(1, math.ceil(float(grid.windows[-1])))
    x = source.sample_prefix(n_pilot, seed=seed)
    kls = np.zeros(grid.n_experts)
    count = 0
    for t in range(b, n_pilot):
        h = x[:t]
        p_full = source.full_conditional(h)
        conds = source.window_conditionals(h, windows)
        for j, w in enumerate(windows):
            kls[j] += _kl(p_full, conds[w])
        count += 1
    kls /= max(count, 1)
    rates = np.array([w * math.log2(source.spec.V) / b for w in windows])
    return rates, kls


def default_lambda(source: SyntheticSource, grid: WindowGrid,
                   target_distortion: Optional[float] = None,
                   n_pilot: int = 2048, seed: int = 0) -> float:
    """Finite-difference slope of the pilot distortion-vs-rate frontier at the
    target distortion (stand-in for the rate-distortion slope at D)."""
    rates, kls = expert_frontier(source, grid, n_pilot=n_pilot, seed=seed)
    if grid.n_experts < 2:
        return 1.0
    if target_distortion is None:
        target_distortion = float(np.median(kls))
    j = int(np.argmin(np.abs(kls - target_distortion)))
    j = min(max(j, 1), grid.n_experts - 1)
    # windows shrink with j: rates fall, distortions rise
    dr = rates[j - 1] - rates[j]
    dd = kls[j] - kls[j - 1]
    if dd <= 0 or dr <= 0:
        return 1.0
    return float(dr / dd)


def run_universal(source: SyntheticSource, n: int, grid: WindowGrid,
                  lam: Optional[float] = None, block_len: Optional[int] = None,
                  seed: int = 0, warn=None) -> UniversalTrace:
    """Run the exponential-weights selector over the window grid on one
    length-n sample; per-block loss of expert j is its proxy rate
    w_j log2(V) / B plus lam times the measured block KL."""
    spec_alpha = getattr(source.spec, "alpha", None)
    if spec_alpha is not None and not (grid.alpha_min <= spec_alpha <= grid.alpha_max):
        import warnings
        warnings.warn(f"source alpha {spec_alpha} outside grid range "
                      f"[{grid.alpha_min}, {grid.alpha_max}]", stacklevel=2)
    windows = [max(1, math.ceil(float(w))) for w in grid.windows]
    b = block_len or max(1, math.ceil(float(grid.windows[-1])))
    n_blocks = n // b
    if n_blocks < 1:
        raise ValueError("horizon shorter than one block")
    if lam is None:
        lam = default_lambda(source, grid, seed=seed + 1)
    rates = np.array([w * math.log2(source.spec.V) / b for w in windows])
    kl_cap = math.log(source.spec.V / source.spec.eta)
    loss_bound = float(rates.max() + lam * kl_cap)
    state = init_hedge(grid.n_experts, n_blocks, loss_bound, lam)
    x = source.sample_prefix(n_blocks * b + 1, seed=seed)
    block_kl = np.zeros((n_blocks, grid.n_experts))
    selections = np.zeros(n_blocks, dtype=np.int64)
    mixture = np.zeros(n_blocks)
    for m in range(n_blocks):
        lo = m * b
        for t in range(max(lo, 1), lo + b):
            h = x[:t]
            p_full = source.full_conditional(h)
            conds = source.window_conditionals(h, windows)
            for j, w in enumerate(windows):
                block_kl[m, j] += _kl(p_full, conds[w])
        block_kl[m] /= b
        losses = rates + lam * block_kl[m]
        mixture[m] = float(state.weights @ losses)
        selections[m], state = hedge_step(state, losses)
    return UniversalTrace(grid=grid, block_len=b, lam=lam, loss_bound=loss_bound,
                          rates=rates, block_kl=block_kl, selections=selections,
                          mixture_loss=mixture)
