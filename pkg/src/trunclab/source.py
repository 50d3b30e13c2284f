"""Synthetic autoregressive token sources with analytically known truncation tails.

A source draws, at each step, a lag L from a fixed lag distribution and
either copies the token L steps back (with probability 1 - eta) or emits a
uniform token. Lags reaching beyond the available history marginalize to
uniform, since tokens are a priori uniform under this construction. The
mixture makes both the full and the window-truncated conditionals exact
finite sums, and the truncation TV tail has a closed form, so every
downstream measurement has an oracle to check against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

POWER_LAG = "power_lag"
GEOMETRIC_LAG = "geometric_lag"


@dataclass(frozen=True)
class SourceSpec:
    """Parameters of a synthetic source.

    kind: "power_lag" (lag pmf ~ l^-(alpha+1)) or "geometric_lag" (~ rho^l).
    V: vocabulary size.
    alpha: decay exponent, power_lag only.
    rho: decay ratio in (0, 1), geometric_lag only.
    L_max: maximum lag in tokens; keeps conditionals exact finite sums.
    eta: uniform-noise mixing weight in (0, 1).
    seed: base RNG seed folded into every sampling call.
    """

    kind: str
    V: int
    alpha: Optional[float] = None
    rho: Optional[float] = None
    L_max: int = 4096
    eta: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (POWER_LAG, GEOMETRIC_LAG):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.V < 2:
            raise ValueError("V must be >= 2")
        if self.L_max < 1:
            raise ValueError("L_max must be >= 1")
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must lie in (0, 1)")
        if self.kind == POWER_LAG:
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("power_lag requires alpha > 0")
        else:
            if self.rho is None or not (0.0 < self.rho < 1.0):
                raise ValueError("geometric_lag requires rho in (0, 1)")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "V": self.V, "L_max": self.L_max,
             "eta": self.eta, "seed": self.seed}
        if self.kind == POWER_LAG:
            d["alpha"] = self.alpha
        else:
            d["rho"] = self.rho
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SourceSpec":
        return cls(**{k: d[k] for k in
                      ("kind", "V", "alpha", "rho", "L_max", "eta", "seed") if k in d})


class SyntheticSource:
    """A SourceSpec together with its normalized lag pmf and derived constants."""

    def __init__(self, spec: SourceSpec):
        self.spec = spec
        lags = np.arange(1, spec.L_max + 1, dtype=np.float64)
        if spec.kind == POWER_LAG:
            raw = lags ** (-(spec.alpha + 1.0))
        else:
            # rho^l computed in log space so deep tails underflow gracefully
            raw = np.exp(lags * math.log(spec.rho))
        self._set_lag_pmf(raw)

    def _set_lag_pmf(self, raw) -> None:
        # normalized pmf over lags 1..L_max plus the reversed-tail cumulative:
        # tail_mass[w] = sum_{l > w} lag_pmf[l] for w = 0..L_max
        raw = np.asarray(raw, dtype=np.float64)
        if raw.size != self.spec.L_max or np.any(raw < 0) or raw.sum() <= 0:
            raise ValueError("lag pmf must be a non-negative vector of length L_max")
        self.lag_pmf = raw / raw.sum()
        self._tail = np.concatenate([np.cumsum(self.lag_pmf[::-1])[::-1], [0.0]])

    @property
    def V(self) -> int:
        return self.spec.V

    def tail_mass(self, w: int) -> float:
        """Lag mass beyond w: sum_{l > w} P(L = l)."""
        if w < 0:
            raise ValueError("w must be >= 0")
        return float(self._tail[min(w, self.spec.L_max)])

    def _masked_conditional(self, history: np.ndarray, active: np.ndarray) -> np.ndarray:
        """Mixture conditional with only `active` lags contributing copy atoms.

        `active` is a boolean mask over lags 1..min(T, L_max); every inactive
        or out-of-range lag contributes its mass to the uniform term.
        """
        spec = self.spec
        T = history.size
        n_lag = min(T, spec.L_max)
        p = np.zeros(spec.V)
        if n_lag > 0 and active.any():
            pmf = self.lag_pmf[:n_lag][active]
            tokens = history[T - 1 - np.nonzero(active)[0]]
            copy_mass = (1.0 - spec.eta) * pmf
            np.add.at(p, tokens, copy_mass)
            atom_total = copy_mass.sum()
        else:
            atom_total = 0.0
        p += (1.0 - atom_total) / spec.V
        return p

    def full_conditional(self, history) -> np.ndarray:
        """Next-token distribution given the entire history."""
        history = _as_history(history, self.spec.V)
        n_lag = min(history.size, self.spec.L_max)
        return self._masked_conditional(history, np.ones(n_lag, dtype=bool))

    def truncated_conditional(self, history, w: int) -> np.ndarray:
        """Next-token distribution conditioning on only the most recent w tokens."""
        if w < 1:
            raise ValueError("window size w must be >= 1")
        history = _as_history(history, self.spec.V)
        n_lag = min(history.size, self.spec.L_max)
        active = np.zeros(n_lag, dtype=bool)
        active[: min(w, n_lag)] = True
        return self._masked_conditional(history, active)

    def retained_conditional(self, history, retained) -> np.ndarray:
        """Conditional with evicted positions marginalized to uniform.

        `retained` lists absolute positions (0-based) still in the cache;
        lags pointing at evicted positions lose their copy atom.
        """
        history = _as_history(history, self.spec.V)
        T = history.size
        n_lag = min(T, self.spec.L_max)
        active = np.zeros(n_lag, dtype=bool)
        keep = np.asarray(retained, dtype=np.int64)
        lag_of = T - keep  # position p corresponds to lag T - p
        ok = (lag_of >= 1) & (lag_of <= n_lag)
        active[lag_of[ok] - 1] = True
        return self._masked_conditional(history, active)

    def window_conditionals(self, history, windows) -> dict:
        """Truncated conditionals for several windows in one pass over lags.

        Returns {w: conditional}; equivalent to calling truncated_conditional
        per window but shares the lag walk, which matters when the expert
        grid is evaluated at every position.
        """
        windows = sorted(set(int(w) for w in windows))
        if windows and windows[0] < 1:
            raise ValueError("window size w must be >= 1")
        history = _as_history(history, self.spec.V)
        spec = self.spec
        T = history.size
        n_lag = min(T, spec.L_max)
        atoms = np.zeros(spec.V)
        out = {}
        prev = 0
        atom_total = 0.0
        for w in windows:
            hi = min(w, n_lag)
            if hi > prev:
                pmf = self.lag_pmf[prev:hi]
                tokens = history[T - 1 - np.arange(prev, hi)]
                copy_mass = (1.0 - spec.eta) * pmf
                np.add.at(atoms, tokens, copy_mass)
                atom_total += copy_mass.sum()
                prev = hi
            out[w] = atoms + (1.0 - atom_total) / spec.V
        return out

    def analytic_tv_tail(self, w: int) -> float:
        """Exact upper envelope for tv(full, truncated) at window w.

        (1 - eta)(1 - 1/V) * tail_mass(w); attained when the lagged tokens
        beyond the window all differ from the mode of the window part.
        """
        if w < 1:
            raise ValueError("w must be >= 1")
        spec = self.spec
        return (1.0 - spec.eta) * (1.0 - 1.0 / spec.V) * self.tail_mass(w)

    def sample_prefix(self, length: int, seed: int) -> np.ndarray:
        """Autoregressive sample of `length` tokens, deterministic in (spec.seed, seed).

        Sampling is hierarchical: draw a lag, then either copy the token that
        far back or emit a fresh uniform token (noise draw, or lag reaching
        beyond the start). Copy chains are resolved by pointer doubling, which
        yields the same sequence as the step-by-step recursion.
        """
        if length < 1:
            raise ValueError("length must be >= 1")
        spec = self.spec
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed & 0x7FFFFFFF, seed & 0x7FFFFFFF]))
        lags = rng.choice(spec.L_max, size=length, p=self.lag_pmf) + 1
        is_noise = rng.random(length) < spec.eta
        fresh = rng.integers(0, spec.V, size=length)
        t = np.arange(length)
        root = is_noise | (lags > t)
        parent = np.where(root, t, t - lags)
        # path compression: parents are strictly decreasing, so log2(length)
        # doubling passes reach every chain's fresh root
        while True:
            nxt = parent[parent]
            if np.array_equal(nxt, parent):
                break
            parent = nxt
        return fresh[parent]

    def sensitivity_params(self):
        """Computed decay constants: C_TS with tail(w) <= C_TS * w^-alpha (power_lag),
        or C_mix with tail(w) <= C_mix * rho^w (geometric_lag).

        The constant folds (1 - eta)(1 - 1/V) and the lag normalization, so the
        envelope is valid for every w >= 1 (integral/tail-sum domination).
        """
        spec = self.spec
        front = (1.0 - spec.eta) * (1.0 - 1.0 / spec.V)
        if spec.kind == POWER_LAG:
            lags = np.arange(1, spec.L_max + 1, dtype=np.float64)
            Z = float(np.sum(lags ** (-(spec.alpha + 1.0))))
            c_ts = front / (Z * spec.alpha)
            return {"kind": POWER_LAG, "C_TS": c_ts, "alpha": spec.alpha,
                    "epsilon_min": self.floor(), "V": spec.V}
        lags = np.arange(1, spec.L_max + 1, dtype=np.float64)
        Z = float(np.exp(lags * math.log(spec.rho)).sum())
        c_mix = front * spec.rho / ((1.0 - spec.rho) * Z)
        return {"kind": GEOMETRIC_LAG, "C_mix": c_mix, "rho": spec.rho,
                "epsilon_min": self.floor(), "V": spec.V}

    def floor(self) -> float:
        """Uniform floor of every conditional this source emits: eta contributes
        at least eta/V of uniform mass regardless of history."""
        return self.spec.eta / self.spec.V


def _as_history(history, v: int) -> np.ndarray:
    h = np.asarray(history, dtype=np.int64)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("history must be a non-empty 1-D token sequence")
    if np.any((h < 0) | (h >= v)):
        raise ValueError("history contains out-of-vocabulary tokens")
    return h


def make_source(kind: str = POWER_LAG, **kwargs) -> SyntheticSource:
    """Convenience constructor: make_source('power_lag', V=64, alpha=0.5, ...)."""
    return SyntheticSource(SourceSpec(kind=kind, **kwargs))
