"""Cache-eviction policies over synthetic sources or ingested measurement logs.

Five policies: full context, sliding window, sink-plus-recent (the first
n_sinks positions plus the most recent budget - n_sinks), Random-K (seeded
order-preserving uniform subset), and heavy-hitter (top scores, with the
anchor position and the most recent token always retained). Evicted
positions marginalize to uniform, the synthetic model of information
destroyed by eviction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from .dist import kl as _kl
from .source import SyntheticSource

POLICY_KINDS = ("full", "sliding", "sink_recent", "random_k", "heavy_hitter")


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    budget_k: int
    n_sinks: int = 4
    score: Optional[Callable] = None   # (source, history) -> per-position scores

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.budget_k < 1:
            raise ValueError("budget_k must be >= 1")
        if self.kind == "sink_recent" and self.budget_k < self.n_sinks + 1:
            raise ValueError("sink_recent needs budget_k >= n_sinks + 1")


def lag_mass_scores(source: SyntheticSource, history) -> np.ndarray:
    """Per-position scores for heavy-hitter on a synthetic source: the lag
    mass the source's next-token mixture puts on each position (the
    analogue of attention mass from the final query)."""
    history = np.asarray(history)
    T = history.size
    scores = np.zeros(T)
    n_lag = min(T, source.spec.L_max)
    # position p carries lag T - p
    scores[T - n_lag:] = source.lag_pmf[:n_lag][::-1]
    return scores


def retained_set(policy: PolicySpec, prefix_len: int, seed: int = 0,
                 scores: Optional[np.ndarray] = None) -> np.ndarray:
    """Ascending positions kept by the policy for a prefix of given length."""
    k = policy.budget_k
    if policy.kind != "full" and prefix_len < k:
        raise ValueError(f"budget {k} exceeds prefix length {prefix_len}")
    if policy.kind == "full":
        return np.arange(prefix_len)
    if policy.kind == "sliding":
        return np.arange(prefix_len - k, prefix_len)
    if policy.kind == "sink_recent":
        sinks = np.arange(min(policy.n_sinks, prefix_len))
        recent = np.arange(prefix_len - (k - policy.n_sinks), prefix_len)
        return np.unique(np.concatenate([sinks, recent]))
    if policy.kind == "random_k":
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(prefix_len, size=k, replace=False))
    # heavy_hitter: top-k scores, anchor and most recent always retained,
    # ties broken toward more recent positions
    if scores is None:
        raise ValueError("heavy_hitter needs per-position scores")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size != prefix_len:
        raise ValueError("scores length must equal prefix length")
    forced = [prefix_len - 1, 0][:k]
    keep = set(forced)
    order = sorted(range(prefix_len), key=lambda p: (-scores[p], -p))
    for p in order:
        if len(keep) >= k:
            break
        keep.add(p)
    return np.sort(np.fromiter(keep, dtype=np.int64))


def policy_conditional(source: SyntheticSource, history, policy: PolicySpec,
                       seed: int = 0) -> np.ndarray:
    """Next-token distribution with non-retained positions marginalized to uniform."""
    history = np.asarray(history)
    scores = None
    if policy.kind == "heavy_hitter":
        scorer = policy.score or lag_mass_scores
        scores = scorer(source, history)
    retained = retained_set(policy, history.size, seed=seed, scores=scores)
    return source.retained_conditional(history, retained)


@dataclass
class PolicyTrace:
    policy: str
    budgets: np.ndarray
    median_kl: np.ndarray
    mean_kl: np.ndarray
    mean_nll_delta: np.ndarray

    def __post_init__(self):
        self.budgets = np.asarray(self.budgets, dtype=np.int64)
        for name in ("median_kl", "mean_kl", "mean_nll_delta"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != self.budgets.shape:
                raise ValueError(f"{name} length does not match budgets")
            setattr(self, name, v)
        if np.any(self.median_kl < 0) or np.any(self.mean_kl < 0):
            raise ValueError("KL values must be non-negative")

    def at(self, k: int) -> dict:
        idx = np.nonzero(self.budgets == k)[0]
        if idx.size == 0:
            raise KeyError(f"budget {k} not in trace for policy {self.policy}")
        i = int(idx[0])
        return {"budget_k": k, "median_kl": float(self.median_kl[i]),
                "mean_kl": float(self.mean_kl[i]),
                "mean_nll_delta": float(self.mean_nll_delta[i])}

    def rows(self):
        for i, k in enumerate(self.budgets):
            yield {"policy": self.policy, "k": int(k),
                   "median_kl": float(self.median_kl[i]),
                   "mean_kl": float(self.mean_kl[i]),
                   "mean_nll_delta": float(self.mean_nll_delta[i])}


def degrade_sweep(source: SyntheticSource, policies: Sequence[PolicySpec] | Sequence[str],
                  budgets: Sequence[int], n_prefixes: int, prefix_len: int,
                  seed: int = 0) -> Dict[str, PolicyTrace]:
    """Budget-vs-distortion traces for each policy on a synthetic source.

    Per (prefix, policy, budget): KL(full || policy) and the increase in
    negative log-likelihood of the realized next token. Seeds are derived
    per (prefix, budget) so Random-K draws are reproducible.
    """
    budgets = sorted(set(int(k) for k in budgets))
    if not budgets:
        raise ValueError("empty budget list")
    if budgets[-1] > prefix_len:
        raise ValueError("largest budget exceeds prefix length")
    specs = [PolicySpec(kind=p, budget_k=budgets[-1]) if isinstance(p, str) else p
             for p in policies]
    if not specs:
        raise ValueError("empty policy list")
    kls = {s.kind: np.empty((n_prefixes, len(budgets))) for s in specs}
    nll = {s.kind: np.empty((n_prefixes, len(budgets))) for s in specs}
    for i in range(n_prefixes):
        full_prefix = source.sample_prefix(prefix_len + 1, seed=seed + i)
        h, nxt = full_prefix[:-1], int(full_prefix[-1])
        p_full = source.full_conditional(h)
        for spec in specs:
            for j, k in enumerate(budgets):
                pol = PolicySpec(kind=spec.kind, budget_k=k,
                                 n_sinks=spec.n_sinks, score=spec.score)
                p_pol = policy_conditional(source, h, pol, seed=seed * 7919 + i * 131 + j)
                kls[spec.kind][i, j] = _kl(p_full, p_pol)
                nll[spec.kind][i, j] = -math.log(p_pol[nxt]) + math.log(p_full[nxt])
    out = {}
    for spec in specs:
        m = kls[spec.kind]
        out[spec.kind] = PolicyTrace(policy=spec.kind, budgets=budgets,
                                     median_kl=np.median(m, axis=0),
                                     mean_kl=np.mean(m, axis=0),
                                     mean_nll_delta=np.mean(nll[spec.kind], axis=0))
    return out


def traces_from_records(records: Iterable, model: Optional[str] = None,
                        domain: Optional[str] = None,
                        protocol: Optional[str] = None) -> Dict[str, PolicyTrace]:
    """Assemble per-policy traces from ingested policy measurement records."""
    sel = [r for r in records
           if r.kind == "policy" and r.kl is not None
           and (model is None or r.model == model)
           and (domain is None or r.domain == domain)
           and (protocol is None or r.protocol == protocol)]
    if not sel:
        raise ValueError("no matching policy records")
    out = {}
    for pol in sorted(set(r.policy for r in sel)):
        rows = [r for r in sel if r.policy == pol]
        budgets = sorted(set(r.budget_k for r in rows))
        med, mean, nll = [], [], []
        for k in budgets:
            kls = [r.kl for r in rows if r.budget_k == k]
            med.append(float(np.median(kls)))
            mean.append(float(np.mean(kls)))
            deltas = [r.nll_policy - r.nll_full for r in rows
                      if r.budget_k == k and r.nll_policy is not None
                      and r.nll_full is not None]
            nll.append(float(np.mean(deltas)) if deltas else float("nan"))
        out[pol] = PolicyTrace(policy=pol, budgets=budgets, median_kl=med,
                               mean_kl=mean, mean_nll_delta=nll)
    return out


def summarize_ratio(trace_a: PolicyTrace, trace_b: PolicyTrace, k: int) -> float:
    """Median-KL ratio trace_b / trace_a at budget k."""
    a = trace_a.at(k)["median_kl"]
    b = trace_b.at(k)["median_kl"]
    return b / a
