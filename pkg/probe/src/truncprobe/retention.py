"""Retention rules for the probed cache policies (positions kept at budget k)."""

from __future__ import annotations

import numpy as np

POLICIES = ("full", "sliding", "sink_recent", "random_k", "heavy_hitter")


def retained_positions(policy: str, prefix_len: int, budget_k: int,
                       n_sinks: int = 4, seed: int = 0,
                       scores=None) -> np.ndarray:
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if policy != "full" and budget_k > prefix_len:
        raise ValueError("budget exceeds prefix length")
    if policy == "full":
        return np.arange(prefix_len)
    if policy == "sliding":
        return np.arange(prefix_len - budget_k, prefix_len)
    if policy == "sink_recent":
        if budget_k <= n_sinks:
            raise ValueError("sink_recent needs budget_k > n_sinks")
        sinks = np.arange(min(n_sinks, prefix_len))
        recent = np.arange(prefix_len - (budget_k - n_sinks), prefix_len)
        return np.unique(np.concatenate([sinks, recent]))
    if policy == "random_k":
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(prefix_len, size=budget_k, replace=False))
    # heavy_hitter: top attention scores with the anchor and the most recent
    # token always retained; ties break toward more recent positions
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size != prefix_len:
        raise ValueError("scores length must equal the prefix length")
    keep = {prefix_len - 1, 0} if budget_k >= 2 else {prefix_len - 1}
    order = sorted(range(prefix_len), key=lambda p: (-scores[p], -p))
    for p in order:
        if len(keep) >= budget_k:
            break
        keep.add(p)
    return np.sort(np.fromiter(keep, dtype=np.int64))
