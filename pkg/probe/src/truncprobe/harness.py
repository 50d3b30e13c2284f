"""The measurement protocols: window-truncation sweeps and cache-policy
probes over a causal LM, emitted as newline-delimited measurement records
in the shared trunclab schema.

Both probes compare the full-context next-token distribution at the final
position of each sampled prefix against the distribution computed from a
reduced context. Under the position-preserving protocol the retained
tokens keep their original absolute position indices; under the fresh
protocol they are re-indexed from zero.
"""

from __future__ import annotations

import json
import math
from typing import Dict, Iterable, List, Optional

import numpy as np

from .adapter import CausalLMAdapter
from .config import ProbeConfig
from .retention import retained_positions
from . import __version__

SCHEMA_VERSION = "trunclab/1"


def tv(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(p - q).sum())


def kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def sample_offsets(corpus_len: int, prefix_len: int, n_prefixes: int,
                   seed: int) -> np.ndarray:
    """Contiguous spans at seeded random offsets (+1 token for the realized
    next token)."""
    span = prefix_len + 1
    if corpus_len < span:
        raise ValueError(f"corpus too short: {corpus_len} tokens < {span}")
    rng = np.random.default_rng(seed)
    return rng.integers(0, corpus_len - span + 1, size=n_prefixes)


def _record(config: ProbeConfig, domain: str, protocol: str, prefix_id: int,
            kind: str, **fields) -> dict:
    rec = {"model": config.model_id, "domain": domain, "protocol": protocol,
           "prefix_id": int(prefix_id), "prefix_len": int(config.prefix_len),
           "kind": kind, "tool_version": f"truncprobe/{__version__}",
           "schema_version": SCHEMA_VERSION}
    rec.update(fields)
    return rec


def probe_window(adapter: CausalLMAdapter, config: ProbeConfig,
                 corpora: Optional[Dict[str, np.ndarray]] = None) -> List[dict]:
    """Per (domain, prefix, protocol, w): tv and kl between the full and the
    window-truncated next-token distributions."""
    corpora = corpora or load_corpora(adapter, config)
    records: List[dict] = []
    protocols = list(config.protocols)
    if not adapter.supports_position_ids and "position_preserving" in protocols:
        protocols = ["fresh"]
    for domain, tokens in corpora.items():
        offsets = sample_offsets(tokens.size, config.prefix_len,
                                 config.n_prefixes, config.seed)
        for pid, off in enumerate(offsets):
            prefix = tokens[off:off + config.prefix_len]
            p_full = adapter.next_token_dist(prefix)
            for w in config.grid:
                window = prefix[-w:]
                for protocol in protocols:
                    if protocol == "position_preserving":
                        pos = np.arange(config.prefix_len - w, config.prefix_len)
                        p_w = adapter.next_token_dist(window, position_ids=pos)
                    else:
                        p_w = adapter.next_token_dist(window)
                    records.append(_record(
                        config, domain, protocol, pid, "window_sweep", w=int(w),
                        tv=tv(p_full, p_w), kl=kl(p_full, p_w)))
    return records


def probe_policy(adapter: CausalLMAdapter, config: ProbeConfig,
                 corpora: Optional[Dict[str, np.ndarray]] = None) -> List[dict]:
    """Per (domain, prefix, policy, k): KL against the full conditional and
    the NLL increase of the realized next token; heavy-hitter records carry
    the per-position attention scores."""
    corpora = corpora or load_corpora(adapter, config)
    protocol = ("position_preserving"
                if adapter.supports_position_ids and
                "position_preserving" in config.protocols else "fresh")
    records: List[dict] = []
    for domain, tokens in corpora.items():
        offsets = sample_offsets(tokens.size, config.prefix_len,
                                 config.n_prefixes, config.seed)
        for pid, off in enumerate(offsets):
            prefix = tokens[off:off + config.prefix_len]
            next_token = int(tokens[off + config.prefix_len])
            p_full = adapter.next_token_dist(prefix)
            nll_full = -math.log(max(float(p_full[next_token]), 1e-300))
            scores = None
            if "heavy_hitter" in config.policies:
                scores = adapter.final_query_attention(prefix)
            for policy in config.policies:
                for k in config.budgets:
                    keep = retained_positions(
                        policy, config.prefix_len, int(k), n_sinks=config.n_sinks,
                        seed=config.seed * 7919 + pid * 131 + int(k),
                        scores=scores)
                    if protocol == "position_preserving":
                        p_pol = adapter.next_token_dist(
                            prefix[keep], position_ids=keep)
                    else:
                        p_pol = adapter.next_token_dist(prefix[keep])
                    nll_pol = -math.log(max(float(p_pol[next_token]), 1e-300))
                    fields = dict(policy=policy, budget_k=int(k),
                                  kl=kl(p_full, p_pol), tv=tv(p_full, p_pol),
                                  nll_full=nll_full, nll_policy=nll_pol)
                    if policy == "heavy_hitter":
                        fields["scores"] = [round(float(s), 8)
                                            for s in scores[keep]]
                    records.append(_record(config, domain, protocol, pid,
                                           "policy", **fields))
    return records


def load_corpora(adapter: CausalLMAdapter, config: ProbeConfig) -> Dict[str, np.ndarray]:
    out = {}
    for domain, path in config.domains.items():
        with open(path, "r", encoding="utf-8") as fh:
            out[domain] = adapter.encode_corpus(fh.read())
    return out


def write_records(records: Iterable[dict], path, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
