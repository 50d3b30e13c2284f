"""Probe configuration: which model, which corpora, which grids."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

DEFAULT_GRID = (2, 4, 8, 16, 32, 64, 128, 256)
DEFAULT_BUDGETS = (8, 16, 32, 64, 128, 256, 512)
PROTOCOLS = ("fresh", "position_preserving")


@dataclass
class ProbeConfig:
    model_id: str
    domains: Dict[str, str]                    # domain name -> corpus path
    n_prefixes: int = 100
    prefix_len: int = 1024
    grid: Sequence[int] = DEFAULT_GRID
    budgets: Sequence[int] = DEFAULT_BUDGETS
    protocols: Tuple[str, ...] = ("position_preserving",)
    policies: Tuple[str, ...] = ("full", "sliding", "sink_recent", "random_k",
                                 "heavy_hitter")
    n_sinks: int = 4
    device: str = "cpu"
    dtype: str = "float32"                     # "float16" on GPU
    seed: int = 0

    def __post_init__(self):
        self.grid = tuple(sorted(set(int(w) for w in self.grid)))
        self.budgets = tuple(sorted(set(int(k) for k in self.budgets)))
        if not self.domains:
            raise ValueError("need at least one domain corpus")
        if self.grid and self.grid[-1] >= self.prefix_len:
            raise ValueError("grid max must stay below prefix_len")
        if self.budgets and self.budgets[-1] >= self.prefix_len:
            raise ValueError("largest budget must stay below prefix_len")
        if self.budgets and self.n_sinks >= self.budgets[0]:
            raise ValueError("sink count must stay below the smallest budget")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}")

    @classmethod
    def from_json(cls, path: str) -> "ProbeConfig":
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id, "domains": dict(self.domains),
            "n_prefixes": self.n_prefixes, "prefix_len": self.prefix_len,
            "grid": list(self.grid), "budgets": list(self.budgets),
            "protocols": list(self.protocols), "policies": list(self.policies),
            "n_sinks": self.n_sinks, "device": self.device, "dtype": self.dtype,
            "seed": self.seed,
        }
