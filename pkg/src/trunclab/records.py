"""Measurement-log schema: newline-delimited records shared by the probe
harness and the synthetic pipeline.

One JSON object per line; lines starting with '#' are description headers
and are skipped. The schema is versioned via the `schema_version` field.
Numeric fields are emitted at full precision (shortest round-trip decimal).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

SCHEMA_VERSION = "trunclab/1"

PROTOCOLS = ("fresh", "position_preserving")
KINDS = ("window_sweep", "policy")
POLICIES = ("full", "sliding", "sink_recent", "random_k", "heavy_hitter")


@dataclass
class MeasurementRecord:
    model: str
    domain: str
    protocol: str
    prefix_id: int
    prefix_len: int
    kind: str
    w: Optional[int] = None
    policy: Optional[str] = None
    budget_k: Optional[int] = None
    tv: Optional[float] = None
    kl: Optional[float] = None
    nll_full: Optional[float] = None
    nll_policy: Optional[float] = None
    scores: Optional[List[float]] = None
    tool_version: str = ""
    schema_version: str = SCHEMA_VERSION

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.prefix_id, int) or self.prefix_id < 0:
            raise ValueError("prefix_id must be a non-negative integer")
        if not isinstance(self.prefix_len, int) or self.prefix_len < 2:
            raise ValueError("prefix_len must be an integer >= 2")
        has_w = self.w is not None
        has_policy = self.policy is not None or self.budget_k is not None
        if self.kind == "window_sweep":
            if not has_w or has_policy:
                raise ValueError("window_sweep records carry w and no policy/budget_k")
            if not isinstance(self.w, int) or self.w < 1:
                raise ValueError("w must be an integer >= 1")
            if self.w >= self.prefix_len:
                raise ValueError("prefix_len must exceed w")
        else:
            if has_w or self.policy is None or self.budget_k is None:
                raise ValueError("policy records carry (policy, budget_k) and no w")
            if self.policy not in POLICIES:
                raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
            if not isinstance(self.budget_k, int) or self.budget_k < 1:
                raise ValueError("budget_k must be an integer >= 1")
            if self.budget_k >= self.prefix_len:
                raise ValueError("prefix_len must exceed budget_k")
        for name in ("tv", "kl"):
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{name} must be finite and >= 0")
        for name in ("nll_full", "nll_policy"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.scores is not None:
            if not all(math.isfinite(s) for s in self.scores):
                raise ValueError("scores must be finite")

    def dedupe_key(self) -> Tuple:
        which = self.w if self.kind == "window_sweep" else (self.policy, self.budget_k)
        return (self.model, self.domain, self.protocol, self.prefix_id, self.kind, which)

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementRecord":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown fields: {sorted(extra)}")
        missing = {"model", "domain", "protocol", "prefix_id", "prefix_len", "kind"} - set(d)
        if missing:
            raise ValueError(f"missing required fields: {sorted(missing)}")
        rec = cls(**d)
        rec.validate()
        return rec


class IngestError(ValueError):
    """Raised when a measurement log fails validation badly enough to abort."""


@dataclass
class IngestResult:
    records: List[MeasurementRecord]
    rejected: List[Tuple[int, str]] = field(default_factory=list)
    n_duplicates: int = 0
    n_lines: int = 0

    def __iter__(self):
        return iter(self.records)


def ingest(path, max_reject_fraction: float = 0.01) -> IngestResult:
    """Read and validate a newline-delimited measurement log.

    Invalid lines are rejected individually and reported with their line
    numbers; the run aborts (IngestError) when more than `max_reject_fraction`
    of the data lines fail validation. Duplicate records (same model, domain,
    protocol, prefix, kind, and window/budget) keep the first occurrence.
    """
    records: List[MeasurementRecord] = []
    rejected: List[Tuple[int, str]] = []
    seen = set()
    n_dup = 0
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            n_lines += 1
            try:
                d = json.loads(line)
                if not isinstance(d, dict):
                    raise ValueError("line is not a JSON object")
                rec = MeasurementRecord.from_dict(d)
            except (ValueError, TypeError) as exc:
                rejected.append((lineno, str(exc)))
                continue
            key = rec.dedupe_key()
            if key in seen:
                n_dup += 1
                continue
            seen.add(key)
            records.append(rec)
    if n_lines == 0:
        warnings.warn(f"{path}: empty measurement log", stacklevel=2)
    if rejected and n_lines > 0 and len(rejected) > max_reject_fraction * n_lines:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in rejected[:10])
        raise IngestError(
            f"{len(rejected)}/{n_lines} lines rejected (> {max_reject_fraction:.0%}): {detail}")
    return IngestResult(records=records, rejected=rejected, n_duplicates=n_dup, n_lines=n_lines)


def emit(records, path, header: Optional[str] = None) -> None:
    """Write records as newline-delimited JSON, optionally with '#' header lines."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for hline in header.splitlines():
                fh.write(f"# {hline}\n")
        for rec in records:
            rec.validate()
            fh.write(rec.to_json() + "\n")
