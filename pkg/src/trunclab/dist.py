"""Finite-alphabet probability distributions and divergence utilities.

All divergences are computed in nats; rate-style quantities are converted
to bits only at output boundaries (see `NATS_TO_BITS`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NATS_TO_BITS = 1.0 / math.log(2.0)

_SUM_TOL = 1e-9


def as_dist(p, *, check: bool = True) -> np.ndarray:
    """Coerce to a float64 probability vector, validating the simplex invariants.

    Entries must be non-negative and sum to 1 within 1e-9.
    """
    p = np.asarray(p, dtype=np.float64)
    if check:
        if p.ndim != 1 or p.size == 0:
            raise ValueError("distribution must be a non-empty 1-D vector")
        if np.any(p < 0):
            raise ValueError("distribution has negative entries")
        s = float(p.sum())
        if abs(s - 1.0) > _SUM_TOL:
            raise ValueError(f"distribution sums to {s!r}, not 1 within {_SUM_TOL}")
    return p


@dataclass(frozen=True)
class FloorInfo:
    """A uniform mass floor attached to a distribution family.

    `source` records whether the floor was declared a priori or computed as
    the minimum entry of a concrete distribution. A declared floor may be
    any value in (0, 1]; a computed floor always equals the minimum entry.
    """

    epsilon_min: float
    source: str  # "declared" | "computed-min"

    def __post_init__(self):
        if not (0.0 < self.epsilon_min <= 1.0):
            raise ValueError("epsilon_min must lie in (0, 1]")
        if self.source not in ("declared", "computed-min"):
            raise ValueError(f"unknown floor source {self.source!r}")

    @classmethod
    def declared(cls, epsilon_min: float) -> "FloorInfo":
        return cls(epsilon_min=float(epsilon_min), source="declared")

    @classmethod
    def from_dist(cls, p) -> "FloorInfo":
        p = as_dist(p)
        m = float(p.min())
        if m <= 0.0:
            raise ValueError("distribution has a zero entry; no positive floor")
        return cls(epsilon_min=m, source="computed-min")


def _check_pair(p, q):
    p = as_dist(p)
    q = as_dist(q)
    if p.shape != q.shape:
        raise ValueError(f"vocabulary mismatch: {p.shape} vs {q.shape}")
    return p, q


def tv(p, q) -> float:
    """Total variation distance, 0.5 * sum |p - q|."""
    p, q = _check_pair(p, q)
    return float(0.5 * np.abs(p - q).sum())


def kl(p, q) -> float:
    """KL(p || q) in nats.

    A support violation (p(x) > 0 where q(x) = 0) raises rather than
    returning +inf: callers that want a finite value must smooth `q`
    explicitly (see `smooth`).
    """
    p, q = _check_pair(p, q)
    mask = p > 0
    if np.any(q[mask] == 0):
        raise ValueError("support violation: p(x) > 0 where q(x) = 0; smooth q first")
    pm, qm = p[mask], q[mask]
    return float(np.sum(pm * (np.log(pm) - np.log(qm))))


def chi2(p, q) -> float:
    """Chi-squared divergence, sum (p - q)^2 / q. Requires q strictly positive."""
    p, q = _check_pair(p, q)
    if np.any(q == 0):
        raise ValueError("chi2 requires q strictly positive")
    d = p - q
    return float(np.sum(d * d / q))


def smooth(q, mu: float) -> np.ndarray:
    """Mix q with the uniform distribution: (1 - mu) q + mu * Uniform(V).

    The output has a guaranteed floor of mu / V.
    """
    if not (0.0 < mu < 1.0):
        raise ValueError("smoothing level mu must lie in (0, 1)")
    q = as_dist(q)
    return (1.0 - mu) * q + mu / q.size


@dataclass(frozen=True)
class QuadraticBound:
    """Result of the floor-based quadratic KL-from-TV bound.

    `in_regime` is False when the TV exceeds epsilon_min / 2, where the
    quadratic form is not guaranteed; the value is still reported so
    callers can inspect the out-of-regime magnitude.
    """

    value: float
    in_regime: bool
    tv: float
    epsilon_min: float

    @property
    def threshold(self) -> float:
        return 0.5 * self.epsilon_min


def kl_tv_quadratic_bound(tv_value: float, epsilon_min: float) -> QuadraticBound:
    """Quadratic KL upper bound (2 / epsilon_min) * tv^2 under a uniform floor.

    Valid (in regime) only when tv <= epsilon_min / 2; out-of-regime inputs
    return a flagged result rather than raising.
    """
    if tv_value < 0:
        raise ValueError("tv must be non-negative")
    if not (0.0 < epsilon_min <= 1.0):
        raise ValueError("epsilon_min must lie in (0, 1]")
    value = (2.0 / epsilon_min) * tv_value * tv_value
    return QuadraticBound(
        value=value,
        in_regime=bool(tv_value <= 0.5 * epsilon_min),
        tv=float(tv_value),
        epsilon_min=float(epsilon_min),
    )


def smoothed_kl_envelope(delta: float, mu: float, v: int, cubic_const: float = 1.0) -> float:
    """Envelope for KL(p || smooth(q, mu)) given tv(p, q) <= delta.

    V (delta + mu)^2 / mu plus a cubic slack term with an explicit constant
    (default 1); the true remainder constant is unnamed, so callers treat
    violations of this envelope as reportable rather than impossible.
    """
    if not (0.0 < mu < 1.0):
        raise ValueError("mu must lie in (0, 1)")
    s = delta + mu
    return v * s * s / mu + cubic_const * (v * v) * (s ** 3) / (mu * mu)


def uniform(v: int) -> np.ndarray:
    """Uniform distribution over a vocabulary of size v."""
    if v < 1:
        raise ValueError("vocabulary size must be >= 1")
    return np.full(v, 1.0 / v)
