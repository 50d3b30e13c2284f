"""Closed-form window, block-length, exponent, and overhead calculators.

Every calculator returns the value together with an applicability record:
which conversion route the formula relies on (TV envelope, bounded-floor
quadratic, smoothing) and whether the inputs sit inside that route's
validity regime. Real-valued intermediates throughout; token counts are
ceiled only at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SensitivityParams:
    """Decay constants of a truncation-sensitivity envelope C_TS * w^-alpha."""
    C_TS: float
    alpha: float
    V: int
    epsilon_min: Optional[float] = None

    def __post_init__(self):
        if self.C_TS <= 0 or self.alpha <= 0 or self.V < 2:
            raise ValueError("C_TS, alpha must be positive and V >= 2")
        if self.epsilon_min is not None and not (0 < self.epsilon_min <= 1):
            raise ValueError("epsilon_min must lie in (0, 1]")

    @classmethod
    def from_source(cls, source) -> "SensitivityParams":
        prm = source.sensitivity_params()
        if "C_TS" not in prm:
            raise ValueError("source is not polynomially sensitive (geometric kind)")
        return cls(C_TS=prm["C_TS"], alpha=prm["alpha"], V=prm["V"],
                   epsilon_min=prm["epsilon_min"])


@dataclass(frozen=True)
class Applicability:
    route: str            # "tv-envelope" | "bounded-floor" | "smoothing" | "arithmetic"
    in_regime: bool
    note: str = ""


@dataclass(frozen=True)
class CalcResult:
    value: float
    applicability: Applicability

    @property
    def in_regime(self) -> bool:
        return self.applicability.in_regime


@dataclass(frozen=True)
class ExponentReport:
    """Convergence exponents in the horizon n for a given decay alpha."""
    alpha: float
    distortion_exp: float          # min(alpha, 1) / (alpha + 1)
    rate_exp_expectation: float    # alpha / (alpha + 1)
    rate_exp_hp: float             # alpha / (2 (alpha + 1)), range-based route


def window_tv(params: SensitivityParams, eps_tv: float) -> CalcResult:
    """Window size achieving TV distortion eps_tv: ceil((C_TS / eps)^(1/alpha))."""
    if eps_tv <= 0:
        raise ValueError("eps_tv must be positive")
    w = math.ceil((params.C_TS / eps_tv) ** (1.0 / params.alpha))
    return CalcResult(value=float(max(w, 1)),
                      applicability=Applicability("tv-envelope", True))


def window_kl(params: SensitivityParams, eps_kl: float) -> CalcResult:
    """Window size for a KL target through the bounded-floor quadratic route.

    The implied TV target is sqrt(eps_min * eps_kl / 2); the quadratic
    conversion only applies when that target is at most eps_min / 2
    (equivalently eps_kl <= eps_min / 2), flagged otherwise.
    """
    if params.epsilon_min is None:
        raise ValueError("window_kl needs epsilon_min on the params")
    if eps_kl <= 0:
        raise ValueError("eps_kl must be positive")
    eps = params.epsilon_min
    tv_target = math.sqrt(eps * eps_kl / 2.0)
    w = math.ceil(((2.0 / eps) ** 0.5 * params.C_TS / eps_kl ** 0.5) ** (1.0 / params.alpha))
    ok = tv_target <= eps / 2.0
    note = "" if ok else (
        f"implied TV target {tv_target:.3g} exceeds epsilon_min/2 = {eps / 2:.3g}; "
        "quadratic KL-TV conversion not valid here")
    return CalcResult(value=float(max(w, 1)),
                      applicability=Applicability("bounded-floor", ok, note))


def geometric_window(c_mix: float, rho: float, eps: float) -> CalcResult:
    """Window size for a geometric envelope C_mix * rho^w to reach eps."""
    if not (0 < rho < 1) or c_mix <= 0 or eps <= 0:
        raise ValueError("need 0 < rho < 1 and positive c_mix, eps")
    if eps >= c_mix:
        w = 1.0
    else:
        w = math.ceil(math.log(c_mix / eps) / math.log(1.0 / rho))
    return CalcResult(value=float(max(w, 1.0)),
                      applicability=Applicability("tv-envelope", True))


def block_len_star(params: SensitivityParams, w: int) -> float:
    """Block length balancing rate slack against distortion: w^(alpha/2) / (2 sqrt(C_TS))."""
    if w < 1:
        raise ValueError("w must be >= 1")
    return w ** (params.alpha / 2.0) / (2.0 * math.sqrt(params.C_TS))


def achievability_window(n: int, alpha: float) -> int:
    """Window for the block-coding scheme at horizon n: ceil(n^(1/(alpha+1)))."""
    if n < 1 or alpha <= 0:
        raise ValueError("need n >= 1 and alpha > 0")
    return math.ceil(n ** (1.0 / (alpha + 1.0)))


def exponents(alpha: float) -> ExponentReport:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return ExponentReport(
        alpha=alpha,
        distortion_exp=min(alpha, 1.0) / (alpha + 1.0),
        rate_exp_expectation=alpha / (alpha + 1.0),
        rate_exp_hp=alpha / (2.0 * (alpha + 1.0)),
    )


def universality_overhead(alpha: float, alpha_min: float, n: int) -> float:
    """Cache-memory factor paid for not knowing alpha: the ratio of the
    largest grid window to the oracle window,
    n^((alpha - alpha_min) / ((alpha + 1)(alpha_min + 1)))."""
    if not (0 < alpha_min <= alpha):
        raise ValueError("need 0 < alpha_min <= alpha")
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(n) ** ((alpha - alpha_min) / ((alpha + 1.0) * (alpha_min + 1.0)))


def sink_recent_gap(params: SensitivityParams, k: int) -> CalcResult:
    """KL distortion gap above the full-cache floor for sink-plus-recent at
    budget k: (2 / eps_min) C_TS^2 k^(-2 alpha), valid once the budget
    clears the floor-dependent threshold (2 C_TS / eps_min)^(1/alpha)."""
    if params.epsilon_min is None:
        raise ValueError("sink_recent_gap needs epsilon_min on the params")
    if k < 1:
        raise ValueError("k must be >= 1")
    eps = params.epsilon_min
    gap = (2.0 / eps) * params.C_TS ** 2 * float(k) ** (-2.0 * params.alpha)
    threshold = (2.0 * params.C_TS / eps) ** (1.0 / params.alpha)
    ok = k >= threshold
    note = "" if ok else (
        f"budget {k} below the bounded-floor threshold {threshold:.3g}; "
        "quadratic route not applicable, only the linear smoothing bound holds")
    return CalcResult(value=gap, applicability=Applicability("bounded-floor", ok, note))
