"""Multi-layer distortion allocation: Lipschitz sensitivity propagation,
reverse water-filling over per-layer rate-distortion families, and the
dimension/overhead arithmetic for continuous-latent caches.

Sensitivities compound the squared Lipschitz constants of everything above
a layer, so early layers are the expensive ones; with pre-LayerNorm skip
connections the per-layer constant collapses to sqrt(1 + (L_b L_LN)^2) and
the spread across depth nearly vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class LayerStack:
    n_layers: int
    lipschitz_g: Union[float, Sequence[float]] = 1.05   # full-block constant
    lipschitz_branch: float = 0.1                        # branch constant (skip)
    lipschitz_ln: float = 1.0                            # LayerNorm constant
    skip: bool = False

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        for v in np.atleast_1d(np.asarray(self.lipschitz_g, dtype=np.float64)):
            if v <= 0:
                raise ValueError("Lipschitz constants must be positive")
        if self.lipschitz_branch <= 0 or self.lipschitz_ln <= 0:
            raise ValueError("Lipschitz constants must be positive")

    def per_layer_constants(self) -> np.ndarray:
        """Effective layer-wise Lipschitz constants, after the skip reduction."""
        if self.skip:
            eff = math.sqrt(1.0 + (self.lipschitz_branch * self.lipschitz_ln) ** 2)
            return np.full(self.n_layers, eff)
        g = np.asarray(self.lipschitz_g, dtype=np.float64)
        if g.ndim == 0:
            return np.full(self.n_layers, float(g))
        if g.size != self.n_layers:
            raise ValueError("per-layer constants length mismatch")
        return g.copy()


def sensitivities(stack: LayerStack) -> np.ndarray:
    """s(l) = prod_{m > l} L_m^2 for l = 1..L (returned 0-indexed)."""
    consts = stack.per_layer_constants()
    sq = consts ** 2
    out = np.empty(stack.n_layers)
    acc = 1.0
    for idx in range(stack.n_layers - 1, -1, -1):
        out[idx] = acc
        acc *= sq[idx]
    return out


def sensitivity_ratio(stack: LayerStack) -> float:
    s = sensitivities(stack)
    return float(s[0] / s[-1])


def dc_variation(sens_ratio: float, log_dynamic_range: float) -> float:
    """Spread of the optimal latent dimension across layers implied by a
    sensitivity ratio, in dimensions: ln(ratio) / log-dynamic-range."""
    if sens_ratio <= 0 or log_dynamic_range <= 0:
        raise ValueError("need positive ratio and dynamic range")
    return math.log(sens_ratio) / log_dynamic_range


# ---------------------------------------------------------------------------
# per-layer rate-distortion families


class GaussianRD:
    """R(D) = 0.5 log2(sigma^2 / D) for D < sigma^2, else 0."""

    def __init__(self, sigma2: float = 1.0):
        if sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = sigma2

    @property
    def d_max(self) -> float:
        return self.sigma2

    def rate(self, d: float) -> float:
        if d >= self.sigma2:
            return 0.0
        if d <= 0:
            raise ValueError("Gaussian rate diverges at zero distortion")
        return 0.5 * math.log2(self.sigma2 / d)

    def slope_mag(self, d: float) -> float:
        """|dR/dD| in bits per distortion unit."""
        return 1.0 / (2.0 * math.log(2.0) * d) if d < self.sigma2 else 0.0

    def d_of_slope(self, mag: float) -> float:
        """Distortion where |R'| equals mag, clamped to the zero-rate point."""
        if mag <= 0:
            return self.sigma2
        return min(1.0 / (2.0 * math.log(2.0) * mag), self.sigma2)


class TabulatedRD:
    """Convex piecewise-linear R(D) from a tabulated curve (e.g. the
    Blahut-Arimoto reference); slopes come from the secants."""

    def __init__(self, distortions, rates):
        d = np.asarray(distortions, dtype=np.float64)
        r = np.asarray(rates, dtype=np.float64)
        if d.size < 2 or np.any(np.diff(d) <= 0):
            raise ValueError("need at least two strictly increasing distortions")
        if np.any(np.diff(r) > 1e-12):
            raise ValueError("rates must be non-increasing in distortion")
        self.d = d
        self.r = r
        self.slopes = -(np.diff(r) / np.diff(d))   # positive magnitudes

    @property
    def d_max(self) -> float:
        idx = np.nonzero(self.r <= 0)[0]
        return float(self.d[idx[0]]) if idx.size else float(self.d[-1])

    def rate(self, d: float) -> float:
        return float(np.interp(d, self.d, self.r))

    def slope_mag(self, d: float) -> float:
        j = int(np.clip(np.searchsorted(self.d, d, side="right") - 1,
                        0, self.slopes.size - 1))
        return float(self.slopes[j])

    def d_of_slope(self, mag: float) -> float:
        if mag <= 0:
            return self.d_max
        # slopes decrease in magnitude along the curve; find the segment
        # whose secant magnitude first drops below mag
        for j in range(self.slopes.size):
            if self.slopes[j] <= mag:
                return float(self.d[j])
        return float(self.d[-1])


@dataclass
class Allocation:
    distortions: np.ndarray     # per-layer D
    rates: np.ndarray           # per-layer bits
    lam: float                  # multiplier in the |R'| = lam * s convention
    total_distortion: float     # L_g^2 sum s D
    budget: float
    sensitivities: np.ndarray
    active: np.ndarray          # layers below their zero-rate distortion

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    def kkt_residuals(self, families) -> np.ndarray:
        res = np.zeros(self.distortions.size)
        for i, fam in enumerate(families):
            if self.active[i]:
                res[i] = abs(fam.slope_mag(float(self.distortions[i]))
                             - self.lam * self.sensitivities[i])
        return res


def water_fill(stack: LayerStack, rd_family, d_total: float,
               aggregate_lg2: float = 1.0, tol: float = 1e-8,
               max_iter: int = 500) -> Allocation:
    """Reverse water-filling: choose per-layer distortions minimizing total
    rate subject to L_g^2 sum_l s_l D_l = d_total.

    At the optimum every active layer matches |R'(D_l)| = lam s_l (the
    aggregate constant is absorbed into lam); layers whose unconstrained
    optimum reaches the zero-rate distortion are clamped there. The
    multiplier is found by bisection on the monotone constraint value.
    """
    s = sensitivities(stack)
    families = rd_family if isinstance(rd_family, (list, tuple)) else \
        [rd_family] * stack.n_layers
    if len(families) != stack.n_layers:
        raise ValueError("need one rate-distortion family per layer")
    if d_total <= 0:
        raise ValueError("distortion budget must be positive")
    cap = aggregate_lg2 * float(sum(s[i] * families[i].d_max
                                    for i in range(stack.n_layers)))
    if d_total > cap + 1e-12:
        raise ValueError(
            f"budget {d_total} exceeds the zero-rate total {cap}; "
            "the equality constraint is unreachable")

    def total(lam_scaled: float) -> float:
        return aggregate_lg2 * float(sum(
            s[i] * families[i].d_of_slope(lam_scaled * aggregate_lg2 * s[i])
            for i in range(stack.n_layers)))

    lo, hi = 0.0, 1.0
    while total(hi) > d_total:
        hi *= 2.0
        if hi > 1e18:
            raise RuntimeError("multiplier bracket expansion failed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if total(mid) > d_total:
            lo = mid
        else:
            hi = mid
        if abs(total(hi) - d_total) <= tol and (hi - lo) < 1e-15 * max(hi, 1.0):
            break
    lam = hi
    d = np.array([families[i].d_of_slope(lam * aggregate_lg2 * s[i])
                  for i in range(stack.n_layers)])
    # piecewise-linear families step across breakpoints at critical
    # multipliers; slide the jumping layers along their (flat-cost) segment
    # to meet the budget exactly
    slack = d_total - aggregate_lg2 * float((s * d).sum())
    if slack > tol:
        d_lo = np.array([families[i].d_of_slope(lo * aggregate_lg2 * s[i])
                         for i in range(stack.n_layers)])
        for i in range(stack.n_layers):
            span = max(float(d_lo[i] - d[i]), 0.0)
            if span <= 0 or slack <= 0:
                continue
            move = min(slack / (aggregate_lg2 * s[i]), span)
            d[i] += move
            slack -= move * aggregate_lg2 * s[i]
    rates = np.array([families[i].rate(float(d[i])) for i in range(stack.n_layers)])
    active = d < np.array([f.d_max for f in families]) - 1e-15
    return Allocation(distortions=d, rates=rates,
                      lam=lam * aggregate_lg2,
                      total_distortion=aggregate_lg2 * float((s * d).sum()),
                      budget=d_total, sensitivities=s, active=active)


# ---------------------------------------------------------------------------
# dimension and quantization arithmetic


def intrinsic_dim_bound(r_cont_bits: float, r_u: float, r_min: float) -> float:
    """Minimum continuous-latent dimension supporting a rate of r_cont_bits
    given support radius r_u and density floor r_min: R / ln(R_U / r_min)."""
    if r_cont_bits < 0:
        raise ValueError("rate must be non-negative")
    if not (r_u > r_min > 0):
        raise ValueError("degenerate dynamic range: need r_u > r_min > 0")
    return r_cont_bits / math.log(r_u / r_min)


def quant_overhead(d_c: int, delta: float) -> float:
    """Bits per token added by uniform Delta-lattice quantization of a
    d_c-dimensional latent: d_c log2(1/Delta)."""
    if d_c < 0:
        raise ValueError("d_c must be non-negative")
    if not (0 < delta <= 1):
        raise ValueError("delta must lie in (0, 1]")
    return d_c * math.log2(1.0 / delta)


def error_propagation_bound(layer_constants, branch_errors, eps: float = 1.0) -> float:
    """Upper bound on the final squared hidden-state error from per-layer
    squared attention errors, via the Young-inequality recursion
    e_{l+1}^2 <= (1 + eps) L_{l+1}^2 e_l^2 + (1 + 1/eps) delta_{l+1}."""
    consts = np.asarray(layer_constants, dtype=np.float64)
    deltas = np.asarray(branch_errors, dtype=np.float64)
    if consts.size != deltas.size:
        raise ValueError("need one error term per layer")
    if eps <= 0:
        raise ValueError("eps must be positive")
    bound = 0.0
    for lc, d in zip(consts, deltas):
        bound = (1.0 + eps) * lc * lc * bound + (1.0 + 1.0 / eps) * d
    return float(bound)
