"""Window-sweep measurement and decay-model fitting.

Measurement: for each sampled prefix and each window w, the statistic is
tv (or kl) between the full-history conditional and the conditional
restricted to the most recent w tokens, evaluated at the final position.

Fitting: log-space least squares (natural logs) for the power and
exponential families, with stretched-exponential and broken-power-law
alternatives refined numerically; model comparison by AIC over log-space
residuals; bootstrap percentile intervals over prefixes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .dist import kl as _kl, tv as _tv
from .source import SyntheticSource

FAMILIES = ("power", "exponential", "stretched_exp", "broken_power")

_N_PARAMS = {"power": 2, "exponential": 2, "stretched_exp": 3, "broken_power": 4}


@dataclass
class TruncationCurve:
    grid: np.ndarray            # ascending window sizes
    per_prefix: np.ndarray      # (n_prefixes, n_windows), statistic values
    statistic: str              # "tv" | "kl"
    aggregate: str              # "mean" | "median"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.int64)
        self.per_prefix = np.atleast_2d(np.asarray(self.per_prefix, dtype=np.float64))
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("window grid must be strictly increasing")
        if self.per_prefix.shape[1] != self.grid.size:
            raise ValueError("per_prefix width does not match grid length")
        if np.any(self.per_prefix < 0):
            raise ValueError("statistic values must be non-negative")
        if self.statistic not in ("tv", "kl"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.aggregate not in ("mean", "median"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")

    @property
    def n_prefixes(self) -> int:
        return self.per_prefix.shape[0]

    def aggregate_values(self, rows: Optional[np.ndarray] = None) -> np.ndarray:
        m = self.per_prefix if rows is None else self.per_prefix[rows]
        return np.mean(m, axis=0) if self.aggregate == "mean" else np.median(m, axis=0)


@dataclass
class FitResult:
    family: str
    params: dict                 # family-specific named parameters
    log_rmse: float
    aic: float
    n_points: int
    ci: Optional[dict] = None    # param -> (lo, hi), 95% bootstrap percentile

    @property
    def alpha(self) -> float:
        if self.family == "power":
            return self.params["alpha"]
        raise AttributeError(f"{self.family} fit has no alpha")


def default_aggregate(statistic: str) -> str:
    # mean TV curves, median KL curves (policy-style measurement)
    return "mean" if statistic == "tv" else "median"


def sweep(source: SyntheticSource, grid, n_prefixes: int, prefix_len: int,
          statistic: str = "tv", seed: int = 0,
          aggregate: Optional[str] = None) -> TruncationCurve:
    """Measure the truncation statistic on a synthetic source.

    The largest window must stay at or below half the prefix length;
    beyond that the measurement stops truncating enough context and the
    curve collapses toward zero as a boundary artifact, not a property of
    the source.
    """
    grid = np.asarray(sorted(set(int(w) for w in grid)), dtype=np.int64)
    if grid.size == 0:
        raise ValueError("empty window grid")
    if grid[0] < 1:
        raise ValueError("windows must be >= 1")
    if grid[-1] > prefix_len // 2:
        raise ValueError(
            f"window {int(grid[-1])} exceeds 50% of the prefix length {prefix_len}; "
            "long-window boundary artifact (the window must be at most ~50% of the "
            "prefix so that a substantial fraction of context is truncated)")
    if n_prefixes < 1:
        raise ValueError("need at least one prefix")
    values = np.empty((n_prefixes, grid.size))
    stat = _tv if statistic == "tv" else _kl
    for i in range(n_prefixes):
        h = source.sample_prefix(prefix_len, seed=seed + i)
        p_full = source.full_conditional(h)
        for j, w in enumerate(grid):
            p_w = source.truncated_conditional(h, int(w))
            values[i, j] = stat(p_full, p_w)
    return TruncationCurve(grid=grid, per_prefix=values, statistic=statistic,
                           aggregate=aggregate or default_aggregate(statistic))


def curve_from_records(records: Iterable, statistic: str = "tv",
                       model: Optional[str] = None, domain: Optional[str] = None,
                       protocol: Optional[str] = None,
                       aggregate: Optional[str] = None) -> TruncationCurve:
    """Assemble a TruncationCurve from ingested window-sweep measurement records."""
    sel = [r for r in records
           if r.kind == "window_sweep"
           and (model is None or r.model == model)
           and (domain is None or r.domain == domain)
           and (protocol is None or r.protocol == protocol)
           and getattr(r, statistic) is not None]
    if not sel:
        raise ValueError("no matching window-sweep records")
    grid = sorted(set(r.w for r in sel))
    prefixes = sorted(set(r.prefix_id for r in sel))
    lookup = {(r.prefix_id, r.w): getattr(r, statistic) for r in sel}
    values = np.full((len(prefixes), len(grid)), np.nan)
    for i, pid in enumerate(prefixes):
        for j, w in enumerate(grid):
            if (pid, w) not in lookup:
                raise ValueError(f"record set is ragged: prefix {pid} missing w={w}")
            values[i, j] = lookup[(pid, w)]
    return TruncationCurve(grid=np.asarray(grid), per_prefix=values, statistic=statistic,
                           aggregate=aggregate or default_aggregate(statistic))


# ---------------------------------------------------------------------------
# fitting


def _prepare(curve: TruncationCurve):
    y = curve.aggregate_values()
    if np.any(y <= 0):
        raise ValueError("fit requires strictly positive aggregate values")
    return curve.grid.astype(np.float64), y


def _lstsq(A, b):
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef


def _fit_power(w, y):
    lw, ly = np.log(w), np.log(y)
    A = np.column_stack([np.ones_like(lw), -lw])
    c = _lstsq(A, ly)
    resid = ly - A @ c
    return {"C": math.exp(c[0]), "alpha": float(c[1])}, resid


def _fit_exponential(w, y):
    ly = np.log(y)
    A = np.column_stack([np.ones_like(w), w])
    c = _lstsq(A, ly)
    resid = ly - A @ c
    return {"C": math.exp(c[0]), "rho": math.exp(c[1])}, resid


def _stretched_model(theta, w):
    log_c, log_tau, beta = theta
    return log_c - np.exp(np.clip(beta * (np.log(w) - log_tau), -500.0, 500.0))


def _fit_stretched(w, y, max_iter: int = 200, step_tol: float = 1e-10):
    ly = np.log(y)
    # linearization: z = log(C0 / y) = (w / tau)^beta with a ceiling C0 above the data
    c0 = 1.5 * float(y.max())
    z = np.log(c0 / y)
    lz, lw = np.log(z), np.log(w)
    A = np.column_stack([np.ones_like(lw), lw])
    c = _lstsq(A, lz)
    beta = float(np.clip(c[1], 1e-3, 20.0))
    log_tau = float(np.clip(-c[0] / beta, -50.0, 50.0))
    theta = np.array([math.log(c0), log_tau, beta])
    best = (math.inf, theta.copy())
    # damped Gauss-Newton on log-space residuals
    for _ in range(max_iter):
        lw_lt = np.log(w) - theta[1]
        g = np.exp(np.clip(theta[2] * lw_lt, -500.0, 500.0))   # (w/tau)^beta
        r = ly - (theta[0] - g)
        rss = float(r @ r)
        if rss < best[0]:
            best = (rss, theta.copy())
        # Jacobian of the model wrt (logC, log_tau, beta)
        J = np.column_stack([np.ones_like(g), theta[2] * g, -g * lw_lt])
        try:
            step = _lstsq(J, r)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        norm = float(np.max(np.abs(step)))
        if norm > 2.0:
            step = step * (2.0 / norm)
        theta = theta + step
        theta[2] = float(np.clip(theta[2], 1e-4, 50.0))
        theta[1] = float(np.clip(theta[1], -60.0, 60.0))
        if norm < step_tol:
            break
    theta = best[1]
    resid = ly - _stretched_model(theta, w)
    return {"C": math.exp(theta[0]), "tau": math.exp(theta[1]), "beta": float(theta[2])}, resid


def _fit_broken(w, y):
    lw, ly = np.log(w), np.log(y)
    best = None
    for knot in w[1:-1]:                      # interior grid points only
        hinge = np.maximum(0.0, lw - math.log(knot))
        A = np.column_stack([np.ones_like(lw), -lw, -hinge])
        c = _lstsq(A, ly)
        resid = ly - A @ c
        rss = float(resid @ resid)
        if best is None or rss < best[0] - 1e-12:
            best = (rss, knot, c, resid)
    rss, knot, c, resid = best
    return {"C": math.exp(c[0]), "alpha1": float(c[1]),
            "alpha2": float(c[1] + c[2]), "knot": float(knot)}, resid


_FITTERS = {"power": _fit_power, "exponential": _fit_exponential,
            "stretched_exp": _fit_stretched, "broken_power": _fit_broken}


def fit_xy(w, y, family: str) -> FitResult:
    """Fit one decay family to aggregate points (w, y); y must be positive."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("fit requires strictly positive values")
    k = _N_PARAMS[family]
    if w.size < k:
        raise ValueError(f"{family} fit needs at least {k} points, got {w.size}")
    params, resid = _FITTERS[family](w, y)
    n = w.size
    rss = float(resid @ resid)
    log_rmse = math.sqrt(rss / n)
    aic = n * math.log(max(rss / n, 1e-300)) + 2 * k
    return FitResult(family=family, params=params, log_rmse=log_rmse, aic=aic, n_points=n)


def fit(curve: TruncationCurve, family: str) -> FitResult:
    w, y = _prepare(curve)
    return fit_xy(w, y, family)


def model_select(curve: TruncationCurve, families: Sequence[str] = FAMILIES) -> list:
    """Fit the candidate families and rank the results by ascending AIC."""
    if curve.grid.size < 5:
        raise ValueError("model selection needs at least 5 grid points")
    results = [fit(curve, f) for f in families]
    return sorted(results, key=lambda r: r.aic)


def bootstrap_ci(curve: TruncationCurve, family: str, n_resamples: int = 300,
                 seed: int = 0, level: float = 0.95) -> FitResult:
    """Point fit plus bootstrap percentile CIs, resampling prefixes with replacement."""
    if curve.n_prefixes < 2:
        raise ValueError("bootstrap needs at least 2 prefixes")
    point = fit(curve, family)
    rng = np.random.default_rng(seed)
    n = curve.n_prefixes
    samples = {k: [] for k in point.params}
    for _ in range(n_resamples):
        rows = rng.integers(0, n, size=n)
        y = curve.aggregate_values(rows)
        try:
            r = fit_xy(curve.grid.astype(float), y, family)
        except (ValueError, np.linalg.LinAlgError):
            continue
        for k, v in r.params.items():
            samples[k].append(v)
    lo_q, hi_q = 100 * (1 - level) / 2, 100 * (1 + level) / 2
    ci = {}
    for k, vals in samples.items():
        if vals:
            ci[k] = (float(np.percentile(vals, lo_q)), float(np.percentile(vals, hi_q)))
        else:
            ci[k] = (point.params[k], point.params[k])
    point.ci = ci
    return point


def exponent_ratio(tv_fit: FitResult, kl_fit: FitResult) -> float:
    """alpha_KL / alpha_TV for two power-family fits."""
    if tv_fit.family != "power" or kl_fit.family != "power":
        raise ValueError("exponent_ratio requires two power-family fits")
    return kl_fit.params["alpha"] / tv_fit.params["alpha"]
