"""One-shot reproduction of every bundled measurement fixture: fits,
exponent ratios, and policy contrasts, emitted as a single document."""

from __future__ import annotations

import numpy as np

from . import fixtures
from .policy import summarize_ratio, traces_from_records
from .sweep import curve_from_records, exponent_ratio, fit, fit_xy


def _fit_summary(f):
    out = {"family": f.family, "log_rmse": round(f.log_rmse, 4),
           "aic": round(f.aic, 3)}
    out.update({k: round(v, 4) for k, v in f.params.items()})
    return out


def window_tv_section() -> dict:
    recs = fixtures.load_records("qwen05b_window_tv").records
    out = {}
    for domain in ("natural", "code"):
        curve = curve_from_records(recs, "tv", domain=domain)
        power = fit(curve, "power")
        expo = fit(curve, "exponential")
        out[domain] = {"power": _fit_summary(power), "exponential": _fit_summary(expo),
                       "power_beats_exponential": power.log_rmse < expo.log_rmse}
    return out


def ablation_section() -> dict:
    recs = fixtures.load_records("qwen05b_window_tv_ablation").records
    out = {}
    for protocol in ("fresh", "position_preserving"):
        curve = curve_from_records(recs, "tv", protocol=protocol)
        out[protocol] = _fit_summary(fit(curve, "power"))
    gap = abs(out["fresh"]["alpha"] - out["position_preserving"]["alpha"])
    out["alpha_agreement_to_3_decimals"] = bool(gap < 5e-4)
    return out


def longwindow_section() -> dict:
    recs = fixtures.load_records("qwen05b_longwindow_tv").records
    return {domain: _fit_summary(fit(curve_from_records(recs, "tv", domain=domain),
                                     "power"))
            for domain in ("natural", "code")}


def sink_recent_section() -> dict:
    recs = fixtures.load_records("qwen05b_sink_recent_kl").records
    tv_recs = fixtures.load_records("qwen05b_window_tv").records
    out = {}
    for domain in ("natural", "code"):
        sink = [(r.budget_k, r.kl) for r in recs
                if r.policy == "sink_recent" and r.domain == domain]
        sink.sort()
        kl_fit = fit_xy([k for k, _ in sink], [v for _, v in sink], "power")
        tv_fit = fit(curve_from_records(tv_recs, "tv", domain=domain), "power")
        traces = traces_from_records(recs, domain=domain)
        out[domain] = {
            "kl_power": _fit_summary(kl_fit),
            "tv_alpha": round(tv_fit.params["alpha"], 4),
            "exponent_ratio": round(exponent_ratio(tv_fit, kl_fit), 4),
            "sink_vs_random_ratio_at_512":
                round(summarize_ratio(traces["sink_recent"], traces["random_k"], 512), 2),
        }
    return out


def policy_section() -> dict:
    recs = fixtures.load_records("qwen05b_policy_curves").records
    traces = traces_from_records(recs, domain="natural")
    ordering = all(
        traces["sliding"].at(k)["median_kl"]
        < traces["heavy_hitter"].at(k)["median_kl"]
        < traces["random_k"].at(k)["median_kl"]
        for k in traces["sliding"].budgets)
    return {
        "sliding_vs_random_ratio_at_512":
            round(summarize_ratio(traces["sliding"], traces["random_k"], 512), 1),
        "sink_vs_random_ratio_at_512":
            round(summarize_ratio(traces["sink_recent"], traces["random_k"], 512), 1),
        "heavy_hitter_between_recency_and_random": bool(ordering),
        "median_kl_at_512": {p: traces[p].at(512)["median_kl"] for p in traces},
    }


def kl_tv_section() -> dict:
    table = fixtures.load_table("qwen05b_kl_vs_tvsq")
    out = {}
    for mu, series in table["series"].items():
        budgets = np.asarray(series["budgets"], dtype=float)
        tv = np.sqrt(np.asarray(series["tv_sq"]))
        kl = np.asarray(series["kl"])
        a_tv = fit_xy(budgets, tv, "power").params["alpha"]
        a_kl = fit_xy(budgets, kl, "power").params["alpha"]
        # through-origin linear regression of KL on TV^2
        slope = float((kl @ tv ** 2) / (tv ** 2 @ tv ** 2))
        resid = kl - slope * tv ** 2
        r2 = 1.0 - float(resid @ resid) / float(((kl - kl.mean()) ** 2).sum())
        out[f"mu={mu}"] = {"exponent_ratio": round(a_kl / a_tv, 3),
                           "through_origin_slope": round(slope, 3),
                           "through_origin_r2": round(r2, 4)}
    return out


def crossmodel_section() -> dict:
    rows = fixtures.load_table("crossmodel_exponents")["rows"]
    qwen = [r for r in rows if r["model"].startswith("Qwen")]
    qwen.sort(key=lambda r: r["params_b"])
    return {
        "rows": rows,
        "natural_exceeds_code_everywhere":
            all(r["alpha_natural"] > r["alpha_code"] for r in rows),
        "natural_alpha_grows_with_scale_within_qwen":
            all(a["alpha_natural"] < b["alpha_natural"]
                for a, b in zip(qwen, qwen[1:])),
    }


def crossdomain_section() -> dict:
    rows = fixtures.load_table("crossdomain_exponents")["rows"]
    return {
        "rows": rows,
        "power_beats_exponential_everywhere":
            all(r["power_log_rmse"] < r["exp_log_rmse"] for r in rows),
        "alpha_range": [min(r["alpha_tv"] for r in rows),
                        max(r["alpha_tv"] for r in rows)],
    }


def build_report() -> dict:
    return {
        "window_tv": window_tv_section(),
        "positional_ablation": ablation_section(),
        "long_window": longwindow_section(),
        "sink_recent_kl": sink_recent_section(),
        "policy_degradation": policy_section(),
        "kl_vs_tv_squared": kl_tv_section(),
        "cross_model": crossmodel_section(),
        "cross_domain": crossdomain_section(),
    }
