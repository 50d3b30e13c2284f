"""trunclab command-line interface.

Subcommands: simulate, sweep, fit, policy, window, universal, wz, alloc,
martlab, ingest, report. Outputs are CSV or newline-delimited record files
under --out-dir (default: $TRUNCLAB_OUT or the working directory).

Exit codes: 0 ok, 1 computation error, 2 usage error, 3 validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .alloc import GaussianRD, LayerStack, sensitivities, water_fill
from .hedge import build_grid, run_universal
from .policy import degrade_sweep, traces_from_records
from .records import IngestError, MeasurementRecord, emit, ingest
from .report import build_report
from .source import SourceSpec, SyntheticSource
from .sweep import FAMILIES, bootstrap_ci, curve_from_records, fit, model_select, sweep
from .windows import (SensitivityParams, achievability_window, block_len_star,
                      exponents, sink_recent_gap, universality_overhead,
                      window_kl, window_tv)
from .wz import run_achievability
from . import __version__

DEFAULT_GRID = (2, 4, 8, 16, 32, 64, 128, 256)
DEFAULT_BUDGETS = (8, 16, 32, 64, 128, 256, 512)

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get("TRUNCLAB_OUT", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _int_list(text: str):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def _write_csv(path: Path, rows, fieldnames=None):
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to write")
    fieldnames = fieldnames or list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {path}")


def _source_from_args(args) -> SyntheticSource:
    spec = SourceSpec(kind=args.kind, V=args.vocab, alpha=args.alpha,
                      rho=args.rho, L_max=args.l_max, eta=args.eta,
                      seed=args.seed)
    return SyntheticSource(spec)


def _add_source_args(p: argparse.ArgumentParser):
    p.add_argument("--kind", choices=("power_lag", "geometric_lag"),
                   default="power_lag")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--vocab", type=int, default=64)
    p.add_argument("--l-max", type=int, default=4096)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source-config", type=str, default=None,
                   help="JSON file with a source spec; overrides the flags")


def _resolve_source(args) -> SyntheticSource:
    if args.source_config:
        with open(args.source_config, "r", encoding="utf-8") as fh:
            return SyntheticSource(SourceSpec.from_dict(json.load(fh)))
    if args.kind == "power_lag" and args.alpha is None:
        args.alpha = 0.5
    if args.kind == "geometric_lag" and args.rho is None:
        args.rho = 0.9
    return _source_from_args(args)


# --------------------------------------------------------------------------
# subcommand handlers


def cmd_simulate(args) -> int:
    source = _resolve_source(args)
    grid = args.grid or list(DEFAULT_GRID)
    curve = sweep(source, grid, args.n_prefixes, args.prefix_len,
                  statistic=args.statistic, seed=args.seed)
    name = f"synthetic/{source.spec.kind}"
    records = []
    for i in range(curve.n_prefixes):
        for j, w in enumerate(curve.grid):
            kw = {curve.statistic: float(curve.per_prefix[i, j])}
            records.append(MeasurementRecord(
                model=name, domain="synthetic", protocol="position_preserving",
                prefix_id=i, prefix_len=args.prefix_len, kind="window_sweep",
                w=int(w), tool_version=f"trunclab/{__version__}", **kw))
    out = _out_dir(args) / args.out
    emit(records, out, header=f"synthetic window sweep: {source.spec.to_dict()}")
    print(f"wrote {out} ({len(records)} records)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    source = _resolve_source(args)
    grid = args.grid or list(DEFAULT_GRID)
    curve = sweep(source, grid, args.n_prefixes, args.prefix_len,
                  statistic=args.statistic, seed=args.seed)
    y = curve.aggregate_values()
    rows = [{"w": int(w), "statistic": curve.statistic,
             "aggregate": curve.aggregate, "value": float(v),
             "n_prefixes": curve.n_prefixes}
            for w, v in zip(curve.grid, y)]
    _write_csv(_out_dir(args) / args.out, rows)
    return EXIT_OK


def _curve_from_input(args):
    if args.fixture:
        records = fixtures.load_records(args.fixture).records
    else:
        records = ingest(args.input).records
    return curve_from_records(records, args.statistic, model=args.model,
                              domain=args.domain, protocol=args.protocol)


def cmd_fit(args) -> int:
    curve = _curve_from_input(args)
    families = args.families.split(",") if args.families else list(FAMILIES)
    if args.rank:
        results = model_select(curve, families=families)
    else:
        results = [fit(curve, fam) for fam in families]
    if args.bootstrap and curve.n_prefixes >= 2:
        results = [bootstrap_ci(curve, r.family, n_resamples=args.bootstrap,
                                seed=args.seed) for r in results]
    rows = []
    for r in results:
        row = {"family": r.family, "log_rmse": r.log_rmse, "aic": r.aic}
        row.update(r.params)
        if r.ci:
            for k, (lo, hi) in r.ci.items():
                row[f"{k}_lo"] = lo
                row[f"{k}_hi"] = hi
        rows.append(row)
    for row in rows:
        print("  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in row.items()))
    if args.out:
        fieldnames = sorted({k for row in rows for k in row}, key=str)
        _write_csv(_out_dir(args) / args.out, rows, fieldnames=fieldnames)
    return EXIT_OK


def cmd_policy(args) -> int:
    budgets = args.budgets or list(DEFAULT_BUDGETS)
    if args.input or args.fixture:
        records = (fixtures.load_records(args.fixture).records if args.fixture
                   else ingest(args.input).records)
        traces = traces_from_records(records, model=args.model,
                                     domain=args.domain, protocol=args.protocol)
    else:
        source = _resolve_source(args)
        policies = args.policies.split(",")
        traces = degrade_sweep(source, policies, budgets, args.n_prefixes,
                               args.prefix_len, seed=args.seed)
    rows = [row for tr in traces.values() for row in tr.rows()]
    _write_csv(_out_dir(args) / args.out, rows)
    return EXIT_OK


def cmd_window(args) -> int:
    params = SensitivityParams(C_TS=args.c_ts, alpha=args.alpha, V=args.vocab,
                               epsilon_min=args.epsilon_min)
    rows = []
    for eps in (args.eps_grid or [0.2, 0.1, 0.05, 0.02, 0.01]):
        wtv = window_tv(params, eps)
        row = {"eps": eps, "window_tv": int(wtv.value),
               "block_len_star": block_len_star(params, int(wtv.value))}
        if params.epsilon_min is not None:
            wkl = window_kl(params, eps)
            gap = sink_recent_gap(params, int(wtv.value))
            row.update({"window_kl": int(wkl.value),
                        "kl_in_regime": wkl.in_regime,
                        "sink_gap_at_window": gap.value,
                        "gap_in_regime": gap.in_regime})
        rows.append(row)
    rep = exponents(args.alpha)
    print(f"exponents: distortion {rep.distortion_exp:.4f}  "
          f"rate(expectation) {rep.rate_exp_expectation:.4f}  "
          f"rate(high-prob) {rep.rate_exp_hp:.4f}")
    if args.horizon:
        print(f"achievability window at n={args.horizon}: "
              f"{achievability_window(args.horizon, args.alpha)}")
        if args.alpha_min:
            print(f"universality overhead: "
                  f"{universality_overhead(args.alpha, args.alpha_min, args.horizon):.4g}x")
    for row in rows:
        print("  ".join(f"{k}={v}" for k, v in row.items()))
    if args.out:
        _write_csv(_out_dir(args) / args.out, rows)
    return EXIT_OK


def cmd_universal(args) -> int:
    source = _resolve_source(args)
    grid = build_grid(args.alpha_min, args.alpha_max, args.horizon)
    trace = run_universal(source, args.horizon, grid, lam=args.lam,
                          seed=args.seed)
    print(f"experts: {grid.n_experts}  windows: "
          f"{[int(np.ceil(w)) for w in grid.windows]}")
    print(f"lambda={trace.lam:.4g}  regret={trace.regret:.4g}  "
          f"bound={trace.regret_bound:.4g}  best_expert={trace.best_expert}  "
          f"final={trace.final_selection}  cache_tokens={trace.cache_tokens}")
    _write_csv(_out_dir(args) / args.out, trace.rows())
    return EXIT_OK


def cmd_wz(args) -> int:
    source = _resolve_source(args)
    rows = []
    for n in (args.n_grid or [2 ** k for k in range(8, 15)]):
        for seed in range(args.seeds):
            o = run_achievability(source, n, args.exponent, seed=seed)
            rows.append({"n": o.n, "seed": seed, "window": o.window,
                         "block_len": o.block_len,
                         "rate_bits_per_token": o.rate_bits_per_token,
                         "kl_per_token": o.kl_per_token,
                         "tv_per_token": o.tv_per_token,
                         "token_error_rate": o.token_error_rate,
                         "encode_failures": o.encode_failures,
                         "decode_failures": o.decode_failures,
                         "n_blocks": o.n_blocks})
    _write_csv(_out_dir(args) / args.out, rows)
    return EXIT_OK


def cmd_alloc(args) -> int:
    with open(args.stack, "r", encoding="utf-8") as fh:
        desc = json.load(fh)
    stack = LayerStack(n_layers=desc["n_layers"],
                       lipschitz_g=desc.get("lipschitz_g", 1.05),
                       lipschitz_branch=desc.get("lipschitz_branch", 0.1),
                       lipschitz_ln=desc.get("lipschitz_ln", 1.0),
                       skip=desc.get("skip", False))
    family = GaussianRD(desc.get("sigma2", 1.0))
    alloc = water_fill(stack, family, args.budget,
                       aggregate_lg2=desc.get("aggregate_lg2", 1.0))
    s = sensitivities(stack)
    rows = [{"layer": i + 1, "sensitivity": float(s[i]),
             "distortion": float(alloc.distortions[i]),
             "rate_bits": float(alloc.rates[i]), "active": bool(alloc.active[i])}
            for i in range(stack.n_layers)]
    print(f"lambda={alloc.lam:.6g}  total_rate={alloc.total_rate:.4f} bits  "
          f"constraint={alloc.total_distortion:.8f} (budget {args.budget})")
    _write_csv(_out_dir(args) / args.out, rows)
    return EXIT_OK


def cmd_martlab(args) -> int:
    from .martlab import block_variance_slope, deviation_envelopes, gen_longmem
    x = gen_longmem(args.n, args.exponent, seed=args.seed, n_series=args.series)
    b_grid = args.b_grid or [4, 8, 16, 32, 64, 128, 256]
    slope = block_variance_slope(x, b_grid)
    b_star = round(args.n ** (1 / (args.exponent + 1)))
    rep = deviation_envelopes(x, b_star, args.delta, j_max=5.0)
    rows = [{"n": args.n, "alpha": args.exponent, "series": args.series,
             "block_variance_slope": slope, "B": b_star,
             "azuma": rep.azuma, "freedman": rep.freedman,
             "empirical_quantile": rep.empirical_quantile}]
    print(f"block-variance slope {slope:.3f} (expect ~{2 - args.exponent:.2f}); "
          f"envelopes at B={b_star}: azuma {rep.azuma:.4g} >= freedman "
          f"{rep.freedman:.4g} >= empirical {rep.empirical_quantile:.4g}")
    if args.out:
        _write_csv(_out_dir(args) / args.out, rows)
    return EXIT_OK


def cmd_ingest(args) -> int:
    try:
        result = ingest(args.input)
    except IngestError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{len(result.records)} records accepted, "
          f"{len(result.rejected)} rejected, {result.n_duplicates} duplicates")
    for lineno, msg in result.rejected:
        print(f"  line {lineno}: {msg}")
    return EXIT_OK


def cmd_report(args) -> int:
    rep = build_report()
    text = json.dumps(rep, indent=1, sort_keys=True)
    print(text)
    if args.out:
        out = _out_dir(args) / args.out
        out.write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trunclab", description=__doc__)
    parser.add_argument("--out-dir", default=None,
                        help="output directory (default $TRUNCLAB_OUT or cwd)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(handler=handler)
        return p

    p = add("simulate", cmd_simulate, help="emit synthetic sweep measurement records")
    _add_source_args(p)
    p.add_argument("--n-prefixes", type=int, default=50)
    p.add_argument("--prefix-len", type=int, default=1100)
    p.add_argument("--grid", type=_int_list, default=None)
    p.add_argument("--statistic", choices=("tv", "kl"), default="tv")
    p.add_argument("--out", default="records.jsonl")

    p = add("sweep", cmd_sweep, help="window sweep on a synthetic source")
    _add_source_args(p)
    p.add_argument("--n-prefixes", type=int, default=50)
    p.add_argument("--prefix-len", type=int, default=1100)
    p.add_argument("--grid", type=_int_list, default=None)
    p.add_argument("--statistic", choices=("tv", "kl"), default="tv")
    p.add_argument("--out", default="curve.csv")

    p = add("fit", cmd_fit, help="fit decay families to a measured curve")
    p.add_argument("--input", default=None, help="measurement log (JSONL)")
    p.add_argument("--fixture", default=None,
                   choices=fixtures.FIXTURE_NAMES, help="bundled fixture name")
    p.add_argument("--statistic", choices=("tv", "kl"), default="tv")
    p.add_argument("--model", default=None)
    p.add_argument("--domain", default=None)
    p.add_argument("--protocol", default=None)
    p.add_argument("--families", default="power,exponential")
    p.add_argument("--rank", action="store_true", help="rank families by AIC")
    p.add_argument("--bootstrap", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = add("policy", cmd_policy, help="budget-vs-distortion policy traces")
    _add_source_args(p)
    p.add_argument("--input", default=None)
    p.add_argument("--fixture", default=None, choices=fixtures.FIXTURE_NAMES)
    p.add_argument("--model", default=None)
    p.add_argument("--domain", default=None)
    p.add_argument("--protocol", default=None)
    p.add_argument("--policies", default="sliding,sink_recent,random_k")
    p.add_argument("--budgets", type=_int_list, default=None)
    p.add_argument("--n-prefixes", type=int, default=200)
    p.add_argument("--prefix-len", type=int, default=1100)
    p.add_argument("--out", default="policy_traces.csv")

    p = add("window", cmd_window, help="closed-form window calculators")
    p.add_argument("--c-ts", type=float, default=1.0)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--vocab", type=int, default=64)
    p.add_argument("--epsilon-min", type=float, default=None)
    p.add_argument("--eps-grid", type=_float_list, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--alpha-min", type=float, default=None)
    p.add_argument("--out", default=None)

    p = add("universal", cmd_universal, help="window-grid hedge selection run")
    _add_source_args(p)
    p.add_argument("--horizon", type=int, default=4096)
    p.add_argument("--alpha-min", type=float, default=0.3)
    p.add_argument("--alpha-max", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--out", default="universal_trace.csv")

    p = add("wz", cmd_wz, help="desk-scale block-coding trajectories")
    _add_source_args(p)
    p.add_argument("--exponent", type=float, default=1.0,
                   help="decay exponent used for the window schedule")
    p.add_argument("--n-grid", type=_int_list, default=None)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default="wz_outcomes.csv")

    p = add("alloc", cmd_alloc, help="reverse-water-filling layer allocation")
    p.add_argument("--stack", required=True, help="JSON stack description")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--out", default="allocation.csv")

    p = add("martlab", cmd_martlab, help="long-memory concentration experiments")
    p.add_argument("--exponent", type=float, default=0.5)
    p.add_argument("--n", type=int, default=8192)
    p.add_argument("--series", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--b-grid", type=_int_list, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = add("ingest", cmd_ingest, help="validate a measurement log")
    p.add_argument("--input", required=True)

    p = add("report", cmd_report, help="reproduce every bundled fixture fit")
    p.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except IngestError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
