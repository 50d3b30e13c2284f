"""truncprobe CLI: run the window and policy probes on a causal LM and emit
a trunclab-schema measurement log.

Example (needs the model weights and, at full prefix lengths, a GPU):

    truncprobe --model Qwen/Qwen2.5-0.5B \
        --corpus natural=gutenberg.txt --corpus code=python_corpus.txt \
        --probe both --out qwen05b.jsonl
"""

from __future__ import annotations

import argparse
import sys

from .adapter import CausalLMAdapter
from .config import ProbeConfig
from .harness import load_corpora, probe_policy, probe_window, write_records


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="truncprobe", description=__doc__)
    p.add_argument("--model", required=True, help="model id or local path")
    p.add_argument("--corpus", action="append", required=True,
                   metavar="DOMAIN=PATH", help="corpus file per domain")
    p.add_argument("--config", default=None,
                   help="JSON ProbeConfig; --model/--corpus override it")
    p.add_argument("--probe", choices=("window", "policy", "both"),
                   default="both")
    p.add_argument("--n-prefixes", type=int, default=100)
    p.add_argument("--prefix-len", type=int, default=1024)
    p.add_argument("--grid", type=_int_list, default=None)
    p.add_argument("--budgets", type=_int_list, default=None)
    p.add_argument("--protocols", default="position_preserving",
                   help="comma list: fresh,position_preserving")
    p.add_argument("--device", default="cpu")
    p.add_argument("--dtype", default="float32")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="probe_records.jsonl")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    domains = {}
    for spec in args.corpus:
        if "=" not in spec:
            print(f"bad --corpus {spec!r}; expected DOMAIN=PATH", file=sys.stderr)
            return 2
        name, path = spec.split("=", 1)
        domains[name] = path
    kw = {}
    if args.grid:
        kw["grid"] = args.grid
    if args.budgets:
        kw["budgets"] = args.budgets
    config = ProbeConfig(
        model_id=args.model, domains=domains, n_prefixes=args.n_prefixes,
        prefix_len=args.prefix_len,
        protocols=tuple(args.protocols.split(",")),
        device=args.device, dtype=args.dtype, seed=args.seed, **kw)
    try:
        adapter = CausalLMAdapter.from_pretrained(config.model_id,
                                                  device=config.device,
                                                  dtype=config.dtype)
        corpora = load_corpora(adapter, config)
        records = []
        if args.probe in ("window", "both"):
            records += probe_window(adapter, config, corpora)
        if args.probe in ("policy", "both"):
            records += probe_policy(adapter, config, corpora)
        write_records(records, args.out,
                      header=f"truncprobe run: {config.to_dict()}")
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({len(records)} records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
