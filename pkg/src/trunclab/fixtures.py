"""Loaders for the bundled measurement fixtures.

Each .jsonl fixture is a measurement log in the shared record schema
(aggregate value per grid point, prefix_id 0); the .json fixtures are
summary tables. See the '#' headers inside the files for what was measured.
"""

from __future__ import annotations

import json
from importlib import resources

from .records import IngestResult, ingest

FIXTURE_NAMES = (
    "qwen05b_window_tv",
    "qwen05b_window_tv_ablation",
    "qwen05b_longwindow_tv",
    "qwen05b_sink_recent_kl",
    "qwen05b_policy_curves",
)

TABLE_NAMES = (
    "qwen05b_kl_vs_tvsq",
    "crossmodel_exponents",
    "crossdomain_exponents",
)


def fixture_path(name: str):
    suffix = ".jsonl" if name in FIXTURE_NAMES else ".json"
    res = resources.files("trunclab") / "fixtures" / f"{name}{suffix}"
    if not res.is_file():
        raise KeyError(f"unknown fixture {name!r}")
    return res


def load_records(name: str) -> IngestResult:
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown record fixture {name!r}; have {FIXTURE_NAMES}")
    with resources.as_file(fixture_path(name)) as p:
        return ingest(p)


def load_table(name: str) -> dict:
    if name not in TABLE_NAMES:
        raise KeyError(f"unknown table fixture {name!r}; have {TABLE_NAMES}")
    return json.loads(fixture_path(name).read_text(encoding="utf-8"))
