"""Reading run logs back: final metrics and the ordering check across runs."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DataError


def read_log(path) -> tuple[dict, list[dict]]:
    """Split a JSONL run log into its config header and the round records."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read log {path}: {exc}") from None
    try:
        rows = [json.loads(s) for s in lines if s.strip()]
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed log {path}: {exc}") from None
    if not rows or "config" not in rows[0]:
        raise DataError(f"log {path} does not start with a config record")
    return rows[0]["config"], rows[1:]


def config_value(config: dict, key: str):
    node = config
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            raise DataError(f"config has no key {key}")
        node = node[part]
    return node


def final_metric(path, metric: str = "accuracy") -> float:
    _, records = read_log(path)
    if not records:
        raise DataError(f"log {path} has no rounds")
    last = records[-1]["eval_metrics"]
    if metric not in last:
        raise DataError(f"log {path} has no eval metric {metric!r}")
    return float(last[metric])


def ordering(paths, by: str = "partition.alpha", metric: str = "accuracy"):
    """Runs sorted by ``by`` descending with their final ``metric``.

    Returns ``(rows, holds)`` where ``holds`` says the metric never increases
    as ``by`` decreases, i.e. more heterogeneous runs do no better.
    """
    rows = []
    for p in paths:
        config, _ = read_log(p)
        rows.append((config_value(config, by), final_metric(p, metric), str(p)))
    rows.sort(key=lambda r: -r[0])
    holds = all(a[1] >= b[1] for a, b in zip(rows, rows[1:]))
    return rows, holds
