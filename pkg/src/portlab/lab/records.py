"""Result records, verdicts and their byte-stable serialization."""
from __future__ import annotations

import json
import math
import operator

import numpy as np

OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt, "==": operator.eq}


def verdict(name: str, lhs: float, op: str, rhs: float) -> dict:
    """A pass/fail check that carries both sides, so it can be re-derived."""
    lhs, rhs = float(lhs), float(rhs)
    return {"name": name, "lhs": lhs, "op": op, "rhs": rhs, "pass": bool(OPS[op](lhs, rhs))}


def record(suite: str, seed, case: str, scalars: dict, verdicts=()) -> dict:
    return {
        "suite": suite,
        "seed": seed,
        "case": case,
        "scalars": scalars,
        "verdicts": list(verdicts),
    }


def audit(rec: dict) -> bool:
    """True when every stored verdict agrees with its recorded operands."""
    return all(OPS[v["op"]](v["lhs"], v["rhs"]) == v["pass"] for v in rec["verdicts"])


def all_pass(records) -> bool:
    return all(v["pass"] for r in records for v in r["verdicts"])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return x
    return obj


def dumps(obj) -> str:
    """UTF-8 JSON with sorted keys and a trailing newline."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
