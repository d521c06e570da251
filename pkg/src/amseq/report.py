"""Report documents emitted by the command line front end."""
from __future__ import annotations

import json
from typing import Any, Dict, List, Optional

from .classify import FAILS, HOLDS, INCONCLUSIVE, _jsonable

SCHEMA = "amseq.report/1"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


class Report:
    def __init__(self, command: str, inputs: dict, config: dict):
        self.command = command
        self.inputs = inputs
        self.config = config
        self.operations: List[dict] = []
        self.notes: List[str] = []
        self.error: Optional[dict] = None
        self.wall_time: Dict[str, float] = {}
        self.hard_failure = False
        self.format = "json"

    def add(self, op: str, status: str = "ran", verdict: Optional[str] = None, result: Any = None, reason: str = ""):
        entry = {"op": op, "status": status, "verdict": verdict}
        if result is not None:
            entry["result"] = result
        if reason:
            entry["reason"] = reason
        self.operations.append(entry)
        return entry

    def fail(self, kind: str, message: str, **extra):
        self.error = {"type": kind, "message": message, **extra}

    @property
    def exit_code(self) -> int:
        if self.error is not None or self.hard_failure:
            return EXIT_ERROR
        if any(o["status"] == "error" for o in self.operations):
            return EXIT_ERROR
        if any(o["verdict"] == INCONCLUSIVE for o in self.operations):
            return EXIT_INCONCLUSIVE
        return EXIT_OK

    @property
    def status(self) -> str:
        return {EXIT_OK: "definite", EXIT_INCONCLUSIVE: "inconclusive", EXIT_ERROR: "error"}[self.exit_code]

    def body(self) -> dict:
        """Everything except wall time; identical inputs give identical bodies."""
        return _jsonable(
            {
                "schema": SCHEMA,
                "command": self.command,
                "input": self.inputs,
                "config": self.config,
                "operations": self.operations,
                "notes": self.notes,
                "error": self.error,
                "status": self.status,
                "exit_code": self.exit_code,
            }
        )

    def to_dict(self) -> dict:
        d = self.body()
        d["wall_time"] = {k: round(v, 4) for k, v in sorted(self.wall_time.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=str)

    def to_text(self) -> str:
        lines = [f"{self.command}: {json.dumps(self.inputs, sort_keys=True, default=str)}"]
        for o in self.operations:
            v = o["verdict"] or o["status"]
            head = f"  {o['op']:<28} {v}"
            extra = _summary(o.get("result"))
            if o.get("reason"):
                extra = o["reason"]
            lines.append(head + (f"  ({extra})" if extra else ""))
        for n in self.notes:
            lines.append(f"  note: {n}")
        if self.error:
            lines.append(f"  error: {self.error['message']}")
        lines.append(f"status {self.status} (exit {self.exit_code}), {self.wall_time.get('total', 0):.2f}s")
        return "\n".join(lines)


def _summary(res) -> str:
    if not isinstance(res, dict):
        return "" if res is None else str(res)
    bits = []
    for key in ("value", "constant", "witness", "m", "alpha", "beta", "alpha_upper", "beta_lower", "agreement", "ok"):
        if key in res and res[key] is not None:
            v = res[key]
            bits.append(f"{key}={v:.6g}" if isinstance(v, float) else f"{key}={v}")
    if "counts" in res:
        bits.append(", ".join(f"{k} {v}" for k, v in res["counts"].items() if v))
    if "failed" in res and res["failed"]:
        bits.append("failed: " + "; ".join(res["failed"][:3]))
    return ", ".join(bits)


def verdict_of(flag: str) -> str:
    return {"yes": HOLDS, "no": FAILS}.get(flag, INCONCLUSIVE)
