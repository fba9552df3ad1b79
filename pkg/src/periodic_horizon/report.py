"""Pass/fail records shared by the Monte-Carlo checks and the verify command."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


def _plain(obj):
    """Convert numpy scalars/arrays inside ``obj`` to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    witness: Optional[dict] = None
    note: str = ""

    def as_dict(self) -> dict:
        d = {
            "name": self.name,
            "passed": bool(self.passed),
            "value": float(self.value),
            "tolerance": float(self.tolerance),
        }
        if self.witness is not None:
            d["witness"] = _plain(self.witness)
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class CheckReport:
    results: list = field(default_factory=list)

    def add(self, result: CheckResult) -> CheckResult:
        self.results.append(result)
        return result

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(r.name == name for r in self.results)

    def as_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "checks": [r.as_dict() for r in self.results]}
