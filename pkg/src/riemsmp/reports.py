"""Predicate reports and their text serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
VERDICTS = (PASS, FAIL, INCONCLUSIVE)


def fmt(x) -> str:
    """Stable float formatting for reports."""
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)):
        return str(x)
    try:
        xf = float(x)
    except (TypeError, ValueError):
        return str(x)
    xf += 0.0  # no negative zero in reports
    if math.isnan(xf):
        return "nan"
    if math.isinf(xf):
        return "inf" if xf > 0 else "-inf"
    return f"{xf:.10g}"


@dataclass
class PropertyReport:
    predicate: str
    verdict: str
    min_margin: float | None = None
    witnesses: list = field(default_factory=list)  # (description, margin) pairs
    alpha_threshold: float | None = None
    sampling: dict = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def add_witness(self, description: str, margin: float, limit: int = 5):
        if len(self.witnesses) < limit:
            self.witnesses.append((description, float(margin)))

    def to_record(self) -> str:
        parts = [
            f"id={self.predicate}",
            f"verdict={self.verdict}",
            f"min_margin={fmt(self.min_margin)}",
            f"threshold={fmt(self.alpha_threshold)}",
        ]
        for key in sorted(self.sampling):
            parts.append(f"{key}={fmt(self.sampling[key])}")
        for key in sorted(self.details):
            val = self.details[key]
            if isinstance(val, (list, tuple, dict)):
                continue
            parts.append(f"{key}={fmt(val)}")
        for desc, margin in self.witnesses[:3]:
            parts.append(f"witness=[{desc}; margin={fmt(margin)}]")
        return " ".join(parts)


def record(**fields) -> str:
    """``key=value`` pairs in the given order, floats formatted by ``fmt``."""
    return " ".join(f"{k}={fmt(v)}" for k, v in fields.items())


def render_reports(reports, header: str | None = None) -> str:
    """One line per report (or preformatted record string).  The optional
    header carries volatile data (timestamps) so that the remaining lines
    are reproducible byte for byte."""
    lines = []
    if header is not None:
        lines.append(f"# {header}")
    lines.extend(r if isinstance(r, str) else r.to_record() for r in reports)
    return "\n".join(lines) + "\n"
