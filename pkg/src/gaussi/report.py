"""Posterior reports and their text, JSON and CSV serializations."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

SIG_DIGITS = 12


def fmt(x: float) -> str:
    """``x`` with 12 significant digits."""
    return f"{x:.{SIG_DIGITS}g}"


@dataclass(frozen=True)
class PosteriorReport:
    program: str
    names: tuple
    mean: tuple
    cov: tuple                                    # rows of the full symmetric matrix
    metrics: dict = field(default_factory=dict)   # name -> value
    probabilities: tuple = ()                     # (variable, lo, hi, probability)
    densities: tuple = ()                         # (variable, ((x, density), ...))
    timing: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)   # free-form scalars, e.g. observations

    @classmethod
    def from_result(cls, program, result, **kw) -> "PosteriorReport":
        return cls(
            program=str(program),
            names=tuple(result.names),
            mean=tuple(float(v) for v in result.mean),
            cov=tuple(tuple(float(v) for v in row) for row in result.cov),
            timing={"elapsed_seconds": float(result.elapsed),
                    "statements": int(result.statement_count)},
            **kw,
        )

    # -- JSON -------------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PosteriorReport":
        d = json.loads(text)
        return cls(
            program=d["program"],
            names=tuple(d["names"]),
            mean=tuple(d["mean"]),
            cov=tuple(tuple(r) for r in d["cov"]),
            metrics=dict(d.get("metrics", {})),
            probabilities=tuple(tuple(p) for p in d.get("probabilities", ())),
            densities=tuple((v, tuple(tuple(pt) for pt in pts)) for v, pts in d.get("densities", ())),
            timing=dict(d.get("timing", {})),
            details=dict(d.get("details", {})),
        )

    # -- text -------------------------------------------------------------

    def to_text(self) -> str:
        out = [f"program: {self.program}", "names: " + " ".join(self.names), "mean:"]
        out += [f"  {n} {fmt(m)}" for n, m in zip(self.names, self.mean)]
        out.append("cov:")
        out += ["  " + " ".join(fmt(v) for v in row) for row in self.cov]
        if self.metrics:
            out.append("metrics:")
            out += [f"  {k} {fmt(v)}" for k, v in self.metrics.items()]
        if self.probabilities:
            out.append("probabilities:")
            out += [f"  P({v} in [{fmt(lo)}, {fmt(hi)}]) {fmt(p)}" for v, lo, hi, p in self.probabilities]
        for var, pts in self.densities:
            out.append(f"density {var}:")
            out += [f"  {fmt(x)} {fmt(y)}" for x, y in pts]
        if self.details:
            out.append("details:")
            out += [f"  {k} {fmt(v) if isinstance(v, float) else v}" for k, v in self.details.items()]
        if self.timing:
            out.append("timing:")
            out += [f"  {k} {fmt(v) if isinstance(v, float) else v}" for k, v in self.timing.items()]
        return "\n".join(out) + "\n"

    # -- CSV (long form, plot ready) -------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "key1", "key2", "value"])
        for n, m in zip(self.names, self.mean):
            w.writerow(["mean", n, "", fmt(m)])
        for a, row in zip(self.names, self.cov):
            for b, v in zip(self.names, row):
                w.writerow(["cov", a, b, fmt(v)])
        for k, v in self.metrics.items():
            w.writerow(["metric", k, "", fmt(v)])
        for var, lo, hi, p in self.probabilities:
            w.writerow(["probability", var, f"{fmt(lo)}:{fmt(hi)}", fmt(p)])
        for var, pts in self.densities:
            for x, y in pts:
                w.writerow(["density", var, fmt(x), fmt(y)])
        for k, v in self.details.items():
            w.writerow(["detail", k, "", fmt(v) if isinstance(v, float) else v])
        for k, v in self.timing.items():
            w.writerow(["timing", k, "", fmt(v) if isinstance(v, float) else v])
        return buf.getvalue()

    def render(self, fmt_name: str) -> str:
        if fmt_name == "json":
            return self.to_json() + "\n"
        if fmt_name == "csv":
            return self.to_csv()
        return self.to_text()
