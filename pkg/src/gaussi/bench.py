"""Sum benchmark: ``O = X_0 + ... + X_{n-1}`` over standard normals."""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .interpreter import run_program
from .lang import parse

KINDS = ("sum", "sum-cond")


def benchmark_program(kind: str, n: int) -> str:
    """Source of the benchmark program with ``n`` summed variables.

    ``sum-cond`` additionally observes the sum and returns the first summand.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown benchmark kind {kind!r}")
    if n < 1:
        raise ValueError("benchmark size must be positive")
    lines = [f"for i in range({n}):", "    X[i] = Normal(0, 1)"]
    if n == 1:
        lines.append("O = X[0] * 1")
    else:
        lines.append("S[1] = X[0] + X[1]")
        if n > 2:
            lines += [f"for i in range({n - 2}):", "    S[i + 2] = S[i + 1] + X[i + 2]"]
        lines.append(f"O = S[{n - 1}] * 1")
    if kind == "sum-cond":
        lines += ["condition(O, 1)", "return X[0]"]
    else:
        lines.append("return O")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BenchRow:
    n: int
    mean_seconds: float
    stddev: float


def time_once(kind: str, n: int) -> float:
    program = parse(benchmark_program(kind, n))
    start = time.perf_counter()
    run_program(program)
    return time.perf_counter() - start


def run_bench(kind: str, sizes, repetitions: int = 3, *, parallel: bool = False) -> list[BenchRow]:
    """Time ``repetitions`` runs per size; parsing is excluded from timings."""
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    sizes = [int(n) for n in sizes]
    if any(n < 1 for n in sizes):
        raise ValueError("benchmark sizes must be positive")
    jobs = [(kind, n) for n in sizes for _ in range(repetitions)]
    if parallel:
        with ProcessPoolExecutor() as pool:
            times = list(pool.map(time_once, *zip(*jobs)))
    else:
        times = [time_once(k, n) for k, n in jobs]
    rows = []
    for j, n in enumerate(sizes):
        t = times[j * repetitions:(j + 1) * repetitions]
        rows.append(BenchRow(n, statistics.fmean(t), statistics.stdev(t) if len(t) > 1 else 0.0))
    return rows


def fitted_exponent(rows) -> float:
    """Least-squares slope of log(time) against log(n)."""
    xs = [math.log(r.n) for r in rows]
    ys = [math.log(max(r.mean_seconds, 1e-9)) for r in rows]
    mx, my = statistics.fmean(xs), statistics.fmean(ys)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
