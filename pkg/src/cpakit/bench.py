"""Per-phase wall-clock profiling of the attack.

Phase times come from a monotonic clock entered at the engine's phase
boundaries. Data generation or loading is timed separately and is not part of
the phase total.
"""

from __future__ import annotations

import contextlib
import csv
import io
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .engine import AttackConfig, AttackResult, attack
from .synth import SynthConfig, generate_dataset
from .trace_model import CiphertextSet, TraceSet

PHASES = ("phase1", "phase2", "phase3", "phase4")
CSV_COLUMNS = ("n", "m", "workers", "precision", "phase1_s", "phase2_s", "phase3_s", "phase4_s", "total_s", "throughput")


class PhaseTimer:
    """Accumulates wall time per named phase; a phase may be entered many times."""

    def __init__(self, clock=time.perf_counter):
        self.clock = clock
        self.totals: dict[str, float] = defaultdict(float)

    @contextlib.contextmanager
    def phase(self, name: str):
        start = self.clock()
        try:
            yield
        finally:
            self.totals[name] += self.clock() - start


@dataclass
class BenchReport:
    n: int
    m: int
    workers: int
    precision: str
    phase_s: dict  # phase name -> seconds, from the median repetition
    total_s: float
    total_min_s: float
    total_max_s: float
    repetitions: int
    load_s: float = 0.0

    @property
    def percentages(self) -> dict:
        total = sum(self.phase_s.values())
        if total <= 0:
            return {p: 100.0 / len(PHASES) for p in PHASES}
        return {p: 100.0 * self.phase_s[p] / total for p in PHASES}

    @property
    def throughput(self) -> float:
        """Trace-samples processed per second."""
        return self.n * self.m / self.total_s if self.total_s > 0 else float("inf")

    def row(self) -> dict:
        row = {"n": self.n, "m": self.m, "workers": self.workers, "precision": self.precision}
        row.update({f"{p}_s": self.phase_s[p] for p in PHASES})
        row["total_s"] = self.total_s
        row["throughput"] = self.throughput
        return row


def run_benchmark(
    source: Union[SynthConfig, tuple[TraceSet, CiphertextSet]],
    workers: Sequence[int] = (1,),
    repetitions: int = 3,
    config: Optional[AttackConfig] = None,
) -> list[BenchReport]:
    """Time the attack once per worker count, reporting the median repetition.

    ``source`` is either a synthetic config (generated once, generation time
    reported as ``load_s``) or a ready ``(traces, ciphertexts)`` pair.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    start = time.perf_counter()
    if isinstance(source, SynthConfig):
        traces, ciphertexts = generate_dataset(source)
    else:
        traces, ciphertexts = source
    load_s = time.perf_counter() - start
    base = config or AttackConfig()

    reports = []
    for count in workers:
        cfg = AttackConfig(
            precision=base.precision, chunk=base.chunk, workers=count,
            table_mode=base.table_mode, table_budget=base.table_budget,
        )
        runs = []
        for _ in range(repetitions):
            timer = PhaseTimer()
            attack(traces, ciphertexts, cfg, timer=timer)
            phases = {p: timer.totals.get(p, 0.0) for p in PHASES}
            runs.append((sum(phases.values()), phases))
        runs.sort(key=lambda r: r[0])
        totals = [r[0] for r in runs]
        median_total, median_phases = runs[(len(runs) - 1) // 2]
        reports.append(
            BenchReport(
                n=traces.n, m=traces.m, workers=count, precision=cfg.precision,
                phase_s=median_phases, total_s=median_total,
                total_min_s=totals[0], total_max_s=totals[-1],
                repetitions=repetitions, load_s=load_s,
            )
        )
    return reports


def timed_attack(traces: TraceSet, ciphertexts: CiphertextSet, config: AttackConfig) -> tuple[AttackResult, PhaseTimer]:
    timer = PhaseTimer()
    return attack(traces, ciphertexts, config, timer=timer), timer


def to_csv(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in rep.row().items()})
    return buf.getvalue()


def format_table(reports: Sequence[BenchReport]) -> str:
    lines = [f"{'n':>7} {'m':>7} {'workers':>7}  " + "  ".join(f"{p:>15}" for p in PHASES) + f"  {'total s':>9}  {'min..max s':>17}"]
    for rep in reports:
        pct = rep.percentages
        cells = "  ".join(f"{rep.phase_s[p]:8.3f} {pct[p]:5.1f}%" for p in PHASES)
        lines.append(
            f"{rep.n:>7} {rep.m:>7} {rep.workers:>7}  {cells}  {rep.total_s:9.3f}  "
            f"{rep.total_min_s:8.3f}..{rep.total_max_s:<8.3f}"
        )
    return "\n".join(lines)
