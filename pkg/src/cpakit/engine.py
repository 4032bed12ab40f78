"""Four-phase correlation power analysis on the last AES round.

Phase 1 computes the selection values H for every (trace, byte position,
subkey) and their sums. Phase 2 computes sum W, sum W^2 per sample and
sum W*H per (subkey, byte position, sample). Phase 3 turns those sums into
correlation estimates and keeps the maximum |rho| per (subkey, byte
position). Phase 4 picks the best subkey per byte and inverts the key
schedule.

Phases 2 and 3 stream over chunks of the sample axis, so peak memory is
bounded by the chunk size rather than the trace length. Work is split across
threads by subkey; each output cell is owned by one thread and summed in
trace order, which makes results bit-identical for any worker count or chunk
size.
"""

from __future__ import annotations

import contextlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import numpy.typing as npt

from . import _kernels
from .aes_core import (
    HAMMING_WEIGHT,
    INV_SBOX,
    SHIFTROWS_SOURCE,
    invert_key_schedule,
    selection_values,
)
from .trace_model import CiphertextSet, Precision, TraceSet

N_SUBKEYS = 256
N_BYTES = 16
N_CELLS = N_SUBKEYS * N_BYTES
TRACE_BLOCK = 1024
DEFAULT_CHUNK = 4096
DEFAULT_TABLE_BUDGET = 1 << 30

MATERIALIZED = "materialized"
ON_THE_FLY = "on-the-fly"
AUTO = "auto"


@dataclass(frozen=True, eq=False)
class SelectionTable:
    """Selection values H indexed (trace i, byte position b, subkey k).

    In on-the-fly mode nothing is stored; entries and trace blocks are
    recomputed from the ciphertexts when asked for.
    """

    ciphertexts: CiphertextSet
    mode: str = MATERIALIZED
    _values: Optional[npt.NDArray[np.uint8]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.ciphertexts.n

    @property
    def values(self) -> npt.NDArray[np.uint8]:
        """Full ``(n, 16, 256)`` table; built on demand in on-the-fly mode."""
        if self._values is not None:
            return self._values
        return self.block(0, self.n)

    def block(self, start: int, stop: int) -> npt.NDArray[np.uint8]:
        if self._values is not None:
            return self._values[start:stop]
        return selection_values(self.ciphertexts.data[start:stop])

    def __getitem__(self, index) -> int:
        i, b, k = index
        if self._values is not None:
            return int(self._values[i, b, k])
        ct = self.ciphertexts.data[i]
        return int(HAMMING_WEIGHT[INV_SBOX[ct[b] ^ k] ^ ct[SHIFTROWS_SOURCE[b]]])


@dataclass(frozen=True, eq=False)
class ModelStats:
    """Sums of H and H^2 per (subkey, byte position), shape (256, 16), exact integers."""

    n: int
    sum_h: npt.NDArray[np.int64]
    sum_h2: npt.NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class TraceStats:
    """Phase 2 sums for the samples ``start <= j < stop``."""

    n: int
    start: int
    stop: int
    sum_w: npt.NDArray[np.float64]  # (width,)
    sum_w2: npt.NDArray[np.float64]  # (width,)
    sum_wh: npt.NDArray[np.float64]  # (256, 16, width)


@dataclass(frozen=True, eq=False)
class CorrelationSurface:
    """Max |rho| over the processed samples per (subkey, byte position)."""

    rho: npt.NDArray[np.floating]  # (256, 16)
    argmax_sample: npt.NDArray[np.int64]  # (256, 16)


@dataclass(eq=False)
class AttackResult:
    round10_key: bytes
    master_key: bytes
    ranking: npt.NDArray[np.int64]  # (16, 256) subkeys, best first
    ranking_rho: npt.NDArray[np.floating]  # (16, 256) matching max |rho|
    margin: npt.NDArray[np.floating]  # (16,) best minus runner-up
    surface: CorrelationSurface
    curves: Optional[npt.NDArray[np.float64]] = None  # (16, m) signed rho of the winners

    def to_dict(self) -> dict:
        return {
            "round10_key": self.round10_key.hex(),
            "master_key": self.master_key.hex(),
            "bytes": [
                {
                    "byte_position": b,
                    "subkey": int(self.ranking[b, 0]),
                    "rho": float(self.ranking_rho[b, 0]),
                    "margin": float(self.margin[b]),
                    "sample": int(self.surface.argmax_sample[self.ranking[b, 0], b]),
                }
                for b in range(N_BYTES)
            ],
        }


@dataclass(frozen=True)
class AttackConfig:
    precision: str = "double"
    chunk: int = DEFAULT_CHUNK
    workers: int = 1
    table_mode: str = AUTO
    table_budget: int = DEFAULT_TABLE_BUDGET  # bytes; AUTO goes on-the-fly above it
    export_curves: bool = False

    def __post_init__(self):
        Precision.parse(self.precision)
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.table_mode not in (MATERIALIZED, ON_THE_FLY, AUTO):
            raise ValueError(f"unknown selection table mode {self.table_mode!r}")


def build_selection_table(cts: CiphertextSet, mode: str = MATERIALIZED) -> SelectionTable:
    if mode == MATERIALIZED:
        return SelectionTable(cts, MATERIALIZED, selection_values(cts.data))
    if mode == ON_THE_FLY:
        return SelectionTable(cts, ON_THE_FLY)
    raise ValueError(f"unknown selection table mode {mode!r}")


def phase1_model_stats(st: SelectionTable) -> ModelStats:
    sum_h = np.zeros((N_BYTES, N_SUBKEYS), dtype=np.int64)
    sum_h2 = np.zeros((N_BYTES, N_SUBKEYS), dtype=np.int64)
    for start in range(0, st.n, TRACE_BLOCK):
        h = st.block(start, start + TRACE_BLOCK).astype(np.int64)
        sum_h += h.sum(axis=0)
        sum_h2 += (h * h).sum(axis=0)
    return ModelStats(st.n, np.ascontiguousarray(sum_h.T), np.ascontiguousarray(sum_h2.T))


def _split(count: int, parts: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, count, min(parts, count) + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def _run(pool: Optional[ThreadPoolExecutor], fn, ranges, *args) -> None:
    if pool is None or len(ranges) == 1:
        for lo, hi in ranges:
            fn(*args, lo, hi)
        return
    for fut in [pool.submit(fn, *args, lo, hi) for lo, hi in ranges]:
        fut.result()


def _model_panel(h: npt.NDArray[np.uint8], winners=None) -> npt.NDArray[np.uint8]:
    """Repack a (t, 16, 256) table block as (cell blocks, t, 16).

    Cell block ``k`` holds subkey ``k`` for all 16 byte positions, so row
    ``k * 16 + b`` of the product array is cell (k, b). With ``winners`` the
    result is a single block holding subkey ``winners[b]`` at position ``b``.
    """
    if winners is None:
        return np.ascontiguousarray(h.transpose(2, 0, 1))
    return np.ascontiguousarray(h[:, np.arange(N_BYTES), winners])[None]


def _sample_panel(w: npt.NDArray[np.floating]) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    t, width = w.shape
    blocks = -(-width // _kernels.SAMPLE_BLOCK)
    padded = np.zeros((t, blocks * _kernels.SAMPLE_BLOCK))
    padded[:, :width] = w
    panel = np.ascontiguousarray(padded.reshape(t, blocks, _kernels.SAMPLE_BLOCK).transpose(1, 0, 2))
    return panel, padded[:, :width]


def _chunk_bounds(sample_chunk, m: int) -> tuple[int, int]:
    if sample_chunk is None:
        return 0, m
    if isinstance(sample_chunk, range):
        if sample_chunk.step != 1:
            raise ValueError("sample chunk must be a contiguous range")
        lo, hi = sample_chunk.start, sample_chunk.stop
    else:
        lo, hi = sample_chunk
    if not 0 <= lo < hi <= m:
        raise ValueError(f"sample chunk [{lo}, {hi}) outside 0..{m}")
    return lo, hi


def _accumulate(ts: TraceSet, st: SelectionTable, lo: int, hi: int, pool, workers: int, winners=None):
    mat = ts.matrix()
    width = hi - lo
    n_blocks = N_SUBKEYS if winners is None else 1
    out = np.zeros((n_blocks * _kernels.CELL_BLOCK, -(-width // _kernels.SAMPLE_BLOCK) * _kernels.SAMPLE_BLOCK))
    sum_w = np.zeros(width)
    sum_w2 = np.zeros(width)
    ranges = _split(n_blocks, workers)
    for start in range(0, ts.n, TRACE_BLOCK):
        stop = min(start + TRACE_BLOCK, ts.n)
        w_panel, w = _sample_panel(mat[start:stop, lo:hi])
        h_panel = _model_panel(st.block(start, stop), winners)
        _kernels.accumulate_moments(w, sum_w, sum_w2)
        _run(pool, _kernels.accumulate_products, ranges, w_panel, h_panel, out)
    return sum_w, sum_w2, out[:, :width]


def _check_counts(ts_n: int, ct_n: int) -> None:
    if ts_n != ct_n:
        raise ValueError(f"trace count {ts_n} does not match ciphertext count {ct_n}")


def _phase2(ts: TraceSet, st: SelectionTable, lo: int, hi: int, pool, workers: int) -> TraceStats:
    _check_counts(ts.n, st.n)
    sum_w, sum_w2, sum_wh = _accumulate(ts, st, lo, hi, pool, workers)
    return TraceStats(ts.n, lo, hi, sum_w, sum_w2, np.ascontiguousarray(sum_wh).reshape(N_SUBKEYS, N_BYTES, hi - lo))


def _phase3(ms: ModelStats, tstats: TraceStats, running: Optional[CorrelationSurface], pool, workers: int) -> CorrelationSurface:
    if running is None:
        best = np.full(N_CELLS, -1.0)
        best_at = np.full(N_CELLS, -1, dtype=np.int64)
    else:
        best = running.rho.astype(np.float64).reshape(-1)
        best_at = running.argmax_sample.astype(np.int64).reshape(-1)
    sum_h = ms.sum_h.reshape(-1).astype(np.float64)
    sum_h2 = ms.sum_h2.reshape(-1).astype(np.float64)
    sum_wh = tstats.sum_wh.reshape(N_CELLS, -1)
    _run(
        pool,
        _kernels.fold_max_correlation,
        _split(N_CELLS, workers),
        float(tstats.n), sum_wh, tstats.sum_w, tstats.sum_w2, sum_h, sum_h2, tstats.start, best, best_at,
    )
    return CorrelationSurface(best.reshape(N_SUBKEYS, N_BYTES), best_at.reshape(N_SUBKEYS, N_BYTES))


@contextlib.contextmanager
def _executor(workers: int):
    if workers <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield pool


def phase2_trace_stats(ts: TraceSet, st: SelectionTable, sample_chunk=None, workers: int = 1) -> TraceStats:
    """Trace sums over all traces for the samples in ``sample_chunk`` (default: all).

    ``sample_chunk`` is a ``range`` or ``(start, stop)`` pair.
    """
    lo, hi = _chunk_bounds(sample_chunk, ts.m)
    with _executor(workers) as pool:
        return _phase2(ts, st, lo, hi, pool, workers)


def correlation_at(j: int, k: int, b: int, ms: ModelStats, tstats: TraceStats, n: Optional[int] = None) -> float:
    if not tstats.start <= j < tstats.stop:
        raise IndexError(f"sample {j} outside chunk [{tstats.start}, {tstats.stop})")
    n = tstats.n if n is None else n
    c = j - tstats.start
    return float(
        _kernels.correlation(
            float(n),
            tstats.sum_wh[k, b, c],
            tstats.sum_w[c],
            tstats.sum_w2[c],
            float(ms.sum_h[k, b]),
            float(ms.sum_h2[k, b]),
        )
    )


def phase3_max_correlation(
    ms: ModelStats, tstats: TraceStats, running: Optional[CorrelationSurface] = None, workers: int = 1
) -> CorrelationSurface:
    """Fold the chunk in ``tstats`` into ``running`` (or start a new surface)."""
    with _executor(workers) as pool:
        return _phase3(ms, tstats, running, pool, workers)


def phase4_derive_round_key(cs: CorrelationSurface) -> AttackResult:
    by_byte = cs.rho.T  # (16, 256)
    # Stable sort on descending rho keeps lower subkeys first among ties.
    ranking = np.argsort(-by_byte, axis=1, kind="stable")
    ranking_rho = np.take_along_axis(by_byte, ranking, axis=1)
    round10 = bytes(int(k) for k in ranking[:, 0])
    return AttackResult(
        round10_key=round10,
        master_key=invert_key_schedule(round10, 10),
        ranking=ranking,
        ranking_rho=ranking_rho,
        margin=ranking_rho[:, 0] - ranking_rho[:, 1],
        surface=cs,
    )


def _resolve_mode(config: AttackConfig, n: int) -> str:
    if config.table_mode != AUTO:
        return config.table_mode
    return MATERIALIZED if n * N_CELLS <= config.table_budget else ON_THE_FLY


def attack(ts: TraceSet, cts: CiphertextSet, config: Optional[AttackConfig] = None, timer=None) -> AttackResult:
    """Recover the round-10 key and the master key from traces and ciphertexts.

    ``timer``, if given, must provide ``phase(name)`` returning a context
    manager; it is entered around each phase.
    """
    config = config or AttackConfig()
    _check_counts(ts.n, cts.n)
    if ts.n < 2:
        raise ValueError(f"need at least 2 traces for a correlation estimate, got {ts.n}")
    precision = Precision.parse(config.precision)
    ts = ts.astype(precision)

    def phase(name):
        return timer.phase(name) if timer is not None else contextlib.nullcontext()

    with phase("phase1"):
        st = build_selection_table(cts, _resolve_mode(config, ts.n))
        ms = phase1_model_stats(st)

    surface = None
    with _executor(config.workers) as pool:
        for lo in range(0, ts.m, config.chunk):
            hi = min(lo + config.chunk, ts.m)
            with phase("phase2"):
                tstats = _phase2(ts, st, lo, hi, pool, config.workers)
            with phase("phase3"):
                surface = _phase3(ms, tstats, surface, pool, config.workers)

    with phase("phase4"):
        if precision is Precision.SINGLE:
            surface = CorrelationSurface(surface.rho.astype(np.float32), surface.argmax_sample)
        result = phase4_derive_round_key(surface)

    if config.export_curves:
        result.curves = winner_curves(ts, st, ms, result.ranking[:, 0], config.chunk)
    return result


def winner_curves(
    ts: TraceSet, st: SelectionTable, ms: ModelStats, winners, chunk: int = DEFAULT_CHUNK
) -> npt.NDArray[np.float64]:
    """Signed rho(j) over every sample for subkey ``winners[b]`` at each byte ``b``.

    Uses the same accumulation order as the full attack, so each curve's
    |rho| peak equals the corresponding surface value exactly.
    """
    winners = np.asarray(winners, dtype=np.intp)
    curves = np.empty((N_BYTES, ts.m))
    sum_h = ms.sum_h[winners, np.arange(N_BYTES)].astype(np.float64)
    sum_h2 = ms.sum_h2[winners, np.arange(N_BYTES)].astype(np.float64)
    n = float(ts.n)
    for lo in range(0, ts.m, chunk):
        hi = min(lo + chunk, ts.m)
        sum_w, sum_w2, sum_wh = _accumulate(ts, st, lo, hi, None, 1, winners)
        for b in range(N_BYTES):
            for j in range(hi - lo):
                curves[b, lo + j] = _kernels.correlation(n, sum_wh[b, j], sum_w[j], sum_w2[j], sum_h[b], sum_h2[b])
    return curves


def pearson_oracle(w_column, h_column) -> float:
    """Two-pass Pearson coefficient: means first, then centred products."""
    w = np.asarray(w_column, dtype=np.float64)
    h = np.asarray(h_column, dtype=np.float64)
    if w.shape != h.shape or w.size < 2:
        raise ValueError("columns must have equal length >= 2")
    dw = w - w.mean()
    dh = h - h.mean()
    sww = float(np.dot(dw, dw))
    shh = float(np.dot(dh, dh))
    if sww <= 1e-12 * float(np.dot(w, w)) or shh <= 1e-12 * float(np.dot(h, h)):
        return 0.0
    return float(np.dot(dw, dh)) / math.sqrt(sww * shh)
