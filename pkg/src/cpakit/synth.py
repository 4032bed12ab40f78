"""Synthetic power traces with Hamming-distance leakage of the last AES round.

Each trace gets its own random stream, a Philox-4x64 counter-based generator
keyed by ``(seed, trace index)``. The stream first yields the 16 plaintext
bytes, then ``m`` standard normal noise values (NumPy's ziggurat sampler). A
dataset is therefore identical no matter how traces are split across workers.

Trace ``i`` at sample ``j`` is::

    offset + scale * HD_b(i) + sigma * noise[i, j]   if j == leak_positions[b]
    offset + sigma * noise[i, j]                     otherwise

where ``HD_b(i)`` is the Hamming distance between the round-9 state byte and
the ciphertext byte at register position ``shiftrows_source_index(b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

from .aes_core import HAMMING_WEIGHT, SHIFTROWS_SOURCE, encrypt_batch_with_states
from .trace_model import CiphertextSet, Precision, TraceSet

_SEED_MASK = (1 << 64) - 1


def default_leak_positions(m: int) -> tuple[int, ...]:
    """Evenly spaced leak samples ``b * (m // 16)``; 0, 8, ..., 120 for m = 128."""
    if m < 16:
        raise ValueError(f"need m >= 16 for default leak positions, got {m}")
    step = m // 16
    return tuple(b * step for b in range(16))


@dataclass(frozen=True)
class SynthConfig:
    key: bytes
    n: int = 1000
    m: int = 128
    leak_positions: Optional[Sequence[int]] = None
    signal_scale: float = 1.0
    noise_sigma: float = 2.0
    offset: float = 0.0
    seed: int = 0
    precision: str = "double"

    def __post_init__(self):
        key = bytes(self.key)
        if len(key) != 16:
            raise ValueError(f"key must be 16 bytes, got {len(key)}")
        object.__setattr__(self, "key", key)
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        positions = default_leak_positions(self.m) if self.leak_positions is None else tuple(int(p) for p in self.leak_positions)
        if len(positions) != 16:
            raise ValueError(f"need 16 leak positions, got {len(positions)}")
        if len(set(positions)) != 16 or min(positions) < 0 or max(positions) >= self.m:
            raise ValueError(f"leak positions must be 16 distinct samples below m={self.m}")
        object.__setattr__(self, "leak_positions", positions)
        if not self.signal_scale > 0:
            raise ValueError(f"signal scale must be > 0, got {self.signal_scale}")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        if not np.isfinite(self.offset):
            raise ValueError("offset must be finite")
        Precision.parse(self.precision)


def trace_stream(seed: int, index: int) -> np.random.Generator:
    """The random stream of trace ``index``: Philox keyed by (seed, index)."""
    key = np.array([seed & _SEED_MASK, index & _SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_noise(seed: int, index: int, count: int) -> npt.NDArray[np.float64]:
    """``count`` i.i.d. N(0, 1) draws from a fresh stream (no plaintext drawn first)."""
    return trace_stream(seed, index).standard_normal(count)


def _draw(cfg: SynthConfig, index: int) -> tuple[npt.NDArray[np.uint8], npt.NDArray[np.float64]]:
    rng = trace_stream(cfg.seed, index)
    plaintext = rng.integers(0, 256, size=16, dtype=np.uint8)
    return plaintext, rng.standard_normal(cfg.m)


def generate_dataset(cfg: SynthConfig) -> tuple[TraceSet, CiphertextSet]:
    plaintexts = np.empty((cfg.n, 16), dtype=np.uint8)
    traces = np.empty((cfg.n, cfg.m))
    for i in range(cfg.n):
        plaintexts[i], traces[i] = _draw(cfg, i)
    ciphertexts, states = encrypt_batch_with_states(plaintexts, cfg.key)
    traces *= cfg.noise_sigma
    traces += cfg.offset
    hd = HAMMING_WEIGHT[states[:, SHIFTROWS_SOURCE] ^ ciphertexts[:, SHIFTROWS_SOURCE]]
    for b, j in enumerate(cfg.leak_positions):
        traces[:, j] += cfg.signal_scale * hd[:, b]
    return TraceSet.from_matrix(traces, precision=cfg.precision), CiphertextSet(ciphertexts)
