"""Trace and ciphertext datasets and their on-disk formats.

Binary trace file layout (all little-endian)::

    offset  size  field
    0       4     magic b"CPA1"
    4       4     u32 n (trace count)
    8       4     u32 m (samples per trace)
    12      1     u8 precision code (4 = float32, 8 = float64)
    13      1     u8 layout code (0 = trace-major, 1 = sample-major)
    14      2     reserved, zero
    16      ...   n * m IEEE-754 samples in the declared layout

CSV traces hold one trace per row. Ciphertext files hold one 32-character
hex string per line.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

MAGIC = b"CPA1"
HEADER = struct.Struct("<4sIIBB2s")
HEADER_SIZE = HEADER.size  # 16


class TraceFileError(Exception):
    """Base class for dataset loading failures."""


class UnreadableFileError(TraceFileError):
    pass


class MalformedHeaderError(TraceFileError):
    pass


class LengthMismatchError(TraceFileError):
    pass


class NonFiniteSampleError(TraceFileError):
    pass


class CiphertextFormatError(TraceFileError):
    pass


class BadHexError(CiphertextFormatError):
    pass


class WrongLineLengthError(CiphertextFormatError):
    pass


class Precision(enum.Enum):
    SINGLE = 4
    DOUBLE = 8

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is Precision.SINGLE else np.dtype("<f8")

    @classmethod
    def parse(cls, value) -> "Precision":
        if isinstance(value, cls):
            return value
        try:
            return {"single": cls.SINGLE, "double": cls.DOUBLE}[str(value).lower()]
        except KeyError:
            raise ValueError(f"precision must be 'single' or 'double', got {value!r}") from None


class Layout(enum.Enum):
    TRACE_MAJOR = 0
    SAMPLE_MAJOR = 1


@dataclass(frozen=True, eq=False)
class TraceSet:
    """``n`` traces of ``m`` samples, stored as one flat array.

    In trace-major layout sample ``(i, j)`` lives at ``i * m + j``; in
    sample-major layout at ``j * n + i``. Use :meth:`matrix` or :meth:`at`
    for layout-independent access.
    """

    n: int
    m: int
    samples: npt.NDArray[np.floating]
    layout: Layout = Layout.TRACE_MAJOR

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"trace set needs n >= 1 and m >= 1, got n={self.n}, m={self.m}")
        samples = np.asarray(self.samples)
        if samples.dtype not in (np.float32, np.float64):
            raise TypeError(f"samples must be float32 or float64, got {samples.dtype}")
        samples = samples.reshape(-1)
        if samples.size != self.n * self.m:
            raise LengthMismatchError(
                f"expected {self.n * self.m} samples for n={self.n}, m={self.m}, got {samples.size}"
            )
        if not np.isfinite(samples).all():
            raise NonFiniteSampleError("trace samples contain NaN or infinity")
        samples = np.ascontiguousarray(samples)
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @classmethod
    def from_matrix(cls, matrix, layout: Layout = Layout.TRACE_MAJOR, precision="double") -> "TraceSet":
        """Build from an ``(n, m)`` array (row ``i`` is trace ``i``)."""
        dtype = Precision.parse(precision).dtype
        mat = np.asarray(matrix, dtype=dtype)
        if mat.ndim != 2:
            raise ValueError(f"expected a 2-D (n, m) matrix, got shape {mat.shape}")
        n, m = mat.shape
        flat = mat.reshape(-1) if layout is Layout.TRACE_MAJOR else mat.T.reshape(-1)
        return cls(n, m, flat, layout)

    @property
    def precision(self) -> Precision:
        return Precision.SINGLE if self.samples.dtype == np.float32 else Precision.DOUBLE

    def matrix(self) -> npt.NDArray[np.floating]:
        """Read-only ``(n, m)`` view; a transposed view for sample-major storage."""
        if self.layout is Layout.TRACE_MAJOR:
            return self.samples.reshape(self.n, self.m)
        return self.samples.reshape(self.m, self.n).T

    def at(self, i: int, j: int) -> float:
        if not (0 <= i < self.n and 0 <= j < self.m):
            raise IndexError(f"sample ({i}, {j}) outside {self.n}x{self.m}")
        if self.layout is Layout.TRACE_MAJOR:
            return float(self.samples[i * self.m + j])
        return float(self.samples[j * self.n + i])

    def astype(self, precision) -> "TraceSet":
        dtype = Precision.parse(precision).dtype
        if dtype == self.samples.dtype:
            return self
        return TraceSet(self.n, self.m, self.samples.astype(dtype), self.layout)


@dataclass(frozen=True, eq=False)
class CiphertextSet:
    """``n`` ciphertexts; ``data`` is the flat n*16 byte buffer viewed as ``(n, 16)``."""

    data: npt.NDArray[np.uint8]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.uint8)
        if data.size % 16 or data.size == 0:
            raise ValueError(f"ciphertext buffer must hold a positive multiple of 16 bytes, got {data.size}")
        data = np.ascontiguousarray(data.reshape(-1, 16))
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> bytes:
        return self.data[i].tobytes()


def transpose_layout(ts: TraceSet) -> TraceSet:
    """Same logical matrix, opposite storage order."""
    if ts.layout is Layout.TRACE_MAJOR:
        flat = ts.samples.reshape(ts.n, ts.m).T.reshape(-1)
        return TraceSet(ts.n, ts.m, flat, Layout.SAMPLE_MAJOR)
    flat = ts.samples.reshape(ts.m, ts.n).T.reshape(-1)
    return TraceSet(ts.n, ts.m, flat, Layout.TRACE_MAJOR)


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc


def _parse_header(raw: bytes, path) -> tuple[int, int, Precision, Layout]:
    if len(raw) < HEADER_SIZE:
        raise MalformedHeaderError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
    magic, n, m, prec, layout, reserved = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if prec not in (4, 8):
        raise MalformedHeaderError(f"{path}: unknown precision code {prec}")
    if layout not in (0, 1):
        raise MalformedHeaderError(f"{path}: unknown layout code {layout}")
    if reserved != b"\0\0":
        raise MalformedHeaderError(f"{path}: reserved header bytes are not zero")
    if n < 1 or m < 1:
        raise MalformedHeaderError(f"{path}: header declares n={n}, m={m}")
    return n, m, Precision(prec), Layout(layout)


def read_header(path) -> dict:
    """Header metadata of a binary trace file, without reading the payload."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read(HEADER_SIZE)
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    n, m, precision, layout = _parse_header(raw, path)
    return {"n": n, "m": m, "precision": precision, "layout": layout}


def load_traces(path, format: str = "binary", precision="double") -> TraceSet:
    """Load a trace set. ``precision`` only applies to CSV input."""
    if format == "binary":
        raw = _read_bytes(path)
        n, m, prec, layout = _parse_header(raw, path)
        payload = len(raw) - HEADER_SIZE
        expected = n * m * prec.value
        if payload != expected:
            raise LengthMismatchError(
                f"{path}: header implies {expected} payload bytes, file has {payload}"
            )
        samples = np.frombuffer(raw, dtype=prec.dtype, offset=HEADER_SIZE).astype(prec.dtype.newbyteorder("="))
        return TraceSet(n, m, samples, layout)
    if format == "csv":
        text = _read_bytes(path).decode("ascii", errors="replace")
        rows = [line for line in text.splitlines() if line.strip()]
        if not rows:
            raise MalformedHeaderError(f"{path}: empty CSV")
        try:
            values = [[float(v) for v in row.split(",")] for row in rows]
        except ValueError as exc:
            raise MalformedHeaderError(f"{path}: unparsable CSV value ({exc})") from exc
        widths = {len(r) for r in values}
        if len(widths) != 1:
            raise LengthMismatchError(f"{path}: CSV rows have differing lengths {sorted(widths)}")
        return TraceSet.from_matrix(np.array(values), precision=precision)
    raise ValueError(f"unknown trace format {format!r}")


def save_traces(ts: TraceSet, path, format: str = "binary") -> None:
    if format == "binary":
        header = HEADER.pack(MAGIC, ts.n, ts.m, ts.precision.value, ts.layout.value, b"\0\0")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(ts.samples.astype(ts.precision.dtype, copy=False).tobytes())
    elif format == "csv":
        fmt = "%.9g" if ts.precision is Precision.SINGLE else "%.17g"
        np.savetxt(path, ts.matrix(), fmt=fmt, delimiter=",")
    else:
        raise ValueError(f"unknown trace format {format!r}")


def load_ciphertexts(path) -> CiphertextSet:
    text = _read_bytes(path).decode("ascii", errors="replace")
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if len(line) != 32:
            raise WrongLineLengthError(f"{path}:{lineno}: expected 32 hex chars, got {len(line)}")
        try:
            rows.append(bytes.fromhex(line))
        except ValueError as exc:
            raise BadHexError(f"{path}:{lineno}: invalid hex {line!r}") from exc
    if not rows:
        raise CiphertextFormatError(f"{path}: no ciphertexts")
    return CiphertextSet(np.frombuffer(b"".join(rows), dtype=np.uint8))


def save_ciphertexts(cts: CiphertextSet, path) -> None:
    with open(path, "w") as fh:
        fh.write("".join(row.tobytes().hex() + "\n" for row in cts.data))

