"""Offline compression of operand B into borrowed chunk streams, plus a verifying decoder.

B is compressed per strip of N0 columns.  Each compressed chunk carries its
values, one metadata record per element (time, lane and column offset of the
element's origin) and, as a sideband, the original chunk index it was packed
at (``chunk_base``).  Origins are ``(chunk_base + t_off, lane + lane_off,
col + col_off)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import greedy_borrow
from .arch_config import BorrowWindow, CoreDims
from .errors import CorruptMetadata, TruncatedStream
from .workload import BlockedTensor

STREAM_MAGIC = b"SGC1"


@dataclass(eq=False)
class Strip:
    """Compressed chunks of one strip of at most N0 columns."""

    col0: int
    chunk_base: np.ndarray  # (J,)
    values: np.ndarray  # (J, K0, width) int8
    offsets: np.ndarray  # (J, K0, width, 3) uint8: t, lane, col

    @property
    def n_chunks(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def origins(self):
        """``(t, lane, col_local)`` arrays of every slot's origin (garbage where value is 0)."""
        j, lane, col = np.indices(self.values.shape)
        t = self.chunk_base[j] + self.offsets[..., 0]
        return t, lane + self.offsets[..., 1], col + self.offsets[..., 2]


@dataclass(eq=False)
class CompressedOperandStream:
    window: BorrowWindow
    k: int
    n: int
    k0: int
    n0: int
    strips: list = field(default_factory=list)
    rotated: bool = False

    @property
    def n_chunks_original(self) -> int:
        return -(-self.k // self.k0)

    @property
    def chunk_count_per_column(self) -> np.ndarray:
        return np.concatenate([np.full(s.width, s.n_chunks, dtype=np.int64) for s in self.strips])

    @property
    def metadata_bits(self) -> int:
        return sum(self.window.field_widths())

    def nnz(self) -> int:
        return int(sum(np.count_nonzero(s.values) for s in self.strips))


def compress_strip(chunks: np.ndarray, window: BorrowWindow, col0: int = 0) -> Strip:
    """Greedy-compress one ``(T, K0, width)`` block of B."""
    T, k0, width = chunks.shape
    src = np.empty((max(T, 1), k0, width), np.int64)
    bases = np.empty(max(T, 1), np.int64)
    hor = np.empty(max(T, 1), np.int64)
    n_steps = greedy_borrow(chunks != 0, window.d1, window.d2, window.d3, src, bases, hor)
    src = src[:n_steps]
    bases = bases[:n_steps].copy()
    flat = chunks.reshape(-1)
    taken = src >= 0
    values = np.where(taken, flat[np.where(taken, src, 0)], 0).astype(np.int8)
    st, rest = np.divmod(np.where(taken, src, 0), k0 * width)
    sl, sc = np.divmod(rest, width)
    _, lane, col = np.indices(src.shape)
    offsets = np.zeros(src.shape + (3,), np.uint8)
    offsets[..., 0] = np.where(taken, st - bases[:, None, None], 0)
    offsets[..., 1] = np.where(taken, sl - lane, 0)
    offsets[..., 2] = np.where(taken, sc - col, 0)
    return Strip(col0, bases, values, offsets)


def compress_b(b: BlockedTensor, window, core: CoreDims | None = None) -> CompressedOperandStream:
    """Compress every N0-column strip of a blocked B with the borrowing window."""
    window = BorrowWindow.of(window).check()
    core = core or CoreDims(k0=b.k0)
    if b.operand != "B":
        raise ValueError("compress_b expects the blocked B operand")
    if core.k0 != b.k0:
        raise ValueError(f"core K0={core.k0} does not match blocked K0={b.k0}")
    strips = [compress_strip(b.chunks[:, :, c0:c0 + core.n0], window, c0)
              for c0 in range(0, b.p, core.n0)]
    return CompressedOperandStream(window, b.k, b.p, b.k0, core.n0, strips, b.rotated)


def decode_b(stream: CompressedOperandStream, window=None) -> BlockedTensor:
    """Rebuild the blocked B; raises CorruptMetadata on any inconsistency."""
    window = BorrowWindow.of(window if window is not None else stream.window)
    T = stream.n_chunks_original
    out = np.zeros((T, stream.k0, stream.n), np.int8)
    seen = np.zeros(out.shape, bool)
    bounds = np.array([window.d1, window.d2, window.d3])
    for strip in stream.strips:
        live = strip.values != 0
        offs = strip.offsets.astype(np.int64)
        if np.any(offs[live] > bounds):
            raise CorruptMetadata(f"strip at column {strip.col0}: offset exceeds window {tuple(window)}")
        if strip.n_chunks and (np.any(np.diff(strip.chunk_base) <= 0) or strip.chunk_base[0] < 0):
            raise CorruptMetadata(f"strip at column {strip.col0}: chunk bases not increasing")
        t, lane, col = strip.origins()
        t, lane, col = t[live], lane[live], col[live]
        col = col + strip.col0
        if np.any(t >= T) or np.any(lane >= stream.k0) or np.any(col >= strip.col0 + strip.width):
            raise CorruptMetadata(f"strip at column {strip.col0}: origin outside the tensor")
        flat = (t * stream.k0 + lane) * stream.n + col
        if np.unique(flat).size != flat.size or np.any(seen.reshape(-1)[flat]):
            raise CorruptMetadata(f"strip at column {strip.col0}: element consumed twice")
        seen.reshape(-1)[flat] = True
        out.reshape(-1)[flat] = strip.values[live]
    return BlockedTensor("B", out, stream.k, stream.n, rotated=stream.rotated)


# -- bit-exact serialization --------------------------------------------------------

_HEADER = struct.Struct("<4sIIIIIIII")  # magic, d1, d2, d3, n, k, k0, n0, flags


def serialize(stream: CompressedOperandStream) -> bytes:
    w = stream.window
    parts = [_HEADER.pack(STREAM_MAGIC, w.d1, w.d2, w.d3, stream.n, stream.k, stream.k0,
                          stream.n0, int(stream.rotated))]
    widths = w.field_widths()
    for strip in stream.strips:
        parts.append(struct.pack("<I", strip.n_chunks))
        parts.append(strip.chunk_base.astype("<u4").tobytes())
        parts.append(strip.values.astype(np.int8).tobytes())
        parts.append(_pack_offsets(strip.offsets, widths))
    return b"".join(parts)


def deserialize(data: bytes) -> CompressedOperandStream:
    view = memoryview(data)
    if len(view) < _HEADER.size:
        raise TruncatedStream("stream shorter than its header")
    magic, d1, d2, d3, n, k, k0, n0, flags = _HEADER.unpack_from(view, 0)
    if magic != STREAM_MAGIC:
        raise TruncatedStream(f"bad magic {magic!r}")
    window = BorrowWindow(d1, d2, d3)
    widths = window.field_widths()
    pos = _HEADER.size
    strips = []
    for c0 in range(0, n, n0):
        width = min(n0, n - c0)
        J = struct.unpack_from("<I", _take(view, pos, 4))[0]
        pos += 4
        bases = np.frombuffer(_take(view, pos, 4 * J), "<u4").astype(np.int64)
        pos += 4 * J
        n_el = J * k0 * width
        values = np.frombuffer(_take(view, pos, n_el), np.int8).reshape(J, k0, width).copy()
        pos += n_el
        n_bytes = -(-n_el * sum(widths) // 8)
        offsets = _unpack_offsets(_take(view, pos, n_bytes), widths, (J, k0, width))
        pos += n_bytes
        strips.append(Strip(c0, bases, values, offsets))
    if pos != len(view):
        raise TruncatedStream(f"{len(view) - pos} trailing bytes after the last strip")
    return CompressedOperandStream(window, k, n, k0, n0, strips, bool(flags & 1))


def _take(view, pos, size):
    if pos + size > len(view):
        raise TruncatedStream(f"need {size} bytes at offset {pos}, only {len(view) - pos} left")
    return view[pos:pos + size]


def _pack_offsets(offsets: np.ndarray, widths) -> bytes:
    cols = []
    for f, w in enumerate(widths):
        if w:
            shifts = np.arange(w - 1, -1, -1, dtype=np.uint8)
            cols.append((offsets[..., f].reshape(-1, 1) >> shifts) & 1)
    if not cols:
        return b""
    bits = np.concatenate(cols, axis=1).astype(np.uint8)
    return np.packbits(bits.reshape(-1)).tobytes()


def _unpack_offsets(buf, widths, shape) -> np.ndarray:
    n_el = int(np.prod(shape))
    out = np.zeros((n_el, 3), np.uint8)
    total = sum(widths)
    if total:
        bits = np.unpackbits(np.frombuffer(buf, np.uint8))[: n_el * total].reshape(n_el, total)
        col = 0
        for f, w in enumerate(widths):
            if w:
                weights = (1 << np.arange(w - 1, -1, -1)).astype(np.int64)
                out[:, f] = bits[:, col:col + w] @ weights
                col += w
    return out.reshape(shape + (3,))


def write_stream(path: str | Path, stream: CompressedOperandStream) -> None:
    Path(path).write_bytes(serialize(stream))


def read_stream(path: str | Path) -> CompressedOperandStream:
    return deserialize(Path(path).read_bytes())
