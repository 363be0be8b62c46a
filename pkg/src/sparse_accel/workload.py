"""GEMM problems, the blocked 3D operand layout, sparsity generators and shuffling.

Both operands are laid out as ``(chunk, lane, p)`` arrays: the reduction index
``k = chunk * K0 + lane`` and ``p`` is the row ``m`` of A or the column ``n``
of B.  Chunk is the time axis the core steps through, lane the position
inside a K0-wide dot product, and p the PE row/column the element feeds.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .arch_config import CoreDims
from .errors import K0NotDivisibleBy4, TensorFormatError

INT8_MIN, INT8_MAX = -128, 127


@dataclass(frozen=True, eq=False)
class GemmProblem:
    """``C (m x n) = A (m x k) @ B (k x n)`` over 8-bit integers."""

    m: int
    k: int
    n: int
    a: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.int8)
        b = np.ascontiguousarray(self.b, dtype=np.int8)
        if a.shape != (self.m, self.k) or b.shape != (self.k, self.n):
            raise ValueError(f"operand shapes {a.shape}, {b.shape} do not match "
                             f"m={self.m}, k={self.k}, n={self.n}")
        if min(self.m, self.k, self.n) <= 0:
            raise ValueError("m, k and n must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_arrays(cls, a, b, name: str = "") -> "GemmProblem":
        a = np.asarray(a)
        b = np.asarray(b)
        return cls(a.shape[0], a.shape[1], b.shape[1], a, b, name)

    @property
    def macs(self) -> int:
        return self.m * self.k * self.n

    @property
    def a_values(self) -> np.ndarray:
        return self.a.reshape(-1)

    @property
    def b_values(self) -> np.ndarray:
        return self.b.reshape(-1)

    def effectual_ops(self) -> int:
        """Number of (a != 0, b != 0) multiply pairs."""
        nz_a = (self.a != 0).astype(np.int64)
        nz_b = (self.b != 0).astype(np.int64)
        return int((nz_a @ nz_b).sum())


def random_problem(m: int, k: int, n: int, seed: int = 0, name: str = "") -> GemmProblem:
    """Fully dense problem with uniformly drawn non-zero int8 values."""
    rng = np.random.default_rng(seed)
    return GemmProblem(m, k, n, _nonzero_int8(rng, (m, k)), _nonzero_int8(rng, (k, n)), name)


def _nonzero_int8(rng: np.random.Generator, shape) -> np.ndarray:
    values = rng.integers(1, 128, size=shape, dtype=np.int16)
    signs = rng.integers(0, 2, size=shape, dtype=np.int16) * 2 - 1
    return (values * signs).astype(np.int8)


# -- layer shapes ------------------------------------------------------------------

class LayerKind(str, Enum):
    CONV = "conv"
    FC = "fc"
    ATTENTION = "attention"


@dataclass(frozen=True)
class LayerShape:
    kind: LayerKind
    c_in: int = 1
    r: int = 1
    s: int = 1
    c_out: int = 1
    h_in: int = 1
    w_in: int = 1
    in_features: int = 1
    out_features: int = 1
    batch: int = 1
    seq_len: int = 1
    hidden: int = 1
    groups: int = 1
    name: str = ""
    repeats: int = 1  # identical instances in the network

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        values = (self.c_in, self.r, self.s, self.c_out, self.h_in, self.w_in, self.in_features,
                  self.out_features, self.batch, self.seq_len, self.hidden, self.groups,
                  self.repeats)
        if min(values) <= 0:
            raise ValueError(f"layer {self.name or self.kind}: all dimensions must be positive")
        if self.c_in % self.groups or self.c_out % self.groups:
            raise ValueError(f"layer {self.name}: channels not divisible by groups={self.groups}")

    @property
    def gemm_count(self) -> int:
        """Independent GEMMs this layer lowers to (groups x repeats)."""
        return self.groups * self.repeats

    @classmethod
    def conv(cls, c_in, r, s, c_out, h, w, groups=1, name=""):
        return cls(LayerKind.CONV, c_in=c_in, r=r, s=s, c_out=c_out, h_in=h, w_in=w,
                   groups=groups, name=name)

    @classmethod
    def fc(cls, in_features, out_features, batch=1, name=""):
        return cls(LayerKind.FC, in_features=in_features, out_features=out_features,
                   batch=batch, name=name)

    @classmethod
    def attention(cls, seq_len, hidden, name=""):
        return cls(LayerKind.ATTENTION, seq_len=seq_len, hidden=hidden, name=name)


def layer_to_gemm(shape: LayerShape) -> tuple[int, int, int]:
    """(m, k, n) of one GEMM for the layer; grouped convs repeat it ``groups`` times.

    ``h_in``/``w_in`` are the spatial size the filter is swept over, i.e. the
    number of output pixels per channel.
    """
    kind = LayerKind(shape.kind)
    if kind is LayerKind.CONV:
        g = shape.groups
        return shape.h_in * shape.w_in, (shape.c_in // g) * shape.r * shape.s, shape.c_out // g
    if kind is LayerKind.FC:
        return shape.batch, shape.in_features, shape.out_features
    # query x key^T similarity scores
    return shape.seq_len, shape.hidden, shape.seq_len


# -- blocking ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockedTensor:
    """One operand in ``(chunk, lane, p)`` layout.

    ``mask`` is True where the element is non-zero (the hardware zero-mask
    convention: bit set means "carries work").
    """

    operand: str
    chunks: np.ndarray
    k: int
    p: int
    rotated: bool = False

    @property
    def mask(self) -> np.ndarray:
        return self.chunks != 0

    @property
    def zero_mask(self) -> np.ndarray:
        return self.mask

    @property
    def n_chunks(self) -> int:
        return self.chunks.shape[0]

    @property
    def k0(self) -> int:
        return self.chunks.shape[1]

    @property
    def pad(self) -> int:
        return (self.n_chunks * self.k0 - self.k) * self.p


def block(problem: GemmProblem, core: CoreDims, operand: str) -> BlockedTensor:
    k0 = core.k0
    t = math.ceil(problem.k / k0)
    if operand == "A":
        mat = problem.a.T  # k x m
    elif operand == "B":
        mat = problem.b
    else:
        raise ValueError(f"operand must be 'A' or 'B', got {operand!r}")
    padded = np.zeros((t * k0, mat.shape[1]), dtype=np.int8)
    padded[: problem.k] = mat
    return BlockedTensor(operand, padded.reshape(t, k0, mat.shape[1]), problem.k, mat.shape[1])


def deblock(tensor: BlockedTensor) -> np.ndarray:
    """Back to the original matrix (``m x k`` for A, ``k x n`` for B)."""
    chunks = shuffle(tensor, False).chunks if tensor.rotated else tensor.chunks
    flat = chunks.reshape(-1, tensor.p)[: tensor.k]
    return np.ascontiguousarray(flat.T if tensor.operand == "A" else flat)


def lane_rotation(n_chunks: int, k0: int) -> np.ndarray:
    """``src[t, lane]``: which original lane lands in ``lane`` at chunk ``t``.

    Inside every group of four lanes, chunk ``t`` is rotated by ``t mod 4``.
    """
    if k0 % 4:
        raise K0NotDivisibleBy4(f"K0={k0} is not a multiple of 4")
    lanes = np.arange(k0)
    shift = (np.arange(n_chunks) % 4)[:, None]
    return (lanes // 4) * 4 + (lanes % 4 - shift) % 4


def shuffle(tensor: BlockedTensor, on: bool) -> BlockedTensor:
    """Apply (``on=True``) or undo (``on=False`` on a rotated tensor) the lane rotation."""
    if on == tensor.rotated:
        return tensor
    src = lane_rotation(tensor.n_chunks, tensor.k0)
    t_idx = np.arange(tensor.n_chunks)[:, None]
    if on:
        chunks = tensor.chunks[t_idx, src]
    else:
        chunks = np.empty_like(tensor.chunks)
        chunks[t_idx, src] = tensor.chunks
    return BlockedTensor(tensor.operand, chunks, tensor.k, tensor.p, rotated=on)


# -- sparsity ----------------------------------------------------------------------------

class Pattern(str, Enum):
    BERNOULLI = "bernoulli"
    PER_GROUP_ONE_HOT = "per_group_one_hot"
    ROW_SKEWED = "row_skewed"


def gen_sparsity(problem: GemmProblem, density_a: float, density_b: float, seed: int = 0,
                 pattern: Pattern | str = Pattern.BERNOULLI, *, group: int | None = None,
                 k0: int = 16, hot_fraction: float = 0.25, skew: float = 8.0,
                 channels: int | None = None) -> GemmProblem:
    """Zero out elements of A and B to reach the target densities.

    bernoulli
        exactly ``round(density * size)`` survivors drawn uniformly.
    per_group_one_hot
        for every lane of the blocked layout, exactly one survivor per
        ``group`` consecutive chunks (``group`` defaults to ``round(1/density)``).
    row_skewed
        reduction rows are binned into ``channels`` classes by ``k mod
        channels``; a ``hot_fraction`` of the classes is ``skew`` times denser.
        With ``channels == K0`` the hot rows sit on fixed lanes, the worst case
        for lane load balance.
    """
    for d in (density_a, density_b):
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"density {d} outside [0, 1]")
    pattern = Pattern(pattern)
    rng = np.random.default_rng(seed)
    masks = []
    for mat, density in ((problem.a.T, density_a), (problem.b, density_b)):
        kk, p = mat.shape
        if density >= 1.0:
            masks.append(np.ones((kk, p), dtype=bool))
        elif pattern is Pattern.BERNOULLI:
            masks.append(_exact_count_mask(rng, (kk, p), density))
        elif pattern is Pattern.PER_GROUP_ONE_HOT:
            g = group if group is not None else max(1, round(1.0 / density)) if density > 0 else None
            masks.append(np.zeros((kk, p), bool) if g is None else _one_hot_mask(rng, kk, p, g, k0))
        else:
            masks.append(_row_skewed_mask(rng, kk, p, density, hot_fraction, skew,
                                          channels or k0))
    fill_a = _nonzero_int8(rng, problem.a.shape)
    fill_b = _nonzero_int8(rng, problem.b.shape)
    a = np.where(problem.a != 0, problem.a, fill_a) * masks[0].T
    b = np.where(problem.b != 0, problem.b, fill_b) * masks[1]
    return GemmProblem(problem.m, problem.k, problem.n, a.astype(np.int8), b.astype(np.int8),
                       problem.name)


def _exact_count_mask(rng, shape, density) -> np.ndarray:
    size = shape[0] * shape[1]
    keep = int(round(density * size))
    flat = np.zeros(size, dtype=bool)
    flat[rng.permutation(size)[:keep]] = True
    return flat.reshape(shape)


def _one_hot_mask(rng, kk, p, g, k0) -> np.ndarray:
    t = math.ceil(kk / k0)
    mask = np.zeros((t, k0, p), dtype=bool)
    valid = (np.arange(t)[:, None] * k0 + np.arange(k0)[None, :]) < kk  # (t, k0)
    for lane in range(k0):
        times = np.flatnonzero(valid[:, lane])
        for start in range(0, len(times), g):
            members = times[start:start + g]
            pick = rng.integers(0, len(members), size=p)
            mask[members[pick], lane, np.arange(p)] = True
    return mask.reshape(t * k0, p)[:kk]


def _row_skewed_mask(rng, kk, p, density, hot_fraction, skew, channels) -> np.ndarray:
    n_hot = max(1, int(round(hot_fraction * channels)))
    hot_channels = rng.permutation(channels)[:n_hot]
    hot_rows = np.isin(np.arange(kk) % channels, hot_channels)
    hf = hot_rows.mean()
    d_hot = min(1.0, density * skew / (hf * skew + (1.0 - hf)))
    d_cold = max(0.0, (density - hf * d_hot) / (1.0 - hf)) if hf < 1 else 0.0
    row_density = np.where(hot_rows, d_hot, d_cold)[:, None]
    return rng.random((kk, p)) < row_density


def operand_density(problem: GemmProblem) -> tuple[float, float]:
    return float(np.count_nonzero(problem.a)) / problem.a.size, \
        float(np.count_nonzero(problem.b)) / problem.b.size


# -- tensor files ------------------------------------------------------------------------

TENSOR_MAGIC = b"SGT1"
_DTYPES = {1: np.dtype("<i1"), 2: np.dtype("<i2"), 3: np.dtype("<i4"), 4: np.dtype("<f4")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


def write_tensor(path: str | Path, matrix: np.ndarray) -> None:
    """Flat little-endian tensor: 16-byte header (magic, rows, cols, dtype code) + body."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise TensorFormatError("only 2-D tensors are supported")
    dtype = matrix.dtype.newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise TensorFormatError(f"unsupported dtype {matrix.dtype}")
    header = TENSOR_MAGIC + struct.pack("<III", matrix.shape[0], matrix.shape[1], _DTYPE_CODES[dtype])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(matrix, dtype=dtype).tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"{path}: not an SGT1 tensor file")
    rows, cols, code = struct.unpack("<III", data[4:16])
    if code not in _DTYPES:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    dtype = _DTYPES[code]
    expected = rows * cols * dtype.itemsize
    if len(data) - 16 != expected:
        raise TensorFormatError(f"{path}: body has {len(data) - 16} bytes, expected {expected}")
    return np.frombuffer(data, dtype=dtype, offset=16).reshape(rows, cols).copy()
