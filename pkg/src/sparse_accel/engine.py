"""Cycle-level simulation of one sparse GEMM core.

Execution model
---------------
Tiles are ``M0`` rows of A by one ``N0``-column strip of B, visited strip by
strip (N outer, M inner).  Inside a tile the core executes *steps*; in one step
every multiplier slot ``(lane, p)`` fires once, on a borrowed element or on a
zero.

* Dense and SparseA are lockstep over the tile: the whole tile advances through
  A's chunks with the A window (slots are ``(lane, row)``).
* SparseB is lockstep over compressed chunks of B produced offline.
* SparseAB runs, per PE column, the A-window greedy over that column's
  compressed B chunks, so columns drift apart.  They share one ABUF of
  ``(1+da1)(1+db1)`` original chunks whose oldest entry is pinned by the
  slowest column (back-pressure); the tile retires when the last column is
  done and the early finishers' idle column-cycles count as ``output_sync``.

Each cycle, buffers refill first (byte credit per SRAM, at most
``max(1, banks_a // M0)`` A chunk fills), then every consumer whose operands
are resident executes one step.  A consumer that cannot execute records one
stall cycle attributed to whatever stopped the fill it waits on.
"""
from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _kernels
from .arch_config import (
    ArchConfig,
    Category,
    CoreDims,
    MemoryParams,
    Mode,
    effective_memory,
    morph,
    validate,
)
from .errors import ConfigError, ConfigTensorMismatch, MissingCompressedB
from .preprocess import CompressedOperandStream, compress_b
from .workload import GemmProblem, block, shuffle

STALL_CAUSES = ("output_sync", "bank_conflict", "buf_full", "bandwidth")


@dataclass
class SimReport:
    cycles: int
    dense_cycles: int
    speedup: float
    stall_breakdown: dict = field(default_factory=dict)
    effectual_ops: int = 0
    total_mac_slots: int = 0
    c_checksum: int = 0
    functional_ok: bool = True
    config_label: str = ""
    problem: str = ""
    m: int = 0
    k: int = 0
    n: int = 0
    operand_bytes: int = 0

    def to_dict(self) -> dict[str, Any]:
        flat = dataclasses.asdict(self)
        stalls = flat.pop("stall_breakdown")
        for cause in STALL_CAUSES:
            flat[f"stall_{cause}"] = int(stalls.get(cause, 0))
        return flat

    @classmethod
    def from_dict(cls, data) -> "SimReport":
        data = dict(data)
        stalls = {c: int(data.pop(f"stall_{c}", 0)) for c in STALL_CAUSES}
        return cls(stall_breakdown=stalls, **data)


def dense_cycles(problem: GemmProblem, core: CoreDims) -> int:
    return (math.ceil(problem.m / core.m0) * math.ceil(problem.n / core.n0)
            * math.ceil(problem.k / core.k0))


def uses_compressed_b(config: ArchConfig) -> bool:
    return config.mode in (Mode.SPARSE_B, Mode.SPARSE_AB, Mode.GRIFFIN)


def uses_compressed_a(config: ArchConfig) -> bool:
    return config.mode in (Mode.SPARSE_A, Mode.SPARSE_AB, Mode.GRIFFIN)


def prepare_b(problem: GemmProblem, config: ArchConfig) -> CompressedOperandStream:
    """Block, shuffle (if configured) and compress B with the config's B window."""
    b = shuffle(block(problem, config.core, "B"), config.shuffle)
    return compress_b(b, config.b_window, config.core)


def run(problem: GemmProblem, config: ArchConfig, bandwidth="provisioned") -> SimReport:
    """simulate() with B preprocessed on the fly when the mode needs it."""
    validate(config)
    stream = prepare_b(problem, config) if uses_compressed_b(config) else None
    return simulate(problem, config, stream, bandwidth=bandwidth)


def simulate(problem: GemmProblem, config: ArchConfig,
             compressed_b: CompressedOperandStream | None = None, *,
             bandwidth: str | MemoryParams = "provisioned") -> SimReport:
    """Cycle-accurate run of ``problem`` on ``config``.

    ``bandwidth`` is ``"provisioned"`` (SRAM bandwidth and banks scaled by the
    design's peak chunk rates), ``"configured"`` (exactly ``config.memory``),
    ``"unbounded"``, or an explicit MemoryParams.
    """
    validate(config)
    mem = bandwidth if isinstance(bandwidth, MemoryParams) else effective_memory(config, bandwidth)
    if config.mode is Mode.GRIFFIN:
        config = morph(config, Category.AB)
    core = config.core
    if uses_compressed_b(config):
        if compressed_b is None:
            raise MissingCompressedB(f"{config.label} consumes a preprocessed B stream")
        _check_stream(compressed_b, problem, config)
    elif compressed_b is not None:
        raise ConfigTensorMismatch(f"{config.label} does not consume a compressed B stream")

    a_blk = shuffle(block(problem, core, "A"), config.shuffle).chunks
    b_blk = shuffle(block(problem, core, "B"), config.shuffle).chunks
    sim = _TileRunner(problem, config, mem, a_blk, b_blk)
    if config.mode is Mode.SPARSE_B:
        sim.run_sparse_b(compressed_b)
    elif config.mode is Mode.SPARSE_AB:
        sim.run_dual(compressed_b)
    else:
        sim.run_lockstep_a()

    c = sim.c
    ref = problem.a.astype(np.int64) @ problem.b.astype(np.int64)
    dense = dense_cycles(problem, core)
    cycles = sim.cycles
    return SimReport(
        cycles=cycles,
        dense_cycles=dense,
        speedup=dense / cycles if cycles else 0.0,
        stall_breakdown=sim.stall_dict(),
        effectual_ops=int(sim.effectual),
        total_mac_slots=cycles * core.macs,
        c_checksum=zlib.crc32(c.astype("<i4").tobytes()),
        functional_ok=bool(np.array_equal(c, ref)),
        config_label=config.label,
        problem=problem.name,
        m=problem.m, k=problem.k, n=problem.n,
        operand_bytes=problem.m * problem.k + problem.k * problem.n,
    )


def simulate_griffin(problem: GemmProblem, config: ArchConfig, category: Category | str,
                     bandwidth: str = "provisioned") -> SimReport:
    """Run Griffin morphed for ``category`` on the union hardware's memory system."""
    validate(config)
    if config.mode is not Mode.GRIFFIN:
        raise ConfigError("simulate_griffin needs a Griffin configuration")
    target = morph(config, category)
    mem = effective_memory(config, bandwidth)
    stream = prepare_b(problem, target) if uses_compressed_b(target) else None
    report = simulate(problem, target, stream, bandwidth=mem)
    report.config_label = f"{config.label}->{Category(category).value}"
    return report


def _check_stream(stream: CompressedOperandStream, problem: GemmProblem, config: ArchConfig):
    core = config.core
    mismatches = []
    if tuple(stream.window) != tuple(config.b_window):
        mismatches.append(f"window {tuple(stream.window)} vs {tuple(config.b_window)}")
    if (stream.k0, stream.n0) != (core.k0, core.n0):
        mismatches.append(f"stream core ({stream.k0},{stream.n0}) vs ({core.k0},{core.n0})")
    if (stream.k, stream.n) != (problem.k, problem.n):
        mismatches.append(f"stream shape {stream.k}x{stream.n} vs B {problem.k}x{problem.n}")
    if stream.rotated != config.shuffle:
        mismatches.append("shuffle setting differs from the stream's")
    if mismatches:
        raise ConfigTensorMismatch("; ".join(mismatches))


class _TileRunner:
    """Mutable per-simulation state: credits, stall counters, the result matrix."""

    def __init__(self, problem, config, mem, a_blk, b_blk):
        self.p = problem
        self.cfg = config
        self.core = config.core
        self.mem = mem
        self.a_blk = a_blk  # (T, K0, m)
        self.b_blk = b_blk  # (T, K0, n)
        self.T = a_blk.shape[0]
        self.c = np.zeros((problem.m, problem.n), np.int64)
        self.cycles = 0
        self.effectual = 0
        self.stalls = np.zeros(4, np.int64)
        self.credit = np.zeros(1 + self.core.n0, np.float64)
        self.fill_limit = max(1, mem.banks_a // self.core.m0)
        k0 = self.core.k0
        nnz = (a_blk != 0).sum(axis=1)  # (T, m)
        if uses_compressed_a(config):
            self.a_row_cost = np.minimum(k0, nnz + math.ceil(k0 / 8)).astype(np.float64)
        else:
            self.a_row_cost = np.full(nnz.shape, float(k0))

    def stall_dict(self):
        named = dict(zip(_kernels.STALL_NAMES, self.stalls.tolist()))
        return {cause: int(named[cause]) for cause in STALL_CAUSES}

    def _tiles(self):
        m0, n0 = self.core.m0, self.core.n0
        for c0 in range(0, self.p.n, n0):
            for r0 in range(0, self.p.m, m0):
                yield c0, min(n0, self.p.n - c0), r0, min(m0, self.p.m - r0)

    def _run(self, step_ptr, a_need, a_bottom, b_need, b_bottom, a_depth, b_depth,
             r0, rows, b_cost, b_bw):
        a_cost = self.a_row_cost[:, r0:r0 + rows].sum(axis=1)
        cycles = _kernels.run_tile(
            np.asarray(step_ptr, np.int64), np.asarray(a_need, np.int64),
            np.asarray(a_bottom, np.int64), np.asarray(b_need, np.int64),
            np.asarray(b_bottom, np.int64), a_depth, b_depth,
            a_cost, float(self.core.k0 * rows), float(self.mem.asram_bw), self.fill_limit,
            np.asarray(b_cost, np.float64), float(np.max(b_cost)), float(b_bw),
            self.credit, self.stalls)
        self.cycles += int(cycles)

    # -- Dense / SparseA ---------------------------------------------------------------

    def run_lockstep_a(self):
        d1, d2, d3 = self.cfg.a_window
        k0 = self.core.k0
        T = self.T
        src = np.empty((T, k0, self.core.m0), np.int64)
        bases = np.empty(T, np.int64)
        hor = np.empty(T, np.int64)
        for c0, cols, r0, rows in self._tiles():
            a_tile = self.a_blk[:, :, r0:r0 + rows]
            work = np.ascontiguousarray(a_tile != 0)
            n = _kernels.greedy_borrow(work, d1, d2, d3, src[:, :, :rows], bases, hor)
            self._run([0, n], hor[:n], bases[:n], hor[:n], bases[:n], 1 + d1, 1 + d1,
                      r0, rows, np.full(T, float(k0 * cols)), self.mem.bsram_bw)
            # route every executed A element to its row
            taken = src[:n, :, :rows]
            taken = taken[taken >= 0]
            t, rest = np.divmod(taken, k0 * rows)
            lane, r = np.divmod(rest, rows)
            routed = np.zeros((rows, T * k0), np.int64)
            np.add.at(routed, (r, t * k0 + lane), a_tile[t, lane, r].astype(np.int64))
            b_flat = self.b_blk[:, :, c0:c0 + cols].reshape(T * k0, cols)
            self.c[r0:r0 + rows, c0:c0 + cols] += routed @ b_flat.astype(np.int64)
            self.effectual += int(((routed != 0).astype(np.int64) @ (b_flat != 0)).sum())

    # -- SparseB ------------------------------------------------------------------------

    def run_sparse_b(self, stream: CompressedOperandStream):
        d1 = self.cfg.b_window.d1
        k0 = self.core.k0
        T = self.T
        for strip in stream.strips:
            c0, cols, J = strip.col0, strip.width, strip.n_chunks
            t, lane, col = strip.origins()
            live = strip.values != 0
            maxref = np.where(live, t, -1).reshape(J, -1).max(axis=1)
            routed = np.zeros((T * k0, cols), np.int64)
            np.add.at(routed, (t[live] * k0 + lane[live], col[live]),
                      strip.values[live].astype(np.int64))
            steps = np.arange(J)
            for r0 in range(0, self.p.m, self.core.m0):
                rows = min(self.core.m0, self.p.m - r0)
                self._run([0, J], maxref, strip.chunk_base, steps, steps, 1 + d1, 1,
                          r0, rows, np.full(J, float(k0 * cols)), self.mem.bsram_bw)
                a_flat = self.a_blk[:, :, r0:r0 + rows].reshape(T * k0, rows).T.astype(np.int64)
                self.c[r0:r0 + rows, c0:c0 + cols] += a_flat @ routed
                self.effectual += int(((a_flat != 0).astype(np.int64) @ (routed != 0)).sum())

    # -- SparseAB -----------------------------------------------------------------------

    def run_dual(self, stream: CompressedOperandStream):
        da1, da2, da3 = self.cfg.a_window
        db1 = self.cfg.b_window.d1
        depth = (1 + da1) * (1 + db1)
        k0, n0 = self.core.k0, self.core.n0
        b_bw = self.mem.bsram_bw / n0
        for strip in stream.strips:
            cols, J = strip.width, strip.n_chunks
            ot, ol, oc = strip.origins()
            live = strip.values != 0
            ot, ol = np.where(live, ot, 0), np.where(live, ol, 0)
            maxref = np.where(live, ot, -1).max(axis=1)  # (J, cols)
            b_cost = np.full(J, float(k0))
            src = np.empty((J, k0, self.core.m0), np.int64)
            bases = np.empty(J, np.int64)
            hor = np.empty(J, np.int64)
            for r0 in range(0, self.p.m, self.core.m0):
                rows = min(self.core.m0, self.p.m - r0)
                a_at = self.a_blk[ot, ol, r0:r0 + rows]  # (J, K0, cols, rows)
                work = (a_at != 0) & live[..., None]
                ptr, a_need, a_bottom, b_need, b_bottom = [0], [], [], [], []
                for c in range(cols):
                    w = np.ascontiguousarray(work[:, :, c, :])
                    n = _kernels.greedy_borrow(w, da1, da2, da3, src[:, :, :rows], bases, hor)
                    ptr.append(ptr[-1] + n)
                    need = [maxref[bases[s]:hor[s] + 1, c].max() for s in range(n)]
                    a_need.extend(need)
                    a_bottom.extend(strip.chunk_base[bases[:n]])
                    b_need.extend(hor[:n])
                    b_bottom.extend(bases[:n])
                    self._route_dual(strip, src[:n, :, :rows], c, r0, rows, ot, ol, oc)
                self._run(ptr, a_need, a_bottom, b_need, b_bottom, depth, 1 + da1,
                          r0, rows, b_cost, b_bw)

    def _route_dual(self, strip, src, c, r0, rows, ot, ol, oc):
        k0 = self.core.k0
        taken = src[src >= 0]
        j, rest = np.divmod(taken, k0 * rows)
        lane, r = np.divmod(rest, rows)
        a = self.a_blk[ot[j, lane, c], ol[j, lane, c], r0 + r].astype(np.int64)
        b = strip.values[j, lane, c].astype(np.int64)
        np.add.at(self.c, (r0 + r, strip.col0 + oc[j, lane, c]), a * b)
        self.effectual += int(np.count_nonzero(a * b))


# -- bandwidth accounting -----------------------------------------------------------------

@dataclass(frozen=True)
class BandwidthViolation:
    resource: str
    demand: float
    budget: float


def bandwidth_check(report: SimReport, config: ArchConfig,
                    memory: MemoryParams | None = None) -> list[BandwidthViolation]:
    """Resources whose demand ``speedup x dense bytes/cycle`` exceeds the budget."""
    core = config.core
    mem = memory or config.memory
    dense_rate = {
        "asram": core.m0 * core.k0,
        "bsram": core.k0 * core.n0,
        "dram": report.operand_bytes / report.dense_cycles if report.dense_cycles else 0.0,
    }
    budget = {"asram": mem.asram_bw, "bsram": mem.bsram_bw, "dram": mem.dram_bw}
    out = []
    for name, rate in dense_rate.items():
        demand = report.speedup * rate
        if demand > budget[name]:
            out.append(BandwidthViolation(name, demand, budget[name]))
    return out
