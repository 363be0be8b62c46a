"""Brute-force reference: textbook GEMM and an element-by-element re-implementation of the scheduler.

Nothing here imports the engine, the preprocessor or the compiled kernels;
only configuration types are shared.  Elements are tracked as Python tuples in
sets and dicts so every rule is spelled out literally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from operator import mul

import numpy as np

from .arch_config import ArchConfig, Category, MemoryParams, Mode, effective_memory, morph, validate
from .errors import TooLargeForOracle

ORACLE_LIMIT = 64


@dataclass
class OracleResult:
    c_matrix: np.ndarray
    naive_cycles: int
    effectual_ops: int
    stall_breakdown: dict = field(default_factory=dict)


def reference_gemm(problem) -> np.ndarray:
    """Triple-loop integer GEMM."""
    a = problem.a.astype(int).tolist()
    cols = problem.b.astype(int).T.tolist()
    return np.array([[sum(map(mul, row, col)) for col in cols] for row in a], dtype=np.int64)


def _position(kk: int, k0: int, rotated: bool) -> tuple[int, int]:
    """(chunk, lane) where reduction index ``kk`` sits, after the optional rotation."""
    t, lane = divmod(kk, k0)
    if rotated:
        lane = 4 * (lane // 4) + (lane % 4 + t) % 4
    return t, lane


def _offsets(window) -> list[tuple[int, int, int]]:
    d1, d2, d3 = window
    return [(0, 0, 0)] + [(i, j, q) for i in range(1, d1 + 1)
                          for j in range(d2 + 1) for q in range(d3 + 1)]


def _greedy(occupied: set, T: int, K: int, P: int, window) -> list:
    """Steps ``(base, horizon, picks)``; ``picks[(lane, p)]`` is the element that slot executes."""
    order = _offsets(window)
    d1 = window[0]
    remaining = set(occupied)
    steps = []
    b = 0
    while b < T:
        h = min(b + d1, T - 1)
        picks = {}
        for lane in range(K):
            for p in range(P):
                for i, j, q in order:
                    cand = (b + i, lane + j, p + q)
                    if cand[0] <= h and cand[1] < K and cand[2] < P and cand in remaining:
                        remaining.remove(cand)
                        picks[(lane, p)] = cand
                        break
        steps.append((b, h, picks))
        pending = [e[0] for e in remaining if b < e[0] <= h]
        b = min(pending) if pending else h + 1
    return steps


class _Memory:
    """Byte credits that survive from tile to tile."""

    def __init__(self, mem: MemoryParams, m0: int, n0: int):
        self.mem = mem
        self.fill_limit = max(1, mem.banks_a // m0)
        self.a_credit = 0.0
        self.b_credit = [0.0] * max(n0, 1)
        self.stalls = {"output_sync": 0, "bank_conflict": 0, "buf_full": 0, "bandwidth": 0}


def _clock_tile(consumers, a_cost, a_depth, a_raw, b_cost, b_depth, b_raw, b_bw, memory) -> int:
    """Cycle-by-cycle execution of one tile.

    ``consumers`` is a list of step lists; each step is a dict with
    ``a_need``/``a_bottom`` (original A chunks) and ``b_need``/``b_bottom``
    (that consumer's B chunk stream).
    """
    a_bw = memory.mem.asram_bw
    loaded_a = 0  # chunks [0, loaded_a) of A have arrived
    loaded_b = [0] * len(consumers)
    progress = [0] * len(consumers)
    finished_at = [None] * len(consumers)
    cycle = 0
    while any(progress[c] < len(consumers[c]) for c in range(len(consumers))):
        live = [c for c in range(len(consumers)) if progress[c] < len(consumers[c])]
        memory.a_credit = min(memory.a_credit + a_bw, a_bw + a_raw)
        for c in live:
            memory.b_credit[c] = min(memory.b_credit[c] + b_bw, b_bw + b_raw)
        # A refill
        oldest = min(consumers[c][progress[c]]["a_bottom"] for c in live)
        reason = None
        filled = 0
        while loaded_a < len(a_cost):
            if loaded_a - oldest >= a_depth:
                reason = "buf_full"
            elif filled == memory.fill_limit:
                reason = "bank_conflict"
            elif memory.a_credit < a_cost[loaded_a]:
                reason = "bandwidth"
            if reason:
                break
            memory.a_credit -= a_cost[loaded_a]
            loaded_a += 1
            filled += 1
        # B refill, per consumer
        for c in live:
            step = consumers[c][progress[c]]
            while (loaded_b[c] < len(b_cost) and loaded_b[c] - step["b_bottom"] < b_depth
                   and memory.b_credit[c] >= b_cost[loaded_b[c]]):
                memory.b_credit[c] -= b_cost[loaded_b[c]]
                loaded_b[c] += 1
        # execute
        for c in live:
            step = consumers[c][progress[c]]
            a_ready = step["a_need"] < loaded_a
            b_ready = step["b_need"] < loaded_b[c]
            if a_ready and b_ready:
                progress[c] += 1
                if progress[c] == len(consumers[c]):
                    finished_at[c] = cycle + 1
            else:
                memory.stalls[reason if not a_ready else "bandwidth"] += 1
        cycle += 1
    for c in range(len(consumers)):
        memory.stalls["output_sync"] += cycle - finished_at[c]
    return cycle


def naive_schedule(problem, config: ArchConfig, compressed_b=None,
                   bandwidth: str | MemoryParams = "provisioned") -> OracleResult:
    """Independent cycle count and result for a small problem.

    ``compressed_b`` is accepted for interface symmetry; the oracle always
    re-derives B's packing itself.
    """
    if max(problem.m, problem.k, problem.n) > ORACLE_LIMIT:
        raise TooLargeForOracle(f"oracle handles m, k, n <= {ORACLE_LIMIT}")
    validate(config)
    mem = bandwidth if isinstance(bandwidth, MemoryParams) else effective_memory(config, bandwidth)
    if config.mode is Mode.GRIFFIN:
        config = morph(config, Category.AB)
    k0, n0, m0 = config.core.k0, config.core.n0, config.core.m0
    rot = config.shuffle
    T = math.ceil(problem.k / k0)

    # operand maps keyed by blocked position; A by (t, lane, row), B by (t, lane, col)
    A, B = {}, {}
    for row in range(problem.m):
        for kk in range(problem.k):
            if problem.a[row, kk]:
                A[_position(kk, k0, rot) + (row,)] = int(problem.a[row, kk])
    for kk in range(problem.k):
        for col in range(problem.n):
            if problem.b[kk, col]:
                B[_position(kk, k0, rot) + (col,)] = int(problem.b[kk, col])

    compress_a = config.mode in (Mode.SPARSE_A, Mode.SPARSE_AB)
    memory = _Memory(mem, m0, n0)
    c_out = np.zeros((problem.m, problem.n), np.int64)
    effectual = 0
    cycles = 0

    def a_chunk_cost(t, r0, rows):
        total = 0
        for r in range(r0, r0 + rows):
            if compress_a:
                nnz = sum(1 for lane in range(k0) if (t, lane, r) in A)
                total += min(k0, nnz + math.ceil(k0 / 8))
            else:
                total += k0
        return total

    for c0 in range(0, problem.n, n0):
        cols = min(n0, problem.n - c0)
        packed = None
        if config.mode in (Mode.SPARSE_B, Mode.SPARSE_AB):
            occupied = {(t, lane, col - c0) for (t, lane, col) in B if c0 <= col < c0 + cols}
            packed = _greedy(occupied, T, k0, cols, tuple(config.b_window))
        for r0 in range(0, problem.m, m0):
            rows = min(m0, problem.m - r0)
            a_cost = [a_chunk_cost(t, r0, rows) for t in range(T)]
            if config.mode in (Mode.DENSE, Mode.SPARSE_A):
                d1 = config.a_window.d1
                occ = {(t, lane, r - r0) for (t, lane, r) in A if r0 <= r < r0 + rows}
                steps = _greedy(occ, T, k0, rows, tuple(config.a_window))
                plan = [{"a_need": h, "a_bottom": b, "b_need": h, "b_bottom": b}
                        for b, h, _ in steps]
                cycles += _clock_tile([plan], a_cost, 1 + d1, k0 * rows, [k0 * cols] * T, 1 + d1,
                                      k0 * cols, mem.bsram_bw, memory)
                for _, _, picks in steps:
                    for (t, lane, r) in picks.values():
                        a = A[(t, lane, r0 + r)]
                        for col in range(c0, c0 + cols):
                            bv = B.get((t, lane, col), 0)
                            c_out[r0 + r, col] += a * bv
                            effectual += bv != 0
            elif config.mode is Mode.SPARSE_B:
                d1 = config.b_window.d1
                plan = []
                for j, (b, h, picks) in enumerate(packed):
                    refs = [src[0] for src in picks.values()]
                    plan.append({"a_need": max(refs, default=-1), "a_bottom": b,
                                 "b_need": j, "b_bottom": j})
                J = len(packed)
                cycles += _clock_tile([plan], a_cost, 1 + d1, k0 * rows, [k0 * cols] * J, 1,
                                      k0 * cols, mem.bsram_bw, memory)
                for _, _, picks in packed:
                    for (t, lane, cl) in picks.values():
                        bv = B[(t, lane, c0 + cl)]
                        for r in range(r0, r0 + rows):
                            a = A.get((t, lane, r), 0)
                            c_out[r, c0 + cl] += a * bv
                            effectual += a != 0
            else:
                da = tuple(config.a_window)
                db1 = config.b_window.d1
                J = len(packed)
                consumers, routes = [], []
                for col in range(cols):
                    # this column's compressed view: (j, lane) -> original (t, lane, col)
                    view = {(j, lane): packed[j][2][(lane, col)]
                            for j in range(J) for lane in range(k0) if (lane, col) in packed[j][2]}
                    occ = {(j, lane, r) for (j, lane), (t, ol, _) in view.items()
                           for r in range(rows) if (t, ol, r0 + r) in A}
                    steps = _greedy(occ, J, k0, rows, da)
                    plan = []
                    for b, h, picks in steps:
                        refs = [view[(j, lane)][0] for (j, lane) in view if b <= j <= h]
                        plan.append({"a_need": max(refs, default=-1),
                                     "a_bottom": packed[b][0], "b_need": h, "b_bottom": b})
                    consumers.append(plan)
                    routes.append((col, view, steps))
                cycles += _clock_tile(consumers, a_cost, (1 + da[0]) * (1 + db1), k0 * rows,
                                      [k0] * J, 1 + da[0], k0, mem.bsram_bw / n0, memory)
                for col, view, steps in routes:
                    for _, _, picks in steps:
                        for (j, lane, r) in picks.values():
                            t, ol, src_col = view[(j, lane)]
                            a = A[(t, ol, r0 + r)]
                            bv = B[(t, ol, c0 + src_col)]
                            c_out[r0 + r, c0 + src_col] += a * bv
                            effectual += 1
    return OracleResult(c_out, cycles, int(effectual), dict(memory.stalls))
