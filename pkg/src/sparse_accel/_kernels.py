"""Compiled inner loops: the window-greedy borrowing pass and the buffer/fill timing loop.

Both are plain loops over small integer arrays, jitted with numba.  The pure
Python oracle re-implements the same rules independently.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# stall cause codes, also the index into the stall counter array
NO_BLOCK = 0
BUF_FULL = 1
BANK_CONFLICT = 2
BANDWIDTH = 3
OUTPUT_SYNC = 4
STALL_NAMES = ("buf_full", "bank_conflict", "bandwidth", "output_sync")


@njit(cache=True)
def greedy_borrow(work, d1, d2, d3, src, bases, horizons):
    """Window-greedy pass over a ``(T, K, P)`` occupancy array.

    At base ``b`` every slot ``(lane, p)``, visited lexicographically, takes
    the first unconsumed work element among ``(b, lane, p)`` and
    ``(b+i, lane+j, p+q)`` for ``1<=i<=d1, 0<=j<=d2, 0<=q<=d3`` (that order).
    The next base is the first chunk after ``b`` still holding work, capped at
    one past the horizon.  ``src[s, lane, p]`` receives the flat index of the
    element executed by the slot at step ``s`` (or -1).  Returns the step count.
    """
    T, K, P = work.shape
    rem = work.copy()
    b = 0
    s = 0
    while b < T:
        h = min(b + d1, T - 1)
        for lane in range(K):
            for p in range(P):
                src[s, lane, p] = -1
                if rem[b, lane, p]:
                    rem[b, lane, p] = False
                    src[s, lane, p] = (b * K + lane) * P + p
                    continue
                found = False
                for i in range(1, d1 + 1):
                    t = b + i
                    if t > h:
                        break
                    for j in range(d2 + 1):
                        ln = lane + j
                        if ln >= K:
                            break
                        for q in range(d3 + 1):
                            pp = p + q
                            if pp >= P:
                                break
                            if rem[t, ln, pp]:
                                rem[t, ln, pp] = False
                                src[s, lane, p] = (t * K + ln) * P + pp
                                found = True
                                break
                        if found:
                            break
                    if found:
                        break
        bases[s] = b
        horizons[s] = h
        s += 1
        nb = h + 1
        for t in range(b + 1, h + 1):
            hit = False
            for lane in range(K):
                for p in range(P):
                    if rem[t, lane, p]:
                        hit = True
                        break
                if hit:
                    break
            if hit:
                nb = t
                break
        b = nb
    return s


@njit(cache=True)
def run_tile(step_ptr, a_need, a_bottom, b_need, b_bottom, a_depth, b_depth,
             a_cost, a_cap, a_bw, a_fill_limit, b_cost, b_cap, b_bw,
             credit, stalls):
    """Cycle loop for one output tile; returns the tile's cycle count.

    Consumers (one in lockstep modes, one per PE column in the dual mode) own
    the step lists ``step_ptr[c]:step_ptr[c+1]``.  They share a single A fill
    stream whose buffer bottom is the lowest ``a_bottom`` of any unfinished
    consumer; each consumer has its own B fill stream.  Every cycle fills run
    first, then every consumer whose A and B needs are resident executes one
    step.  ``credit[0]`` is the A byte credit, ``credit[1 + c]`` consumer c's
    B credit; both persist across tiles.  ``stalls`` is indexed by cause code.
    """
    n_cons = step_ptr.shape[0] - 1
    n_a = a_cost.shape[0]
    n_b = b_cost.shape[0]
    pos = np.empty(n_cons, np.int64)
    fb = np.zeros(n_cons, np.int64)
    finish = np.zeros(n_cons, np.int64)
    active = 0
    for c in range(n_cons):
        pos[c] = step_ptr[c]
        if step_ptr[c + 1] > step_ptr[c]:
            active += 1
    fa = 0
    cycle = 0
    while active > 0:
        credit[0] = min(credit[0] + a_bw, a_bw + a_cap)
        bottom = n_a
        for c in range(n_cons):
            if pos[c] < step_ptr[c + 1]:
                credit[1 + c] = min(credit[1 + c] + b_bw, b_bw + b_cap)
                if a_bottom[pos[c]] < bottom:
                    bottom = a_bottom[pos[c]]
        block = NO_BLOCK
        fills = 0
        while fa < n_a:
            if fa >= bottom + a_depth:
                block = BUF_FULL
                break
            if fills >= a_fill_limit:
                block = BANK_CONFLICT
                break
            if credit[0] < a_cost[fa]:
                block = BANDWIDTH
                break
            credit[0] -= a_cost[fa]
            fa += 1
            fills += 1
        for c in range(n_cons):
            s = pos[c]
            if s >= step_ptr[c + 1]:
                continue
            while fb[c] < n_b and fb[c] < b_bottom[s] + b_depth and credit[1 + c] >= b_cost[fb[c]]:
                credit[1 + c] -= b_cost[fb[c]]
                fb[c] += 1
        for c in range(n_cons):
            s = pos[c]
            if s >= step_ptr[c + 1]:
                continue
            if fa > a_need[s] and fb[c] > b_need[s]:
                pos[c] = s + 1
                if s + 1 == step_ptr[c + 1]:
                    finish[c] = cycle + 1
                    active -= 1
            elif fa <= a_need[s]:
                stalls[block - 1] += 1
            else:
                stalls[BANDWIDTH - 1] += 1
        cycle += 1
    for c in range(n_cons):
        if step_ptr[c + 1] > step_ptr[c]:
            stalls[OUTPUT_SYNC - 1] += cycle - finish[c]
    return cycle
