"""Shared generators for random small instances and configurations."""
from __future__ import annotations

import random

import pytest

from sparse_accel.arch_config import ArchConfig, Mode, compute_overheads, preset, validate
from sparse_accel.workload import gen_sparsity, random_problem

DENSITIES = (1.0, 0.7, 0.5, 0.2, 0.1)
MODES = (Mode.DENSE, Mode.SPARSE_A, Mode.SPARSE_B, Mode.SPARSE_AB, Mode.GRIFFIN)


def _window(rng: random.Random, d1_max: int):
    d1 = rng.randint(0, d1_max)
    if d1 == 0:
        return (0, 0, 0)
    return (d1, rng.randint(0, 2), rng.randint(0, 2))


def random_config(rng: random.Random, mode: Mode | None = None, max_amux: int = 8) -> ArchConfig:
    """A valid configuration with AMUX fan-in <= ``max_amux`` (Griffin uses its preset)."""
    mode = mode or rng.choice(MODES)
    shuffle = rng.random() < 0.5
    if mode is Mode.GRIFFIN:
        return preset("griffin")
    while True:
        if mode is Mode.DENSE:
            cfg = ArchConfig(shuffle=shuffle)
        elif mode is Mode.SPARSE_A:
            cfg = ArchConfig(mode, a_window=_window(rng, 7), shuffle=shuffle)
        elif mode is Mode.SPARSE_B:
            cfg = ArchConfig(mode, b_window=_window(rng, 7), shuffle=shuffle)
        else:
            cfg = ArchConfig(mode, a_window=_window(rng, 3), b_window=_window(rng, 3), shuffle=shuffle)
        validate(cfg)
        if compute_overheads(cfg).amux_fanin <= max_amux:
            return cfg


def random_instance(rng: random.Random, seed: int, limit: int = 64):
    m, k, n = (rng.randint(1, limit) for _ in range(3))
    problem = random_problem(m, k, n, seed=seed, name=f"rand{seed}")
    return gen_sparsity(problem, rng.choice(DENSITIES), rng.choice(DENSITIES), seed=seed)


@pytest.fixture
def rng():
    return random.Random(1234)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
