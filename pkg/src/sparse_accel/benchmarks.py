"""Benchmark networks: layer shapes, reference sparsity ratios and dense latencies.

Layer lists live in ``data/benchmarks.json``.  The CNN shapes were extracted
once from standard model definitions at batch 1 (AlexNet in its original
two-group form); BERT is BERT-base at sentence length 64, per-head attention
GEMMs included.  Identical layers are stored once with a repeat count.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .arch_config import Category, CoreDims
from .workload import GemmProblem, LayerShape, gen_sparsity, layer_to_gemm, random_problem

DEFAULT_MAC_LIMIT = 10 ** 6


@dataclass(frozen=True)
class BenchmarkPreset:
    name: str
    sparsity_b: float
    sparsity_a: float
    dense_latency: float  # reference cycle count at the default core
    layers: tuple

    @property
    def category(self) -> Category:
        """Which operands this model leaves sparse."""
        if self.sparsity_a > 0 and self.sparsity_b > 0:
            return Category.AB
        if self.sparsity_b > 0:
            return Category.B
        if self.sparsity_a > 0:
            return Category.A
        return Category.DENSE

    def densities(self, category: Category | str | None = None) -> tuple[float, float]:
        """(density_a, density_b) when the model is run as ``category``."""
        category = Category(category) if category is not None else self.category
        da = 1.0 - self.sparsity_a if category in (Category.A, Category.AB) else 1.0
        db = 1.0 - self.sparsity_b if category in (Category.B, Category.AB) else 1.0
        return da, db


def _layer(entry: dict) -> LayerShape:
    entry = dict(entry)
    if "h" in entry:
        entry["h_in"] = entry.pop("h")
    if "w" in entry:
        entry["w_in"] = entry.pop("w")
    return LayerShape(**entry)


@lru_cache(maxsize=None)
def _load() -> dict:
    text = resources.files("sparse_accel").joinpath("data/benchmarks.json").read_text()
    raw = json.loads(text)
    return {
        name: BenchmarkPreset(name, d["sparsity_b"], d["sparsity_a"], d["dense_latency"],
                              tuple(_layer(l) for l in d["layers"]))
        for name, d in raw.items()
    }


BENCHMARK_NAMES = ("alexnet", "googlenet", "resnet50", "inceptionv3", "mobilenetv2", "bert")


def benchmark(name: str) -> BenchmarkPreset:
    presets = _load()
    if name not in presets:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(presets)}")
    return presets[name]


def network_dense_cycles(preset: BenchmarkPreset, core: CoreDims | None = None) -> int:
    core = core or CoreDims()
    total = 0
    for layer in preset.layers:
        m, k, n = layer_to_gemm(layer)
        total += layer.gemm_count * (math.ceil(m / core.m0) * math.ceil(n / core.n0)
                                      * math.ceil(k / core.k0))
    return total


def truncate_gemm(m: int, k: int, n: int, limit: int = DEFAULT_MAC_LIMIT) -> tuple[int, int, int]:
    """Shrink m, then n, then k until ``m*k*n <= limit``."""
    if m * k * n > limit:
        m = max(1, limit // (k * n))
    if m * k * n > limit:
        n = max(1, limit // (m * k))
    if m * k * n > limit:
        k = max(1, limit // (m * n))
    return m, k, n


@dataclass(frozen=True)
class LayerWorkload:
    layer: LayerShape
    problem: GemmProblem
    full_dense_cycles: int  # of every GEMM instance of the untruncated layer together


def benchmark_workloads(preset: BenchmarkPreset, category: Category | str | None = None,
                        seed: int = 0, mac_limit: int = DEFAULT_MAC_LIMIT,
                        pattern: str = "bernoulli", core: CoreDims | None = None):
    """One truncated, sparsified GEMM per distinct layer, with the weight it stands for."""
    core = core or CoreDims()
    da, db = preset.densities(category)
    out = []
    for i, layer in enumerate(preset.layers):
        m, k, n = layer_to_gemm(layer)
        full = layer.gemm_count * (math.ceil(m / core.m0) * math.ceil(n / core.n0)
                                   * math.ceil(k / core.k0))
        tm, tk, tn = truncate_gemm(m, k, n, mac_limit)
        base = random_problem(tm, tk, tn, seed=seed * 1000 + i, name=layer.name)
        problem = gen_sparsity(base, da, db, seed=seed * 1000 + i, pattern=pattern, k0=core.k0)
        out.append(LayerWorkload(layer, problem, full))
    return out
