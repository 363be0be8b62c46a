"""Design-space sweeps: enumerate configurations, evaluate them on workloads, emit rows.

A workload spec is one of

* a benchmark name (``alexnet``, ``resnet50``, ...), evaluated layer by layer
  with every layer weighted by its full dense cycle count,
* ``gemm:M,K,N`` or ``gemm:M,K,N:DA,DB`` (a single synthetic GEMM with the
  given operand densities),
* a path to a JSON workload file (see :func:`load_workload_file`).

Rows are a pure function of (space, constraints, workloads, seed, bandwidth);
the worker pool only changes wall time.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from .arch_config import ArchConfig, BorrowWindow, Category, Mode, compute_overheads, validate
from .benchmarks import BENCHMARK_NAMES, benchmark, benchmark_workloads, DEFAULT_MAC_LIMIT
from .engine import dense_cycles, run, simulate_griffin
from .errors import ConfigError, EmptySpaceAfterConstraints
from .metrics import cost, effective_efficiency, geomean
from .workload import GemmProblem, gen_sparsity, random_problem, read_tensor

SCHEMA_VERSION = 1
ROW_FIELDS = (
    "schema", "config", "mode", "da1", "da2", "da3", "db1", "db2", "db3", "shuffle",
    "amux_fanin", "bmux_fanin", "workload", "category", "seed", "cycles", "dense_cycles",
    "speedup", "power_mw", "area_kum2", "tops_per_w", "tops_per_mm2",
    "effective_tops_per_w", "effective_tops_per_mm2",
)

_MODE_CATEGORY = {Mode.DENSE: Category.DENSE, Mode.SPARSE_A: Category.A,
                  Mode.SPARSE_B: Category.B, Mode.SPARSE_AB: Category.AB,
                  Mode.GRIFFIN: Category.AB}


def category_for(config: ArchConfig) -> Category:
    """Model category a design is meant for (Dense runs the dense variant)."""
    return _MODE_CATEGORY[config.mode]


def suite(category: Category | str) -> tuple[str, ...]:
    """Benchmarks that belong to a category; models without sparse activations drop out of A/AB."""
    category = Category(category)
    if category in (Category.A, Category.AB):
        return tuple(n for n in BENCHMARK_NAMES if benchmark(n).sparsity_a > 0)
    return BENCHMARK_NAMES


# -- configuration space ------------------------------------------------------------

def _range(value) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,)
    if isinstance(value, dict):
        return tuple(range(value["min"], value["max"] + 1))
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class SweepSpace:
    """Cartesian ranges per window component; each mode uses only its own windows."""

    modes: tuple = (Mode.SPARSE_B,)
    da1: tuple = (0,)
    da2: tuple = (0,)
    da3: tuple = (0,)
    db1: tuple = (0,)
    db2: tuple = (0,)
    db3: tuple = (0,)
    shuffle: tuple = (False, True)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpace":
        allowed = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - allowed
        if extra:
            raise ConfigError(f"sweep space: unknown key(s) {sorted(extra)}")
        kw = {}
        for name in allowed & set(data):
            if name == "modes":
                kw[name] = tuple(Mode(m) for m in data[name])
            elif name == "shuffle":
                v = data[name]
                kw[name] = (bool(v),) if isinstance(v, bool) else tuple(bool(x) for x in v)
            else:
                kw[name] = _range(data[name])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["modes"] = [Mode(m).value for m in self.modes]
        d["shuffle"] = list(self.shuffle)
        return d


@dataclass(frozen=True)
class Constraints:
    max_amux: int | None = None
    max_bmux: int | None = None

    def admits(self, config: ArchConfig) -> bool:
        ov = compute_overheads(config)
        if self.max_amux is not None and ov.amux_fanin > self.max_amux:
            return False
        if self.max_bmux is not None and ov.bmux_fanin > self.max_bmux:
            return False
        return True


def enumerate_space(space: SweepSpace, constraints: Constraints = Constraints()) -> list[ArchConfig]:
    """Distinct valid configurations of ``space`` that satisfy ``constraints``, in a fixed order."""
    a_grid = list(itertools.product(space.da1, space.da2, space.da3))
    b_grid = list(itertools.product(space.db1, space.db2, space.db3))
    zero = [(0, 0, 0)]
    seen, out = set(), []
    for mode in space.modes:
        mode = Mode(mode)
        if mode is Mode.GRIFFIN:
            raise ConfigError("Griffin designs are evaluated directly, not swept")
        a_side = a_grid if mode in (Mode.SPARSE_A, Mode.SPARSE_AB) else zero
        b_side = b_grid if mode in (Mode.SPARSE_B, Mode.SPARSE_AB) else zero
        for sh, a, b in itertools.product(space.shuffle, a_side, b_side):
            if mode is not Mode.DENSE and BorrowWindow(*a).is_zero and BorrowWindow(*b).is_zero:
                continue
            cfg = ArchConfig(mode, a_window=a, b_window=b, shuffle=sh)
            try:
                validate(cfg)
            except ConfigError:
                continue
            if cfg in seen or not constraints.admits(cfg):
                continue
            seen.add(cfg)
            out.append(cfg)
    if not out:
        raise EmptySpaceAfterConstraints(
            f"no configuration of the space satisfies {dataclasses.asdict(constraints)}")
    return out


# -- workloads ------------------------------------------------------------------------

@dataclass(frozen=True)
class Workload:
    """GEMMs with weights; speedup is total weighted dense time over weighted sparse time."""

    name: str
    items: tuple = field(default_factory=tuple)  # (GemmProblem, weight)


def load_workload_file(path: str | Path, seed: int = 0) -> Workload:
    """JSON workload: ``{"name": ..., "gemms": [...]}``.

    Each gemm is either ``{"a": path, "b": path}`` (tensor files) or
    ``{"m", "k", "n", "density_a", "density_b", "pattern"?}``; an optional
    ``"weight"`` defaults to the GEMM's dense cycle count.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    items = []
    for i, g in enumerate(data["gemms"]):
        if "a" in g:
            base = path.parent
            problem = GemmProblem.from_arrays(read_tensor(base / g["a"]), read_tensor(base / g["b"]),
                                              name=g.get("name", f"gemm{i}"))
        else:
            problem = random_problem(g["m"], g["k"], g["n"], seed=seed * 1000 + i,
                                     name=g.get("name", f"gemm{i}"))
            problem = gen_sparsity(problem, g.get("density_a", 1.0), g.get("density_b", 1.0),
                                   seed=seed * 1000 + i, pattern=g.get("pattern", "bernoulli"))
        items.append((problem, g.get("weight")))
    return Workload(data.get("name", path.stem), tuple(items))


def _parse_gemm(spec: str, seed: int) -> Workload:
    parts = spec.split(":")[1:]
    try:
        m, k, n = (int(x) for x in parts[0].split(","))
        da, db = (float(x) for x in parts[1].split(",")) if len(parts) > 1 else (1.0, 1.0)
    except (ValueError, IndexError):
        raise ValueError(f"workload {spec!r}: expected gemm:M,K,N[:DA,DB]") from None
    problem = gen_sparsity(random_problem(m, k, n, seed=seed, name=spec), da, db, seed=seed)
    return Workload(spec, ((problem, None),))


@lru_cache(maxsize=32)
def resolve_workload(spec: str, category: Category | str = Category.AB, seed: int = 0,
                     mac_limit: int = DEFAULT_MAC_LIMIT) -> Workload:
    """Turn a workload spec into concrete GEMMs; benchmarks are sparsified for ``category``."""
    if spec.startswith("gemm:"):
        return _parse_gemm(spec, seed)
    if spec in BENCHMARK_NAMES:
        layers = benchmark_workloads(benchmark(spec), category, seed=seed, mac_limit=mac_limit)
        return Workload(spec, tuple((lw.problem, lw.full_dense_cycles) for lw in layers))
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"workload {spec!r} is neither a benchmark, a gemm: spec nor a file")
    return load_workload_file(path, seed)


def net_speedup(pairs) -> tuple[float, float]:
    """(weighted dense cycles, weighted cycles) from ``(weight, speedup)`` pairs."""
    dense = sum(w for w, _ in pairs)
    actual = sum(w / s if s > 0 else 0.0 for w, s in pairs)
    return dense, actual


# -- evaluation -----------------------------------------------------------------------

def evaluate(config: ArchConfig, workload: str, seed: int = 0, category: Category | str | None = None,
             bandwidth: str = "provisioned", mac_limit: int = DEFAULT_MAC_LIMIT) -> dict:
    """One sweep row: speedup of ``config`` on ``workload`` plus cost and efficiency."""
    category = Category(category) if category is not None else category_for(config)
    wl = resolve_workload(workload, category, seed, mac_limit)
    pairs = []
    for problem, weight in wl.items:
        if config.mode is Mode.GRIFFIN:
            rep = simulate_griffin(problem, config, category, bandwidth=bandwidth)
        else:
            rep = run(problem, config, bandwidth=bandwidth)
        if weight is None:
            weight = rep.dense_cycles
        pairs.append((weight, rep.speedup))
    dense, actual = net_speedup(pairs)
    speedup = dense / actual if actual > 0 else 0.0
    c = effective_efficiency(cost(config), speedup)
    ov = compute_overheads(config)
    a, b = tuple(config.a_window), tuple(config.b_window)
    return {
        "schema": SCHEMA_VERSION, "config": config.label, "mode": config.mode.value,
        "da1": a[0], "da2": a[1], "da3": a[2], "db1": b[0], "db2": b[1], "db3": b[2],
        "shuffle": int(config.shuffle), "amux_fanin": ov.amux_fanin, "bmux_fanin": ov.bmux_fanin,
        "workload": workload, "category": category.value, "seed": seed,
        "cycles": round(actual), "dense_cycles": round(dense), "speedup": speedup,
        "power_mw": c.power_mw, "area_kum2": c.area_kum2,
        "tops_per_w": c.tops_per_w, "tops_per_mm2": c.tops_per_mm2,
        "effective_tops_per_w": c.effective_tops_per_w,
        "effective_tops_per_mm2": c.effective_tops_per_mm2,
    }


def _evaluate_job(job) -> dict:
    cfg_dict, workload, seed, category, bandwidth, mac_limit = job
    return evaluate(ArchConfig.from_dict(cfg_dict), workload, seed, category, bandwidth, mac_limit)


def sweep(configs, workloads, seed: int = 0, jobs: int = 1, category: Category | str | None = None,
          bandwidth: str = "provisioned", mac_limit: int = DEFAULT_MAC_LIMIT) -> list[dict]:
    """Rows for every (config, workload) pair, ordered by config then workload."""
    configs = list(configs)
    work = [(cfg.to_dict(), wl, seed, category, bandwidth, mac_limit)
            for cfg in configs for wl in workloads]
    if jobs <= 1 or len(work) <= 1:
        return [_evaluate_job(j) for j in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map() yields in submission order whatever the completion order
        return list(pool.map(_evaluate_job, work, chunksize=max(1, len(work) // (4 * jobs))))


def summarize(rows: list[dict]) -> list[dict]:
    """Geometric mean over workloads per configuration, preserving config order."""
    groups: dict[str, list[dict]] = {}
    for r in rows:
        groups.setdefault(r["config"], []).append(r)
    out = []
    for label, rs in groups.items():
        first = dict(rs[0])
        first["workload"] = "geomean(" + ",".join(r["workload"] for r in rs) + ")"
        for key in ("speedup", "effective_tops_per_w", "effective_tops_per_mm2"):
            first[key] = geomean(r[key] for r in rs)
        first["cycles"] = sum(r["cycles"] for r in rs)
        first["dense_cycles"] = sum(r["dense_cycles"] for r in rs)
        out.append(first)
    return out


def write_rows(rows: list[dict], path_or_file) -> None:
    def _write(fh):
        writer = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r[k]) for k in ROW_FIELDS})

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def _fmt(value):
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6g}"
    return value


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and int(rows[0].get("schema", -1)) != SCHEMA_VERSION:
        raise ValueError(f"{path}: sweep CSV schema {rows[0].get('schema')} != {SCHEMA_VERSION}")
    return rows
