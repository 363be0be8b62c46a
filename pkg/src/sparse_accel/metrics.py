"""Power/area model, effective efficiency and Pareto extraction.

Every hardware component is a linear combination of resource counts derived
from a configuration's structural overheads.  Unit costs per resource are fitted
by non-negative least squares to the synthesized breakdowns shipped in
``data/table6.json``.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from .arch_config import (
    FREQUENCY_HZ,
    ArchConfig,
    Mode,
    OverheadReport,
    _bits,
    compute_overheads,
    effective_memory,
    preset,
)
from .errors import UnderdeterminedFit

COMPONENTS = ("CTRL", "SHF", "ABUF", "BBUF", "REG", "ACC", "MUL", "ADT", "MUX", "SRAM")
RESOURCES = ("register_bit", "buffer_word", "mux_input", "adder", "multiplier", "accumulator",
             "arbiter", "control_unit", "crossbar_4x4", "sram_byte", "sram_bw")

#: relative weight of the row totals against individual components in the fit
TOTAL_WEIGHT = 4.0


def resource_counts(config: ArchConfig, overheads: OverheadReport | None = None) -> dict:
    """``{component: {resource: count}}`` for one design."""
    ov = overheads or compute_overheads(config)
    c = config.core
    n_pe = c.m0 * c.n0
    if config.mode is Mode.SPARSE_A:
        # the A element is broadcast along a PE row, so its selector is per row
        mux = c.m0 * c.k0 * (ov.amux_fanin - 1) + n_pe * c.k0 * (ov.bmux_fanin - 1)
    else:
        mux = n_pe * c.k0 * ((ov.amux_fanin - 1) + (ov.bmux_fanin - 1))
    # each lane latches two 8-bit operands plus the decoded AMUX select
    select_bits = _bits(ov.amux_fanin - 1)
    mem = effective_memory(config, "provisioned")
    return {
        "CTRL": {"arbiter": ov.arbiters, "control_unit": ov.pe_controllers},
        "SHF": {"crossbar_4x4": ov.crossbars_4x4},
        "ABUF": {"buffer_word": (ov.abuf_depth - 1) * c.k0 * c.m0},
        "BBUF": {"buffer_word": (ov.bbuf_depth - 1) * c.k0 * c.n0},
        "REG": {"register_bit": c.macs * (16 + select_bits)},
        "ACC": {"accumulator": n_pe},
        "MUL": {"multiplier": c.macs},
        "ADT": {"adder": ov.adder_trees_per_pe * n_pe * (c.k0 - 1)},
        "MUX": {"mux_input": mux},
        "SRAM": {"sram_byte": mem.asram_bytes + mem.bsram_bytes,
                 "sram_bw": mem.asram_bw + mem.bsram_bw},
    }


@dataclass
class UnitCostTable:
    """Power (mW) and area (1000 um^2) per unit of each resource."""

    power: dict
    area: dict
    residuals: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for kind in (self.power, self.area):
            missing = set(RESOURCES) - set(kind)
            if missing:
                raise ValueError(f"unit cost table lacks {sorted(missing)}")
            if any(v < 0 for v in kind.values()):
                raise ValueError("unit costs must be non-negative")

    def scaled(self, power_factor: float = 1.0, area_factor: float = 1.0) -> "UnitCostTable":
        return UnitCostTable({k: v * power_factor for k, v in self.power.items()},
                             {k: v * area_factor for k, v in self.area.items()})

    def to_dict(self) -> dict:
        return {"power": dict(self.power), "area": dict(self.area), "residuals": self.residuals}

    @classmethod
    def from_dict(cls, data) -> "UnitCostTable":
        return cls(dict(data["power"]), dict(data["area"]), dict(data.get("residuals", {})))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "UnitCostTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_table6(path: str | Path | None = None) -> list[dict]:
    """Rows usable for calibration: those tied to one of our presets."""
    if path is None:
        text = resources.files("sparse_accel").joinpath("data/table6.json").read_text()
    else:
        text = Path(path).read_text()
    rows = json.loads(text)["rows"]
    return [r for r in rows if r.get("preset")]


def calibrate(rows: list[dict] | None = None) -> UnitCostTable:
    """Weighted NNLS fit of unit costs to per-component and total figures."""
    rows = load_table6() if rows is None else rows
    counts = [resource_counts(preset(r["preset"])) for r in rows]
    fitted, residuals = {}, {}
    for kind in ("power", "area"):
        a_rows, b = [], []
        for r, cnt in zip(rows, counts):
            total_vec = np.zeros(len(RESOURCES))
            for comp in COMPONENTS:
                vec = np.zeros(len(RESOURCES))
                for res, n in cnt[comp].items():
                    vec[RESOURCES.index(res)] += n
                total_vec += vec
                a_rows.append(vec)
                b.append(float(r[kind].get(comp) or 0.0))
            a_rows.append(TOTAL_WEIGHT * total_vec)
            b.append(TOTAL_WEIGHT * float(r[f"{kind}_total"]))
        a = np.array(a_rows)
        used = np.flatnonzero(np.abs(a).sum(axis=0) > 0)
        # resources never exercised by any row keep a zero cost
        sub = a[:, used]
        scale = np.abs(sub).max(axis=0)
        if len(b) < len(used) or np.linalg.matrix_rank(sub / scale) < len(used):
            raise UnderdeterminedFit(
                f"{len(rows)} calibration rows cannot pin down {len(used)} {kind} unit costs")
        x, _ = nnls(sub / scale, np.array(b))
        units = dict.fromkeys(RESOURCES, 0.0)
        for idx, val in zip(used, x / scale):
            units[RESOURCES[idx]] = float(val)
        fitted[kind] = units
    table = UnitCostTable(fitted["power"], fitted["area"])
    for r, cnt in zip(rows, counts):
        pw, ar = _breakdown(cnt, table.power), _breakdown(cnt, table.area)
        residuals[r["name"]] = {
            "power_total": (sum(pw.values()), float(r["power_total"])),
            "area_total": (sum(ar.values()), float(r["area_total"])),
            "power": {c: (pw[c], float(r["power"].get(c) or 0.0)) for c in COMPONENTS},
            "area": {c: (ar[c], float(r["area"].get(c) or 0.0)) for c in COMPONENTS},
        }
    table.residuals = residuals
    return table


@lru_cache(maxsize=1)
def default_units() -> UnitCostTable:
    return calibrate()


def _breakdown(counts: dict, unit: dict) -> dict:
    return {comp: sum(n * unit[res] for res, n in counts[comp].items()) for comp in COMPONENTS}


# -- cost reports -------------------------------------------------------------------

def dense_tops(config: ArchConfig, frequency_hz: float = FREQUENCY_HZ) -> float:
    return config.core.macs * 2 * frequency_hz / 1e12


@dataclass
class CostReport:
    power_mw: float
    area_kum2: float
    power_breakdown: dict
    area_breakdown: dict
    tops: float
    tops_per_w: float
    tops_per_mm2: float
    speedup: float = 1.0
    effective_tops_per_w: float = 0.0
    effective_tops_per_mm2: float = 0.0

    def to_dict(self) -> dict:
        flat = {k: v for k, v in dataclasses.asdict(self).items()
                if k not in ("power_breakdown", "area_breakdown")}
        for comp in COMPONENTS:
            flat[f"power_{comp}"] = self.power_breakdown[comp]
            flat[f"area_{comp}"] = self.area_breakdown[comp]
        return flat


def cost(config: ArchConfig, overheads: OverheadReport | None = None,
         units: UnitCostTable | None = None) -> CostReport:
    """Static power/area and dense efficiency of a design (speedup 1)."""
    units = units or default_units()
    counts = resource_counts(config, overheads)
    pw, ar = _breakdown(counts, units.power), _breakdown(counts, units.area)
    power, area = sum(pw.values()), sum(ar.values())
    tops = dense_tops(config)
    tpw = tops / (power / 1000.0) if power > 0 else math.inf
    tpmm = tops / (area / 1000.0) if area > 0 else math.inf
    return CostReport(power, area, pw, ar, tops, tpw, tpmm, 1.0, tpw, tpmm)


def effective_efficiency(report: CostReport, speedup: float) -> CostReport:
    """Scale dense efficiency by the sparsity speedup."""
    if speedup < 0:
        raise ValueError("speedup must be non-negative")
    return dataclasses.replace(report, speedup=speedup,
                               effective_tops_per_w=report.tops_per_w * speedup,
                               effective_tops_per_mm2=report.tops_per_mm2 * speedup)


# -- aggregation and frontiers ---------------------------------------------------------

def geomean(values) -> float:
    values = np.asarray(list(values), float)
    if values.size == 0:
        raise ValueError("geomean of an empty sequence")
    if np.any(values <= 0):
        return 0.0
    return float(np.exp(np.log(values).mean()))


def pareto(points):
    """Points not dominated under component-wise >= (ties kept), in input order.

    ``points`` is a sequence of ``(x, y, label)`` tuples, larger is better on
    both axes.
    """
    points = list(points)
    if not points:
        raise ValueError("pareto needs at least one point")
    order = sorted(range(len(points)), key=lambda i: (-points[i][0], -points[i][1]))
    keep = set()
    best_y = -math.inf  # highest y among strictly larger x
    i = 0
    while i < len(order):
        x = points[order[i]][0]
        j = i
        while j < len(order) and points[order[j]][0] == x:
            j += 1
        group_y = points[order[i]][1]
        if group_y > best_y:
            keep.update(idx for idx in order[i:j] if points[idx][1] == group_y)
        best_y = max(best_y, group_y)
        i = j
    return [points[i] for i in sorted(keep)]
