"""Architecture configuration space, structural overhead model and presets.

A design point is a sparsity mode plus two borrowing windows: how far (in
time chunks, lanes, and neighbouring PEs) a zero slot may reach to pull in a
non-zero replacement from operand A and from operand B.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .errors import (
    DegenerateCore,
    InvalidWindow,
    ModeWindowMismatch,
    MorphExceedsHardware,
    UnknownConfigKey,
    UnknownPreset,
    ConfigError,
)

FREQUENCY_HZ = 800e6

#: BMUX inputs Griffin may add on top of its dual base (3 -> 5 for conf.A).
GRIFFIN_BMUX_EXTRA = 2


class Mode(str, Enum):
    DENSE = "dense"
    SPARSE_A = "sparse_a"
    SPARSE_B = "sparse_b"
    SPARSE_AB = "sparse_ab"
    GRIFFIN = "griffin"


class Category(str, Enum):
    """DNN model category, named by which operand is sparse."""

    DENSE = "dense"
    A = "A"
    B = "B"
    AB = "AB"


@dataclass(frozen=True)
class BorrowWindow:
    """Maximum borrowing distance along (time chunk, lane, neighbour PE)."""

    d1: int = 0
    d2: int = 0
    d3: int = 0

    def __iter__(self):
        return iter((self.d1, self.d2, self.d3))

    @property
    def is_zero(self) -> bool:
        return self.d1 == 0 and self.d2 == 0 and self.d3 == 0

    def check(self) -> "BorrowWindow":
        if min(self.d1, self.d2, self.d3) < 0:
            raise InvalidWindow(f"negative borrowing distance in {self}")
        if self.d1 == 0 and (self.d2 > 0 or self.d3 > 0):
            raise InvalidWindow(f"{self}: lane/PE borrowing needs d1 >= 1")
        return self

    def candidates(self) -> int:
        """Number of positions a slot may draw from, itself included."""
        return 1 + self.d1 * (1 + self.d2) * (1 + self.d3)

    def field_widths(self) -> tuple[int, int, int]:
        return tuple(_bits(d) for d in self)  # type: ignore[return-value]

    @classmethod
    def of(cls, value) -> "BorrowWindow":
        if isinstance(value, BorrowWindow):
            return value
        if value is None:
            return cls()
        if isinstance(value, Mapping):
            return cls(**{k: int(v) for k, v in value.items()})
        d1, d2, d3 = value
        return cls(int(d1), int(d2), int(d3))


ZERO = BorrowWindow()


def _bits(d: int) -> int:
    """Width of a field holding values 0..d."""
    return math.ceil(math.log2(1 + d)) if d > 0 else 0


@dataclass(frozen=True)
class CoreDims:
    k0: int = 16
    n0: int = 16
    m0: int = 4

    @property
    def macs(self) -> int:
        return self.k0 * self.n0 * self.m0


@dataclass(frozen=True)
class MemoryParams:
    """On-chip memory sizes (bytes) and bandwidths (bytes per cycle)."""

    asram_bytes: int = 512 * 1024
    bsram_bytes: int = 32 * 1024
    asram_bw: float = 51.2e9 / FREQUENCY_HZ
    bsram_bw: float = 204.8e9 / FREQUENCY_HZ
    dram_bw: float = 50e9 / FREQUENCY_HZ
    banks_a: int = 4

    @classmethod
    def from_gbps(cls, asram_gbps: float, bsram_gbps: float, dram_gbps: float,
                  frequency_hz: float = FREQUENCY_HZ, **kw) -> "MemoryParams":
        return cls(asram_bw=asram_gbps * 1e9 / frequency_hz,
                   bsram_bw=bsram_gbps * 1e9 / frequency_hz,
                   dram_bw=dram_gbps * 1e9 / frequency_hz, **kw)

    @classmethod
    def unbounded(cls) -> "MemoryParams":
        inf = float("inf")
        return cls(asram_bw=inf, bsram_bw=inf, dram_bw=inf, banks_a=1 << 30)

    def scaled(self, a_factor: float, b_factor: float) -> "MemoryParams":
        return dataclasses.replace(
            self,
            asram_bw=self.asram_bw * a_factor,
            bsram_bw=self.bsram_bw * b_factor,
            banks_a=int(math.ceil(self.banks_a * a_factor)),
        )

    def check(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"memory parameter {f.name} must be positive")


@dataclass(frozen=True)
class ArchConfig:
    mode: Mode = Mode.DENSE
    a_window: BorrowWindow = ZERO
    b_window: BorrowWindow = ZERO
    shuffle: bool = False
    core: CoreDims = field(default_factory=CoreDims)
    memory: MemoryParams = field(default_factory=MemoryParams)
    griffin_conf_a: BorrowWindow | None = None
    griffin_conf_b: BorrowWindow | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "a_window", BorrowWindow.of(self.a_window))
        object.__setattr__(self, "b_window", BorrowWindow.of(self.b_window))
        for name in ("griffin_conf_a", "griffin_conf_b"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, BorrowWindow.of(value))

    @property
    def label(self) -> str:
        on = "on" if self.shuffle else "off"
        a, b = tuple(self.a_window), tuple(self.b_window)
        if self.mode is Mode.DENSE:
            return "Dense"
        if self.mode is Mode.SPARSE_A:
            return "A({},{},{},{})".format(*a, on)
        if self.mode is Mode.SPARSE_B:
            return "B({},{},{},{})".format(*b, on)
        if self.mode is Mode.SPARSE_AB:
            return "AB({},{},{},{},{},{},{})".format(*a, *b, on)
        return "Griffin(AB{}{}, A{}, B{}, {})".format(
            a, b, tuple(self.griffin_conf_a), tuple(self.griffin_conf_b), on)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "a_window": dataclasses.asdict(self.a_window),
            "b_window": dataclasses.asdict(self.b_window),
            "shuffle": self.shuffle,
            "core": dataclasses.asdict(self.core),
            "memory": dataclasses.asdict(self.memory),
            "griffin_conf_a": None if self.griffin_conf_a is None
            else dataclasses.asdict(self.griffin_conf_a),
            "griffin_conf_b": None if self.griffin_conf_b is None
            else dataclasses.asdict(self.griffin_conf_b),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ArchConfig":
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "config")
        kw = dict(data)
        for name in ("a_window", "b_window", "griffin_conf_a", "griffin_conf_b"):
            if kw.get(name) is not None:
                _reject_unknown(kw[name], {"d1", "d2", "d3"}, name)
                kw[name] = BorrowWindow.of(kw[name])
        if "core" in kw:
            _reject_unknown(kw["core"], {"k0", "n0", "m0"}, "core")
            kw["core"] = CoreDims(**kw["core"])
        if "memory" in kw:
            names = {f.name for f in dataclasses.fields(MemoryParams)}
            _reject_unknown(kw["memory"], names, "memory")
            kw["memory"] = MemoryParams(**kw["memory"])
        if "mode" in kw:
            kw["mode"] = Mode(kw["mode"])
        return cls(**kw)


def _reject_unknown(data: Mapping[str, Any], allowed: set[str], where: str) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a table, got {type(data).__name__}")
    extra = set(data) - allowed
    if extra:
        raise UnknownConfigKey(f"{where}: unknown key(s) {sorted(extra)}")


def load_config(path: str | Path) -> ArchConfig:
    with open(path) as fh:
        return validate(ArchConfig.from_dict(json.load(fh)))


def save_config(config: ArchConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


# -- validation ---------------------------------------------------------------

def validate(config: ArchConfig) -> ArchConfig:
    """Return ``config`` unchanged if every invariant holds, else raise."""
    core = config.core
    if min(core.k0, core.n0, core.m0) <= 0:
        raise DegenerateCore(f"core dimensions must be positive: {core}")
    config.memory.check()
    config.a_window.check()
    config.b_window.check()
    mode = config.mode
    if mode is Mode.DENSE and not (config.a_window.is_zero and config.b_window.is_zero):
        raise ModeWindowMismatch("Dense mode requires both windows to be (0,0,0)")
    if mode is Mode.SPARSE_A and not config.b_window.is_zero:
        raise ModeWindowMismatch("SparseA requires b_window = (0,0,0)")
    if mode is Mode.SPARSE_B and not config.a_window.is_zero:
        raise ModeWindowMismatch("SparseB requires a_window = (0,0,0)")
    if mode is Mode.GRIFFIN:
        if config.griffin_conf_a is None or config.griffin_conf_b is None:
            raise ModeWindowMismatch("Griffin needs griffin_conf_a and griffin_conf_b")
        config.griffin_conf_a.check()
        config.griffin_conf_b.check()
        _morph_check(config)
    elif config.griffin_conf_a is not None or config.griffin_conf_b is not None:
        raise ModeWindowMismatch("griffin_conf_* only apply to Griffin mode")
    return config


# -- structural overheads -------------------------------------------------------

@dataclass(frozen=True)
class OverheadReport:
    abuf_depth: int = 1
    bbuf_depth: int = 1
    amux_fanin: int = 1
    bmux_fanin: int = 1
    adder_trees_per_pe: int = 1
    metadata_bits_per_b_element: int = 0
    arbiters: int = 0
    crossbars_4x4: int = 0
    pe_controllers: int = 0

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)

    def maximum(self, other: "OverheadReport") -> "OverheadReport":
        return OverheadReport(**{k: max(v, getattr(other, k)) for k, v in self.as_dict().items()})


def compute_overheads(config: ArchConfig) -> OverheadReport:
    c = config.core
    xbars = math.ceil(c.k0 / 4) if config.shuffle else 0
    mode = config.mode
    if mode is Mode.GRIFFIN:
        report = compute_overheads(_dual_base(config))
        for target in (morph(config, Category.A), morph(config, Category.B)):
            report = report.maximum(compute_overheads(target))
        return report
    if mode is Mode.DENSE:
        return OverheadReport(crossbars_4x4=xbars)
    if mode is Mode.SPARSE_B:
        d1, d2, d3 = config.b_window
        return OverheadReport(
            abuf_depth=1 + d1,
            amux_fanin=1 + d1 * (1 + d2),
            adder_trees_per_pe=1 + d3,
            metadata_bits_per_b_element=sum(config.b_window.field_widths()),
            crossbars_4x4=xbars,
        )
    if mode is Mode.SPARSE_A:
        d1, d2, d3 = config.a_window
        return OverheadReport(
            abuf_depth=1 + d1,
            bbuf_depth=1 + d1,
            amux_fanin=1 + d1 * (1 + d2) * (1 + d3),
            bmux_fanin=1 + d1 * (1 + d2),
            adder_trees_per_pe=1 + d3,
            arbiters=c.m0,
            crossbars_4x4=xbars,
        )
    x, y, z = config.a_window
    xp, yp, zp = config.b_window
    depth = (1 + x) * (1 + xp)
    return OverheadReport(
        abuf_depth=depth,
        bbuf_depth=1 + xp,
        amux_fanin=1 + (depth - 1) * (1 + y + yp) * (1 + z),
        bmux_fanin=1 + x * (1 + y),
        adder_trees_per_pe=(1 + z) * (1 + zp),
        metadata_bits_per_b_element=sum(config.b_window.field_widths()),
        pe_controllers=c.m0 * c.n0,
        crossbars_4x4=xbars,
    )


def _dual_base(config: ArchConfig) -> ArchConfig:
    return dataclasses.replace(config, mode=Mode.SPARSE_AB, griffin_conf_a=None,
                               griffin_conf_b=None)


def morph(config: ArchConfig, category: Category | str) -> ArchConfig:
    """Effective single configuration Griffin runs for a model category."""
    if config.mode is not Mode.GRIFFIN:
        raise ConfigError("morph() applies to Griffin configurations only")
    category = Category(category)
    base = dict(griffin_conf_a=None, griffin_conf_b=None)
    if category is Category.AB:
        return dataclasses.replace(config, mode=Mode.SPARSE_AB, **base)
    if category is Category.A:
        return dataclasses.replace(config, mode=Mode.SPARSE_A, a_window=config.griffin_conf_a,
                                   b_window=ZERO, **base)
    if category is Category.B:
        return dataclasses.replace(config, mode=Mode.SPARSE_B, a_window=ZERO,
                                   b_window=config.griffin_conf_b, **base)
    return dataclasses.replace(config, mode=Mode.DENSE, a_window=ZERO, b_window=ZERO, **base)


def _morph_check(config: ArchConfig) -> None:
    dual = compute_overheads(_dual_base(config))
    for category in (Category.A, Category.B):
        target = morph(config, category)
        validate(target)
        need = compute_overheads(target)
        limits = {
            "abuf_depth": dual.abuf_depth,
            "bbuf_depth": dual.bbuf_depth,
            "amux_fanin": dual.amux_fanin,
            "adder_trees_per_pe": dual.adder_trees_per_pe,
            "bmux_fanin": dual.bmux_fanin + GRIFFIN_BMUX_EXTRA,
        }
        for name, limit in limits.items():
            if getattr(need, name) > limit:
                raise MorphExceedsHardware(
                    f"{target.label} needs {name}={getattr(need, name)}, hardware has {limit}")


# -- bandwidth provisioning ---------------------------------------------------------

def provision_factors(config: ArchConfig) -> tuple[int, int]:
    """Peak chunk-advance rates (A side, B side) relative to the dense core.

    Provisioning both SRAMs by these factors is what lets a design reach its
    window-limited speedup without bandwidth stalls.
    """
    mode = config.mode
    if mode is Mode.GRIFFIN:
        rates = [provision_factors(morph(config, c)) for c in (Category.AB, Category.A, Category.B)]
        return max(r[0] for r in rates), max(r[1] for r in rates)
    if mode is Mode.SPARSE_B:
        return 1 + config.b_window.d1, 1
    if mode is Mode.SPARSE_A:
        return 1 + config.a_window.d1, 1 + config.a_window.d1
    if mode is Mode.SPARSE_AB:
        return (1 + config.a_window.d1) * (1 + config.b_window.d1), 1 + config.a_window.d1
    return 1, 1


def speedup_bound(config: ArchConfig) -> int:
    """Window-time limit on speedup."""
    if config.mode is Mode.GRIFFIN:
        return max(speedup_bound(morph(config, c)) for c in Category)
    return (1 + config.a_window.d1) * (1 + config.b_window.d1)


def effective_memory(config: ArchConfig, bandwidth: str = "provisioned") -> MemoryParams:
    if bandwidth == "configured":
        return config.memory
    if bandwidth == "unbounded":
        return MemoryParams.unbounded()
    if bandwidth == "provisioned":
        return config.memory.scaled(*provision_factors(config))
    raise ConfigError(f"unknown bandwidth policy {bandwidth!r}")


# -- presets ------------------------------------------------------------------------

def preset(name: str) -> ArchConfig:
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None
    return validate(factory())


_PRESETS = {
    "dense": lambda: ArchConfig(),
    "sparse_b_star": lambda: ArchConfig(Mode.SPARSE_B, b_window=(4, 0, 1), shuffle=True),
    "sparse_a_star": lambda: ArchConfig(Mode.SPARSE_A, a_window=(2, 1, 0), shuffle=True),
    "sparse_ab_star": lambda: ArchConfig(Mode.SPARSE_AB, a_window=(2, 0, 0), b_window=(2, 0, 1),
                                         shuffle=True),
    "griffin": lambda: ArchConfig(Mode.GRIFFIN, a_window=(2, 0, 0), b_window=(2, 0, 1),
                                  shuffle=True, griffin_conf_a=(2, 1, 1),
                                  griffin_conf_b=(8, 0, 1)),
}

PRESET_NAMES = tuple(_PRESETS)
