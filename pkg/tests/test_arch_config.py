import dataclasses
import itertools
import json

import pytest

from sparse_accel.arch_config import (
    ArchConfig,
    BorrowWindow,
    Category,
    CoreDims,
    MemoryParams,
    Mode,
    compute_overheads,
    effective_memory,
    load_config,
    morph,
    preset,
    provision_factors,
    save_config,
    validate,
)
from sparse_accel.errors import (
    DegenerateCore,
    InvalidWindow,
    ModeWindowMismatch,
    MorphExceedsHardware,
    UnknownConfigKey,
    UnknownPreset,
)

D = range(0, 9)


def sb(*w, sh=False):
    return ArchConfig(Mode.SPARSE_B, b_window=w, shuffle=sh)


def sa(*w, sh=False):
    return ArchConfig(Mode.SPARSE_A, a_window=w, shuffle=sh)


# -- special-case rows of the single-sparse overhead table ------------------------------

@pytest.mark.parametrize("d", D)
def test_sparse_a_time_row(d):
    ov = compute_overheads(sa(d, 0, 0))
    assert (ov.abuf_depth, ov.amux_fanin, ov.bbuf_depth, ov.bmux_fanin, ov.adder_trees_per_pe) == (
        1 + d, 1 + d, 1 + d, 1 + d, 1)


@pytest.mark.parametrize("d", D)
def test_sparse_a_lane_row(d):
    ov = compute_overheads(sa(1, d, 0))
    assert (ov.abuf_depth, ov.amux_fanin, ov.bbuf_depth, ov.bmux_fanin, ov.adder_trees_per_pe) == (
        2, 2 + d, 2, 2 + d, 1)


@pytest.mark.parametrize("d", D)
def test_sparse_a_pe_row(d):
    ov = compute_overheads(sa(1, 0, d))
    assert (ov.abuf_depth, ov.amux_fanin, ov.bbuf_depth, ov.bmux_fanin, ov.adder_trees_per_pe) == (
        2, 2 + d, 2, 2, 1 + d)


@pytest.mark.parametrize("d", D)
def test_sparse_b_time_row(d):
    ov = compute_overheads(sb(d, 0, 0))
    assert (ov.abuf_depth, ov.amux_fanin, ov.bbuf_depth, ov.bmux_fanin, ov.adder_trees_per_pe) == (
        1 + d, 1 + d, 1, 1, 1)


@pytest.mark.parametrize("d", D)
def test_sparse_b_lane_row(d):
    ov = compute_overheads(sb(1, d, 0))
    assert (ov.abuf_depth, ov.amux_fanin, ov.adder_trees_per_pe) == (2, 2 + d, 1)


@pytest.mark.parametrize("d", D)
def test_sparse_b_pe_row(d):
    ov = compute_overheads(sb(1, 0, d))
    assert (ov.abuf_depth, ov.amux_fanin, ov.adder_trees_per_pe) == (2, 2, 1 + d)


def test_dense_overheads_are_trivial():
    ov = compute_overheads(ArchConfig())
    assert (ov.abuf_depth, ov.bbuf_depth, ov.amux_fanin, ov.bmux_fanin,
            ov.adder_trees_per_pe, ov.metadata_bits_per_b_element) == (1, 1, 1, 1, 1, 0)
    assert ov.crossbars_4x4 == 0


def test_shuffle_adds_crossbars():
    assert compute_overheads(ArchConfig(shuffle=True)).crossbars_4x4 == 4
    assert compute_overheads(ArchConfig(shuffle=True, core=CoreDims(k0=20))).crossbars_4x4 == 5


# -- worked dual-sparse numbers -------------------------------------------------------------

def test_dual_worked_example():
    ov = compute_overheads(preset("sparse_ab_star"))
    assert (ov.abuf_depth, ov.bbuf_depth, ov.amux_fanin, ov.bmux_fanin) == (9, 3, 9, 3)
    assert ov.adder_trees_per_pe == 2
    assert ov.metadata_bits_per_b_element == 3


def test_conf_a_bmux_grows_to_five():
    assert compute_overheads(sa(2, 1, 1)).bmux_fanin == 5


def test_conf_b_metadata_width():
    # ceil(log2 9) + ceil(log2 1) + ceil(log2 2)
    assert compute_overheads(sb(8, 0, 1)).metadata_bits_per_b_element == 5


@pytest.mark.parametrize("d1,d2,d3,bits", [(0, 0, 0, 0), (1, 0, 0, 1), (2, 0, 1, 3), (3, 3, 3, 6),
                                            (4, 0, 1, 4), (7, 1, 0, 4)])
def test_metadata_field_widths(d1, d2, d3, bits):
    assert sum(BorrowWindow(d1, d2, d3).field_widths()) == bits


def test_griffin_dominates_its_targets():
    g = preset("griffin")
    ov = compute_overheads(g)
    for cat in (Category.AB, Category.A, Category.B):
        t = compute_overheads(morph(g, cat))
        assert all(getattr(ov, f) >= getattr(t, f) for f in ov.as_dict())


@pytest.mark.parametrize("mode", [Mode.SPARSE_A, Mode.SPARSE_B, Mode.SPARSE_AB])
def test_overheads_monotone_in_every_window_component(mode):
    fields_a = ["a_window"] if mode in (Mode.SPARSE_A, Mode.SPARSE_AB) else []
    fields_b = ["b_window"] if mode in (Mode.SPARSE_B, Mode.SPARSE_AB) else []
    grid = list(itertools.product(range(1, 3), range(0, 3), range(0, 3)))
    for base in grid:
        for name in fields_a + fields_b:
            for comp in range(3):
                up = list(base)
                up[comp] += 1
                kw = {f: base for f in fields_a + fields_b}
                lo = compute_overheads(ArchConfig(mode, **kw))
                kw[name] = tuple(up)
                hi = compute_overheads(ArchConfig(mode, **kw))
                for f, v in lo.as_dict().items():
                    assert getattr(hi, f) >= v, (mode, base, name, comp, f)


# -- validation ----------------------------------------------------------------------------

def test_dense_rejects_windows():
    with pytest.raises(ModeWindowMismatch):
        validate(ArchConfig(a_window=(1, 0, 0)))


def test_single_sparse_rejects_other_window():
    with pytest.raises(ModeWindowMismatch):
        validate(ArchConfig(Mode.SPARSE_A, a_window=(1, 0, 0), b_window=(1, 0, 0)))
    with pytest.raises(ModeWindowMismatch):
        validate(ArchConfig(Mode.SPARSE_B, a_window=(1, 0, 0), b_window=(1, 0, 0)))


def test_diagonal_borrow_needs_time():
    with pytest.raises(InvalidWindow):
        validate(sa(0, 1, 0))
    with pytest.raises(InvalidWindow):
        validate(sb(0, 0, 1))
    with pytest.raises(InvalidWindow):
        BorrowWindow(-1, 0, 0).check()


def test_degenerate_core():
    with pytest.raises(DegenerateCore):
        validate(ArchConfig(core=CoreDims(0, 16, 4)))


def test_dual_star_accepted():
    cfg = ArchConfig(Mode.SPARSE_AB, a_window=(2, 0, 0), b_window=(2, 0, 1), shuffle=True)
    assert validate(cfg) is cfg


def test_griffin_requires_both_confs():
    with pytest.raises(ModeWindowMismatch):
        validate(ArchConfig(Mode.GRIFFIN, a_window=(2, 0, 0), b_window=(2, 0, 1),
                            griffin_conf_a=(2, 1, 1)))


def test_griffin_morph_too_big():
    with pytest.raises(MorphExceedsHardware):
        validate(ArchConfig(Mode.GRIFFIN, a_window=(2, 0, 0), b_window=(2, 0, 1),
                            griffin_conf_a=(2, 1, 1), griffin_conf_b=(9, 0, 1)))
    with pytest.raises(MorphExceedsHardware):
        validate(ArchConfig(Mode.GRIFFIN, a_window=(2, 0, 0), b_window=(2, 0, 1),
                            griffin_conf_a=(2, 2, 2), griffin_conf_b=(8, 0, 1)))


def test_memory_must_be_positive():
    with pytest.raises(ValueError):
        validate(ArchConfig(memory=dataclasses.replace(MemoryParams(), banks_a=0)))


# -- morphing and presets ----------------------------------------------------------------

def test_morph_targets():
    g = preset("griffin")
    b = morph(g, "B")
    assert b.mode is Mode.SPARSE_B and tuple(b.b_window) == (8, 0, 1) and b.shuffle
    a = morph(g, Category.A)
    assert a.mode is Mode.SPARSE_A and tuple(a.a_window) == (2, 1, 1) and a.shuffle
    ab = morph(g, "AB")
    assert ab.mode is Mode.SPARSE_AB and tuple(ab.a_window) == (2, 0, 0)
    assert tuple(ab.b_window) == (2, 0, 1)
    assert morph(g, "dense").mode is Mode.DENSE
    for cat in Category:
        validate(morph(g, cat))


def test_presets():
    assert preset("sparse_b_star") == ArchConfig(Mode.SPARSE_B, b_window=(4, 0, 1), shuffle=True)
    assert preset("sparse_a_star") == ArchConfig(Mode.SPARSE_A, a_window=(2, 1, 0), shuffle=True)
    assert preset("sparse_ab_star").label == "AB(2,0,0,2,0,1,on)"
    d = preset("dense")
    assert d.a_window.is_zero and d.b_window.is_zero
    g = preset("griffin")
    assert tuple(g.griffin_conf_a) == (2, 1, 1) and tuple(g.griffin_conf_b) == (8, 0, 1)
    for name in ("dense", "sparse_b_star", "sparse_a_star", "sparse_ab_star", "griffin"):
        cfg = preset(name)
        assert (cfg.core.k0, cfg.core.n0, cfg.core.m0) == (16, 16, 4)
        assert cfg.memory == MemoryParams()
    with pytest.raises(UnknownPreset):
        preset("sparten")


def test_table4_memory_in_bytes_per_cycle():
    mem = MemoryParams.from_gbps(51.2, 204.8, 50.0)
    assert mem.asram_bw == pytest.approx(64.0)
    assert mem.bsram_bw == pytest.approx(256.0)
    assert mem.dram_bw == pytest.approx(62.5)


def test_provisioning():
    assert provision_factors(ArchConfig()) == (1, 1)
    assert provision_factors(sb(4, 0, 1)) == (5, 1)
    assert provision_factors(preset("sparse_ab_star")) == (9, 3)
    mem = effective_memory(sb(4, 0, 1), "provisioned")
    assert mem.asram_bw == 5 * 64 and mem.bsram_bw == 256


# -- configuration files ---------------------------------------------------------------

def test_config_round_trip(tmp_path):
    for name in ("dense", "sparse_ab_star", "griffin"):
        path = tmp_path / f"{name}.json"
        save_config(preset(name), path)
        assert load_config(path) == preset(name)


def test_config_unknown_key(tmp_path):
    data = preset("sparse_b_star").to_dict()
    data["b_window"]["d4"] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(UnknownConfigKey):
        load_config(path)
    data = preset("dense").to_dict()
    data["clock"] = 1
    path.write_text(json.dumps(data))
    with pytest.raises(UnknownConfigKey):
        load_config(path)
