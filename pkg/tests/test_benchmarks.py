import pytest

from sparse_accel.arch_config import Category
from sparse_accel.benchmarks import (
    BENCHMARK_NAMES,
    benchmark,
    benchmark_workloads,
    network_dense_cycles,
    truncate_gemm,
)
from sparse_accel.workload import operand_density


def test_reference_sparsity_ratios():
    expect = {"alexnet": (0.89, 0.53), "googlenet": (0.82, 0.37), "resnet50": (0.81, 0.43),
              "inceptionv3": (0.79, 0.46), "mobilenetv2": (0.81, 0.52), "bert": (0.82, 0.0)}
    for name, (sb, sa) in expect.items():
        b = benchmark(name)
        assert (b.sparsity_b, b.sparsity_a) == (sb, sa)
    assert benchmark("bert").category is Category.B
    assert benchmark("alexnet").category is Category.AB


def test_densities_per_category():
    b = benchmark("alexnet")
    assert b.densities("B") == (1.0, pytest.approx(0.11))
    assert b.densities("A") == (pytest.approx(0.47), 1.0)
    assert b.densities("dense") == (1.0, 1.0)


def test_alexnet_dense_cycles_frozen():
    # grouped conv2/4/5 as separate GEMMs, output-pixel rows
    assert network_dense_cycles(benchmark("alexnet")) == 887554


@pytest.mark.xfail(strict=True, reason="layer-shape accounting lands 11% below the published "
                                       "AlexNet dense latency")
def test_alexnet_dense_cycles_near_reference():
    assert abs(network_dense_cycles(benchmark("alexnet")) - 1.0e6) <= 0.10e6


def test_bert_dense_cycles_near_reference():
    assert abs(network_dense_cycles(benchmark("bert")) - 5.3e6) <= 0.10 * 5.3e6


def test_truncate():
    assert truncate_gemm(3025, 363, 96) == (28, 363, 96)
    assert truncate_gemm(1, 9216, 4096, 10 ** 6) == (1, 9216, 108)
    assert truncate_gemm(10, 10, 10) == (10, 10, 10)
    for dims in [(3025, 363, 96), (1, 9216, 4096), (64, 10 ** 7, 1)]:
        m, k, n = truncate_gemm(*dims)
        assert m * k * n <= 10 ** 6


def test_workloads_follow_category():
    layers = benchmark_workloads(benchmark("resnet50"), "B", seed=0)
    assert len(layers) == len(benchmark("resnet50").layers)
    da, db = operand_density(layers[5].problem)
    assert da == 1.0 and abs(db - 0.19) < 0.02
    assert all(lw.problem.macs <= 10 ** 6 for lw in layers)
    again = benchmark_workloads(benchmark("resnet50"), "B", seed=0)
    assert all((x.problem.b == y.problem.b).all() for x, y in zip(layers, again))


def test_unknown_benchmark():
    with pytest.raises(KeyError):
        benchmark("vgg")
    assert len(BENCHMARK_NAMES) == 6
