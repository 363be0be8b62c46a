"""Cycle-level simulator and cost model for sparse GEMM accelerators with borrowing windows."""
__version__ = "0.1.0"
