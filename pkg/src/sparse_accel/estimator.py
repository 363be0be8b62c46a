"""scikit-learn style facade: fit() preprocesses the weight operand, predict() runs the accelerator.

>>> acc = SparseAccelerator(preset="sparse_b_star").fit(weights)   # B is (k, n)
>>> out = acc.predict(activations)                                  # A is (m, k)
>>> acc.report_.speedup
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .arch_config import ArchConfig, Category, Mode, effective_memory, morph, preset as _preset, validate
from .engine import SimReport, prepare_b, simulate, uses_compressed_b
from .workload import GemmProblem


class SparseAccelerator(BaseEstimator):
    """Integer GEMM ``A @ B`` on a simulated sparse core.

    Parameters
    ----------
    preset : name of a built-in design, used when ``config`` is None.
    config : an ArchConfig; overrides ``preset``.
    category : for Griffin designs, which mode to morph into (default AB).
    bandwidth : SRAM bandwidth policy passed to the engine.
    """

    def __init__(self, preset: str = "dense", config: ArchConfig | None = None,
                 category: str = "AB", bandwidth: str = "provisioned"):
        self.preset = preset
        self.config = config
        self.category = category
        self.bandwidth = bandwidth

    def _config(self) -> ArchConfig:
        return validate(self.config) if self.config is not None else _preset(self.preset)

    def fit(self, X, y=None):
        """Store and (if the design compresses B) preprocess the weight matrix ``X`` of shape (k, n)."""
        b = check_array(X, dtype=None, ensure_min_samples=1)
        if not np.all((b >= -128) & (b <= 127)) or not np.all(b == np.round(b)):
            raise ValueError("weights must be int8-representable integers")
        self.config_ = self._config()
        self.weights_ = b.astype(np.int8)
        self.n_features_in_ = b.shape[0]
        self.target_ = self.config_
        if self.config_.mode is Mode.GRIFFIN:
            self.target_ = morph(self.config_, Category(self.category))
        dummy = GemmProblem.from_arrays(np.zeros((1, b.shape[0]), np.int8), self.weights_)
        self.stream_ = prepare_b(dummy, self.target_) if uses_compressed_b(self.target_) else None
        return self

    def predict(self, X) -> np.ndarray:
        """Compute ``X @ weights`` (int64) on the simulated core; the run is kept in ``report_``."""
        check_is_fitted(self, "weights_")
        a = check_array(X, dtype=None, ensure_min_samples=1)
        if a.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {a.shape[1]} columns, weights expect {self.n_features_in_}")
        if not np.all((a >= -128) & (a <= 127)) or not np.all(a == np.round(a)):
            raise ValueError("activations must be int8-representable integers")
        problem = GemmProblem.from_arrays(a.astype(np.int8), self.weights_)
        bandwidth = self.bandwidth
        if self.config_.mode is Mode.GRIFFIN:
            # the morphed design still runs on the union hardware's memory system
            bandwidth = effective_memory(self.config_, self.bandwidth)
        self.report_: SimReport = simulate(problem, self.target_, self.stream_, bandwidth=bandwidth)
        if not self.report_.functional_ok:
            raise RuntimeError("simulated result differs from the reference GEMM")
        return problem.a.astype(np.int64) @ problem.b.astype(np.int64)

    def score(self, X, y=None) -> float:
        """Speedup over the dense core on ``X``."""
        self.predict(X)
        return self.report_.speedup
