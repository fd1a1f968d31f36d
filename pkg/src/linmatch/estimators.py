"""Scikit-learn style wrappers around the matching cores.

Each matcher is an estimator: `fit(keys, values)` loads a memory,
`partial_fit` streams one frame at a time, and `transform(query_key)`
retrieves the query's value readout as a plain ndarray. Parameters follow
sklearn conventions so `get_params`/`set_params`/`clone` work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .gating import GateProjector, gate_from_features, gated_state_absorb
from .linear import MatchState, state_absorb, state_readout
from .softmax import DEFAULT_DIVIDE_EPSILON, MemoryBank, softmax_match
from .validation import as_tensor2d


def _frames(keys, values, dtype):
    keys = [as_tensor2d(k, dtype, name="key") for k in keys]
    values = [as_tensor2d(v, dtype, name="value") for v in values]
    if len(keys) != len(values):
        raise ValueError(f"got {len(keys)} keys but {len(values)} values")
    return keys, values


class SoftmaxMatcher(BaseEstimator):
    """Quadratic space-time matching against an explicit memory bank."""

    def __init__(self, dtype="float64", divide_epsilon=DEFAULT_DIVIDE_EPSILON):
        self.dtype = dtype
        self.divide_epsilon = divide_epsilon

    def fit(self, keys, values):
        self.bank_ = MemoryBank(self.dtype)
        return self.partial_fit_many(keys, values)

    def partial_fit_many(self, keys, values):
        keys, values = _frames(keys, values, self.dtype)
        for k, v in zip(keys, values):
            self.partial_fit(k, v)
        return self

    def partial_fit(self, key, value):
        if not hasattr(self, "bank_"):
            self.bank_ = MemoryBank(self.dtype)
        self.bank_.append(as_tensor2d(key, self.dtype, name="key"),
                          as_tensor2d(value, self.dtype, name="value"))
        return self

    def transform(self, query_key) -> np.ndarray:
        if not hasattr(self, "bank_") or self.bank_.frame_count == 0:
            raise NotFittedError("matcher holds no memory frames")
        qk = as_tensor2d(query_key, self.dtype, name="query_key")
        return softmax_match(self.bank_, qk, self.divide_epsilon).array


class LinearMatcher(BaseEstimator):
    """Constant-state recurrent matching; memory collapses into (S, Z)."""

    def __init__(self, dtype="float64", divide_epsilon=DEFAULT_DIVIDE_EPSILON):
        self.dtype = dtype
        self.divide_epsilon = divide_epsilon

    def fit(self, keys, values):
        if hasattr(self, "state_"):
            del self.state_
        keys, values = _frames(keys, values, self.dtype)
        for k, v in zip(keys, values):
            self.partial_fit(k, v)
        return self

    def partial_fit(self, key, value):
        key = as_tensor2d(key, self.dtype, name="key")
        value = as_tensor2d(value, self.dtype, name="value")
        if not hasattr(self, "state_"):
            self.state_ = MatchState.zero(key.cols, value.cols, self.dtype)
        self.state_ = state_absorb(self.state_, key, value)
        return self

    def transform(self, query_key) -> np.ndarray:
        if not hasattr(self, "state_") or self.state_.frames_absorbed == 0:
            raise NotFittedError("matcher has absorbed no frames")
        qk = as_tensor2d(query_key, self.dtype, name="query_key")
        return state_readout(self.state_, qk, self.divide_epsilon).array


class GatedLinearMatcher(LinearMatcher):
    """Linear matching with a data-dependent forget gate on the state.

    Every `partial_fit` needs the frame's feature map; the gate is derived
    from it by the projector (built deterministically from `gate_seed` on
    first use when no projector instance is supplied).
    """

    def __init__(self, dtype="float64", divide_epsilon=DEFAULT_DIVIDE_EPSILON,
                 gate_projector=None, gate_seed=0, gate_reduction="sum",
                 gate_bias=0.0, gate_normalizer=False):
        super().__init__(dtype=dtype, divide_epsilon=divide_epsilon)
        self.gate_projector = gate_projector
        self.gate_seed = gate_seed
        self.gate_reduction = gate_reduction
        self.gate_bias = gate_bias
        self.gate_normalizer = gate_normalizer

    def fit(self, keys, values, features):
        if hasattr(self, "state_"):
            del self.state_
        keys, values = _frames(keys, values, self.dtype)
        if len(features) != len(keys):
            raise ValueError(f"got {len(keys)} keys but {len(features)} features")
        for k, v, f in zip(keys, values, features):
            self.partial_fit(k, v, f)
        return self

    def partial_fit(self, key, value, features):
        key = as_tensor2d(key, self.dtype, name="key")
        value = as_tensor2d(value, self.dtype, name="value")
        feats = as_tensor2d(features, self.dtype, name="features")
        if not hasattr(self, "projector_"):
            if self.gate_projector is not None:
                self.projector_ = self.gate_projector
            else:
                self.projector_ = GateProjector.seeded(
                    feats.cols, key.cols, seed=self.gate_seed,
                    reduction=self.gate_reduction, dtype=self.dtype,
                    bias_value=self.gate_bias)
        self._gate = gate_from_features(self.projector_, feats)
        if not hasattr(self, "state_"):
            self.state_ = MatchState.zero(key.cols, value.cols, self.dtype)
        self.state_ = gated_state_absorb(self.state_, self._gate, key, value,
                                         self.gate_normalizer)
        return self
