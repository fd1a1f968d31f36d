"""Kernelized linear matching with a constant-size recurrent state.

Replacing exp(Q K^T) by phi(Q) phi(K)^T and reassociating the products lets
the whole memory collapse into two accumulators whose size depends only on
the channel counts: S (key_channels x value_channels) and the normalizer Z
(key_channels x 1). Absorbing a frame is a rank-reduced update; reading out
a query is two small matrix products plus a guarded division.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .accounting import CATEGORY_READOUT, CATEGORY_STATE, CATEGORY_WORKSPACE
from .errors import EmptyStateError, ShapeError
from .softmax import DEFAULT_DIVIDE_EPSILON, MemoryBank
from .tensor import Tensor2D, row_softmax, safe_divide, read_tensor, write_tensor


def phi(key: Tensor2D) -> Tensor2D:
    """The kernel feature map: softmax applied row-wise to the keys."""
    return row_softmax(key)


class MatchState:
    """The recurrent pair (S, Z) plus a frame counter.

    Size is a function of the channel counts only; it never grows with the
    number of absorbed frames or with spatial resolution. Updates are value
    semantic: absorbing returns a new state and leaves the input untouched.
    """

    def __init__(self, S: Tensor2D, Z: Tensor2D, frames_absorbed: int = 0):
        if Z.cols != 1:
            raise ShapeError(f"Z must have one column, got {Z.cols}")
        if S.rows != Z.rows:
            raise ShapeError(f"S has {S.rows} rows but Z has {Z.rows}")
        if S.dtype != Z.dtype:
            raise ShapeError(f"S is {S.dtype} but Z is {Z.dtype}")
        if frames_absorbed < 0:
            raise ShapeError("frames_absorbed must be >= 0")
        self.S = S
        self.Z = Z
        self.frames_absorbed = frames_absorbed

    @classmethod
    def zero(cls, key_channels: int, value_channels: int,
             dtype: str = "float64") -> "MatchState":
        S = Tensor2D.zeros(key_channels, value_channels, dtype,
                           category=CATEGORY_STATE)
        Z = Tensor2D.zeros(key_channels, 1, dtype, category=CATEGORY_STATE)
        return cls(S, Z, 0)

    @property
    def key_channels(self) -> int:
        return self.S.rows

    @property
    def value_channels(self) -> int:
        return self.S.cols

    @property
    def dtype(self) -> str:
        return self.S.dtype

    @property
    def nbytes(self) -> int:
        """Accounted byte size of the state buffers."""
        return self.S.nbytes + self.Z.nbytes

    def __repr__(self) -> str:
        return (f"MatchState({self.key_channels}x{self.value_channels}, "
                f"{self.dtype}, frames={self.frames_absorbed})")


def _check_frame(state: MatchState, key: Tensor2D, value: Tensor2D) -> None:
    if key.rows != value.rows:
        raise ShapeError(f"key has {key.rows} positions, value has {value.rows}")
    if key.cols != state.key_channels:
        raise ShapeError(
            f"key has {key.cols} channels, state expects {state.key_channels}")
    if value.cols != state.value_channels:
        raise ShapeError(
            f"value has {value.cols} channels, state expects {state.value_channels}")


def state_absorb(state: MatchState, key: Tensor2D, value: Tensor2D) -> MatchState:
    """Fold one frame into the state: S += phi(K)^T V, Z += phi(K)^T 1."""
    _check_frame(state, key, value)
    pk = phi(key)
    ones = Tensor2D.ones(key.rows, 1, key.dtype, category=CATEGORY_WORKSPACE)
    S = Tensor2D.empty(state.key_channels, state.value_channels, state.dtype,
                       category=CATEGORY_STATE)
    np.matmul(pk.array.T, value.array, out=S.array)
    np.add(S.array, state.S.array, out=S.array)
    Z = Tensor2D.empty(state.key_channels, 1, state.dtype, category=CATEGORY_STATE)
    np.matmul(pk.array.T, ones.array, out=Z.array)
    np.add(Z.array, state.Z.array, out=Z.array)
    return MatchState(S, Z, state.frames_absorbed + 1)


def state_readout(state: MatchState, query_key: Tensor2D,
                  divide_epsilon: float = DEFAULT_DIVIDE_EPSILON) -> Tensor2D:
    """Retrieve the query's value: phi(K_q) S / phi(K_q) Z."""
    if state.frames_absorbed < 1:
        raise EmptyStateError("state has absorbed no frames")
    if query_key.cols != state.key_channels:
        raise ShapeError(
            f"query has {query_key.cols} channels, state expects "
            f"{state.key_channels}")
    pq = phi(query_key)
    num = Tensor2D.empty(query_key.rows, state.value_channels, state.dtype,
                         category=CATEGORY_READOUT)
    np.matmul(pq.array, state.S.array, out=num.array)
    den = Tensor2D.empty(query_key.rows, 1, state.dtype, category=CATEGORY_READOUT)
    np.matmul(pq.array, state.Z.array, out=den.array)
    return safe_divide(num, den, divide_epsilon, category=CATEGORY_READOUT)


def linear_match_parallel(bank: MemoryBank, query_key: Tensor2D,
                          divide_epsilon: float = DEFAULT_DIVIDE_EPSILON) -> Tensor2D:
    """One-pass kernelized matching over a whole bank.

    Computes phi(K_q) * sum_i phi(K_i)^T V_i over phi(K_q) * sum_i phi(K_i)^T 1.
    Algebraically identical to running generalized matching with the
    phi-kernel similarity, but never materializes an attention matrix.
    """
    bank._require_query(query_key)
    ck = bank.keys[0].cols
    cv = bank.values[0].cols
    dtype = bank.dtype
    S_sum = Tensor2D.zeros(ck, cv, dtype, category=CATEGORY_WORKSPACE)
    Z_sum = Tensor2D.zeros(ck, 1, dtype, category=CATEGORY_WORKSPACE)
    ones = Tensor2D.ones(bank.keys[0].rows, 1, dtype, category=CATEGORY_WORKSPACE)
    tmp_S = Tensor2D.empty(ck, cv, dtype, category=CATEGORY_WORKSPACE)
    tmp_Z = Tensor2D.empty(ck, 1, dtype, category=CATEGORY_WORKSPACE)
    for key_i, value_i in zip(bank.keys, bank.values):
        pk = phi(key_i)
        np.matmul(pk.array.T, value_i.array, out=tmp_S.array)
        np.add(S_sum.array, tmp_S.array, out=S_sum.array)
        np.matmul(pk.array.T, ones.array, out=tmp_Z.array)
        np.add(Z_sum.array, tmp_Z.array, out=Z_sum.array)
    pq = phi(query_key)
    num = Tensor2D.empty(query_key.rows, cv, dtype, category=CATEGORY_READOUT)
    np.matmul(pq.array, S_sum.array, out=num.array)
    den = Tensor2D.empty(query_key.rows, 1, dtype, category=CATEGORY_READOUT)
    np.matmul(pq.array, Z_sum.array, out=den.array)
    return safe_divide(num, den, divide_epsilon, category=CATEGORY_READOUT)


def save_state(state: MatchState, path) -> None:
    """Write `path`.json header plus `path`.S / `path`.Z raw payloads."""
    path = Path(path)
    header = {
        "key_channels": state.key_channels,
        "value_channels": state.value_channels,
        "frames_absorbed": state.frames_absorbed,
        "dtype": state.dtype,
    }
    Path(str(path) + ".json").write_text(json.dumps(header))
    write_tensor(state.S, str(path) + ".S")
    write_tensor(state.Z, str(path) + ".Z")


def load_state(path) -> MatchState:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    S = read_tensor(str(path) + ".S", category=CATEGORY_STATE)
    Z = read_tensor(str(path) + ".Z", category=CATEGORY_STATE)
    state = MatchState(S, Z, int(header["frames_absorbed"]))
    if state.key_channels != header["key_channels"] or \
            state.value_channels != header["value_channels"] or \
            state.dtype != header["dtype"]:
        raise ShapeError(f"state payloads do not match header at {path}")
    return state
