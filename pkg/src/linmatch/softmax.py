"""Classical space-time softmax matching against an explicit memory bank.

This is the quadratic baseline: each query position attends to every stored
memory position through exponentiated dot products. It doubles as the
correctness oracle for the linear matcher when both run the same kernel
feature map.
"""

from __future__ import annotations

import numpy as np

from .accounting import (CATEGORY_ATTENTION, CATEGORY_BANK, CATEGORY_READOUT,
                         CATEGORY_WORKSPACE)
from .errors import ContractViolation, ShapeError
from .tensor import Tensor2D, ensure_finite, row_softmax, safe_divide

DEFAULT_DIVIDE_EPSILON = 1e-8


class MemoryBank:
    """Ordered per-frame key/value storage for softmax-style matching."""

    def __init__(self, dtype: str = "float64"):
        self.keys: list[Tensor2D] = []
        self.values: list[Tensor2D] = []
        self._dtype = dtype

    @property
    def frame_count(self) -> int:
        return len(self.keys)

    @property
    def dtype(self) -> str:
        return self._dtype

    def append(self, key: Tensor2D, value: Tensor2D) -> None:
        if key.dtype != self._dtype or value.dtype != self._dtype:
            raise ContractViolation(
                f"bank is {self._dtype}, got key {key.dtype} / value {value.dtype}")
        if key.rows != value.rows:
            raise ShapeError(
                f"key has {key.rows} positions but value has {value.rows}")
        if self.keys:
            if key.rows != self.keys[0].rows or key.cols != self.keys[0].cols:
                raise ShapeError(
                    f"frame key {key.rows}x{key.cols} does not match bank "
                    f"{self.keys[0].rows}x{self.keys[0].cols}")
            if value.cols != self.values[0].cols:
                raise ShapeError(
                    f"frame value has {value.cols} channels, bank has "
                    f"{self.values[0].cols}")
        self.keys.append(key.copy(category=CATEGORY_BANK))
        self.values.append(value.copy(category=CATEGORY_BANK))

    def _require_query(self, query_key: Tensor2D) -> None:
        if not self.keys:
            raise ShapeError("memory bank is empty")
        if query_key.cols != self.keys[0].cols:
            raise ShapeError(
                f"query has {query_key.cols} key channels, bank has "
                f"{self.keys[0].cols}")
        if query_key.dtype != self._dtype:
            raise ContractViolation(
                f"bank is {self._dtype}, query is {query_key.dtype}")


def exp_similarity(query_key: Tensor2D, memory_key: Tensor2D) -> Tensor2D:
    """exp(Q K^T): the similarity that makes generalized matching softmax."""
    if query_key.cols != memory_key.cols:
        raise ShapeError(
            f"key channel mismatch: {query_key.cols} vs {memory_key.cols}")
    out = Tensor2D.empty(query_key.rows, memory_key.rows, query_key.dtype,
                         category=CATEGORY_ATTENTION)
    np.matmul(query_key.array, memory_key.array.T, out=out.array)
    np.exp(out.array, out=out.array)
    ensure_finite(out.array, "exponential similarity (scale keys down)")
    return out


def kernel_similarity(query_key: Tensor2D, memory_key: Tensor2D) -> Tensor2D:
    """phi(Q) phi(K)^T with phi = row-wise softmax."""
    if query_key.cols != memory_key.cols:
        raise ShapeError(
            f"key channel mismatch: {query_key.cols} vs {memory_key.cols}")
    pq = row_softmax(query_key)
    pk = row_softmax(memory_key)
    out = Tensor2D.empty(query_key.rows, memory_key.rows, query_key.dtype,
                         category=CATEGORY_ATTENTION)
    np.matmul(pq.array, pk.array.T, out=out.array)
    ensure_finite(out.array, "kernel similarity")
    return out


def _accumulate_match(bank: MemoryBank, query_key: Tensor2D, sim,
                      divide_epsilon: float, check_nonnegative: bool) -> Tensor2D:
    bank._require_query(query_key)
    hw = query_key.rows
    cv = bank.values[0].cols
    dtype = bank.dtype
    num = Tensor2D.zeros(hw, cv, dtype, category=CATEGORY_WORKSPACE)
    den = Tensor2D.zeros(hw, 1, dtype, category=CATEGORY_WORKSPACE)
    ones = Tensor2D.ones(bank.keys[0].rows, 1, dtype, category=CATEGORY_WORKSPACE)
    tmp_num = Tensor2D.empty(hw, cv, dtype, category=CATEGORY_WORKSPACE)
    tmp_den = Tensor2D.empty(hw, 1, dtype, category=CATEGORY_WORKSPACE)
    for key_i, value_i in zip(bank.keys, bank.values):
        weights = sim(query_key, key_i)
        if not isinstance(weights, Tensor2D):
            weights = Tensor2D(weights, dtype=dtype)
        if weights.rows != hw or weights.cols != key_i.rows:
            raise ShapeError(
                f"similarity returned {weights.rows}x{weights.cols}, expected "
                f"{hw}x{key_i.rows}")
        if check_nonnegative and (weights.array < 0).any():
            raise ContractViolation("similarity produced negative entries")
        np.matmul(weights.array, value_i.array, out=tmp_num.array)
        np.add(num.array, tmp_num.array, out=num.array)
        np.matmul(weights.array, ones.array, out=tmp_den.array)
        np.add(den.array, tmp_den.array, out=den.array)
    return safe_divide(num, den, divide_epsilon, category=CATEGORY_READOUT)


def softmax_match(bank: MemoryBank, query_key: Tensor2D,
                  divide_epsilon: float = DEFAULT_DIVIDE_EPSILON) -> Tensor2D:
    """Match a query against the whole bank with exponential attention.

    Accumulates exp(Q K_i^T) V_i and exp(Q K_i^T) 1 frame by frame, then
    divides row-wise. Output rows are convex combinations of memory value
    rows. Raises NumericError when the exponentials overflow.
    """
    return _accumulate_match(bank, query_key, exp_similarity, divide_epsilon,
                             check_nonnegative=False)


def generalized_match(bank: MemoryBank, query_key: Tensor2D, sim,
                      divide_epsilon: float = DEFAULT_DIVIDE_EPSILON) -> Tensor2D:
    """Memory matching for any non-negative similarity function.

    `sim(query_key, memory_key)` must return a non-negative matrix with one
    row per query position and one column per memory position of that frame.
    With `exp_similarity` this reproduces `softmax_match` exactly; with
    `kernel_similarity` it reproduces the parallel linear matcher.
    """
    return _accumulate_match(bank, query_key, sim, divide_epsilon,
                             check_nonnegative=True)
