"""Dense 2-D float tensors and the small kernel layer built on them.

Everything the matchers touch is a :class:`Tensor2D`: a C-contiguous
row-major matrix of float32 or float64. Precision is a run-wide choice and
never mixed inside one computation. Every public operation returns finite
entries or raises :class:`NumericError`.
"""

from __future__ import annotations

import json
import weakref
from pathlib import Path

import numpy as np

from .accounting import CATEGORY_WORKSPACE, active_ledgers
from .errors import ContractViolation, NumericError, ShapeError

DTYPES = {"float32": np.dtype(np.float32), "float64": np.dtype(np.float64)}
DEFAULT_DTYPE = "float64"

# Chunk size (elements) for finiteness scans; keeps the boolean temporary
# small even when validating multi-gigabyte buffers.
_FINITE_CHUNK = 1 << 22


def _dtype_of(dtype) -> np.dtype:
    if isinstance(dtype, np.dtype):
        name = dtype.name
    else:
        name = str(dtype)
    if name not in DTYPES:
        raise ContractViolation(f"unsupported dtype {name!r}; use float32 or float64")
    return DTYPES[name]


def ensure_finite(arr: np.ndarray, what: str = "result") -> None:
    flat = arr.reshape(-1)
    for start in range(0, flat.size, _FINITE_CHUNK):
        if not np.isfinite(flat[start : start + _FINITE_CHUNK]).all():
            raise NumericError(f"{what} contains non-finite values")


class Tensor2D:
    """Row-major (rows x cols) float matrix with tracked allocation.

    Construction validates shape and finiteness and reports the buffer size
    to any active :class:`AllocationLedger` under the given category.
    """

    def __init__(self, values, dtype=None, *, category: str = CATEGORY_WORKSPACE,
                 _skip_checks: bool = False):
        if _skip_checks:
            arr = values
        else:
            want = _dtype_of(dtype) if dtype is not None else None
            arr = np.asarray(values)
            if arr.dtype not in DTYPES.values() and want is None:
                want = DTYPES[DEFAULT_DTYPE]
            arr = np.ascontiguousarray(arr, dtype=want)
            if arr.ndim != 2:
                raise ShapeError(f"expected a 2-D matrix, got ndim={arr.ndim}")
            if arr.shape[0] < 1 or arr.shape[1] < 1:
                raise ShapeError(f"dimensions must be positive, got {arr.shape}")
            ensure_finite(arr, "Tensor2D data")
        self.array = arr
        self._category = category
        for ledger in active_ledgers():
            ledger.record_alloc(arr.nbytes, category)
            weakref.finalize(self, ledger.record_free, arr.nbytes, category)

    @classmethod
    def empty(cls, rows: int, cols: int, dtype=DEFAULT_DTYPE, *,
              category: str = CATEGORY_WORKSPACE) -> "Tensor2D":
        """Uninitialized scratch buffer; caller must fill before exposing."""
        if rows < 1 or cols < 1:
            raise ShapeError(f"dimensions must be positive, got ({rows}, {cols})")
        arr = np.empty((rows, cols), dtype=_dtype_of(dtype))
        return cls(arr, category=category, _skip_checks=True)

    @classmethod
    def zeros(cls, rows: int, cols: int, dtype=DEFAULT_DTYPE, *,
              category: str = CATEGORY_WORKSPACE) -> "Tensor2D":
        t = cls.empty(rows, cols, dtype, category=category)
        t.array.fill(0.0)
        return t

    @classmethod
    def ones(cls, rows: int, cols: int, dtype=DEFAULT_DTYPE, *,
             category: str = CATEGORY_WORKSPACE) -> "Tensor2D":
        t = cls.empty(rows, cols, dtype, category=category)
        t.array.fill(1.0)
        return t

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    @property
    def dtype(self) -> str:
        return self.array.dtype.name

    @property
    def nbytes(self) -> int:
        return self.array.nbytes

    def copy(self, *, category: str | None = None) -> "Tensor2D":
        cat = category if category is not None else self._category
        out = Tensor2D.empty(self.rows, self.cols, self.dtype, category=cat)
        np.copyto(out.array, self.array)
        return out

    def __repr__(self) -> str:
        return f"Tensor2D({self.rows}x{self.cols}, {self.dtype})"


def _check_same_dtype(*tensors: Tensor2D) -> str:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) != 1:
        raise ContractViolation(f"mixed dtypes in one computation: {sorted(dtypes)}")
    return dtypes.pop()


def matmul(a: Tensor2D, b: Tensor2D, *, category: str = CATEGORY_WORKSPACE) -> Tensor2D:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul mismatch: ({a.rows}x{a.cols}) @ ({b.rows}x{b.cols})")
    dtype = _check_same_dtype(a, b)
    out = Tensor2D.empty(a.rows, b.cols, dtype, category=category)
    np.matmul(a.array, b.array, out=out.array)
    ensure_finite(out.array, "matmul result")
    return out


def row_softmax(m: Tensor2D, *, category: str = CATEGORY_WORKSPACE) -> Tensor2D:
    """Softmax over each row, stabilized by subtracting the row max."""
    out = Tensor2D.empty(m.rows, m.cols, m.dtype, category=category)
    rowmax = Tensor2D.empty(m.rows, 1, m.dtype, category=category)
    np.amax(m.array, axis=1, keepdims=True, out=rowmax.array)
    np.subtract(m.array, rowmax.array, out=out.array)
    np.exp(out.array, out=out.array)
    rowsum = rowmax  # reuse: same shape, value no longer needed
    np.sum(out.array, axis=1, keepdims=True, out=rowsum.array)
    np.divide(out.array, rowsum.array, out=out.array)
    ensure_finite(out.array, "row_softmax result")
    return out


def safe_divide(numerator: Tensor2D, denominator: Tensor2D, epsilon: float = 1e-8,
                *, category: str = CATEGORY_WORKSPACE) -> Tensor2D:
    """Divide each row of `numerator` by the matching `denominator` row.

    `denominator` is a one-column matrix broadcast across the numerator's
    columns; `epsilon` is added to every denominator entry.
    """
    if denominator.cols != 1:
        raise ShapeError(f"denominator must have one column, got {denominator.cols}")
    if numerator.rows != denominator.rows:
        raise ShapeError(
            f"row mismatch: numerator has {numerator.rows}, denominator {denominator.rows}")
    if epsilon < 0:
        raise ContractViolation(f"epsilon must be >= 0, got {epsilon}")
    dtype = _check_same_dtype(numerator, denominator)
    out = Tensor2D.empty(numerator.rows, numerator.cols, dtype, category=category)
    den = denominator.array if epsilon == 0 else denominator.array + np.asarray(
        epsilon, dtype=denominator.array.dtype)
    np.divide(numerator.array, den, out=out.array)
    ensure_finite(out.array, "safe_divide result")
    return out


def write_tensor(tensor: Tensor2D, path) -> None:
    """Write raw little-endian payload at `path` plus a `path`.json sidecar."""
    path = Path(path)
    wire = "<f4" if tensor.dtype == "float32" else "<f8"
    path.write_bytes(np.ascontiguousarray(tensor.array, dtype=wire).tobytes())
    sidecar = {"rows": tensor.rows, "cols": tensor.cols, "dtype": tensor.dtype}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def read_tensor(path, *, category: str = CATEGORY_WORKSPACE) -> Tensor2D:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    dtype = _dtype_of(sidecar["dtype"])
    rows, cols = int(sidecar["rows"]), int(sidecar["cols"])
    wire = "<f4" if dtype == np.float32 else "<f8"
    raw = np.frombuffer(path.read_bytes(), dtype=wire)
    if raw.size != rows * cols:
        raise ShapeError(
            f"payload holds {raw.size} values, sidecar says {rows}x{cols}")
    arr = raw.reshape(rows, cols).astype(dtype)
    return Tensor2D(arr, category=category)
