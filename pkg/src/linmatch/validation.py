"""Input validation helpers shared by the estimator and pipeline layers."""

from __future__ import annotations

import numpy as np

from .accounting import CATEGORY_WORKSPACE
from .errors import ShapeError
from .tensor import Tensor2D


def as_tensor2d(x, dtype=None, *, name: str = "input",
                category: str = CATEGORY_WORKSPACE) -> Tensor2D:
    """Coerce an array-like or Tensor2D to a Tensor2D, validating as needed."""
    if isinstance(x, Tensor2D):
        if dtype is not None and x.dtype != str(dtype):
            raise ShapeError(f"{name} has dtype {x.dtype}, expected {dtype}")
        return x
    try:
        return Tensor2D(x, dtype=dtype, category=category)
    except (ShapeError, TypeError) as exc:
        raise ShapeError(f"{name}: {exc}") from exc


def check_shape(t: Tensor2D, rows: int | None = None, cols: int | None = None,
                *, name: str = "input") -> Tensor2D:
    if rows is not None and t.rows != rows:
        raise ShapeError(f"{name} has {t.rows} rows, expected {rows}")
    if cols is not None and t.cols != cols:
        raise ShapeError(f"{name} has {t.cols} cols, expected {cols}")
    return t


def as_bool_mask(m, *, name: str = "mask") -> np.ndarray:
    arr = np.asarray(m)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.dtype != np.bool_:
        arr = arr.astype(bool)
    return arr
