"""Data-dependent forget gating for the recurrent matching state.

A gate vector alpha in (0,1)^key_channels, extracted from frame features,
scales each row of S before the new frame is accumulated. Broadcast across
the value channels this is the low-rank gate matrix alpha 1^T acting
element-wise on the state.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .accounting import CATEGORY_STATE, CATEGORY_WORKSPACE
from .errors import ContractViolation, ShapeError
from .linear import MatchState, _check_frame, phi
from .tensor import Tensor2D, read_tensor, write_tensor

GATE_CLAMP = 1e-7  # entries kept inside [GATE_CLAMP, 1 - GATE_CLAMP]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form stays overflow-free for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class GateVector:
    """Per-key-channel forget factors, each strictly inside (0, 1)."""

    def __init__(self, alpha):
        arr = np.asarray(alpha)
        if arr.ndim == 2 and arr.shape[1] == 1:
            arr = arr[:, 0]
        if arr.ndim != 1:
            raise ShapeError(f"gate must be a vector, got ndim={arr.ndim}")
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not np.isfinite(arr).all():
            raise ContractViolation("gate contains non-finite entries")
        if (arr <= 0).any() or (arr >= 1).any():
            raise ContractViolation("gate entries must lie strictly in (0, 1)")
        self.alpha = arr

    def __len__(self) -> int:
        return self.alpha.shape[0]

    @property
    def dtype(self) -> str:
        return self.alpha.dtype.name


class GateProjector:
    """Per-position linear map from frame features to gate pre-activations.

    `weights` maps feature_channels -> key_channels at every spatial
    position; the projections are then reduced over positions (sum by
    default, mean as the saturation-safe option), offset by `bias`, and
    squashed by a sigmoid.
    """

    def __init__(self, weights: Tensor2D, bias, reduction: str = "sum"):
        if reduction not in ("sum", "mean"):
            raise ContractViolation(f"unknown reduction {reduction!r}")
        bias = np.ascontiguousarray(np.asarray(bias, dtype=weights.array.dtype))
        if bias.ndim != 1 or bias.shape[0] != weights.cols:
            raise ShapeError(
                f"bias must have {weights.cols} entries, got shape {bias.shape}")
        self.weights = weights
        self.bias = bias
        self.reduction = reduction

    @classmethod
    def seeded(cls, feature_channels: int, key_channels: int, seed: int = 0,
               reduction: str = "sum", dtype: str = "float64",
               bias_value: float = 0.0) -> "GateProjector":
        """Deterministic stand-in for a trained projector."""
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((feature_channels, key_channels))
        w /= np.sqrt(feature_channels)
        weights = Tensor2D(w, dtype=dtype)
        bias = np.full(key_channels, bias_value, dtype=weights.array.dtype)
        return cls(weights, bias, reduction)

    @property
    def feature_channels(self) -> int:
        return self.weights.rows

    @property
    def key_channels(self) -> int:
        return self.weights.cols


def gate_from_features(proj: GateProjector, features: Tensor2D) -> GateVector:
    """Project, reduce over positions, squash, clamp."""
    if features.cols != proj.feature_channels:
        raise ShapeError(
            f"features have {features.cols} channels, projector expects "
            f"{proj.feature_channels}")
    projected = features.array @ proj.weights.array
    reduced = projected.sum(axis=0)
    if proj.reduction == "mean":
        reduced = reduced / features.rows
    alpha = _sigmoid(reduced + proj.bias)
    np.clip(alpha, GATE_CLAMP, 1.0 - GATE_CLAMP, out=alpha)
    return GateVector(alpha)


def gated_state_absorb(state: MatchState, gate: GateVector, key: Tensor2D,
                       value: Tensor2D, gate_normalizer: bool = False) -> MatchState:
    """Decay the state row-wise by the gate, then fold in the new frame.

    S <- (alpha 1^T) * S + phi(K)^T V. The normalizer Z is gated the same
    way only when `gate_normalizer` is set; the default leaves Z an ungated
    running total.
    """
    if len(gate) != state.key_channels:
        raise ShapeError(
            f"gate has {len(gate)} entries, state expects {state.key_channels}")
    if (gate.alpha <= 0).any() or (gate.alpha >= 1).any():
        raise ContractViolation("gate entries must lie strictly in (0, 1)")
    _check_frame(state, key, value)
    alpha_col = gate.alpha.astype(state.S.array.dtype)[:, None]
    pk = phi(key)
    ones = Tensor2D.ones(key.rows, 1, key.dtype, category=CATEGORY_WORKSPACE)
    decayed = Tensor2D.empty(state.key_channels, state.value_channels, state.dtype,
                             category=CATEGORY_WORKSPACE)
    S = Tensor2D.empty(state.key_channels, state.value_channels, state.dtype,
                       category=CATEGORY_STATE)
    np.matmul(pk.array.T, value.array, out=S.array)
    np.multiply(state.S.array, alpha_col, out=decayed.array)
    np.add(S.array, decayed.array, out=S.array)
    Z = Tensor2D.empty(state.key_channels, 1, state.dtype, category=CATEGORY_STATE)
    np.matmul(pk.array.T, ones.array, out=Z.array)
    if gate_normalizer:
        decayed_z = Tensor2D.empty(state.key_channels, 1, state.dtype,
                                   category=CATEGORY_WORKSPACE)
        np.multiply(state.Z.array, alpha_col, out=decayed_z.array)
        np.add(Z.array, decayed_z.array, out=Z.array)
    else:
        np.add(Z.array, state.Z.array, out=Z.array)
    return MatchState(S, Z, state.frames_absorbed + 1)


def unrolled_gated_reference(keys, values, gates,
                             gate_normalizer: bool = False) -> MatchState:
    """Closed-form gated state: explicit product-of-gates summation.

    Brute-force oracle for the gated recurrence; no recurrence is used.
    S_T = sum_i (prod_{j>i} alpha_j 1^T) * phi(K_i)^T V_i.
    """
    if not (len(keys) == len(values) == len(gates)):
        raise ShapeError(
            f"got {len(keys)} keys, {len(values)} values, {len(gates)} gates")
    if not keys:
        raise ShapeError("need at least one frame")
    ck = keys[0].cols
    cv = values[0].cols
    dtype = keys[0].dtype
    S = np.zeros((ck, cv), dtype=keys[0].array.dtype)
    Z = np.zeros((ck, 1), dtype=keys[0].array.dtype)
    total = len(keys)
    for i in range(total):
        pk = phi(keys[i])
        decay = np.ones(ck, dtype=keys[0].array.dtype)
        for j in range(i + 1, total):
            decay = decay * gates[j].alpha.astype(decay.dtype)
        term_S = pk.array.T @ values[i].array
        term_Z = pk.array.T @ np.ones((keys[i].rows, 1), dtype=decay.dtype)
        S += decay[:, None] * term_S
        if gate_normalizer:
            Z += decay[:, None] * term_Z
        else:
            Z += term_Z
    return MatchState(Tensor2D(S, category=CATEGORY_STATE),
                      Tensor2D(Z, category=CATEGORY_STATE), total)


def save_projector(proj: GateProjector, path) -> None:
    """Write `path`.json header plus `path`.W raw weight payload."""
    path = Path(path)
    header = {
        "feature_channels": proj.feature_channels,
        "key_channels": proj.key_channels,
        "reduction": proj.reduction,
        "dtype": proj.weights.dtype,
        "bias": [float(b) for b in proj.bias],
    }
    Path(str(path) + ".json").write_text(json.dumps(header))
    write_tensor(proj.weights, str(path) + ".W")


def load_projector(path) -> GateProjector:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    weights = read_tensor(str(path) + ".W")
    return GateProjector(weights, np.asarray(header["bias"]), header["reduction"])
