"""k-bit weight and activation quantizers.

Weights are clipped to [-1, 1] and snapped to a symmetric grid with
``2**(k-1) - 1`` steps per side, so one bit is spent on sign. Activations are
clipped to [0, 1] and snapped to ``2**k - 1`` steps. ``k == 32`` is the
full-precision mode and leaves values untouched.

Rounding is half-away-from-zero everywhere, which keeps the weight grid
symmetric under negation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, InvariantViolation
from .tensor import as_tensor

FULL_PRECISION = 32


class Kind(str, enum.Enum):
    WEIGHT = "weight"
    ACTIVATION = "activation"


@dataclass(frozen=True)
class QuantSpec:
    """Bit-width of one tensor class."""

    k: int
    kind: Kind

    def __post_init__(self):
        check_bits(self.k)
        object.__setattr__(self, "kind", Kind(self.kind))

    @property
    def full_precision(self) -> bool:
        return self.k == FULL_PRECISION

    @property
    def scale(self) -> float:
        return level_scale(self.k, self.kind)


def check_bits(k) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise ConfigurationError(f"bit-width must be an integer, got {k!r}")
    if not 1 <= k <= FULL_PRECISION:
        raise ConfigurationError(f"bit-width must lie in [1, 32], got {k}")
    return int(k)


def weight_steps(k: int) -> int:
    """Positive code range of a k-bit weight; 1 for the binary k=1 mode."""
    return 1 if k == 1 else 2 ** (k - 1) - 1


def activation_steps(k: int) -> int:
    return 2**k - 1


def level_scale(k: int, kind: Kind) -> float:
    """Spacing between adjacent levels (1.0 in full precision)."""
    if k == FULL_PRECISION:
        return 1.0
    steps = weight_steps(k) if Kind(kind) is Kind.WEIGHT else activation_steps(k)
    return 1.0 / steps


def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    whole = np.trunc(x)
    # x - trunc(x) is exact in binary64, so ties are detected exactly
    frac = x - whole
    return whole + np.where(np.abs(frac) >= 0.5, np.sign(x), 0.0)


# Fraction of a step below a rounding tie that still rounds up. Average
# pooling puts even factors into activation denominators, so exact ties can
# occur; float and integer evaluation then land a few ulps either side of
# the tie, and this margin makes both round it the same way.
TIE_MARGIN = 1e-9


def activation_codes(a, k: int) -> np.ndarray:
    """Integer codes ``round((2**k - 1) * clip(a, 0, 1))`` for k < 32, as float64."""
    steps = activation_steps(k)
    return np.floor(steps * np.clip(a, 0.0, 1.0) + (0.5 + TIE_MARGIN))


def quantize_weights(w, k: int) -> np.ndarray:
    k = check_bits(k)
    w = as_tensor(w).astype(np.float64, copy=False)
    if k == FULL_PRECISION:
        return w.copy()
    clipped = np.clip(w, -1.0, 1.0)
    if k == 1:
        # binary mode: the level formula has a zero denominator here
        return np.where(clipped >= 0.0, 1.0, -1.0)
    steps = weight_steps(k)
    return round_half_away(steps * clipped) / steps


def quantize_activations(a, k: int, literal: bool = False) -> np.ndarray:
    """Snap activations to the k-bit grid on [0, 1].

    ``literal=True`` divides by ``2**(k-1)`` instead of ``2**k - 1``. That
    variant exists for comparison only: for k >= 2 it maps 1.0 to values
    above 1, so its outputs leave the activation range.
    """
    k = check_bits(k)
    a = as_tensor(a).astype(np.float64, copy=False)
    if k == FULL_PRECISION:
        return a.copy()
    steps = activation_steps(k)
    codes = activation_codes(a, k)
    if literal:
        return codes / 2 ** (k - 1)
    return codes / steps


def quantize(x, spec: QuantSpec) -> np.ndarray:
    if spec.kind is Kind.WEIGHT:
        return quantize_weights(x, spec.k)
    return quantize_activations(x, spec.k)


def clip_interval(kind: Kind) -> tuple[float, float]:
    return (-1.0, 1.0) if Kind(kind) is Kind.WEIGHT else (0.0, 1.0)


def quantizer_backward(upstream, pre_clip_input, interval=(0.0, 1.0)) -> np.ndarray:
    """Straight-through gradient: rounding is treated as identity, clipping is not.

    The gradient passes wherever the input lies in the closed ``interval``.
    """
    upstream = as_tensor(upstream)
    x = as_tensor(pre_clip_input)
    if upstream.shape != x.shape:
        raise DimensionError(f"gradient shape {upstream.shape} does not match input shape {x.shape}")
    lo, hi = interval
    return np.where((x >= lo) & (x <= hi), upstream, 0.0)


def spec_backward(upstream, pre_clip_input, spec: QuantSpec) -> np.ndarray:
    """STE backward for a quantizer with the given spec; identity in full precision."""
    if spec.full_precision:
        return as_tensor(upstream)
    return quantizer_backward(upstream, pre_clip_input, clip_interval(spec.kind))


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """Integer codes plus the float scale that maps them back to values.

    In full-precision mode ``codes`` holds the float values themselves and
    ``scale`` is 1.0.
    """

    codes: np.ndarray
    scale: float
    shape: tuple
    kind: Kind
    k: int

    @property
    def full_precision(self) -> bool:
        return self.k == FULL_PRECISION

    def code_bounds(self) -> tuple[int, int]:
        if self.kind is Kind.WEIGHT:
            steps = weight_steps(self.k)
            return -steps, steps
        return 0, activation_steps(self.k)


def to_codes(t, spec: QuantSpec) -> QuantizedTensor:
    t = as_tensor(t).astype(np.float64, copy=False)
    if spec.full_precision:
        return QuantizedTensor(t.copy(), 1.0, t.shape, spec.kind, spec.k)
    q = quantize(t, spec)
    if spec.kind is Kind.WEIGHT:
        steps = weight_steps(spec.k)
    else:
        steps = activation_steps(spec.k)
    codes = round_half_away(q * steps).astype(np.int64)
    out = QuantizedTensor(codes, 1.0 / steps, t.shape, spec.kind, spec.k)
    lo, hi = out.code_bounds()
    if codes.size and (codes.min() < lo or codes.max() > hi):
        raise InvariantViolation(f"codes escaped [{lo}, {hi}] for {spec}")
    if spec.k == 1 and spec.kind is Kind.WEIGHT and np.any(codes == 0):
        raise InvariantViolation("binary weight codes must be +-1")
    return out


def from_codes(q: QuantizedTensor) -> np.ndarray:
    if q.full_precision:
        return np.asarray(q.codes, dtype=np.float64).reshape(q.shape).copy()
    lo, hi = q.code_bounds()
    codes = np.asarray(q.codes)
    if codes.size and (codes.min() < lo or codes.max() > hi):
        raise InvariantViolation(f"codes escaped [{lo}, {hi}]")
    return (codes * q.scale).reshape(q.shape)
