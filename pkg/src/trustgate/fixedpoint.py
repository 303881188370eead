"""Saturating Q-format fixed-point representation.

A value x is stored as round(x * 2**frac_bits) in a signed integer word of
``total_bits`` bits. Rounding is round-half-to-even; out-of-range values
saturate at the word limits instead of wrapping. Quantize/dequantize work
elementwise on scalars and arrays alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed Q-format: ``total_bits`` word with ``frac_bits`` fractional bits."""

    total_bits: int = 32
    frac_bits: int = 16
    rounding: str = "nearest-even"
    overflow: str = "saturate"

    def __post_init__(self):
        if self.total_bits not in (16, 32):
            raise ValueError("total_bits must be 16 or 32")
        if not 0 < self.frac_bits < self.total_bits:
            raise ValueError("frac_bits must satisfy 0 < frac_bits < total_bits")
        if self.rounding != "nearest-even":
            raise ValueError(f"unsupported rounding mode {self.rounding!r}")
        if self.overflow != "saturate":
            raise ValueError(f"unsupported overflow mode {self.overflow!r}")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def qmin(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def qmax(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.qmin / self.scale

    @property
    def max_value(self) -> float:
        return self.qmax / self.scale

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    @classmethod
    def from_string(cls, text: str) -> "FixedPointFormat":
        """Parse 'Qi.f' notation, e.g. 'Q16.16' (16 integer + 16 fractional bits)."""
        body = text.strip().lower().lstrip("q")
        try:
            int_bits, frac_bits = (int(part) for part in body.split("."))
        except ValueError as exc:
            raise ValueError(f"cannot parse fixed-point format {text!r}") from exc
        return cls(total_bits=int_bits + frac_bits, frac_bits=frac_bits)

    def __str__(self) -> str:
        return f"Q{self.total_bits - self.frac_bits}.{self.frac_bits}"


def quantize(x, fmt: FixedPointFormat):
    """Real -> stored integer: scale by 2**frac_bits, round half to even, saturate.

    Returns a python int for scalar input, an int64 array otherwise.
    """
    scaled = np.rint(np.asarray(x, dtype=np.float64) * fmt.scale)
    q = np.clip(scaled, fmt.qmin, fmt.qmax).astype(np.int64)
    if np.ndim(x) == 0:
        return int(q)
    return q


def dequantize(q, fmt: FixedPointFormat):
    """Stored integer -> real."""
    out = np.asarray(q, dtype=np.float64) / fmt.scale
    if np.ndim(q) == 0:
        return float(out)
    return out


def snap(x, fmt: FixedPointFormat):
    """Round-trip a value onto the representable grid (dequantize(quantize(x)))."""
    return dequantize(quantize(x, fmt), fmt)
