"""Logarithmic approximation and logarithmic temporal coding.

A nonnegative activation is approximated by keeping only the powers of two
whose exponents fall in a closed integer range ``{e_min..e_max}``. Each
retained power ``2**e`` becomes one spike at time ``e_max - e`` inside a
window of ``T = e_max - e_min + 1`` steps.

All arithmetic is done with ``math.ldexp``/``math.frexp`` so that every
boundary value ``2**k`` is classified exactly.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, WindowMismatchError

__all__ = [
    "ExponentRange",
    "SpikeTrain",
    "LaVariant",
    "floor_log2",
    "multi_power_la",
    "single_power_la",
    "la",
    "la_derivative",
    "encode_ltc",
    "decode_ltc",
    "spike_count_bound",
    "la_array",
    "la_derivative_array",
    "encode_array",
]


class LaVariant(enum.Enum):
    MULTI = "multi"
    SINGLE = "single"

    @classmethod
    def parse(cls, value: "str | LaVariant") -> "LaVariant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"multi": cls.MULTI, "multipower": cls.MULTI, "multi-power": cls.MULTI,
                   "single": cls.SINGLE, "singlepower": cls.SINGLE, "single-power": cls.SINGLE}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown LA variant {value!r}") from None


_RANGE_RE = re.compile(r"^\s*\{?\s*([+-]?\d+)\s*(?:\.\.|,|:)\s*([+-]?\d+)\s*\}?\s*$")


@dataclass(frozen=True)
class ExponentRange:
    """Closed range of binary exponents ``{e_min..e_max}``."""

    e_min: int
    e_max: int

    def __post_init__(self):
        if int(self.e_min) != self.e_min or int(self.e_max) != self.e_max:
            raise DomainError("exponents must be integers")
        object.__setattr__(self, "e_min", int(self.e_min))
        object.__setattr__(self, "e_max", int(self.e_max))
        if self.e_min > self.e_max:
            raise DomainError(f"empty exponent range {{{self.e_min}..{self.e_max}}}")

    @classmethod
    def parse(cls, text: str) -> "ExponentRange":
        """Parse ``"-3..4"``, ``"{-3..4}"`` or ``"-3,4"``."""
        m = _RANGE_RE.match(text.replace("−", "-"))
        if not m:
            raise DomainError(f"cannot parse exponent range {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    @property
    def window_len(self) -> int:
        return self.e_max - self.e_min + 1

    T = window_len

    @property
    def lsb(self) -> float:
        """Smallest representable nonzero value, ``2**e_min``."""
        return math.ldexp(1.0, self.e_min)

    @property
    def saturation(self) -> float:
        """``2**(e_max+1)``; values at or above it saturate."""
        return math.ldexp(1.0, self.e_max + 1)

    @property
    def cap(self) -> float:
        """Largest multi-power LA value, ``2**(e_max+1) - 2**e_min``."""
        return self.saturation - self.lsb

    def __str__(self) -> str:
        return f"{self.e_min}..{self.e_max}"


@dataclass(frozen=True)
class SpikeTrain:
    """Sorted spike times within a window ``{0..window_len-1}``."""

    window_len: int
    times: tuple[int, ...] = ()

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        if self.window_len < 1:
            raise DomainError("window_len must be positive")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError(f"spike times must be strictly increasing: {times}")
        if times and (times[0] < 0 or times[-1] >= self.window_len):
            raise DomainError(f"spike times {times} outside window of {self.window_len}")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.times)

    def __contains__(self, t) -> bool:
        return t in self.times

    def __iter__(self):
        return iter(self.times)


def _check_activation(a) -> float:
    a = float(a)
    if not math.isfinite(a) or a < 0:
        raise DomainError(f"activation must be finite and nonnegative, got {a!r}")
    return a


def floor_log2(a: float) -> int:
    """Exact ``floor(log2(a))`` for a positive finite float."""
    if not (a > 0 and math.isfinite(a)):
        raise DomainError(f"floor_log2 needs a positive finite value, got {a!r}")
    return math.frexp(a)[1] - 1


def multi_power_la(a: float, r: ExponentRange) -> float:
    a = _check_activation(a)
    if a < r.lsb:
        return 0.0
    if a >= r.saturation:
        return r.cap
    return math.ldexp(math.floor(math.ldexp(a, -r.e_min)), r.e_min)


def single_power_la(a: float, r: ExponentRange) -> float:
    a = _check_activation(a)
    if a < r.lsb:
        return 0.0
    if a >= r.saturation:
        return math.ldexp(1.0, r.e_max)
    return math.ldexp(1.0, floor_log2(a))


def la(a: float, r: ExponentRange, variant: LaVariant = LaVariant.MULTI) -> float:
    if LaVariant.parse(variant) is LaVariant.MULTI:
        return multi_power_la(a, r)
    return single_power_la(a, r)


def la_derivative(a: float, r: ExponentRange) -> float:
    """Straight-through surrogate: 1 below saturation, 0 at or above it."""
    a = _check_activation(a)
    return 1.0 if a < r.saturation else 0.0


def _exponents(a: float, r: ExponentRange, variant: LaVariant) -> list[int]:
    """Exponents (descending) of the powers of two forming the LA of ``a``."""
    a = _check_activation(a)
    if a < r.lsb:
        return []
    if LaVariant.parse(variant) is LaVariant.SINGLE:
        return [min(floor_log2(a), r.e_max)]
    if a >= r.saturation:
        return list(range(r.e_max, r.e_min - 1, -1))
    mantissa = math.floor(math.ldexp(a, -r.e_min))
    return [r.e_min + b for b in range(mantissa.bit_length() - 1, -1, -1) if mantissa >> b & 1]


def encode_ltc(a: float, r: ExponentRange, variant: LaVariant = LaVariant.MULTI) -> SpikeTrain:
    return SpikeTrain(r.window_len, tuple(r.e_max - e for e in _exponents(a, r, variant)))


def decode_ltc(s: SpikeTrain, r: ExponentRange) -> float:
    if s.window_len != r.window_len:
        raise WindowMismatchError(
            f"spike train window {s.window_len} does not match range {r} (T={r.window_len})")
    return math.fsum(math.ldexp(1.0, r.e_max - t) for t in s.times)


def spike_count_bound(a: float, r: ExponentRange) -> int:
    """Upper bound on the number of multi-spike LTC spikes encoding ``a``."""
    a = _check_activation(a)
    if a < r.lsb:
        return 0
    if a >= r.saturation:
        return r.window_len
    return floor_log2(a) - r.e_min + 1


# -- vectorized forms used by the network code ------------------------------

def la_array(a, r: ExponentRange, variant: LaVariant = LaVariant.MULTI) -> np.ndarray:
    """Elementwise LA of a nonnegative array (callers clamp negatives first)."""
    a = np.asarray(a, dtype=np.float64)
    if a.size and (np.any(a < 0) or not np.all(np.isfinite(a))):
        raise DomainError("LA input must be finite and nonnegative")
    variant = LaVariant.parse(variant)
    if variant is LaVariant.MULTI:
        out = np.ldexp(np.floor(np.ldexp(a, -r.e_min)), r.e_min)
        out = np.where(a >= r.saturation, r.cap, out)
    else:
        _, exp = np.frexp(np.where(a > 0, a, 1.0))
        out = np.ldexp(1.0, np.minimum(exp - 1, r.e_max))
    return np.where(a < r.lsb, 0.0, out)


def la_derivative_array(a, r: ExponentRange) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return (a < r.saturation).astype(np.float64)


def encode_array(a, r: ExponentRange, variant: LaVariant = LaVariant.MULTI) -> np.ndarray:
    """Spike raster of shape ``(T,) + a.shape``; ``raster[t]`` is True where a spike fires at t."""
    a = np.asarray(a, dtype=np.float64)
    T = r.window_len
    approx = la_array(a, r, variant)
    units = np.ldexp(approx, -r.e_min).astype(np.int64)  # approx / 2**e_min, < 2**T
    shifts = np.arange(T - 1, -1, -1, dtype=np.int64).reshape((T,) + (1,) * a.ndim)
    return ((units[None] >> shifts) & 1).astype(bool)


def trains_from_raster(raster: np.ndarray) -> list[SpikeTrain]:
    """Split a ``(T, n)`` raster into per-neuron spike trains."""
    raster = np.asarray(raster, dtype=bool)
    T = raster.shape[0]
    flat = raster.reshape(T, -1)
    return [SpikeTrain(T, tuple(np.flatnonzero(flat[:, j]))) for j in range(flat.shape[1])]


def decode_many(trains: Iterable[SpikeTrain], r: ExponentRange) -> np.ndarray:
    return np.array([decode_ltc(s, r) for s in trains], dtype=np.float64)


def parse_times(text: str, window_len: int) -> SpikeTrain:
    """Parse ``"[0,2,4]"`` style spike-time lists."""
    body = text.strip().strip("[]{}() ")
    times: Sequence[int] = [int(x) for x in re.split(r"[,\s]+", body) if x] if body else []
    return SpikeTrain(window_len, tuple(times))
