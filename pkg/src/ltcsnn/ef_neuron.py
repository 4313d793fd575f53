"""Exponentiate-and-Fire (EF) neuron.

Every time step the neuron doubles its membrane potential, adds the
pre-scaled input current, and fires when the potential reaches
``V_th = 2**e_out_max``. A multi-spike neuron resets by subtracting the
threshold, a single-spike neuron resets to zero and stays silent.

Two numeric backends are supported: binary64 floats, and a 64-bit signed
fixed-point word where doubling is a checked left shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from .coding import ExponentRange, LaVariant, SpikeTrain, floor_log2
from .errors import DomainError, FixedPointOverflowError, NonRepresentableError, WindowMismatchError

INT64_MAX = 2**63 - 1
INT64_MIN = -(2**63)
DEFAULT_FRAC_BITS = 32


# -- fixed point -----------------------------------------------------------

@dataclass(frozen=True, order=False)
class FixedPoint:
    """Signed 64-bit fixed-point number with ``frac_bits`` fractional bits."""

    raw: int
    frac_bits: int = DEFAULT_FRAC_BITS

    def __post_init__(self):
        if not INT64_MIN <= self.raw <= INT64_MAX:
            raise FixedPointOverflowError(f"raw value {self.raw} exceeds 64-bit range")

    def _checked(self, raw: int, what: str) -> "FixedPoint":
        if not INT64_MIN <= raw <= INT64_MAX:
            raise FixedPointOverflowError(f"fixed-point overflow on {what}")
        return FixedPoint(raw, self.frac_bits)

    def double(self) -> "FixedPoint":
        return self._checked(self.raw << 1, "doubling")

    def _coerce(self, other) -> int:
        if isinstance(other, FixedPoint):
            if other.frac_bits != self.frac_bits:
                raise ValueError("mismatched frac_bits")
            return other.raw
        return to_fixed(other, self.frac_bits).raw

    def __add__(self, other) -> "FixedPoint":
        return self._checked(self.raw + self._coerce(other), "addition")

    def __sub__(self, other) -> "FixedPoint":
        return self._checked(self.raw - self._coerce(other), "subtraction")

    def __ge__(self, other) -> bool:
        return self.raw >= self._coerce(other)

    def __lt__(self, other) -> bool:
        return self.raw < self._coerce(other)

    def shift(self, k: int) -> "FixedPoint":
        """Multiply by ``2**k``; right shifts must be exact."""
        if k >= 0:
            return self._checked(self.raw << k, f"shift by {k}")
        if self.raw & ((1 << -k) - 1):
            raise NonRepresentableError(f"shift by {k} would drop set bits")
        return FixedPoint(self.raw >> -k, self.frac_bits)

    def __float__(self) -> float:
        return from_fixed(self)


def to_fixed(x: float, frac_bits: int = DEFAULT_FRAC_BITS) -> FixedPoint:
    """Exact conversion; non-dyadic or too-fine values are rejected, never rounded."""
    x = float(x)
    if not math.isfinite(x):
        raise NonRepresentableError(f"{x!r} is not finite")
    scaled = math.ldexp(x, frac_bits)
    if not scaled.is_integer():
        raise NonRepresentableError(f"{x!r} is not a multiple of 2**-{frac_bits}")
    raw = int(scaled)
    if not INT64_MIN <= raw <= INT64_MAX:
        raise FixedPointOverflowError(f"{x!r} does not fit in 64 bits with {frac_bits} fractional bits")
    return FixedPoint(raw, frac_bits)


def from_fixed(fp: FixedPoint) -> float:
    # exact whenever raw has <= 53 significant bits, which holds for every value we produce
    return math.ldexp(float(fp.raw), -fp.frac_bits) if abs(fp.raw) < 2**53 else \
        float(fp.raw) / 2.0**fp.frac_bits


# -- neuron ----------------------------------------------------------------

@dataclass(frozen=True)
class EfConfig:
    input_range: ExponentRange
    output_range: ExponentRange
    variant: LaVariant = LaVariant.MULTI

    @property
    def threshold(self) -> float:
        return math.ldexp(1.0, self.output_range.e_max)

    @property
    def t_in(self) -> int:
        return self.input_range.window_len

    @property
    def t_out(self) -> int:
        return self.output_range.window_len

    @property
    def window_start(self) -> int:
        """First step of the output window, ``T_in - 1``."""
        return self.t_in - 1

    @property
    def window_end(self) -> int:
        """Last step of the output window, ``T_in + T_out - 2``."""
        return self.t_in + self.t_out - 2

    @property
    def input_scale_exp(self) -> int:
        return self.input_range.e_min

    def classify(self, t: int) -> str:
        """'early', 'window' or 'late' for a local time step."""
        if t < self.window_start:
            return "early"
        if t <= self.window_end:
            return "window"
        return "late"


Potential = Union[float, FixedPoint]


@dataclass(frozen=True)
class EfNeuronState:
    v_m: Potential = 0.0
    fired_times: tuple[int, ...] = ()
    saturated_zero: bool = False
    t: int = 0  # local time of the next step
    v_pre: Potential = 0.0  # pre-reset potential of the last step

    @classmethod
    def initial(cls, backend: str = "float", frac_bits: int = DEFAULT_FRAC_BITS) -> "EfNeuronState":
        if backend == "fixed":
            return cls(v_m=FixedPoint(0, frac_bits), v_pre=FixedPoint(0, frac_bits))
        if backend != "float":
            raise ValueError(f"unknown backend {backend!r}")
        return cls()


def step(state: EfNeuronState, input_current, cfg: EfConfig, *, prescaled: bool = False,
         neuron=None) -> tuple[EfNeuronState, bool]:
    """Advance one time step.

    ``input_current`` is the sum of weights of synapses receiving a spike now.
    With ``prescaled=True`` it is already multiplied by ``2**e_in_min``.
    """
    v = state.v_m
    fixed = isinstance(v, FixedPoint)
    try:
        if fixed:
            cur = input_current if isinstance(input_current, FixedPoint) else to_fixed(input_current, v.frac_bits)
            if not prescaled:
                cur = cur.shift(cfg.input_scale_exp)
            v = v.double() + cur
        else:
            cur = float(input_current)
            if not prescaled:
                cur = math.ldexp(cur, cfg.input_scale_exp)
            v = v * 2.0 + cur
    except FixedPointOverflowError as exc:
        raise FixedPointOverflowError(f"{exc} (neuron {neuron}, step {state.t})",
                                      neuron=neuron, time_step=state.t) from None

    v_pre = v
    fired = False
    saturated_zero = state.saturated_zero
    if not saturated_zero and v >= cfg.threshold:
        fired = True
        if cfg.variant is LaVariant.MULTI:
            v = v - cfg.threshold
        else:
            v = FixedPoint(0, v.frac_bits) if fixed else 0.0
            saturated_zero = True
    elif saturated_zero:
        # a silenced single-spike neuron holds zero; inputs after its spike are ignored
        v = FixedPoint(0, v.frac_bits) if fixed else 0.0

    times = state.fired_times + (state.t,) if fired else state.fired_times
    return replace(state, v_m=v, v_pre=v_pre, fired_times=times, saturated_zero=saturated_zero,
                   t=state.t + 1), fired


@dataclass
class NeuronRun:
    output: SpikeTrain
    undesired: list = field(default_factory=list)  # (time, 'early' | 'late')
    fired_times: tuple[int, ...] = ()
    trace: Optional[list] = None  # post-step potential per step
    pre_reset: Optional[list] = None  # pre-reset potential per step

    @property
    def early(self) -> list[int]:
        return [t for t, kind in self.undesired if kind == "early"]

    @property
    def late(self) -> list[int]:
        return [t for t, kind in self.undesired if kind == "late"]


def prescale_weights(weights: Sequence[float], cfg: EfConfig, backend: str = "float",
                     frac_bits: int = DEFAULT_FRAC_BITS) -> list:
    scaled = [math.ldexp(float(w), cfg.input_scale_exp) for w in weights]
    if backend == "fixed":
        return [to_fixed(w, frac_bits) for w in scaled]
    return scaled


def simulate_neuron(input_trains: Sequence[SpikeTrain], weights: Sequence[float], cfg: EfConfig,
                    horizon: Optional[int] = None, *, backend: str = "float",
                    frac_bits: int = DEFAULT_FRAC_BITS, record_trace: bool = False,
                    neuron=None) -> NeuronRun:
    """Run one EF neuron over its input and output windows.

    The default horizon covers the output window plus one step, so an
    immediately following late spike is detected.
    """
    if len(input_trains) != len(weights):
        raise ValueError("need one weight per input train")
    for s in input_trains:
        if s.window_len != cfg.t_in:
            raise WindowMismatchError(f"input window {s.window_len} != T_in {cfg.t_in}")
    if horizon is None:
        horizon = cfg.window_end + 2
    if horizon < cfg.window_end + 1:
        raise DomainError(f"horizon {horizon} shorter than output window end {cfg.window_end + 1}")

    scaled = prescale_weights(weights, cfg, backend, frac_bits)
    zero = FixedPoint(0, frac_bits) if backend == "fixed" else 0.0
    by_time: dict[int, list[int]] = {}
    for i, s in enumerate(input_trains):
        for t in s.times:
            by_time.setdefault(t, []).append(i)

    state = EfNeuronState.initial(backend, frac_bits)
    out_times, undesired = [], []
    trace = [] if record_trace else None
    pre = [] if record_trace else None
    for t in range(horizon):
        current = zero
        for i in by_time.get(t, ()):
            current = current + scaled[i]
        state, fired = step(state, current, cfg, prescaled=True, neuron=neuron)
        if record_trace:
            trace.append(state.v_m)
            pre.append(state.v_pre)
        if fired:
            kind = cfg.classify(t)
            if kind == "window":
                out_times.append(t - cfg.window_start)
            else:
                undesired.append((t, kind))
    return NeuronRun(SpikeTrain(cfg.t_out, tuple(out_times)), undesired, state.fired_times, trace, pre)


# -- closed forms ----------------------------------------------------------

def first_spike_time_closed_form(v: float, cfg: EfConfig) -> int:
    """Global time of the first output spike for a moderate pre-reset potential ``v``."""
    out = cfg.output_range
    v = float(v)
    if not (out.lsb <= v < out.saturation):
        raise DomainError(f"v={v!r} outside [2**{out.e_min}, 2**{out.e_max + 1})")
    return out.e_max - floor_log2(v) + cfg.window_start


def spike_times_closed_form(v: float, cfg: EfConfig) -> list[int]:
    """Output spike times (global clock) generated from pre-reset potential ``v``
    at the window start, assuming no input arrives afterwards."""
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise DomainError(f"v must be positive and finite, got {v!r}")
    out = cfg.output_range
    if v >= out.saturation:
        times = [cfg.window_start + k for k in range(cfg.t_out)]
        return times[:1] if cfg.variant is LaVariant.SINGLE else times
    times = []
    remainder = v
    while remainder >= out.lsb:
        t = out.e_max - floor_log2(remainder) + cfg.window_start
        times.append(t)
        if cfg.variant is LaVariant.SINGLE:
            break
        remainder -= math.ldexp(1.0, out.e_max - (t - cfg.window_start))
    return times
