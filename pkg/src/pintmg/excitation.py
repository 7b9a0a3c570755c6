"""Pulse-width-modulated voltage sources.

A sinusoidal reference wave is compared against a sawtooth carrier running
at ``pulses`` periods per reference period; the source emits +1 or -1
depending on which is larger.  Averaged over one carrier period the pulse
train tracks ``modulation * reference`` up to an O(1/pulses) error, which
is what makes the smooth reference usable as a stand-in forcing on coarse
setup sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Phase shifts of the three stator phases, indexed 1..3.
PHASE_SHIFTS = {1: 0.0, 2: -2.0 * math.pi / 3.0, 3: -4.0 * math.pi / 3.0}

DEFAULT_PERIOD = 0.02
DEFAULT_PULSES = 400
DEFAULT_MODULATION = 0.8


def reference(phase, t, period=DEFAULT_PERIOD):
    """Sinusoidal reference wave sin(2 pi t / period + shift) for one phase."""
    if phase not in PHASE_SHIFTS:
        raise ValueError(f"phase must be 1, 2 or 3, got {phase!r}")
    return np.sin(2.0 * math.pi * np.asarray(t) / period + PHASE_SHIFTS[phase])


def carrier(pulses, t, period=DEFAULT_PERIOD):
    """Sawtooth carrier 2 frac(pulses t / period) - 1, rising on [-1, 1)."""
    if pulses < 1:
        raise ValueError(f"pulses must be a positive integer, got {pulses!r}")
    x = np.asarray(t) * (pulses / period)
    return 2.0 * (x - np.floor(x)) - 1.0


def pwm(phase, t, period=DEFAULT_PERIOD, pulses=DEFAULT_PULSES,
        modulation=DEFAULT_MODULATION):
    """Two-level pulse train sign(modulation * reference - carrier).

    Ties resolve to +1 so the output is always in {-1, +1}.
    """
    gap = modulation * reference(phase, t, period) - carrier(pulses, t, period)
    out = np.where(gap >= 0.0, 1.0, -1.0)
    return out if out.ndim else float(out)


def ramp(t, period=DEFAULT_PERIOD):
    """Startup factor rising smoothly from 0 to 1 over the first two periods."""
    x = np.asarray(t)
    out = np.where(x < 2.0 * period,
                   0.5 * (1.0 - np.cos(math.pi * x / (2.0 * period))), 1.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PwmSource:
    """A single-phase PWM voltage source with optional startup ramp."""

    period: float = DEFAULT_PERIOD
    pulses: int = DEFAULT_PULSES
    modulation: float = DEFAULT_MODULATION
    phase: int = 1
    ramp_enabled: bool = False

    def __post_init__(self):
        if self.period <= 0.0:
            raise ValueError(f"period must be positive, got {self.period!r}")
        if self.pulses < 1:
            raise ValueError(f"pulses must be >= 1, got {self.pulses!r}")
        if not 0.0 <= self.modulation <= 1.0:
            raise ValueError(
                f"modulation must lie in [0, 1], got {self.modulation!r}")
        if self.phase not in PHASE_SHIFTS:
            raise ValueError(f"phase must be 1, 2 or 3, got {self.phase!r}")

    def _ramp(self, t):
        return ramp(t, self.period) if self.ramp_enabled else 1.0

    def value(self, t):
        """Pulsed voltage at time t (the production forcing)."""
        return self._ramp(t) * pwm(self.phase, t, self.period, self.pulses,
                                   self.modulation)

    def smooth_value(self, t):
        """Carrier-period average surrogate: modulation-scaled reference."""
        return self._ramp(t) * self.modulation * reference(
            self.phase, t, self.period)
