"""Closed-form power transfer between two buses joined by one impedance.

Active flow rides mainly on the angle difference, reactive flow on the
magnitude difference.  The numeric power-flow solver is cross-checked
against these formulas, so they must stay free of any shared code with it.

All angles are radians; degrees exist only at the CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class FlowDirection(Enum):
    FORWARD = "1->2"
    REVERSE = "2->1"
    NONE = "none"


@dataclass(frozen=True)
class TwoBusState:
    """Voltage phasors at both ends plus the connecting impedance Z = |Z|∠γ."""

    v1: float
    v2: float
    delta1: float
    delta2: float
    z_mag: float
    gamma: float

    def __post_init__(self) -> None:
        if self.v1 <= 0 or self.v2 <= 0:
            raise ValueError("voltage magnitudes must be positive")
        if self.z_mag <= 0:
            raise ValueError("impedance magnitude must be positive")
        if not 0.0 <= self.gamma <= math.pi / 2:
            raise ValueError("impedance angle must lie in [0, pi/2]")

    @classmethod
    def from_impedance(
        cls, v1: float, v2: float, delta1: float, delta2: float, r: float, x: float
    ) -> "TwoBusState":
        return cls(v1, v2, delta1, delta2, math.hypot(r, x), math.atan2(x, r))


def transfer_power_general(s: TwoBusState) -> tuple[float, float]:
    """Sending-end (P, Q) through the full R+jX impedance.

    P12 = V1²/Z·cos γ − V1·V2/Z·cos(γ + δ1 − δ2) and the sine analogue for
    Q12.  Positive values flow from bus 1 toward bus 2.
    """
    shifted = s.gamma + s.delta1 - s.delta2
    p12 = s.v1**2 / s.z_mag * math.cos(s.gamma) - s.v1 * s.v2 / s.z_mag * math.cos(shifted)
    q12 = s.v1**2 / s.z_mag * math.sin(s.gamma) - s.v1 * s.v2 / s.z_mag * math.sin(shifted)
    return p12, q12


def transfer_power_reactive_line(s: TwoBusState) -> tuple[float, float]:
    """Sending-end (P, Q) in the X >> R limit, with X taken as ``z_mag``.

    P12 = V1·V2/X·sin(δ1 − δ2); Q12 = V1/X·(V1 − V2·cos(δ1 − δ2)).  The sine
    in P12 is the algebraic γ -> π/2 limit of the general formula and the only
    form consistent with the angle-based direction rule below.
    """
    x = s.z_mag
    d = s.delta1 - s.delta2
    p12 = s.v1 * s.v2 / x * math.sin(d)
    q12 = s.v1 / x * (s.v1 - s.v2 * math.cos(d))
    return p12, q12


def classify_direction(s: TwoBusState) -> tuple[FlowDirection, FlowDirection]:
    """(active, reactive) flow direction for a mostly reactive line.

    Active power follows the angle ordering, reactive power the magnitude
    ordering; equality means no driving difference.
    """
    if s.delta1 > s.delta2:
        p_dir = FlowDirection.FORWARD
    elif s.delta1 < s.delta2:
        p_dir = FlowDirection.REVERSE
    else:
        p_dir = FlowDirection.NONE
    if s.v1 > s.v2:
        q_dir = FlowDirection.FORWARD
    elif s.v1 < s.v2:
        q_dir = FlowDirection.REVERSE
    else:
        q_dir = FlowDirection.NONE
    return p_dir, q_dir
