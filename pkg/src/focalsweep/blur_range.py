"""Depth-of-field borders and the blur range behind a tunable lens.

For a fixed tunable-lens power the retinal blur of a point grows as the
point leaves the eye's depth of field.  The signed blur expression is a
Moebius function of object distance, so the two distances at which the
blur crosses the acceptable circle of confusion have a closed form.  From
those, the guaranteed-blur range follows: an object is blurred for every
accommodation state iff it is closer than the near border (computed at
maximum accommodation) or farther than the far border (computed with the
relaxed eye).

Only the far border drives sweep planning; the near border for this
package's default eye stays below 80 mm for any positive lens power, too
close for a projector to illuminate, so it is exposed for diagnostics
only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .optics import EyeModel

#: bracket (mm^-1) searched by :func:`min_blur_power`; 0.012 mm^-1 = 12 D
POWER_BRACKET = (0.0, 0.012)

#: planning is only meaningful beyond the near-border regime
MIN_PLANNING_DISTANCE = 80.0


@dataclass(frozen=True)
class DofBorders:
    """Depth-of-field limits for one accommodation state.

    ``None`` marks a side whose limit lies beyond infinity (the closed-form
    root came out non-positive or its denominator vanished); it is never a
    sentinel number.
    """

    d_plus: float | None   # far limit (mm)
    d_minus: float | None  # near limit (mm)


@dataclass(frozen=True)
class BlurBorders:
    """Guaranteed-blur thresholds for one tunable-lens power.

    ``far_border is None`` means this power cannot blur an object at any
    distance (its depth of field still reaches past infinity for the
    relaxed eye).
    """

    near_border: float | None
    far_border: float | None

    def guarantees_blur_at(self, distance: float) -> bool:
        """True iff an object at ``distance`` is blurred for every
        accommodation state."""
        if self.near_border is not None and distance < self.near_border:
            return True
        return self.far_border is not None and distance > self.far_border


def _root(numerator: float, denominator: float) -> float | None:
    if abs(denominator) < 1e-300:
        return None
    value = numerator / denominator
    return value if value > 0 else None


def dof_borders(eye: EyeModel, vertex_distance: float, etl_power: float,
                eye_power: float, acceptable_coc: float | None = None) -> DofBorders:
    """Closed-form depth-of-field limits for the given accommodation state.

    ``acceptable_coc`` overrides the eye's default threshold (a zero value
    collapses the DOF to the exact conjugate distance, useful in tests).
    """
    for name, v in (("vertex_distance", vertex_distance), ("etl_power", etl_power),
                    ("eye_power", eye_power)):
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v}")
    if etl_power < 0:
        raise DomainError(f"etl_power must be >= 0, got {etl_power}")
    coc = eye.acceptable_coc if acceptable_coc is None else acceptable_coc
    if coc < 0:
        raise DomainError(f"acceptable_coc must be >= 0, got {coc}")

    de = eye.pupil_diameter
    dr = eye.lens_retina_distance
    dv = vertex_distance

    # Signed blur term h(d) = de * (a*d - q) / (b*d + dv):
    #   q collects the lens/eye geometry, a its distance slope, b the
    #   pupil-fill slope.  h is monotone on d > 0, so the DOF interval is
    #   bounded by the crossings of +/- coc.
    q = dv * dr * eye_power - dv - dr
    a = 1.0 - dr * eye_power + etl_power * q
    b = 1.0 - dv * etl_power

    crossing_pos = _root(de * q + coc * dv, de * a - coc * b)   # h = +coc
    crossing_neg = _root(de * q - coc * dv, de * a + coc * b)   # h = -coc

    # Monotonicity of h decides which crossing bounds which side.
    slope_sign = a * dv + q * b
    if slope_sign < 0:
        near, far = crossing_pos, crossing_neg
    elif slope_sign > 0:
        near, far = crossing_neg, crossing_pos
    else:
        # h constant in distance: DOF is all-or-nothing; no finite borders.
        return DofBorders(d_plus=None, d_minus=None)
    return DofBorders(d_plus=far, d_minus=near)


def blur_borders(eye: EyeModel, vertex_distance: float, etl_power: float) -> BlurBorders:
    """Near/far guaranteed-blur borders for one tunable-lens power (> 0)."""
    if not math.isfinite(etl_power) or etl_power <= 0:
        raise DomainError(f"blur borders need etl_power > 0, got {etl_power}")
    near = dof_borders(eye, vertex_distance, etl_power, eye.near_power).d_minus
    far = dof_borders(eye, vertex_distance, etl_power, eye.far_power).d_plus
    return BlurBorders(near_border=near, far_border=far)


def far_border(eye: EyeModel, vertex_distance: float, etl_power: float) -> float | None:
    """Far guaranteed-blur border (relaxed eye); None when unbounded."""
    return dof_borders(eye, vertex_distance, etl_power, eye.far_power).d_plus


def min_blur_power(eye: EyeModel, vertex_distance: float,
                   object_distance: float) -> float:
    """Smallest tunable-lens power that guarantees blur at ``object_distance``.

    Solved by bisection on the far border, which is strictly decreasing in
    power where finite.  The bracket is refined to floating-point
    convergence so the forward evaluation ``far_border(result)`` lands on
    ``object_distance`` to well below a micrometre.
    """
    if not math.isfinite(object_distance) or object_distance < MIN_PLANNING_DISTANCE:
        raise DomainError(
            f"object distance must be >= {MIN_PLANNING_DISTANCE} mm "
            f"(near-border regime below that), got {object_distance}")

    def covered(power: float) -> bool:
        fb = dof_borders(eye, vertex_distance, power, eye.far_power).d_plus
        return fb is not None and fb <= object_distance

    lo, hi = POWER_BRACKET
    if covered(lo):
        return lo
    if not covered(hi):
        raise DomainError(
            f"no power within {POWER_BRACKET} mm^-1 blurs an object at "
            f"{object_distance} mm")

    # invariant: covered(hi) and not covered(lo)
    while True:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if covered(mid):
            hi = mid
        else:
            lo = mid
    return hi
