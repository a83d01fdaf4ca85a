"""Paraxial transfer-matrix optics for an eye behind a tunable lens.

The viewer's eye is reduced to a single thin lens (power ``eye_power``) a
fixed distance in front of a flat retina.  A tunable lens sits
``vertex_distance`` millimetres in front of the eye on the same axis.  A
point source a given distance in front of the tunable lens images to a
spot on the retina; the diameter of that spot (the circle of confusion)
is what every higher-level module consumes.

Conventions: lengths in mm, optical powers in mm^-1, angles in radians.
All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError, SingularConfigurationError

#: absolute tolerance (mm) below which the marginal-ray denominator is
#: treated as zero (tunable lens imaging the pupil onto the object point)
SINGULAR_ATOL = 1e-12


@dataclass(frozen=True)
class RayState:
    """Paraxial ray: lateral offset ``x`` (mm) and axial angle ``u`` (rad).

    Paraxial validity (u small enough that sin u ~ u) is the caller's
    responsibility; no clamping happens here.
    """

    x: float
    u: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.u)):
            raise DomainError(f"ray state must be finite, got ({self.x}, {self.u})")


@dataclass(frozen=True)
class TransferMatrix:
    """2x2 ray-transfer matrix [[a, b], [c, d]].

    ``a`` and ``d`` are dimensionless, ``b`` is mm, ``c`` is mm^-1.  Every
    matrix produced by this module has unit determinant.
    """

    a: float
    b: float
    c: float
    d: float

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def apply(self, ray: RayState) -> RayState:
        return RayState(self.a * ray.x + self.b * ray.u,
                        self.c * ray.x + self.d * ray.u)

    def __matmul__(self, other: "TransferMatrix") -> "TransferMatrix":
        return compose(self, other)


IDENTITY = TransferMatrix(1.0, 0.0, 0.0, 1.0)


def free_space(distance: float) -> TransferMatrix:
    """Propagation through ``distance`` mm of free space."""
    if not math.isfinite(distance) or distance < 0:
        raise DomainError(f"free-space distance must be finite and >= 0, got {distance}")
    return TransferMatrix(1.0, distance, 0.0, 1.0)


def thin_lens(power: float) -> TransferMatrix:
    """Refraction by a thin lens of optical power ``power`` (mm^-1).

    Sign is unrestricted here; planners restrict themselves to >= 0.
    """
    if not math.isfinite(power):
        raise DomainError(f"lens power must be finite, got {power}")
    return TransferMatrix(1.0, 0.0, -power, 1.0)


def compose(outer: TransferMatrix, inner: TransferMatrix) -> TransferMatrix:
    """Matrix product ``outer @ inner``: ``inner`` acts first on the ray."""
    return TransferMatrix(
        outer.a * inner.a + outer.b * inner.c,
        outer.a * inner.b + outer.b * inner.d,
        outer.c * inner.a + outer.d * inner.c,
        outer.c * inner.b + outer.d * inner.d,
    )


@dataclass(frozen=True)
class EyeModel:
    """Reduced single-lens eye.

    Attributes:
        pupil_diameter: entrance pupil diameter (mm).
        lens_retina_distance: lens-to-retina distance (mm).
        far_power: eye power focused at the far point (mm^-1).
        near_power: eye power at maximum accommodation (mm^-1).
        acceptable_coc: largest retinal blur-circle diameter still
            perceived as sharp (mm); defines the depth of field.
    """

    pupil_diameter: float = 4.0
    lens_retina_distance: float = 16.6667
    far_power: float = 1.0 / 16.6667
    near_power: float = 1.0 / 16.6667 + 0.011
    acceptable_coc: float = 16.6667 * math.tan(math.radians(1.0 / 60.0))

    def __post_init__(self):
        for name in ("pupil_diameter", "lens_retina_distance", "far_power",
                     "near_power", "acceptable_coc"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise DomainError(f"EyeModel.{name} must be finite and > 0, got {v}")
        if self.near_power <= self.far_power:
            raise DomainError("near_power must exceed far_power")
        if self.acceptable_coc >= self.pupil_diameter:
            raise DomainError("acceptable_coc must be smaller than the pupil")

    @property
    def accommodation_amplitude(self) -> float:
        return self.near_power - self.far_power


def default_eye() -> EyeModel:
    """Default reduced-eye parameters.

    These are model choices, not measured data: a 16.6667 mm axial length
    with the relaxed power set to its exact reciprocal (focused at
    infinity), a 4 mm pupil, an 11 D accommodation amplitude (near point
    ~91 mm, a young adult eye -- large enough that the near blur border
    stays under 80 mm for any positive lens power, see blur_range), and a
    one-arcminute acuity criterion for the acceptable circle of confusion.
    """
    return EyeModel()


@dataclass(frozen=True)
class OpticalStack:
    """One viewing configuration: eye + tunable lens geometry.

    Attributes:
        eye: the eye model.
        vertex_distance: tunable-lens-to-eye separation (mm).
        etl_power: current tunable-lens power (mm^-1, >= 0).
        eye_power: current accommodation state (mm^-1), within the eye's
            accommodation range.
    """

    eye: EyeModel
    vertex_distance: float = 15.0
    etl_power: float = 0.0
    eye_power: float | None = None

    def __post_init__(self):
        if self.eye_power is None:
            object.__setattr__(self, "eye_power", self.eye.far_power)
        if not math.isfinite(self.vertex_distance) or self.vertex_distance <= 0:
            raise DomainError(f"vertex_distance must be > 0, got {self.vertex_distance}")
        if not math.isfinite(self.etl_power) or self.etl_power < 0:
            raise DomainError(f"etl_power must be >= 0, got {self.etl_power}")
        lo, hi = self.eye.far_power, self.eye.near_power
        if not (lo - 1e-15 <= self.eye_power <= hi + 1e-15):
            raise DomainError(
                f"eye_power {self.eye_power} outside accommodation range [{lo}, {hi}]")

    def with_etl_power(self, power: float) -> "OpticalStack":
        return replace(self, etl_power=power)

    def with_eye_power(self, power: float) -> "OpticalStack":
        return replace(self, eye_power=power)


@dataclass(frozen=True)
class MarginalRayTrace:
    """Marginal-ray trace from an on-axis object point.

    Attributes:
        u_object: ray angle at the object (rad).
        u_eye: ray angle arriving at the eye lens (rad).
        u_retina: ray angle at the retina (rad).
        blur_diameter: circle-of-confusion diameter on the retina (mm).
    """

    u_object: float
    u_eye: float
    u_retina: float
    blur_diameter: float


def _pupil_fill_denominator(stack: OpticalStack, object_distance: float) -> float:
    """Height-per-unit-angle at the eye plane for a ray leaving the object.

    A ray (0, u) from the object arrives at the eye plane at height
    ``u * denom``; the marginal ray therefore has u = pupil_radius/denom.
    Vanishing ``denom`` means the tunable lens images the pupil onto the
    object point and no marginal angle exists.
    """
    d = object_distance
    dv = stack.vertex_distance
    return d + dv - d * dv * stack.etl_power


def marginal_ray(stack: OpticalStack, object_distance: float) -> MarginalRayTrace:
    """Trace the marginal ray from an on-axis point ``object_distance`` mm
    in front of the tunable lens and return the retinal blur diameter.
    """
    if not math.isfinite(object_distance) or object_distance <= 0:
        raise DomainError(f"object distance must be > 0, got {object_distance}")
    denom = _pupil_fill_denominator(stack, object_distance)
    if abs(denom) <= SINGULAR_ATOL:
        raise SingularConfigurationError(
            "tunable lens images the pupil onto the object point "
            f"(distance {object_distance} mm, power {stack.etl_power} mm^-1)")

    u_object = stack.eye.pupil_diameter / (2.0 * denom)

    chain = compose(
        free_space(stack.eye.lens_retina_distance),
        compose(thin_lens(stack.eye_power),
                compose(free_space(stack.vertex_distance),
                        compose(thin_lens(stack.etl_power),
                                free_space(object_distance)))))
    at_eye = compose(free_space(stack.vertex_distance),
                     compose(thin_lens(stack.etl_power),
                             free_space(object_distance))).apply(RayState(0.0, u_object))
    retina = chain.apply(RayState(0.0, u_object))

    return MarginalRayTrace(
        u_object=u_object,
        u_eye=at_eye.u,
        u_retina=retina.u,
        blur_diameter=2.0 * abs(retina.x),
    )


def blur_circle_diameter(stack: OpticalStack, object_distance: float) -> float:
    """Retinal circle-of-confusion diameter (mm) of an on-axis point.

    Closed form equivalent to :func:`marginal_ray`; preferred in inner
    loops that only need the diameter.
    """
    if not math.isfinite(object_distance) or object_distance <= 0:
        raise DomainError(f"object distance must be > 0, got {object_distance}")
    denom = _pupil_fill_denominator(stack, object_distance)
    if abs(denom) <= SINGULAR_ATOL:
        raise SingularConfigurationError(
            "tunable lens images the pupil onto the object point "
            f"(distance {object_distance} mm, power {stack.etl_power} mm^-1)")
    dr = stack.eye.lens_retina_distance
    signed = (1.0 - dr * stack.eye_power
              + dr * (1.0 - object_distance * stack.etl_power) / denom)
    return stack.eye.pupil_diameter * abs(signed)


def signed_blur_term(stack: OpticalStack, object_distance: float) -> float:
    """Signed version of the blur expression (blur diameter / pupil diameter
    before the absolute value).  Zero exactly at the conjugate distance;
    monotone in distance, which blur_range exploits to bracket roots.
    """
    denom = _pupil_fill_denominator(stack, object_distance)
    if abs(denom) <= SINGULAR_ATOL:
        raise SingularConfigurationError("degenerate pupil-fill geometry")
    dr = stack.eye.lens_retina_distance
    return (1.0 - dr * stack.eye_power
            + dr * (1.0 - object_distance * stack.etl_power) / denom)
