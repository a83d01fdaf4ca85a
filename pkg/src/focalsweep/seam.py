"""Apparent scaling through the powered lens and seam feathering.

A region lit while the tunable lens is powered appears magnified about the
optical center relative to the same region lit at zero power.  Where a
magnified (blurred) region meets an unmagnified (focused) one the
illumination either vacates an annular band (dark gap) or covers it twice
(bright overlap).  Feathering fills the band with complementary linear
ramps.

The blur-slot light physically lands scaled: a projector pixel at radius
``rho`` is perceived at ``s * rho``.  The ramps are therefore built so the
pair is complementary in the *perceived* registration,
``w0(x) + wp(x / s) == 1``: the zero-power mask ``w0`` ramps across the
seam band itself while the powered mask ``wp`` carries the matching ramp
on the band's preimage (the band divided by ``s``).  A pair made
complementary pointwise in projector space instead would leave an
order-one notch or spike once the powered slot is magnified.

Radially-defined masks carry an exact piecewise-linear radial profile so
scaling and feathering introduce no resampling error; plain raster masks
fall back to bilinear sampling and a per-ray edge search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, SingularConfigurationError, ValidationError

FOCUS = "focus"
BLUR = "blur"


def image_distance(object_distance: float, etl_power: float) -> float:
    """Signed image distance (mm) behind the tunable lens alone.

    Negative means a virtual image (object inside the focal length or
    unpowered lens).  An object exactly at the focal plane images to
    infinity, which is an error here.
    """
    if not math.isfinite(object_distance) or object_distance <= 0:
        raise DomainError(f"object distance must be > 0, got {object_distance}")
    if not math.isfinite(etl_power):
        raise DomainError("lens power must be finite")
    denom = object_distance * etl_power - 1.0
    if abs(denom) < 1e-12:
        raise SingularConfigurationError(
            f"object at the focal plane (distance {object_distance} mm, "
            f"power {etl_power} mm^-1): image at infinity")
    return object_distance / denom


@dataclass(frozen=True)
class ScalingResult:
    """Apparent-scaling computation for one object distance and lens power.

    ``image_dist`` and ``image_height`` are None when the image recedes to
    infinity (object at the focal plane); the scale itself stays finite
    there.
    """

    scale: float
    image_dist: float | None
    image_height: float | None
    visual_angle: float  # rad, for the given object height


def scaling_factor(object_distance: float, vertex_distance: float,
                   etl_power: float, object_height: float = 1.0) -> ScalingResult:
    """Apparent magnification of an object seen through the powered lens.

    Ratio of the visual angle with the lens powered to the angle with it
    off; 1 exactly at zero power, > 1 for positive power.
    """
    if not math.isfinite(object_distance) or object_distance <= 0:
        raise DomainError(f"object distance must be > 0, got {object_distance}")
    if not math.isfinite(vertex_distance) or vertex_distance <= 0:
        raise DomainError(f"vertex distance must be > 0, got {vertex_distance}")
    denom = (object_distance + vertex_distance
             - object_distance * vertex_distance * etl_power)
    if abs(denom) < 1e-12:
        raise SingularConfigurationError(
            "apparent-scaling denominator vanishes (virtual image at the eye)")
    scale = (object_distance + vertex_distance) / denom
    visual_angle = math.atan(object_height / denom)
    focal = object_distance * etl_power - 1.0
    if abs(focal) < 1e-12:
        img_d = img_h = None
    else:
        img_d = object_distance / focal
        img_h = object_height / focal
    return ScalingResult(scale=scale, image_dist=img_d, image_height=img_h,
                         visual_angle=visual_angle)


class RadialProfile:
    """Piecewise-linear radial weight function.

    Defined by ascending breakpoint radii (px from the optical center) and
    values; constant extrapolation beyond the ends.  Closed under the
    operations the seam pipeline needs -- uniform scaling, complementation
    and ramp insertion -- so radial masks stay exact end to end.
    """

    def __init__(self, radii, values):
        radii = np.asarray(radii, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if radii.ndim != 1 or radii.shape != values.shape or radii.size == 0:
            raise ValidationError("profile needs matching 1-D radii and values")
        if np.any(np.diff(radii) < 0) or radii[0] < 0:
            raise ValidationError("profile radii must be ascending and >= 0")
        self.radii = radii
        self.values = values

    @classmethod
    def disc(cls, radius: float) -> "RadialProfile":
        return cls([0.0, radius, radius], [1.0, 1.0, 0.0])

    @classmethod
    def annulus(cls, inner: float, outer: float) -> "RadialProfile":
        if not 0 < inner < outer:
            raise ValidationError("annulus needs 0 < inner < outer")
        return cls([0.0, inner, inner, outer, outer],
                   [0.0, 0.0, 1.0, 1.0, 0.0])

    def evaluate(self, rho) -> np.ndarray:
        return np.interp(np.asarray(rho, dtype=np.float64),
                         self.radii, self.values)

    def scaled(self, s: float) -> "RadialProfile":
        return RadialProfile(self.radii * s, self.values)

    def complement(self) -> "RadialProfile":
        return RadialProfile(self.radii, 1.0 - self.values)

    def edges(self) -> list[tuple[float, float, float]]:
        """Vertical steps as (radius, value_before, value_after)."""
        out = []
        for i in range(len(self.radii) - 1):
            if self.radii[i] == self.radii[i + 1] and self.values[i] != self.values[i + 1]:
                out.append((float(self.radii[i]), float(self.values[i]),
                            float(self.values[i + 1])))
        return out

    def with_ramped_edges(self, s: float) -> "RadialProfile":
        """Replace each step at radius e by a linear ramp across [e/s, e]."""
        radii = []
        values = []
        i = 0
        n = len(self.radii)
        while i < n:
            if (i + 1 < n and self.radii[i] == self.radii[i + 1]
                    and self.values[i] != self.values[i + 1]):
                e = self.radii[i]
                radii.extend([e / s, e])
                values.extend([self.values[i], self.values[i + 1]])
                i += 2
            else:
                radii.append(self.radii[i])
                values.append(self.values[i])
                i += 1
        return RadialProfile(radii, values)

    def to_json_dict(self) -> dict:
        return {"kind": "piecewise",
                "radii": [float(r) for r in self.radii],
                "values": [float(v) for v in self.values]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RadialProfile":
        if doc.get("kind") == "disc":
            return cls.disc(float(doc["radius"]))
        if doc.get("kind") == "annulus":
            return cls.annulus(float(doc["inner"]), float(doc["outer"]))
        if doc.get("kind") == "piecewise":
            return cls(doc["radii"], doc["values"])
        raise ValidationError(f"unknown profile kind {doc.get('kind')!r}")


def radius_map(shape: tuple[int, int], center: tuple[float, float]) -> np.ndarray:
    """Per-pixel distance (px) from the optical center; center is (x, y)."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return np.hypot(xs - center[0], ys - center[1])


def scale_about(image: np.ndarray, s: float, center: tuple[float, float],
                order: int = 1) -> np.ndarray:
    """Magnify an image by ``s`` about ``center`` (bilinear by default).

    Inverse-mapped: output pixel x samples the input at
    center + (x - center)/s.  Areas pulled in from outside read as zero.
    """
    if s == 1.0:
        return image.copy()
    h, w = image.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = center
    src_y = cy + (ys - cy) / s
    src_x = cx + (xs - cx) / s
    if image.ndim == 2:
        return ndimage.map_coordinates(image, [src_y, src_x], order=order,
                                       mode="constant", cval=0.0)
    out = np.empty_like(image)
    for c in range(image.shape[2]):
        out[..., c] = ndimage.map_coordinates(image[..., c], [src_y, src_x],
                                              order=order, mode="constant", cval=0.0)
    return out


@dataclass
class RegionMask:
    """Per-pixel illumination weights over the projector raster.

    ``profile`` (when present) is the exact radial definition the raster
    was sampled from; operations prefer it to resampling the raster.
    """

    mask_id: str
    label: str
    weights: np.ndarray
    optical_center: tuple[float, float]
    pixels_per_mm: float = 1.0
    profile: RadialProfile | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValidationError("mask weights must be a 2-D array")
        if self.label not in (FOCUS, BLUR):
            raise ValidationError(f"mask label must be focus or blur, got {self.label!r}")
        wmin, wmax = float(self.weights.min()), float(self.weights.max())
        if wmin < -1e-9 or wmax > 1 + 1e-9:
            raise ValidationError(f"mask weights outside [0, 1]: [{wmin}, {wmax}]")
        cx, cy = self.optical_center
        h, w = self.weights.shape
        if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
            raise ValidationError("optical center must lie inside the raster")
        if not math.isfinite(self.pixels_per_mm) or self.pixels_per_mm <= 0:
            raise ValidationError("pixels_per_mm must be > 0")

    @classmethod
    def from_profile(cls, mask_id: str, label: str, profile: RadialProfile,
                     shape: tuple[int, int], optical_center: tuple[float, float],
                     pixels_per_mm: float = 1.0) -> "RegionMask":
        weights = profile.evaluate(radius_map(shape, optical_center))
        return cls(mask_id=mask_id, label=label, weights=weights,
                   optical_center=optical_center, pixels_per_mm=pixels_per_mm,
                   profile=profile)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def binary(self) -> np.ndarray:
        return self.weights >= 0.5

    def sample_scaled(self, s: float) -> np.ndarray:
        """Weights of this mask magnified by ``s`` about the optical center
        (exact for profile masks)."""
        if self.profile is not None:
            return self.profile.evaluate(
                radius_map(self.shape, self.optical_center) / s)
        return scale_about(self.weights, s, self.optical_center)


@dataclass(frozen=True)
class SeamRegion:
    """Seam classification: pixels the scaled blur region vacates (gap, a
    dark band) and pixels it newly covers (overlap, a bright band)."""

    gap: np.ndarray
    overlap: np.ndarray

    @property
    def gap_area(self) -> int:
        return int(self.gap.sum())

    @property
    def overlap_area(self) -> int:
        return int(self.overlap.sum())


def seam_region(mask: RegionMask, s: float) -> SeamRegion:
    """Symmetric difference between the blur region and its scaled image."""
    if not math.isfinite(s) or s < 1.0:
        raise DomainError(f"scale must be >= 1, got {s}")
    before = mask.binary()
    after = mask.sample_scaled(s) >= 0.5
    return SeamRegion(gap=before & ~after, overlap=after & ~before)


@dataclass
class BlendPair:
    """Complementary feathered weights for the zero-power slot (``w0``) and
    the powered slot (``wp``).

    Complementarity holds in the perceived registration:
    ``w0(x) + wp(x/s) == 1`` at every pixel (exact for profile masks,
    pre-quantization).
    """

    w0: RegionMask
    wp: RegionMask
    scale: float

    def registered_sum(self) -> np.ndarray:
        """Per-pixel w0(x) + wp(x/s): flat 1.0 when the pair is exact."""
        return self.w0.weights + self.wp.sample_scaled(self.scale)


def _edge_radius_by_bisection(binary: np.ndarray, center: tuple[float, float],
                              px: np.ndarray, py: np.ndarray, s: float,
                              steps: int = 40) -> np.ndarray:
    """Per-pixel radius at which the region boundary crosses the pixel's
    ray, searched over the scaling orbit [rho/s, rho*s]."""
    cx, cy = center
    vx = px - cx
    vy = py - cy
    rho = np.hypot(vx, vy)
    rho = np.maximum(rho, 1e-9)
    ux, uy = vx / rho, vy / rho

    def inside(r):
        xs = cx + ux * r
        ys = cy + uy * r
        return ndimage.map_coordinates(binary.astype(np.float64), [ys, xs],
                                       order=1, mode="constant", cval=0.0) >= 0.5

    lo = rho / s
    hi = rho * s
    lo_in = inside(lo)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        mid_in = inside(mid)
        same = mid_in == lo_in
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def feather(mask: RegionMask, s: float) -> BlendPair:
    """Feather a powered-slot region against its zero-power complement.

    The powered mask's step edges become linear ramps across the preimage
    of each seam band; the zero-power mask is its exact perceived
    complement (ramps across the seam bands themselves).  At s == 1 both
    collapse to the binary masks.
    """
    if not math.isfinite(s) or s < 1.0:
        raise DomainError(f"scale must be >= 1, got {s}")
    shape = mask.shape
    center = mask.optical_center

    if mask.profile is not None:
        wp_profile = mask.profile.with_ramped_edges(s) if s > 1.0 else mask.profile
        w0_profile = wp_profile.scaled(s).complement()
        wp = RegionMask.from_profile(f"{mask.mask_id}-feathered", BLUR,
                                     wp_profile, shape, center, mask.pixels_per_mm)
        w0 = RegionMask.from_profile(f"{mask.mask_id}-complement", FOCUS,
                                     w0_profile, shape, center, mask.pixels_per_mm)
        return BlendPair(w0=w0, wp=wp, scale=s)

    binary = mask.binary()
    if s == 1.0:
        wp_weights = binary.astype(np.float64)
        w0_weights = 1.0 - wp_weights
    else:
        h, w = shape
        pyy, pxx = np.mgrid[0:h, 0:w].astype(np.float64)
        shrunk = mask.sample_scaled(1.0 / s) >= 0.5  # region contracted by s
        band = binary ^ shrunk  # preimage bands around every edge
        wp_weights = binary.astype(np.float64)
        if band.any():
            e = _edge_radius_by_bisection(binary, center, pxx[band], pyy[band], s)
            rho = np.hypot(pxx[band] - center[0], pyy[band] - center[1])
            # position across [e/s, e]: 0 at the preimage edge, 1 at the edge
            t = np.clip((rho - e / s) / np.maximum(e - e / s, 1e-9), 0.0, 1.0)
            inside = binary[band]
            # falling edge (pixel inside the region): ramp 1 -> 0 outward;
            # rising edge (pixel outside): ramp 0 -> 1 outward
            wp_weights[band] = np.where(inside, 1.0 - t, t)
        wp_weights = np.clip(wp_weights, 0.0, 1.0)
        w0_weights = np.clip(1.0 - scale_about(wp_weights, s, center), 0.0, 1.0)

    wp = RegionMask(mask_id=f"{mask.mask_id}-feathered", label=BLUR,
                    weights=wp_weights, optical_center=center,
                    pixels_per_mm=mask.pixels_per_mm)
    w0 = RegionMask(mask_id=f"{mask.mask_id}-complement", label=FOCUS,
                    weights=w0_weights, optical_center=center,
                    pixels_per_mm=mask.pixels_per_mm)
    return BlendPair(w0=w0, wp=wp, scale=s)
