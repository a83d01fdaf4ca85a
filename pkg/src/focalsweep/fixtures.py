"""Bundled experiment scenes, generated deterministically at runtime.

Three families:

* the four-object spatial-defocus setup (objects at 250/500/500/1300 mm,
  either only the center object blurred or only it focused),
* seam-alleviation planes at 500 mm (gap or overlap geometry, uniform,
  document-like or picture-like texture),
* the dot-pattern measurement surface at a configurable distance.

Textures are synthesized without randomness so every artifact derived
from them is byte-reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ProjectConfig
from .dotgrid import dot_centers, dot_grid_weights
from .errors import ValidationError
from .scene import Layer, Scene
from .seam import BLUR, FOCUS, RadialProfile, RegionMask

#: distances (mm) of the four-object setup, by layer id
FOUR_OBJECT_DISTANCES = {"a": 250.0, "b": 500.0, "c": 500.0, "d": 1300.0}

SEAM_DISTANCE = 500.0
DOT_RADIUS_PX = 1.0


def _pixels_per_mm(config: ProjectConfig, distance: float) -> float:
    """Raster pixels per object-plane millimetre at the given distance."""
    return config.pixels_per_radian / (distance + config.vertex_distance)


def quadrant_centers(shape: tuple[int, int]) -> dict[str, tuple[float, float]]:
    h, w = shape
    return {
        "a": (w * 0.25, h * 0.25),
        "b": (w * 0.75, h * 0.25),
        "c": (w * 0.25, h * 0.75),
        "d": (w * 0.75, h * 0.75),
    }


def four_object_scene(config: ProjectConfig, condition: int,
                      dots_per_side: int = 3) -> Scene:
    """The four-object spatial-defocus scene.

    Condition 1 blurs only the center-distance object ``b``; condition 2
    focuses only ``b`` and blurs the rest.  Each object is a small dot
    grid in its own raster quadrant so rendered blur is measurable, with a
    rectangular silhouette mask.
    """
    if condition not in (1, 2):
        raise ValidationError(f"condition must be 1 or 2, got {condition}")
    blur_ids = {"b"} if condition == 1 else {"a", "c", "d"}

    shape = config.raster_shape
    h, w = shape
    spacing = min(h, w) / 2 / (dots_per_side + 1)
    layers = []
    for layer_id, distance in FOUR_OBJECT_DISTANCES.items():
        cx, cy = quadrant_centers(shape)[layer_id]
        centers = four_object_dot_centers(config, layer_id, dots_per_side)
        texture = dot_grid_weights(shape, centers, DOT_RADIUS_PX)
        half = (dots_per_side - 1) / 2.0 * spacing + spacing * 0.75
        weights = np.zeros(shape)
        y0, y1 = int(round(cy - half)), int(round(cy + half))
        x0, x1 = int(round(cx - half)), int(round(cx + half))
        weights[max(y0, 0):y1, max(x0, 0):x1] = 1.0
        label = BLUR if layer_id in blur_ids else FOCUS
        mask = RegionMask(mask_id=f"{label}-{layer_id}", label=label,
                          weights=weights, optical_center=(w / 2.0, h / 2.0),
                          pixels_per_mm=_pixels_per_mm(config, distance))
        layers.append(Layer(layer_id=layer_id, texture=texture,
                            distance=distance, masks=[mask],
                            physical_pitch=1.0 / _pixels_per_mm(config, distance)))
    return Scene(layers=layers, optical_center=(w / 2.0, h / 2.0),
                 pixels_per_radian=config.pixels_per_radian)


def four_object_dot_centers(config: ProjectConfig, layer_id: str,
                            dots_per_side: int = 3) -> np.ndarray:
    """Nominal dot centers of one four-object layer (projector raster)."""
    shape = config.raster_shape
    h, w = shape
    spacing = min(h, w) / 2 / (dots_per_side + 1)
    cx, cy = quadrant_centers(shape)[layer_id]
    offs = (np.arange(dots_per_side) - (dots_per_side - 1) / 2.0) * spacing
    return np.column_stack([g.ravel() for g in np.meshgrid(cx + offs, cy + offs)])


def document_texture(shape: tuple[int, int]) -> np.ndarray:
    """Text-like page: dark line bands with word gaps on a light ground."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    line_period = max(8, h // 24)
    in_line = (ys % line_period) < max(2, line_period // 3)
    words = (np.sin(xs * (2.0 * math.pi / 23.0)) +
             np.sin(xs * (2.0 * math.pi / 7.3) + ys * 0.05)) > -0.4
    page = np.where(in_line & words, 0.15, 0.92)
    margin = (xs < w * 0.08) | (xs > w * 0.92) | (ys < h * 0.06) | (ys > h * 0.94)
    page[margin] = 0.92
    return page


def picture_texture(shape: tuple[int, int]) -> np.ndarray:
    """Smooth photograph-like field: overlapping soft blobs and a gradient."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    u = xs / max(w - 1, 1)
    v = ys / max(h - 1, 1)
    img = (0.45 + 0.25 * np.sin(2 * math.pi * (1.5 * u + 0.4))
           * np.cos(2 * math.pi * (1.1 * v - 0.2))
           + 0.20 * np.exp(-((u - 0.35) ** 2 + (v - 0.4) ** 2) / 0.02)
           + 0.15 * np.exp(-((u - 0.7) ** 2 + (v - 0.65) ** 2) / 0.05)
           + 0.10 * u)
    return np.clip(img, 0.05, 1.0)


SEAM_TEXTURES = {
    "uniform": lambda shape: np.ones(shape),
    "document": document_texture,
    "picture": picture_texture,
}


def seam_scene(config: ProjectConfig, texture_kind: str, seam_kind: str) -> Scene:
    """A single plane at 500 mm split into a powered region and its
    complement.

    ``seam_kind='overlap'`` powers a central disc (its scaled edge rides
    over the focused surround); ``'gap'`` powers everything outside a
    central disc (the scaled inner edge pulls away, vacating a band).
    Masks carry exact radial profiles.
    """
    try:
        texture = SEAM_TEXTURES[texture_kind](config.raster_shape)
    except KeyError:
        raise ValidationError(f"unknown seam texture {texture_kind!r}") from None
    h, w = config.raster_shape
    center = (w / 2.0, h / 2.0)
    radius = min(h, w) / 3.0
    far = 2.0 * math.hypot(h, w)  # edge pushed past every raster corner

    if seam_kind == "overlap":
        blur_profile = RadialProfile.disc(radius)
    elif seam_kind == "gap":
        blur_profile = RadialProfile.annulus(radius, far)
    else:
        raise ValidationError(f"seam kind must be gap or overlap, got {seam_kind!r}")

    ppmm = _pixels_per_mm(config, SEAM_DISTANCE)
    blur_mask = RegionMask.from_profile("blur-region", BLUR, blur_profile,
                                        config.raster_shape, center, ppmm)
    focus_mask = RegionMask.from_profile("focus-region", FOCUS,
                                         blur_profile.complement(),
                                         config.raster_shape, center, ppmm)
    layer = Layer(layer_id="surface", texture=texture, distance=SEAM_DISTANCE,
                  masks=[focus_mask, blur_mask], physical_pitch=1.0 / ppmm)
    return Scene(layers=[layer], optical_center=center,
                 pixels_per_radian=config.pixels_per_radian)


def dot_grid_scene(config: ProjectConfig, distance: float, n: int = 5,
                   spacing: float | None = None) -> tuple[Scene, np.ndarray]:
    """Uniform white surface at ``distance`` with a projected dot-grid mask.

    Returns the scene and the nominal dot centers.
    """
    shape = config.raster_shape
    if spacing is None:
        spacing = min(shape) / (n + 0.5)
    centers = dot_centers(shape, n, spacing)
    weights = dot_grid_weights(shape, centers, DOT_RADIUS_PX)
    ppmm = _pixels_per_mm(config, distance)
    mask = RegionMask(mask_id="dots", label=BLUR, weights=weights,
                      optical_center=(shape[1] / 2.0, shape[0] / 2.0),
                      pixels_per_mm=ppmm)
    layer = Layer(layer_id="surface", texture=np.ones(shape), distance=distance,
                  masks=[mask], physical_pitch=1.0 / ppmm)
    scene = Scene(layers=[layer],
                  optical_center=(shape[1] / 2.0, shape[0] / 2.0),
                  pixels_per_radian=config.pixels_per_radian)
    return scene, centers
