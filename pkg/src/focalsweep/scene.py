"""Scene description: planar textured layers at known distances.

Layers, their textures and their region masks all live on the projector
raster; the perceived image is rendered on the same grid, registered 1:1
at zero lens power.  Occlusion is not modeled -- illuminated regions are
assumed disjoint, as in the intended multi-object setups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .seam import BLUR, RegionMask


@dataclass
class Layer:
    """One planar object: a linear-light texture at a fixed distance, with
    the masks that may illuminate it."""

    layer_id: str
    texture: np.ndarray
    distance: float  # mm from the tunable lens
    masks: list[RegionMask] = field(default_factory=list)
    physical_pitch: float | None = None  # mm per texel at the object plane

    def __post_init__(self):
        self.texture = np.asarray(self.texture, dtype=np.float64)
        if self.texture.ndim not in (2, 3):
            raise ValidationError(f"layer {self.layer_id!r}: texture must be 2-D "
                                  "grayscale or H x W x 3")
        if not np.isfinite(self.texture).all() or self.texture.min() < 0:
            raise ValidationError(f"layer {self.layer_id!r}: texture must be "
                                  "finite and non-negative")
        if not math.isfinite(self.distance) or self.distance <= 0:
            raise ValidationError(f"layer {self.layer_id!r}: distance must be > 0")
        if self.physical_pitch is not None and self.physical_pitch <= 0:
            raise ValidationError(f"layer {self.layer_id!r}: physical_pitch must be > 0")
        for mask in self.masks:
            if mask.shape != self.texture.shape[:2]:
                raise ValidationError(
                    f"layer {self.layer_id!r}: mask {mask.mask_id!r} shape "
                    f"{mask.shape} does not match texture {self.texture.shape[:2]}")

    @property
    def raster_shape(self) -> tuple[int, int]:
        return self.texture.shape[:2]

    def has_blur_mask(self) -> bool:
        return any(m.label == BLUR for m in self.masks)


@dataclass
class Scene:
    """Layers (kept sorted by distance) plus the perceived-image mapping."""

    layers: list[Layer]
    optical_center: tuple[float, float]
    pixels_per_radian: float
    ambient: float = 0.0

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("a scene needs at least one layer")
        if not math.isfinite(self.pixels_per_radian) or self.pixels_per_radian <= 0:
            raise ValidationError("pixels_per_radian must be > 0")
        if self.ambient < 0:
            raise ValidationError("ambient must be >= 0")
        self.layers = sorted(self.layers, key=lambda l: l.distance)
        shapes = {l.raster_shape for l in self.layers}
        if len(shapes) != 1:
            raise ValidationError(f"layers must share one raster shape, got {shapes}")
        ids = [l.layer_id for l in self.layers]
        if len(set(ids)) != len(ids):
            raise ValidationError("layer ids must be unique")

    @property
    def raster_shape(self) -> tuple[int, int]:
        return self.layers[0].raster_shape

    def layer(self, layer_id: str) -> Layer:
        for layer in self.layers:
            if layer.layer_id == layer_id:
                return layer
        raise ValidationError(f"no layer {layer_id!r} in scene")

    def blur_targets(self) -> list[tuple[str, float]]:
        """(layer_id, distance) for every layer carrying a blur mask."""
        return [(l.layer_id, l.distance) for l in self.layers if l.has_blur_mask()]

    def find_mask(self, mask_id: str) -> tuple[Layer, RegionMask]:
        for layer in self.layers:
            for mask in layer.masks:
                if mask.mask_id == mask_id:
                    return layer, mask
        raise ValidationError(f"no mask {mask_id!r} in scene")
