"""PNG input/output with explicit linearization.

Renders travel as 8-bit sRGB by default (16-bit linear optional); mask
weights are stored linearly (they are illumination fractions, not
radiance).  PIL writes no timestamp chunks, so repeated saves of the same
array are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .seam import RegionMask


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear [0, 1] -> sRGB [0, 1]."""
    linear = np.clip(linear, 0.0, 1.0)
    return np.where(linear <= 0.0031308,
                    12.92 * linear,
                    1.055 * np.power(linear, 1.0 / 2.4) - 0.055)


def srgb_decode(encoded: np.ndarray) -> np.ndarray:
    """sRGB [0, 1] -> linear [0, 1]."""
    encoded = np.clip(encoded, 0.0, 1.0)
    return np.where(encoded <= 0.04045,
                    encoded / 12.92,
                    np.power((encoded + 0.055) / 1.055, 2.4))


def save_image(array: np.ndarray, path, encoding: str = "srgb8") -> None:
    """Write a linear-light array as PNG.

    encoding: 'srgb8' (default), 'linear8', or 'linear16' (grayscale only).
    """
    array = np.asarray(array, dtype=np.float64)
    if encoding == "srgb8":
        data = np.round(srgb_encode(array) * 255.0).astype(np.uint8)
    elif encoding == "linear8":
        data = np.round(np.clip(array, 0, 1) * 255.0).astype(np.uint8)
    elif encoding == "linear16":
        if array.ndim != 2:
            raise ValidationError("linear16 supports grayscale only")
        data = np.round(np.clip(array, 0, 1) * 65535.0).astype(np.uint16)
        Image.fromarray(data).save(path, format="PNG")
        return
    else:
        raise ValidationError(f"unknown encoding {encoding!r}")
    Image.fromarray(data).save(path, format="PNG")


def load_image(path, encoding: str = "srgb8") -> np.ndarray:
    """Read a PNG back to linear light, inverting ``encoding``."""
    with Image.open(path) as img:
        if encoding == "linear16":
            data = np.asarray(img, dtype=np.float64) / 65535.0
            return data
        data = np.asarray(img.convert("L") if img.mode in ("L", "I;16", "I")
                          else img.convert("RGB"), dtype=np.float64) / 255.0
    if encoding == "srgb8":
        return srgb_decode(data)
    if encoding == "linear8":
        return data
    raise ValidationError(f"unknown encoding {encoding!r}")


def quantize_weights(weights: np.ndarray) -> np.ndarray:
    """Mask weights [0, 1] -> uint8 levels (round-to-nearest)."""
    return np.round(np.clip(weights, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_mask(mask: RegionMask, path, scale: float | None = None,
              extra: dict | None = None) -> None:
    """Write an 8-bit grayscale mask PNG plus its JSON sidecar."""
    path = Path(path)
    Image.fromarray(quantize_weights(mask.weights), mode="L").save(path, format="PNG")
    sidecar = {
        "mask_id": mask.mask_id,
        "label": mask.label,
        "optical_center": [mask.optical_center[0], mask.optical_center[1]],
        "pixels_per_mm": mask.pixels_per_mm,
    }
    if scale is not None:
        sidecar["scale"] = scale
    if mask.profile is not None:
        sidecar["profile"] = mask.profile.to_json_dict()
    if extra:
        sidecar.update(extra)
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


_SIDECAR_CORE = {"mask_id", "label", "optical_center", "pixels_per_mm",
                 "scale", "profile"}


def load_mask(path, with_extra: bool = False):
    """Read a mask PNG and its sidecar back into a RegionMask.

    With ``with_extra`` the non-core sidecar fields (e.g. a layer binding)
    come back as a second dict.
    """
    from .seam import RadialProfile  # local to avoid import-order noise

    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise ValidationError(f"mask sidecar missing: {sidecar_path}")
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    with Image.open(path) as img:
        weights = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    profile = (RadialProfile.from_json_dict(sidecar["profile"])
               if "profile" in sidecar else None)
    mask = RegionMask(
        mask_id=sidecar["mask_id"],
        label=sidecar["label"],
        weights=weights,
        optical_center=tuple(sidecar["optical_center"]),
        pixels_per_mm=sidecar["pixels_per_mm"],
        profile=profile,
    )
    if with_extra:
        extra = {k: v for k, v in sidecar.items() if k not in _SIDECAR_CORE}
        return mask, extra
    return mask
