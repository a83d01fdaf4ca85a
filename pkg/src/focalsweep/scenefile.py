"""Declarative scene files.

A scene is a JSON document describing layers (distance, texture, masks)
plus the perceived-image mapping.  Textures are PNG references or inline
uniform fields; masks are PNG references or exact radial profiles.  All
paths resolve relative to the scene file.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .images import load_image, save_image, save_mask
from .scene import Layer, Scene
from .seam import RadialProfile, RegionMask

SCENE_FORMAT_VERSION = 1


def _load_texture(doc: dict, base: Path) -> np.ndarray:
    if "uniform" in doc:
        shape = doc.get("shape")
        if not shape or len(shape) != 2:
            raise ValidationError("uniform texture needs a [height, width] shape")
        return np.full((int(shape[0]), int(shape[1])), float(doc["uniform"]))
    if "file" in doc:
        path = base / doc["file"]
        if not path.exists():
            raise ValidationError(f"texture file missing: {path}")
        return load_image(path, encoding=doc.get("encoding", "linear8"))
    raise ValidationError("texture needs either 'uniform' or 'file'")


def _load_mask(doc: dict, base: Path, shape: tuple[int, int],
               optical_center: tuple[float, float]) -> RegionMask:
    mask_id = doc["id"]
    label = doc["label"]
    ppmm = float(doc.get("pixels_per_mm", 1.0))
    if "profile" in doc:
        profile = RadialProfile.from_json_dict(doc["profile"])
        return RegionMask.from_profile(mask_id, label, profile, shape,
                                       optical_center, ppmm)
    if "file" in doc:
        path = base / doc["file"]
        if not path.exists():
            raise ValidationError(f"mask file missing: {path}")
        weights = load_image(path, encoding="linear8")
        if weights.ndim == 3:
            weights = weights.mean(axis=2)
        return RegionMask(mask_id=mask_id, label=label, weights=weights,
                          optical_center=optical_center, pixels_per_mm=ppmm)
    raise ValidationError(f"mask {mask_id!r} needs either 'profile' or 'file'")


def load_scene(path) -> tuple[Scene, str | None]:
    """Read a scene file; returns the scene and its default gaze layer."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read scene {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scene {path} is not valid JSON: {exc}") from exc

    try:
        if doc["version"] != SCENE_FORMAT_VERSION:
            raise ValidationError(f"unsupported scene version {doc['version']}")
        center = tuple(float(c) for c in doc["optical_center"])
        layers = []
        for layer_doc in doc["layers"]:
            texture = _load_texture(layer_doc["texture"], path.parent)
            masks = [_load_mask(m, path.parent, texture.shape[:2], center)
                     for m in layer_doc.get("masks", [])]
            layers.append(Layer(
                layer_id=layer_doc["id"],
                texture=texture,
                distance=float(layer_doc["distance_mm"]),
                masks=masks,
                physical_pitch=layer_doc.get("physical_pitch_mm"),
            ))
        scene = Scene(layers=layers, optical_center=center,
                      pixels_per_radian=float(doc["pixels_per_radian"]),
                      ambient=float(doc.get("ambient", 0.0)))
        return scene, doc.get("gaze_layer")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scene document: {exc}") from exc


def save_scene(scene: Scene, path, gaze_layer: str | None = None) -> None:
    """Write a scene directory: scene.json plus texture/mask PNGs.

    Uniform textures are stored inline (exact); everything else goes to
    8-bit linear PNGs next to the scene file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tex_dir = path.parent / "textures"
    mask_dir = path.parent / "masks"

    layers_doc = []
    for layer in scene.layers:
        tex = layer.texture
        if tex.ndim == 2 and tex.size and np.all(tex == tex.flat[0]):
            tex_doc = {"uniform": float(tex.flat[0]),
                       "shape": [tex.shape[0], tex.shape[1]]}
        else:
            tex_dir.mkdir(exist_ok=True)
            tex_file = tex_dir / f"{layer.layer_id}.png"
            save_image(tex, tex_file, encoding="linear8")
            tex_doc = {"file": f"textures/{layer.layer_id}.png",
                       "encoding": "linear8"}
        masks_doc = []
        for mask in layer.masks:
            entry = {"id": mask.mask_id, "label": mask.label,
                     "pixels_per_mm": mask.pixels_per_mm}
            if mask.profile is not None:
                entry["profile"] = mask.profile.to_json_dict()
            else:
                mask_dir.mkdir(exist_ok=True)
                mask_file = mask_dir / f"{mask.mask_id}.png"
                save_mask(mask, mask_file)
                entry["file"] = f"masks/{mask.mask_id}.png"
            masks_doc.append(entry)
        layer_doc = {"id": layer.layer_id, "distance_mm": layer.distance,
                     "texture": tex_doc, "masks": masks_doc}
        if layer.physical_pitch is not None:
            layer_doc["physical_pitch_mm"] = layer.physical_pitch
        layers_doc.append(layer_doc)

    doc = {
        "version": SCENE_FORMAT_VERSION,
        "optical_center": [scene.optical_center[0], scene.optical_center[1]],
        "pixels_per_radian": scene.pixels_per_radian,
        "ambient": scene.ambient,
        "layers": layers_doc,
    }
    if gaze_layer is not None:
        doc["gaze_layer"] = gaze_layer
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
