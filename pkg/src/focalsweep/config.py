"""Project configuration: physical constants, device model and tolerances.

The JSON form speaks diopters and keeps only the values a user would
override; everything else falls back to the defaults below.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .errors import ValidationError
from .optics import EyeModel
from .sweep import (DEFAULT_ALPHA, EtlModel, PROJECTOR_FRAME_US,
                    SWEEP_FREQUENCY_HZ, TRIGGER_DELAY_US)
from .units import from_diopters, to_diopters

CONFIG_FORMAT_VERSION = 1

#: scheduling power-window half-width (mm^-1).  0.3 D: wide enough that a
#: whole 1 ms frame fits around either sweep extreme even when the
#: quantized drive grid overshoots the target range by a full voltage
#: step; frames are centered at the best phase, so their mid-frame power
#: error stays ~0.001 D regardless.
DEFAULT_WINDOW_TOLERANCE = from_diopters(0.3)


@dataclass
class ProjectConfig:
    eye: EyeModel = field(default_factory=EyeModel)
    etl: EtlModel = field(default_factory=EtlModel)
    vertex_distance: float = 15.0            # mm, lens-to-eye
    alpha: float = DEFAULT_ALPHA              # mm^-1 sweep headroom
    raster_width: int = 1024
    raster_height: int = 768
    pixels_per_radian: float = 1500.0
    projector_frame_us: int = PROJECTOR_FRAME_US
    trigger_delay_us: int = TRIGGER_DELAY_US
    sweep_frequency: float = SWEEP_FREQUENCY_HZ
    window_tolerance: float = DEFAULT_WINDOW_TOLERANCE
    integration_samples: int = 8

    def __post_init__(self):
        if self.raster_width < 1 or self.raster_height < 1:
            raise ValidationError("raster dimensions must be >= 1")
        for name in ("vertex_distance", "alpha", "pixels_per_radian",
                     "sweep_frequency", "window_tolerance"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValidationError(f"config.{name} must be finite and > 0, got {v}")
        if self.projector_frame_us < 1 or self.trigger_delay_us < 0:
            raise ValidationError("bad projector frame / trigger delay")
        if self.integration_samples < 1:
            raise ValidationError("integration_samples must be >= 1")

    @property
    def raster_shape(self) -> tuple[int, int]:
        return (self.raster_height, self.raster_width)

    def to_json_dict(self) -> dict:
        return {
            "version": CONFIG_FORMAT_VERSION,
            "eye": {
                "pupil_diameter_mm": self.eye.pupil_diameter,
                "lens_retina_distance_mm": self.eye.lens_retina_distance,
                "far_power_diopters": to_diopters(self.eye.far_power),
                "near_power_diopters": to_diopters(self.eye.near_power),
                "acceptable_coc_mm": self.eye.acceptable_coc,
            },
            "etl": asdict(self.etl),
            "vertex_distance_mm": self.vertex_distance,
            "alpha_diopters": to_diopters(self.alpha),
            "raster": [self.raster_width, self.raster_height],
            "pixels_per_radian": self.pixels_per_radian,
            "projector_frame_us": self.projector_frame_us,
            "trigger_delay_us": self.trigger_delay_us,
            "sweep_frequency_hz": self.sweep_frequency,
            "window_tolerance_diopters": to_diopters(self.window_tolerance),
            "integration_samples": self.integration_samples,
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ProjectConfig":
        try:
            version = doc.get("version", CONFIG_FORMAT_VERSION)
            if version != CONFIG_FORMAT_VERSION:
                raise ValidationError(f"unsupported config version {version}")
            defaults = cls()
            eye_doc = doc.get("eye", {})
            eye = EyeModel(
                pupil_diameter=eye_doc.get("pupil_diameter_mm",
                                           defaults.eye.pupil_diameter),
                lens_retina_distance=eye_doc.get("lens_retina_distance_mm",
                                                 defaults.eye.lens_retina_distance),
                far_power=from_diopters(eye_doc["far_power_diopters"])
                if "far_power_diopters" in eye_doc else defaults.eye.far_power,
                near_power=from_diopters(eye_doc["near_power_diopters"])
                if "near_power_diopters" in eye_doc else defaults.eye.near_power,
                acceptable_coc=eye_doc.get("acceptable_coc_mm",
                                           defaults.eye.acceptable_coc),
            )
            etl = EtlModel(**{**asdict(defaults.etl), **doc.get("etl", {})})
            raster = doc.get("raster", [defaults.raster_width, defaults.raster_height])
            return cls(
                eye=eye,
                etl=etl,
                vertex_distance=doc.get("vertex_distance_mm", defaults.vertex_distance),
                alpha=from_diopters(doc["alpha_diopters"])
                if "alpha_diopters" in doc else defaults.alpha,
                raster_width=int(raster[0]),
                raster_height=int(raster[1]),
                pixels_per_radian=doc.get("pixels_per_radian",
                                          defaults.pixels_per_radian),
                projector_frame_us=int(doc.get("projector_frame_us",
                                               defaults.projector_frame_us)),
                trigger_delay_us=int(doc.get("trigger_delay_us",
                                             defaults.trigger_delay_us)),
                sweep_frequency=doc.get("sweep_frequency_hz",
                                        defaults.sweep_frequency),
                window_tolerance=from_diopters(doc["window_tolerance_diopters"])
                if "window_tolerance_diopters" in doc else defaults.window_tolerance,
                integration_samples=int(doc.get("integration_samples",
                                                defaults.integration_samples)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed config: {exc}") from exc

    @classmethod
    def load_json(cls, path) -> "ProjectConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_json_dict(doc)
