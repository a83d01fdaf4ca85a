"""Perceived-retinal-image simulation.

Each schedule slot contributes its masked layer, magnified by the apparent
scale for the slot's lens power and blurred by a hard-edged disc kernel of
the model's circle-of-confusion diameter, weighted by the fraction of the
sweep period the slot is lit.  Rendering happens on the perceived-image
grid (visual angle times ``pixels_per_radian``), registered 1:1 to the
projector raster at zero power.

Within-frame integration optionally splits each projector frame into
sub-samples of the actual waveform power and averages the sub-renders,
reproducing the slight blur-circle inflation a real sweep shows when the
power keeps moving during an illuminated frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError, ValidationError
from .optics import EyeModel, OpticalStack, blur_circle_diameter
from .scene import Layer, Scene
from .seam import RegionMask, scale_about, scaling_factor
from .sweep import IlluminationSchedule, Slot

#: kernel diameters below this render as a delta (no convolution)
MIN_KERNEL_PX = 1e-9


@dataclass(frozen=True)
class GazeState:
    """Accommodation implied by looking at one layer (zero lens power)."""

    layer_id: str
    eye_power: float
    clamped: bool


def accommodate(scene: Scene, layer_id: str, eye: EyeModel,
                vertex_distance: float) -> GazeState:
    """Eye power that nulls the blur of the gazed layer at zero lens power,
    clamped into the accommodation range (clamping is reported)."""
    layer = scene.layer(layer_id)
    wanted = 1.0 / (layer.distance + vertex_distance) + 1.0 / eye.lens_retina_distance
    clamped = not (eye.far_power <= wanted <= eye.near_power)
    power = min(max(wanted, eye.far_power), eye.near_power)
    return GazeState(layer_id=layer_id, eye_power=power, clamped=clamped)


def psf_diameter_px(stack: OpticalStack, object_distance: float,
                    pixels_per_radian: float) -> float:
    """Disc-kernel diameter in perceived pixels for one layer and stack.

    The retinal blur diameter maps to visual angle via the lens-retina
    distance, then to pixels.
    """
    if pixels_per_radian <= 0:
        raise DomainError("pixels_per_radian must be > 0")
    diameter_mm = blur_circle_diameter(stack, object_distance)
    return diameter_mm / stack.eye.lens_retina_distance * pixels_per_radian


def disc_kernel(diameter_px: float, supersample: int = 4) -> np.ndarray:
    """Energy-normalized hard-edged disc, rasterized at ``supersample`` x
    to avoid even/odd parity artifacts for fractional diameters."""
    if diameter_px < 0:
        raise DomainError(f"kernel diameter must be >= 0, got {diameter_px}")
    n = int(math.ceil(diameter_px)) + 1
    if n % 2 == 0:
        n += 1
    radius = diameter_px / 2.0
    sub = (np.arange(n * supersample) + 0.5) / supersample - n / 2.0
    xx, yy = np.meshgrid(sub, sub)
    fine = (np.hypot(xx, yy) <= radius).astype(np.float64)
    kernel = fine.reshape(n, supersample, n, supersample).mean(axis=(1, 3))
    total = kernel.sum()
    if total <= 0:
        kernel = np.zeros((1, 1))
        kernel[0, 0] = 1.0
        return kernel
    return kernel / total


@dataclass(frozen=True)
class RenderOptions:
    """Rendering switches.

    ``integrate_within_frame`` needs the schedule to carry its waveform.
    ``apply_blur=False`` composites the slot weights without the defocus
    kernels; used to inspect the illumination radiometry on its own (seam
    checks).
    """

    integrate_within_frame: bool = False
    integration_samples: int = 8
    apply_blur: bool = True
    supersample: int = 4


@dataclass(frozen=True)
class SlotContribution:
    """Provenance for one (slot, layer) contribution."""

    slot_id: str
    mask_id: str
    layer_id: str
    etl_power: float
    scale: float
    blur_diameter_mm: float
    blur_diameter_px: float
    weight: float
    integrated: bool


@dataclass
class RenderedView:
    image: np.ndarray
    gaze: GazeState
    provenance: list[SlotContribution] = field(default_factory=list)

    def energy(self) -> float:
        return float(self.image.sum())


def _resolve_mask(scene: Scene, mask_id: str,
                  extra_masks: dict | None) -> tuple[Layer, RegionMask]:
    if extra_masks and mask_id in extra_masks:
        layer_id, mask = extra_masks[mask_id]
        return scene.layer(layer_id), mask
    return scene.find_mask(mask_id)


def _slot_powers(slot: Slot, schedule: IlluminationSchedule,
                 options: RenderOptions) -> list[float]:
    if not options.integrate_within_frame:
        return [slot.target_power]
    if schedule.waveform is None:
        raise ValidationError(
            "within-frame integration needs the schedule's waveform; "
            "rebuild it from the database entry for this wave")
    k = options.integration_samples
    if k < 1:
        raise ValidationError("integration_samples must be >= 1")
    duration = (slot.t_end_us - slot.t_start_us) * 1e-6
    times = slot.t_start + (np.arange(k) + 0.5) / k * duration
    return [float(p) for p in np.atleast_1d(schedule.waveform.value_at(times))]


def _blur(image: np.ndarray, diameter_px: float, supersample: int) -> np.ndarray:
    if diameter_px <= MIN_KERNEL_PX:
        return image
    kernel = disc_kernel(diameter_px, supersample)
    if kernel.shape[0] > min(image.shape[:2]):
        raise DomainError(
            f"blur kernel ({kernel.shape[0]} px) exceeds the raster "
            f"{image.shape[:2]}; pad the scene raster")
    if image.ndim == 2:
        return fftconvolve(image, kernel, mode="same")
    return np.stack([fftconvolve(image[..., c], kernel, mode="same")
                     for c in range(image.shape[2])], axis=-1)


def render(scene: Scene, schedule: IlluminationSchedule, gaze: GazeState,
           eye: EyeModel, vertex_distance: float,
           extra_masks: dict | None = None,
           options: RenderOptions | None = None) -> RenderedView:
    """Composite the perceived image for one accommodation state.

    ``extra_masks`` maps mask_id -> (layer_id, RegionMask) and takes
    precedence over the scene's own masks (feathered pairs are injected
    this way).  Every slot weight is its lit fraction of the sweep period;
    contributions accumulate in schedule order, deterministically.
    """
    options = options or RenderOptions()
    shape = scene.raster_shape
    first = scene.layers[0].texture
    out = np.zeros(shape if first.ndim == 2 else (*shape, first.shape[2]))

    provenance: list[SlotContribution] = []
    period = schedule.period
    for slot in schedule.slots:
        layer, mask = _resolve_mask(scene, slot.mask_id, extra_masks)
        weight = (slot.t_end_us - slot.t_start_us) * 1e-6 / period
        powers = _slot_powers(slot, schedule, options)
        share = weight / len(powers)
        for power in powers:
            stack = OpticalStack(eye=eye, vertex_distance=vertex_distance,
                                 etl_power=max(power, 0.0),
                                 eye_power=gaze.eye_power)
            scale = scaling_factor(layer.distance, vertex_distance,
                                   stack.etl_power).scale
            d_mm = blur_circle_diameter(stack, layer.distance)
            d_px = d_mm / eye.lens_retina_distance * scene.pixels_per_radian
            if scale == 1.0:
                lit = layer.texture * _expand(mask.weights, layer.texture)
            else:
                tex = scale_about(layer.texture, scale, scene.optical_center)
                lit = tex * _expand(mask.sample_scaled(scale), layer.texture)
            if options.apply_blur:
                lit = _blur(lit, d_px, options.supersample)
            out += share * lit
        mid_stack = OpticalStack(eye=eye, vertex_distance=vertex_distance,
                                 etl_power=max(slot.target_power, 0.0),
                                 eye_power=gaze.eye_power)
        provenance.append(SlotContribution(
            slot_id=slot.slot_id, mask_id=slot.mask_id, layer_id=layer.layer_id,
            etl_power=slot.target_power,
            scale=scaling_factor(layer.distance, vertex_distance,
                                 mid_stack.etl_power).scale,
            blur_diameter_mm=blur_circle_diameter(mid_stack, layer.distance),
            blur_diameter_px=psf_diameter_px(mid_stack, layer.distance,
                                             scene.pixels_per_radian),
            weight=weight, integrated=options.integrate_within_frame))

    if scene.ambient:
        out += scene.ambient
    return RenderedView(image=out, gaze=gaze, provenance=provenance)


def _expand(weights: np.ndarray, texture: np.ndarray) -> np.ndarray:
    """Broadcast 2-D mask weights over a texture's channels."""
    if texture.ndim == 3:
        return weights[..., None]
    return weights
