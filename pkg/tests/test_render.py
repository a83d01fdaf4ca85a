import numpy as np
import pytest

from focalsweep.errors import DomainError, ValidationError
from focalsweep.optics import OpticalStack
from focalsweep.render import (RenderOptions, accommodate, disc_kernel,
                               psf_diameter_px, render)
from focalsweep.scene import Layer, Scene
from focalsweep.seam import FOCUS, RegionMask, scale_about
from focalsweep.sweep import (IlluminationSchedule, InputWave, Slot,
                              synth_etl_response)

SHAPE = (256, 256)
CENTER = (128.0, 128.0)


def ones_mask(mask_id="all", label=FOCUS):
    return RegionMask(mask_id=mask_id, label=label, weights=np.ones(SHAPE),
                      optical_center=CENTER)


def blob_texture():
    ys, xs = np.mgrid[0:SHAPE[0], 0:SHAPE[1]]
    rho = np.hypot(xs - CENTER[0], ys - CENTER[1])
    return np.where(rho < 60.0, 0.25 + 0.5 * np.cos(rho / 9.0) ** 2, 0.0)


def one_layer_scene(texture, distance=500.0, mask=None):
    layer = Layer(layer_id="surface", texture=texture, distance=distance,
                  masks=[mask or ones_mask()])
    return Scene(layers=[layer], optical_center=CENTER, pixels_per_radian=1500.0)


def synthetic_schedule(slots, frequency=50.0):
    """50 Hz period is an exact 20000 us, handy for exact-weight tests."""
    return IlluminationSchedule(slots=tuple(slots), wave=InputWave(0.0, 0.0),
                                frequency=frequency)


class TestAccommodate:
    def test_far_layer_relaxes_eye(self, eye):
        scene = one_layer_scene(blob_texture(), distance=1e6)
        g = accommodate(scene, "surface", eye, 15.0)
        assert g.eye_power == pytest.approx(eye.far_power, rel=1e-4)
        assert not g.clamped

    def test_conjugate_power_at_half_metre(self, eye):
        scene = one_layer_scene(blob_texture(), distance=500.0)
        g = accommodate(scene, "surface", eye, 15.0)
        assert g.eye_power == pytest.approx(1.0 / 515.0 + 1.0 / 16.6667, rel=1e-12)
        stack = OpticalStack(eye=eye, vertex_distance=15.0, etl_power=0.0,
                             eye_power=g.eye_power)
        assert psf_diameter_px(stack, 500.0, 1500.0) == pytest.approx(0.0, abs=1e-9)

    def test_too_close_layer_clamps_to_near_point(self, eye):
        scene = one_layer_scene(blob_texture(), distance=50.0)
        g = accommodate(scene, "surface", eye, 15.0)
        assert g.clamped
        assert g.eye_power == eye.near_power


class TestDiscKernel:
    @pytest.mark.parametrize("diameter", [0.4, 1.0, 2.7, 8.0, 15.5, 31.0])
    def test_normalized(self, diameter):
        k = disc_kernel(diameter)
        assert abs(k.sum() - 1.0) < 1e-9
        assert k.min() >= 0.0

    def test_rotationally_symmetric(self):
        k = disc_kernel(9.0)
        assert np.allclose(k, k.T)
        assert np.allclose(k, k[::-1, ::-1])

    def test_diameter_scales_support(self):
        small = disc_kernel(5.0)
        large = disc_kernel(15.0)
        assert large.shape[0] > small.shape[0]

    def test_psf_diameter_linear_in_pixels_per_radian(self, eye):
        stack = OpticalStack(eye=eye, vertex_distance=15.0, etl_power=0.002,
                             eye_power=eye.far_power)
        d1 = psf_diameter_px(stack, 500.0, 1500.0)
        d2 = psf_diameter_px(stack, 500.0, 3000.0)
        assert d2 == pytest.approx(2 * d1, rel=1e-12)


class TestRender:
    def test_identity_render(self, eye):
        texture = blob_texture()
        scene = one_layer_scene(texture)
        gaze = accommodate(scene, "surface", eye, 15.0)
        slot = Slot("slot00", "all", 0.0, 0, 20000, -460)
        view = render(scene, synthetic_schedule([slot]), gaze, eye, 15.0)
        assert np.array_equal(view.image, texture)
        assert view.provenance[0].blur_diameter_px == pytest.approx(0.0, abs=1e-9)
        assert view.provenance[0].scale == 1.0

    def test_identity_render_rgb(self, eye):
        texture = np.stack([blob_texture(), 0.5 * blob_texture(),
                            np.zeros(SHAPE)], axis=-1)
        scene = one_layer_scene(texture)
        gaze = accommodate(scene, "surface", eye, 15.0)
        slot = Slot("slot00", "all", 0.0, 0, 20000, -460)
        view = render(scene, synthetic_schedule([slot]), gaze, eye, 15.0)
        assert np.array_equal(view.image, texture)

    def test_flux_conserved_under_blur_and_magnification(self, eye):
        texture = blob_texture()
        scene = one_layer_scene(texture)
        gaze = accommodate(scene, "surface", eye, 15.0)
        power = 0.002
        slots = [Slot("s0", "all", power, 0, 10000, -460),
                 Slot("s1", "all", power, 10000, 20000, 9540)]
        view = render(scene, synthetic_schedule(slots), gaze, eye, 15.0)
        from focalsweep.seam import scaling_factor
        s = scaling_factor(500.0, 15.0, power).scale
        reference = scale_about(texture, s, CENTER)
        assert view.image.sum() == pytest.approx(reference.sum(), rel=1e-6)

    def test_blurred_region_matches_direct_convolution(self, eye):
        from scipy.signal import fftconvolve

        texture = blob_texture()
        scene = one_layer_scene(texture)
        gaze = accommodate(scene, "surface", eye, 15.0)
        power = 0.002
        slot = Slot("s0", "all", power, 0, 20000, -460)
        view = render(scene, synthetic_schedule([slot]), gaze, eye, 15.0)

        stack = OpticalStack(eye=eye, vertex_distance=15.0, etl_power=power,
                             eye_power=gaze.eye_power)
        d_px = psf_diameter_px(stack, 500.0, scene.pixels_per_radian)
        from focalsweep.render import disc_kernel
        from focalsweep.seam import scaling_factor
        s = scaling_factor(500.0, 15.0, power).scale
        expected = fftconvolve(scale_about(texture, s, CENTER),
                               disc_kernel(d_px), mode="same")
        assert np.allclose(view.image, expected, atol=1e-12)

    def test_ambient_floor_added(self, eye):
        texture = blob_texture()
        layer = Layer(layer_id="surface", texture=texture, distance=500.0,
                      masks=[ones_mask()])
        scene = Scene(layers=[layer], optical_center=CENTER,
                      pixels_per_radian=1500.0, ambient=0.01)
        gaze = accommodate(scene, "surface", eye, 15.0)
        slot = Slot("s0", "all", 0.0, 0, 20000, -460)
        view = render(scene, synthetic_schedule([slot]), gaze, eye, 15.0)
        assert view.image.min() >= 0.01 - 1e-12

    def test_unresolved_mask_raises(self, eye):
        scene = one_layer_scene(blob_texture())
        gaze = accommodate(scene, "surface", eye, 15.0)
        slot = Slot("s0", "nope", 0.0, 0, 20000, -460)
        with pytest.raises(ValidationError):
            render(scene, synthetic_schedule([slot]), gaze, eye, 15.0)

    def test_kernel_larger_than_raster_raises(self, eye):
        texture = np.ones((24, 24))
        mask = RegionMask(mask_id="all", label=FOCUS, weights=np.ones((24, 24)),
                          optical_center=(12.0, 12.0))
        layer = Layer(layer_id="surface", texture=texture, distance=500.0,
                      masks=[mask])
        scene = Scene(layers=[layer], optical_center=(12.0, 12.0),
                      pixels_per_radian=30000.0)
        gaze = accommodate(scene, "surface", eye, 15.0)
        slot = Slot("s0", "all", 0.005, 0, 20000, -460)
        with pytest.raises(DomainError):
            render(scene, synthetic_schedule([slot]), gaze, eye, 15.0)

    def test_integration_requires_waveform(self, eye):
        scene = one_layer_scene(blob_texture())
        gaze = accommodate(scene, "surface", eye, 15.0)
        slot = Slot("s0", "all", 0.001, 0, 1000, -460)
        with pytest.raises(ValidationError):
            render(scene, synthetic_schedule([slot]), gaze, eye, 15.0,
                   options=RenderOptions(integrate_within_frame=True))

    def test_integration_averages_waveform_powers(self, eye):
        texture = blob_texture()
        scene = one_layer_scene(texture)
        gaze = accommodate(scene, "surface", eye, 15.0)
        wave = InputWave(-0.01, 0.02)
        waveform = synth_etl_response(wave)
        # center the frame where the waveform crosses the target power
        target = 0.001
        t_mid = float(waveform.sample_times[
            int(np.argmin(np.abs(waveform.powers - target)))])
        start = int(round(t_mid * 1e6)) - 500
        slot = Slot("s0", "all", target, start, start + 1000, start - 460)
        schedule = IlluminationSchedule(slots=(slot,), wave=wave,
                                        waveform=waveform)
        off = render(scene, schedule, gaze, eye, 15.0)
        on = render(scene, schedule, gaze, eye, 15.0,
                    options=RenderOptions(integrate_within_frame=True,
                                          integration_samples=4))
        assert not np.array_equal(off.image, on.image)
        assert on.image.sum() == pytest.approx(off.image.sum(), rel=0.02)
