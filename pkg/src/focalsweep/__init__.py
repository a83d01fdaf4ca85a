"""Focal-sweep eyewear simulation toolkit.

Models a viewer's eye behind an electrically tunable lens driven in a fast
periodic focal sweep, with a synchronized high-speed projector as the only
light source.  Provides the paraxial blur model, guaranteed-blur range
solving, sweep planning against a drive-waveform database, illumination
scheduling with trigger-delay compensation, apparent-scaling seam
feathering, and a renderer that simulates the perceived retinal image.
"""

from .blur_range import (BlurBorders, DofBorders, blur_borders, dof_borders,
                         far_border, min_blur_power)
from .config import ProjectConfig
from .dotgrid import (DotGridMeasurement, dot_centers, dot_grid_weights,
                      fit_circle, measure_dot_grid, otsu_threshold)
from .errors import (DetectionError, DomainError, FocalSweepError,
                     RangeUnachievableError, SingularConfigurationError,
                     ValidationError, WindowTooNarrowError)
from .optics import (EyeModel, MarginalRayTrace, OpticalStack, RayState,
                     TransferMatrix, blur_circle_diameter, compose,
                     default_eye, free_space, marginal_ray, thin_lens)
from .render import (GazeState, RenderOptions, RenderedView, accommodate,
                     disc_kernel, psf_diameter_px, render)
from .scene import Layer, Scene
from .seam import (BLUR, FOCUS, BlendPair, RadialProfile, RegionMask,
                   ScalingResult, SeamRegion, feather, image_distance,
                   scale_about, scaling_factor, seam_region)
from .sweep import (EtlModel, IlluminationSchedule, InputWave, OutputWaveform,
                    Slot, SweepPlan, WaveformDb, build_db, build_schedule,
                    load_db, phase_windows, plan_sweep, save_db, select_wave,
                    synth_etl_response, voltage_grid)
from .units import from_diopters, to_diopters

__version__ = "0.1.0"
