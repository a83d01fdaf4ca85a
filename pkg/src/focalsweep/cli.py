"""Command-line workflows.

Verbs: ``db`` (build the waveform database), ``blur-range`` (border
curves), ``plan`` (scene -> sweep plan + schedule + feathered masks),
``render`` (perceived image), ``dotgrid`` (blur-size measurement
protocol), ``seam-demo`` (seam alleviation conditions) and ``make-scene``
(materialize a bundled fixture scene).

Every command is a pure function of its inputs: repeated runs write
byte-identical files.  Exit codes: 0 success, 2 validation error, 3
model/domain error.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import fixtures
from .blur_range import dof_borders, min_blur_power
from .config import ProjectConfig
from .dotgrid import measure_dot_grid
from .errors import FocalSweepError
from .images import load_mask, save_image, save_mask
from .optics import OpticalStack
from .render import (RenderOptions, RenderedView, accommodate,
                     psf_diameter_px, render)
from .scene import Scene
from .scenefile import load_scene, save_scene
from .seam import (BLUR, FOCUS, RegionMask, feather, scaling_factor,
                   seam_region)
from .sweep import (IlluminationSchedule, InputWave, Slot, SweepPlan,
                    build_db, build_schedule, load_db, plan_sweep, save_db,
                    select_wave, synth_etl_response)
from .units import from_diopters, to_diopters

PLAN_FORMAT_VERSION = 1


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FocalSweepError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
    return wrapper


def _load_config(path: str | None) -> ProjectConfig:
    return ProjectConfig.load_json(path) if path else ProjectConfig()


@click.group()
def main():
    """Focal-sweep eyewear simulation toolkit."""


@main.command("db")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Project config JSON.")
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Output database file.")
@_handle_errors
def cmd_db(config_path, out_path):
    """Synthesize the drive-wave response database."""
    config = _load_config(config_path)
    db = build_db(model=config.etl)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    save_db(db, out_path)
    click.echo(f"wrote {len(db)} waveforms to {out_path}")


@main.command("blur-range")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--max-power", type=float, default=10.0,
              help="Largest lens power (diopters).")
@click.option("--step", type=float, default=0.05,
              help="Power grid step (diopters).")
@_handle_errors
def cmd_blur_range(config_path, out_dir, max_power, step):
    """Emit near/far guaranteed-blur borders per lens power (CSV + plot)."""
    config = _load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eye, dv = config.eye, config.vertex_distance

    powers_d = [0.0] + [round(step * k, 10) for k in
                        range(1, int(round(max_power / step)) + 1)]
    rows = []
    for p_d in powers_d:
        p = from_diopters(p_d)
        near = dof_borders(eye, dv, p, eye.near_power).d_minus
        far = dof_borders(eye, dv, p, eye.far_power).d_plus
        rows.append((p_d, near, far))

    csv_path = out / "blur_range.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["power_diopters", "near_border_mm", "far_border_mm"])
        for p_d, near, far in rows:
            writer.writerow([p_d,
                             "unbounded" if near is None else f"{near:.6f}",
                             "unbounded" if far is None else f"{far:.6f}"])

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ps = [r[0] for r in rows]
    nears = [r[1] if r[1] is not None else np.nan for r in rows]
    fars = [r[2] if r[2] is not None else np.nan for r in rows]
    ax.plot(ps, fars, label="far border", color="tab:red")
    ax.plot(ps, nears, label="near border", color="tab:blue")
    ax.set_xlabel("lens power (D)")
    ax.set_ylabel("distance (mm)")
    ax.set_yscale("log")
    ax.set_title("guaranteed-blur borders")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "blur_range.png", dpi=120)
    plt.close(fig)
    click.echo(f"wrote {csv_path} and plot for {len(rows)} powers")


def _feather_scene_masks(scene: Scene, p_high: float, vertex_distance: float
                         ) -> tuple[list[str], list[str], dict]:
    """Feather blur masks against the powered-slot scale.

    A blur mask whose layer carries a complementary focus mask (a split
    surface) is replaced together with it by the feathered pair.  A blur
    mask without a partner (an isolated silhouette) gets its edges
    feathered, but no zero-power seam annex is scheduled: its seam band
    falls on unilluminated background.

    Returns (focus_mask_ids, blur_mask_ids, registry) where registry maps
    mask_id -> (layer_id, RegionMask).
    """
    focus_ids: list[str] = []
    blur_ids: list[str] = []
    registry: dict[str, tuple[str, RegionMask]] = {}
    for layer in scene.layers:
        blur_masks = [m for m in layer.masks if m.label == BLUR]
        focus_masks = [m for m in layer.masks if m.label == FOCUS]
        scale = scaling_factor(layer.distance, vertex_distance, p_high).scale
        claimed_focus: set[str] = set()
        for mask in blur_masks:
            pair = feather(mask, scale)
            partner = next(
                (f for f in focus_masks if f.mask_id not in claimed_focus
                 and np.abs(f.weights + mask.weights - 1.0).max() <= 1.5 / 255.0),
                None)
            registry[pair.wp.mask_id] = (layer.layer_id, pair.wp)
            blur_ids.append(pair.wp.mask_id)
            if partner is not None:
                claimed_focus.add(partner.mask_id)
                registry[pair.w0.mask_id] = (layer.layer_id, pair.w0)
                focus_ids.append(pair.w0.mask_id)
        for mask in focus_masks:
            if mask.mask_id not in claimed_focus:
                registry[mask.mask_id] = (layer.layer_id, mask)
                focus_ids.append(mask.mask_id)
    return focus_ids, blur_ids, registry


@main.command("plan")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--scene", "scene_path", type=click.Path(), required=True)
@click.option("--db", "db_path", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@_handle_errors
def cmd_plan(config_path, scene_path, db_path, out_dir):
    """Plan the sweep for a scene: range, wave, schedule, feathered masks."""
    config = _load_config(config_path)
    scene, _ = load_scene(scene_path)
    db = load_db(db_path)
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    plan = plan_sweep(scene, config.eye, config.vertex_distance, config.alpha, db)
    focus_ids, blur_ids, registry = _feather_scene_masks(
        scene, plan.p_high, config.vertex_distance)
    schedule = build_schedule(plan, focus_ids, blur_ids,
                              tol=config.window_tolerance)

    plan_doc = {
        "version": PLAN_FORMAT_VERSION,
        "p_s_diopters": to_diopters(plan.p_s),
        "alpha_diopters": to_diopters(plan.alpha),
        "p_high_diopters": to_diopters(plan.p_high),
        "wave": {"v_min": plan.chosen_wave.v_min, "v_max": plan.chosen_wave.v_max},
        "output_range_diopters": [to_diopters(plan.waveform.power_min()),
                                  to_diopters(plan.waveform.power_max())],
        "min_blur_powers_diopters": {k: to_diopters(v)
                                     for k, v in sorted(plan.min_powers.items())},
    }
    with open(out / "plan.json", "w", encoding="utf-8") as fh:
        json.dump(plan_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    schedule.save_json(out / "schedule.json")

    for slot in schedule.slots:
        layer_id, mask = registry[slot.mask_id]
        scale = scaling_factor(scene.layer(layer_id).distance,
                               config.vertex_distance, slot.target_power).scale
        save_mask(mask, out / "masks" / f"{mask.mask_id}.png", scale=scale,
                  extra={"layer_id": layer_id})
    click.echo(f"plan: sweep 0 to {to_diopters(plan.p_high):.3f} D, "
               f"wave [{plan.chosen_wave.v_min:+.3f}, "
               f"{plan.chosen_wave.v_max:+.3f}] V, "
               f"{len(schedule.slots)} slots -> {out}")


def _load_mask_registry(masks_dir: str | None) -> dict:
    registry = {}
    if masks_dir:
        for png in sorted(Path(masks_dir).glob("*.png")):
            mask, extra = load_mask(png, with_extra=True)
            layer_id = extra.get("layer_id")
            if layer_id is None:
                raise FocalSweepError(f"mask sidecar {png} lacks layer_id")
            registry[mask.mask_id] = (layer_id, mask)
    return registry


@main.command("render")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--scene", "scene_path", type=click.Path(), required=True)
@click.option("--schedule", "schedule_path", type=click.Path(), required=True)
@click.option("--masks-dir", type=click.Path(), default=None,
              help="Feathered masks emitted by 'plan'.")
@click.option("--gaze", "gaze_layer", default=None,
              help="Layer to accommodate on (default: scene's gaze_layer).")
@click.option("--integrate/--no-integrate", default=False,
              help="Average the waveform power across each lit frame.")
@click.option("--blur/--no-blur", "apply_blur", default=True,
              help="Apply defocus kernels (off isolates illumination compositing).")
@click.option("--encoding", type=click.Choice(["srgb8", "linear8", "linear16"]),
              default="srgb8")
@click.option("--out-dir", type=click.Path(), required=True)
@_handle_errors
def cmd_render(config_path, scene_path, schedule_path, masks_dir, gaze_layer,
               integrate, apply_blur, encoding, out_dir):
    """Render the perceived image for a schedule and gaze target."""
    config = _load_config(config_path)
    scene, default_gaze = load_scene(scene_path)
    target = gaze_layer or default_gaze
    if target is None:
        raise FocalSweepError("no gaze layer: pass --gaze or set one in the scene")

    schedule = IlluminationSchedule.load_json(schedule_path)
    if integrate:
        waveform = synth_etl_response(schedule.wave, config.etl)
        schedule = IlluminationSchedule(
            slots=schedule.slots, wave=schedule.wave,
            frequency=schedule.frequency,
            projector_frame_us=schedule.projector_frame_us,
            trigger_delay_us=schedule.trigger_delay_us, waveform=waveform)

    registry = _load_mask_registry(masks_dir)
    gaze = accommodate(scene, target, config.eye, config.vertex_distance)
    options = RenderOptions(integrate_within_frame=integrate,
                            integration_samples=config.integration_samples,
                            apply_blur=apply_blur)
    view = render(scene, schedule, gaze, config.eye, config.vertex_distance,
                  extra_masks=registry, options=options)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(view.image, out / "render.png", encoding=encoding)
    provenance = {
        "gaze": {"layer": gaze.layer_id,
                 "eye_power_diopters": to_diopters(gaze.eye_power),
                 "clamped": gaze.clamped},
        "options": {"integrate_within_frame": integrate,
                    "integration_samples": config.integration_samples,
                    "apply_blur": apply_blur, "encoding": encoding},
        "slots": [{
            "slot_id": c.slot_id, "mask_id": c.mask_id, "layer_id": c.layer_id,
            "etl_power_diopters": to_diopters(c.etl_power),
            "scale": c.scale,
            "blur_diameter_mm": c.blur_diameter_mm,
            "blur_diameter_px": c.blur_diameter_px,
            "weight": c.weight,
        } for c in view.provenance],
    }
    with open(out / "provenance.json", "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"rendered {scene_path} (gaze {target}) -> {out / 'render.png'}")


def _normal_schedule(power: float, config: ProjectConfig) -> IlluminationSchedule:
    """Fixed-power baseline: one frame, mid-period, no sweep."""
    volts = power / config.etl.full_scale_power * config.etl.full_scale_voltage
    wave = InputWave(volts, volts, config.sweep_frequency)
    start = 7500
    slot = Slot(slot_id="slot00", mask_id="dots", target_power=power,
                t_start_us=start, t_end_us=start + config.projector_frame_us,
                trigger_us=start - config.trigger_delay_us)
    return IlluminationSchedule(slots=(slot,), wave=wave,
                                frequency=config.sweep_frequency,
                                projector_frame_us=config.projector_frame_us,
                                trigger_delay_us=config.trigger_delay_us,
                                waveform=synth_etl_response(wave, config.etl))


@main.command("dotgrid")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--db", "db_path", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--distances", default="500,600,700,800,900",
              help="Comma-separated surface distances (mm).")
@click.option("--powers", default="0,0.5,1,1.5,2,2.5,3,3.5,4,4.5,5",
              help="Comma-separated lens powers (diopters).")
@_handle_errors
def cmd_dotgrid(config_path, db_path, out_dir, distances, powers):
    """Blur-size measurement: fixed power vs scheduled sweep, per distance."""
    config = _load_config(config_path)
    db = load_db(db_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dist_list = [float(s) for s in distances.split(",") if s.strip()]
    power_list = [float(s) for s in powers.split(",") if s.strip()]

    rows = []
    for distance in dist_list:
        scene, centers = fixtures.dot_grid_scene(config, distance)
        gaze = accommodate(scene, "surface", config.eye, config.vertex_distance)
        for power_d in power_list:
            power = from_diopters(power_d)
            stack = OpticalStack(eye=config.eye,
                                 vertex_distance=config.vertex_distance,
                                 etl_power=power, eye_power=gaze.eye_power)
            model_px = psf_diameter_px(stack, distance,
                                       config.pixels_per_radian) / 2.0

            normal = render(scene, _normal_schedule(power, config), gaze,
                            config.eye, config.vertex_distance)
            wave, waveform = select_wave(db, (0.0, power))
            plan = SweepPlan(p_s=power, alpha=0.0, chosen_wave=wave,
                             waveform=waveform)
            schedule = build_schedule(plan, [], ["dots"],
                                      tol=config.window_tolerance)
            swept = render(scene, schedule, gaze, config.eye,
                           config.vertex_distance)
            integ = render(scene, schedule, gaze, config.eye,
                           config.vertex_distance,
                           options=RenderOptions(
                               integrate_within_frame=True,
                               integration_samples=config.integration_samples))

            for name, view in (("normal", normal), ("proposed", swept),
                               ("proposed_integrated", integ)):
                measured = measure_dot_grid(view.image, centers)
                rows.append((distance, power_d, name,
                             measured.mean_radius, model_px))

    csv_path = out / "dotgrid.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_mm", "power_diopters", "condition",
                         "radius_px", "model_radius_px"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2],
                             f"{row[3]:.4f}", f"{row[4]:.4f}"])

    radii = {(r[0], r[1], r[2]): r[3] for r in rows}
    gaps = [abs(radii[(d, p, "proposed_integrated")] - radii[(d, p, "normal")])
            for d in dist_list for p in power_list]
    click.echo(f"wrote {csv_path}; mean |integrated - normal| radius gap: "
               f"{np.mean(gaps):.3f} px")


@main.command("seam-demo")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--db", "db_path", type=click.Path(), default=None,
              help="Waveform db (synthesized in memory when omitted).")
@click.option("--out-dir", type=click.Path(), required=True)
@_handle_errors
def cmd_seam_demo(config_path, db_path, out_dir):
    """Render the eight seam conditions, binary vs feathered."""
    config = _load_config(config_path)
    db = load_db(db_path) if db_path else build_db(model=config.etl)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary = {}
    for texture_kind in ("document", "picture"):
        for seam_kind in ("gap", "overlap"):
            for power_d in (1.0, 2.0):
                name = f"{texture_kind}-{seam_kind}-{power_d:g}D"
                result = run_seam_condition(config, db, texture_kind,
                                            seam_kind, from_diopters(power_d),
                                            out / name)
                summary[name] = result
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    worst = max(v["feathered_max_deviation_255"] for v in summary.values())
    click.echo(f"8 conditions -> {out}; worst feathered deviation "
               f"{worst:.2f}/255")


def seam_schedule(db, power: float, config: ProjectConfig) -> IlluminationSchedule:
    """Two-slot schedule (focus region at 0, powered region at ``power``)."""
    wave, waveform = select_wave(db, (0.0, power))
    plan = SweepPlan(p_s=power, alpha=0.0, chosen_wave=wave, waveform=waveform)
    return build_schedule(plan, ["focus-region"], ["blur-region"],
                          tol=config.window_tolerance)


def run_seam_condition(config: ProjectConfig, db, texture_kind: str,
                       seam_kind: str, power: float, out_dir: Path) -> dict:
    """One seam condition: compare binary and feathered compositing.

    Rendered without defocus kernels: the check isolates the illumination
    radiometry that feathering is supposed to flatten; the defocus smear
    of the powered slot rides on top of it physically.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = fixtures.seam_scene(config, texture_kind, seam_kind)
    layer = scene.layers[0]
    gaze = accommodate(scene, layer.layer_id, config.eye, config.vertex_distance)
    schedule = seam_schedule(db, power, config)
    options = RenderOptions(apply_blur=False)

    binary_view = render(scene, schedule, gaze, config.eye,
                         config.vertex_distance, options=options)

    scale = scaling_factor(layer.distance, config.vertex_distance, power).scale
    blur_mask = next(m for m in layer.masks if m.label == BLUR)
    pair = feather(blur_mask, scale)
    registry = {"focus-region": (layer.layer_id, pair.w0),
                "blur-region": (layer.layer_id, pair.wp)}
    feathered_view = render(scene, schedule, gaze, config.eye,
                            config.vertex_distance, extra_masks=registry,
                            options=options)

    weight = config.projector_frame_us * 1e-6 / schedule.period
    uniform_scene = fixtures.seam_scene(config, "uniform", seam_kind)
    flat_binary = render(uniform_scene, schedule, gaze, config.eye,
                         config.vertex_distance, options=options)
    flat_feathered = render(uniform_scene, schedule, gaze, config.eye,
                            config.vertex_distance, extra_masks=registry,
                            options=options)

    h, w = scene.raster_shape
    inset = 2
    region = np.zeros((h, w), dtype=bool)
    region[inset:h - inset, inset:w - inset] = True

    def deviation(view: RenderedView) -> float:
        rel = np.abs(view.image / weight - 1.0)
        return float(rel[region].max() * 255.0)

    save_image(binary_view.image / weight, out_dir / "binary.png",
               encoding="linear8")
    save_image(feathered_view.image / weight, out_dir / "feathered.png",
               encoding="linear8")
    save_mask(pair.w0, out_dir / "w0.png", scale=scale,
              extra={"layer_id": layer.layer_id})
    save_mask(pair.wp, out_dir / "wp.png", scale=scale,
              extra={"layer_id": layer.layer_id})

    region_info = seam_region(blur_mask, scale)
    return {
        "scale": scale,
        "binary_max_deviation_255": deviation(flat_binary),
        "feathered_max_deviation_255": deviation(flat_feathered),
        "gap_area_px": region_info.gap_area,
        "overlap_area_px": region_info.overlap_area,
    }


@main.command("make-scene")
@click.argument("name", type=click.Choice(
    ["four-objects-1", "four-objects-2", "dotgrid", "seam-gap", "seam-overlap"]))
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--distance", type=float, default=500.0,
              help="Surface distance for the dotgrid scene (mm).")
@click.option("--out-dir", type=click.Path(), required=True)
@_handle_errors
def cmd_make_scene(name, config_path, distance, out_dir):
    """Write a bundled fixture scene (scene.json + assets)."""
    config = _load_config(config_path)
    out = Path(out_dir)
    if name == "four-objects-1":
        scene, gaze = fixtures.four_object_scene(config, 1), "a"
    elif name == "four-objects-2":
        scene, gaze = fixtures.four_object_scene(config, 2), "b"
    elif name == "dotgrid":
        scene, _ = fixtures.dot_grid_scene(config, distance)
        gaze = "surface"
    else:
        scene = fixtures.seam_scene(config, "document",
                                    "gap" if name == "seam-gap" else "overlap")
        gaze = "surface"
    save_scene(scene, out / "scene.json", gaze_layer=gaze)
    click.echo(f"wrote {out / 'scene.json'}")


if __name__ == "__main__":
    main()
