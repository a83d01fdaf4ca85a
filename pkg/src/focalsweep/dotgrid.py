"""Dot-pattern blur measurement.

A grid of small bright dots is projected onto a plain surface and the
rendered view is measured back: global threshold by inter-class-variance
maximization, connected components, then a least-squares circle fit to the
perimeter of the centermost 3 x 3 blur circles.  Comparing the recovered
radii against the model's circle-of-confusion prediction closes the loop
on the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DetectionError, DomainError


def otsu_threshold(image: np.ndarray, bins: int = 256) -> float:
    """Global threshold maximizing the between-class variance."""
    data = np.asarray(image, dtype=np.float64).ravel()
    lo, hi = float(data.min()), float(data.max())
    if not np.isfinite([lo, hi]).all() or hi <= lo:
        raise DetectionError("image has no contrast to threshold")
    hist, edges = np.histogram(data, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])

    weights = hist.astype(np.float64)
    total = weights.sum()
    w0 = np.cumsum(weights)
    w1 = total - w0
    m0 = np.cumsum(weights * centers)
    mt = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (mt - m0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    k = int(np.argmax(between))
    return float(centers[k])


def fit_circle(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Algebraic least-squares circle fit; returns (cx, cy, radius)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 3:
        # too few points for a meaningful fit: equivalent-area fallback
        cx, cy = float(xs.mean()), float(ys.mean())
        return cx, cy, float(np.sqrt(max(xs.size, 1) / np.pi))
    a = np.column_stack([xs, ys, np.ones_like(xs)])
    b = xs ** 2 + ys ** 2
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cx = sol[0] / 2.0
    cy = sol[1] / 2.0
    r2 = sol[2] + cx ** 2 + cy ** 2
    if r2 <= 0:
        raise DetectionError("degenerate circle fit")
    return float(cx), float(cy), float(np.sqrt(r2))


def dot_centers(shape: tuple[int, int], n: int, spacing: float) -> np.ndarray:
    """(x, y) centers of an n x n grid centered on the raster."""
    h, w = shape
    offs = (np.arange(n) - (n - 1) / 2.0) * spacing
    xs, ys = np.meshgrid(w / 2.0 + offs, h / 2.0 + offs)
    return np.column_stack([xs.ravel(), ys.ravel()])


def dot_grid_weights(shape: tuple[int, int], centers: np.ndarray,
                     dot_radius: float, supersample: int = 4) -> np.ndarray:
    """Projection mask: bright discs of ``dot_radius`` px at ``centers``."""
    if dot_radius <= 0:
        raise DomainError("dot radius must be > 0")
    h, w = shape
    fine = np.zeros((h * supersample, w * supersample), dtype=np.float64)
    ys = (np.arange(h * supersample) + 0.5) / supersample
    xs = (np.arange(w * supersample) + 0.5) / supersample
    for cx, cy in centers:
        x0 = np.searchsorted(xs, cx - dot_radius - 1)
        x1 = np.searchsorted(xs, cx + dot_radius + 1)
        y0 = np.searchsorted(ys, cy - dot_radius - 1)
        y1 = np.searchsorted(ys, cy + dot_radius + 1)
        sub_y = ys[y0:y1, None] - cy
        sub_x = xs[None, x0:x1] - cx
        fine[y0:y1, x0:x1] = np.maximum(
            fine[y0:y1, x0:x1],
            (np.hypot(sub_y, sub_x) <= dot_radius).astype(np.float64))
    return fine.reshape(h, supersample, w, supersample).mean(axis=(1, 3))


@dataclass(frozen=True)
class DotGridMeasurement:
    radii: np.ndarray          # px, one per selected dot
    centers: np.ndarray        # fitted (x, y) centers
    threshold: float

    @property
    def mean_radius(self) -> float:
        return float(self.radii.mean())


def measure_dot_grid(image: np.ndarray, expected_centers: np.ndarray,
                     n_select: int = 9) -> DotGridMeasurement:
    """Recover blur-circle radii from a rendered dot-grid image.

    ``expected_centers`` are the nominal (x, y) dot positions; the
    component count must match them exactly, then the ``n_select``
    centermost dots are circle-fitted.  Raises DetectionError when the
    segmentation does not find one component per expected dot (e.g. blur
    circles merged).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image.mean(axis=2)
    expected = np.asarray(expected_centers, dtype=np.float64)
    thr = otsu_threshold(image)
    binary = image > thr
    labels, count = ndimage.label(binary)
    if count != len(expected):
        raise DetectionError(
            f"expected {len(expected)} blur circles, segmented {count}")

    raw_centroids = ndimage.center_of_mass(binary, labels, np.arange(1, count + 1))
    centroids = np.array([(cx, cy) for cy, cx in raw_centroids])

    grid_center = expected.mean(axis=0)
    order = np.argsort(np.hypot(*(expected - grid_center).T), kind="stable")
    chosen = order[:n_select]

    eroded = ndimage.binary_erosion(binary)
    perimeter = binary & ~eroded

    radii = []
    fitted = []
    for idx in chosen:
        target = expected[idx]
        comp = int(np.argmin(np.hypot(*(centroids - target).T))) + 1
        ys, xs = np.nonzero(perimeter & (labels == comp))
        if xs.size == 0:
            ys, xs = np.nonzero(labels == comp)
        cx, cy, r = fit_circle(xs, ys)
        radii.append(r)
        fitted.append((cx, cy))
    return DotGridMeasurement(radii=np.array(radii), centers=np.array(fitted),
                              threshold=thr)
