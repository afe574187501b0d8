"""Synthetic layered phantoms with known tumor ground truth.

A phantom mimics the gross structure of a breast ultrasound image: four
horizontal tissue bands (bright skin, darker fat, mid mammary, dark
muscle) with a darker elliptical tumor inside the mammary band.  The
matching 4-class probability map is one-hot per band, optionally softened
by a box blur so region-level class probabilities are non-degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryError
from .ingest import Image

# Band bottom edges as fractions of image height: skin | fat | mammary | muscle.
BAND_BOUNDS = (0.08, 0.25, 0.70)
BAND_INTENSITY = (200.0, 120.0, 140.0, 90.0)
TUMOR_INTENSITY = 40.0

MIN_TUMOR_FRACTION = 0.01
MAX_TUMOR_FRACTION = 0.40


@dataclass(frozen=True)
class EllipseSpec:
    """Axis-aligned ellipse in relative image coordinates."""

    center: tuple[float, float] = (0.5, 0.45)  # (x, y)
    axes: tuple[float, float] = (0.14, 0.11)  # (rx, ry)


@dataclass(frozen=True)
class DistractorSpec(EllipseSpec):
    """Dark non-tumor blob placed outside the mammary band."""

    center: tuple[float, float] = (0.75, 0.85)
    axes: tuple[float, float] = (0.06, 0.05)
    intensity: float = 45.0


@dataclass(frozen=True)
class PhantomCase:
    image: Image
    ground_truth: np.ndarray  # (H, W) uint8 in {0, 1}
    prob_map: np.ndarray  # (4, H, W) float64
    tumor_center: tuple[float, float]  # pixel coordinates (x, y)
    seed: int


def _ellipse_mask(width: int, height: int, spec: EllipseSpec) -> np.ndarray:
    cx, cy = spec.center
    rx, ry = spec.axes
    x = (np.arange(width) + 0.5) / width
    y = (np.arange(height) + 0.5) / height
    dx = (x[None, :] - cx) / rx
    dy = (y[:, None] - cy) / ry
    return dx * dx + dy * dy <= 1.0


def _band_of_rows(height: int, bounds) -> np.ndarray:
    y = (np.arange(height) + 0.5) / height
    return np.searchsorted(np.asarray(bounds), y, side="right")


def generate_phantom(
    width: int,
    height: int,
    tumor: EllipseSpec = EllipseSpec(),
    noise_sigma: float = 10.0,
    seed: int = 0,
    *,
    band_bounds=BAND_BOUNDS,
    band_intensity=BAND_INTENSITY,
    tumor_intensity: float = TUMOR_INTENSITY,
    prob_blur: int = 3,
    distractor: DistractorSpec | None = None,
) -> PhantomCase:
    """Build a deterministic phantom for the given seed.

    The tumor ellipse must fit inside the mammary band and occupy between
    1% and 40% of the image, otherwise a GeometryError is raised.
    """
    if width < 8 or height < 8:
        raise GeometryError("phantom needs width and height of at least 8 pixels")
    cx, cy = tumor.center
    rx, ry = tumor.axes
    mam_top, mam_bot = band_bounds[1], band_bounds[2]
    if rx <= 0 or ry <= 0:
        raise GeometryError("tumor axes must be positive")
    if cy - ry < mam_top or cy + ry > mam_bot:
        raise GeometryError(
            f"tumor rows [{cy - ry:.3f}, {cy + ry:.3f}] escape the mammary band "
            f"[{mam_top}, {mam_bot})"
        )
    if cx - rx < 0 or cx + rx > 1:
        raise GeometryError("tumor ellipse escapes the image horizontally")

    band_idx = _band_of_rows(height, band_bounds)
    base = np.asarray(band_intensity, dtype=np.float64)[band_idx]
    base = np.repeat(base[:, None], width, axis=1)

    gt = _ellipse_mask(width, height, tumor)
    frac = gt.sum() / (width * height)
    if not (MIN_TUMOR_FRACTION <= frac <= MAX_TUMOR_FRACTION):
        raise GeometryError(
            f"tumor covers {frac:.4f} of the image, outside "
            f"[{MIN_TUMOR_FRACTION}, {MAX_TUMOR_FRACTION}]"
        )
    base[gt] = tumor_intensity

    if distractor is not None:
        dcy, dry = distractor.center[1], distractor.axes[1]
        inside_fat = dcy - dry >= band_bounds[0] and dcy + dry <= band_bounds[1]
        inside_muscle = dcy - dry >= band_bounds[2] and dcy + dry <= 1.0
        if not (inside_fat or inside_muscle):
            raise GeometryError(
                "distractor must sit entirely inside the fat or muscle band"
            )
        dmask = _ellipse_mask(width, height, distractor)
        base[dmask] = distractor.intensity

    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        base = base + rng.normal(0.0, noise_sigma, size=base.shape)
    pixels = np.clip(np.rint(base), 0, 255).astype(np.uint8)

    probs = np.zeros((4, height, width), dtype=np.float64)
    for k in range(4):
        probs[k, band_idx == k, :] = 1.0
    if prob_blur > 0:
        size = 2 * prob_blur + 1
        for k in range(4):
            probs[k] = ndimage.uniform_filter(probs[k], size=size, mode="nearest")
        probs /= probs.sum(axis=0, keepdims=True)

    return PhantomCase(
        image=Image(pixels),
        ground_truth=gt.astype(np.uint8),
        prob_map=probs,
        tumor_center=(cx * width, cy * height),
        seed=seed,
    )
