"""Per-frame spatial local-contrast feature extraction.

The filter kernel is a square of 3x3 = 9 adjacent patches, each ``patch``
pixels on a side (27x27 total footprint for patch=9; the default patch=3
gives the 9x9 kernel). For the pixel at the kernel center, the peak of the
central target patch is played off against the mean intensities of the
eight surrounding patches, taken as four diametrically opposite pairs:

    contrast_n = max(2 * target_peak - mean_n - mean_opposite(n), 0)

so that a straight edge running through the kernel zeroes the pair that
straddles it. The response is the product of the largest and smallest of
the four pair contrasts; taking the minimum into the product is what kills
edge interiors (one zero pair annihilates the pixel). The finished map is
divided by its global maximum, so a non-degenerate map peaks at exactly 1.

Pixels whose kernel does not fit inside the frame are 0: the border policy
is zero-fill, never padding, so borders cannot fabricate contrast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter, uniform_filter

from .imgcore import Frame

# Offsets of neighbor patches 1..4, in patch units, as (row, col); patches
# 5..8 are their negations, clockwise-from-top numbering. Only opposite
# pairs enter the contrast, so pair order is all that matters.
_PAIR_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass(frozen=True)
class SpatialConfig:
    """Patch side length; the full kernel spans 3*patch pixels per side."""

    patch: int = 3

    def __post_init__(self):
        if self.patch < 3 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 3, got {self.patch}")

    @property
    def margin(self) -> int:
        """Half-width of the full kernel: valid centers keep this distance from edges."""
        return (3 * self.patch - 1) // 2


# Raw responses below this are floating-point residue, not contrast: any
# real contrast in quantized unit-scale input (>= 1/65535) produces raw
# values above 1e-10, while arithmetic dust on featureless regions sits
# below 1e-15. Without the floor, normalizing a featureless frame would
# amplify that dust to a full-scale response.
RESPONSE_FLOOR = 1e-12


def unit_normalize(values: np.ndarray) -> np.ndarray:
    """Divide by the global maximum; a map with no real response becomes all zeros."""
    peak = values.max()
    if peak <= RESPONSE_FLOOR:
        return np.zeros_like(values)
    return values / peak


def _pixels_of(frame: Frame | np.ndarray) -> np.ndarray:
    return frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)


def _check_size(pixels: np.ndarray, cfg: SpatialConfig) -> None:
    kernel = 3 * cfg.patch
    if pixels.shape[0] < kernel or pixels.shape[1] < kernel:
        raise ValueError(
            f"frame {pixels.shape[1]}x{pixels.shape[0]} too small for one "
            f"{kernel}x{kernel} kernel placement"
        )


def compute_smap(
    frame: Frame | np.ndarray,
    cfg: SpatialConfig = SpatialConfig(),
    *,
    normalize: bool = True,
) -> np.ndarray:
    """Spatial feature map via incremental window maxima and box means.

    Exactness against :func:`compute_smap_reference` is enforced by test,
    not assumed. ``normalize=False`` returns raw responses (pre-division).
    """
    pixels = _pixels_of(frame)
    _check_size(pixels, cfg)
    patch, m = cfg.patch, cfg.margin
    h, w = pixels.shape

    target_peak = maximum_filter(pixels, size=patch, mode="constant", cval=0.0)
    patch_mean = uniform_filter(pixels, size=patch, mode="constant", cval=0.0)

    rows, cols = slice(m, h - m), slice(m, w - m)
    doubled_peak = 2.0 * target_peak[rows, cols]
    contrasts = []
    for dr, dc in _PAIR_OFFSETS:
        # Valid centers keep the full kernel inside the frame, so every
        # shifted slice below stays within bounds.
        near = patch_mean[m + dr * patch : h - m + dr * patch,
                          m + dc * patch : w - m + dc * patch]
        far = patch_mean[m - dr * patch : h - m - dr * patch,
                         m - dc * patch : w - m - dc * patch]
        contrasts.append(np.maximum(doubled_peak - near - far, 0.0))
    stacked = np.stack(contrasts)

    smap = np.zeros_like(pixels)
    smap[rows, cols] = stacked.max(axis=0) * stacked.min(axis=0)
    return unit_normalize(smap) if normalize else smap


def compute_smap_reference(
    frame: Frame | np.ndarray,
    cfg: SpatialConfig = SpatialConfig(),
    *,
    normalize: bool = True,
) -> np.ndarray:
    """Brute-force oracle: the literal per-pixel loop, no incremental reuse."""
    pixels = _pixels_of(frame)
    _check_size(pixels, cfg)
    patch, m = cfg.patch, cfg.margin
    h, w = pixels.shape
    r = patch // 2

    smap = np.zeros_like(pixels)
    for i in range(m, h - m):
        for j in range(m, w - m):
            target_peak = pixels[i - r : i + r + 1, j - r : j + r + 1].max()
            contrasts = []
            for dr, dc in _PAIR_OFFSETS:
                ni, nj = i + dr * patch, j + dc * patch
                oi, oj = i - dr * patch, j - dc * patch
                near = pixels[ni - r : ni + r + 1, nj - r : nj + r + 1].mean()
                far = pixels[oi - r : oi + r + 1, oj - r : oj + r + 1].mean()
                contrasts.append(max(2.0 * target_peak - near - far, 0.0))
            smap[i, j] = max(contrasts) * min(contrasts)
    return unit_normalize(smap) if normalize else smap
