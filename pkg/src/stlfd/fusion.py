"""Spatial-temporal fusion, adaptive background suppression, and segmentation.

Fusing multiplies the two feature maps pixel-wise, so a pixel survives only
if it is salient both spatially and temporally. The background-suppression
step then multiplies every pixel that is *not* the maximum of its local
window by that window maximum; with values in [0, 1] this contracts its
surroundings while leaving local peaks bit-exact. Segmentation applies one
dynamic threshold, mean + k_sigma * std over the whole map, with a strict
comparison so a constant map segments to an empty mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy import ndimage

from .imgcore import Detection

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class AbsConfig:
    """Background-suppression window size; ``enabled=False`` is the ablation path."""

    kernel: int = 15
    enabled: bool = True

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")


@dataclass(frozen=True)
class ThresholdConfig:
    k_sigma: float = 10.0

    def __post_init__(self):
        if not math.isfinite(self.k_sigma) or self.k_sigma < 0:
            raise ValueError(f"k_sigma must be finite and >= 0, got {self.k_sigma}")


def fuse(smap: np.ndarray, tmap: np.ndarray) -> np.ndarray:
    """Element-wise product of spatial and temporal maps."""
    if smap.shape != tmap.shape:
        raise ValueError(f"dimension mismatch: {smap.shape} vs {tmap.shape}")
    return smap * tmap


def abs_suppress(stmap: np.ndarray, cfg: AbsConfig = AbsConfig()) -> np.ndarray:
    """Scale each non-peak pixel by its local window maximum.

    The window is clipped at frame borders, never padded. Pixels equal to
    their window maximum (including ties) pass through unchanged, so peaks
    are never dimmed; everything else contracts toward zero.
    """
    if not cfg.enabled:
        return stmap
    # With non-negative values the constant-0 exterior can never win the
    # window max, so this equals the border-clipped window maximum.
    window_max = ndimage.maximum_filter(
        stmap, size=cfg.kernel, mode="constant", cval=0.0
    )
    return np.where(stmap == window_max, stmap, stmap * window_max)


def dynamic_threshold(values: np.ndarray, cfg: ThresholdConfig = ThresholdConfig()) -> float:
    """mean + k_sigma * population standard deviation, over all pixels."""
    return float(values.mean() + cfg.k_sigma * values.std())


def segment(values: np.ndarray, cfg: ThresholdConfig = ThresholdConfig()) -> np.ndarray:
    """Binary mask of pixels strictly above the dynamic threshold."""
    return values > dynamic_threshold(values, cfg)


def extract_detections(
    mask: np.ndarray, score_map: np.ndarray, frame_index: int
) -> list[Detection]:
    """Turn the 8-connected components of a mask into scored detections.

    Centroids are weighted by the score map (unweighted if a component's
    scores sum to zero); the score is the component's peak map value.
    Detections come back sorted by descending score.
    """
    if mask.shape != score_map.shape:
        raise ValueError(f"dimension mismatch: {mask.shape} vs {score_map.shape}")
    if not mask.any():
        return []
    # Label only the populated sub-rectangle; component structure inside it
    # is identical to labeling the full mask.
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    window = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    labels, count = ndimage.label(mask[window], structure=_EIGHT_CONNECTED)
    scores = score_map[window]

    detections: list[Detection] = []
    for label_id, bounds in enumerate(ndimage.find_objects(labels, count), start=1):
        component = labels[bounds] == label_id
        values = scores[bounds]
        ys, xs = np.nonzero(component)
        weights = values[ys, xs]
        total = weights.sum()
        if total > 0:
            cx = float((weights * xs).sum() / total)
            cy = float((weights * ys).sum() / total)
        else:
            cx = float(xs.mean())
            cy = float(ys.mean())
        x_off = window[1].start + bounds[1].start
        y_off = window[0].start + bounds[0].start
        detections.append(
            Detection(
                frame_index=frame_index,
                cx=cx + x_off,
                cy=cy + y_off,
                bbox=(
                    int(xs.min()) + x_off,
                    int(ys.min()) + y_off,
                    int(xs.max() - xs.min()) + 1,
                    int(ys.max() - ys.min()) + 1,
                ),
                score=float(weights.max()),
            )
        )
    detections.sort(key=lambda d: -d.score)
    return detections
