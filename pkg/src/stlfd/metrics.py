"""Evaluation harness: detection/false-alarm accounting, ROC, SCR/SCRG/BSF.

Probability of detection is counted per annotated target (a target is hit
when at least one detection matches it under the configured rule), while
probability of false alarm is counted per pixel: every mask pixel lying
inside no ground-truth box is a false pixel, and the rate divides by the
total pixel count of the evaluated frames.

The signal-to-clutter family compares a target box against a surrounding
background ring (the box dilated per side, minus the box): SCR is the
absolute mean difference over the ring's standard deviation, the gain and
the background-suppression factor are decibel log-ratios between the
pipeline's input and output. Epsilon floors keep every value finite even
on zero-variance rings.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .imgcore import Detection, GroundTruthRecord, box_pixel_bounds, group_by_frame

EPS = 1e-6

THREADS_ENV = "STLFD_THREADS"


def resolve_threads(requested: int | None = None) -> int:
    """Worker cap for parallel evaluation: argument, else STLFD_THREADS, else auto.

    0 means auto (one per CPU). Thread count never changes results, only
    wall-clock time.
    """
    if requested is None:
        raw = os.environ.get(THREADS_ENV, "0")
        try:
            requested = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if requested < 0:
        raise ValueError(f"thread cap must be >= 0, got {requested}")
    return requested if requested > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class MatchRule:
    """How a detection claims a ground-truth target.

    ``centroid`` mode matches within ``radius`` pixels of the annotated
    center; ``containment`` mode requires the detection centroid to fall
    inside the ground-truth box. Radius-based matching is robust to the
    target dilation the maximum filter introduces.

    When detections are derived from a mask, a detection additionally
    matches a target whose neighborhood (the radius disk, or the box in
    containment mode) touches any of the detection's own pixels. A merged
    region that still covers the target therefore keeps its hit even
    though its intensity-weighted centroid wandered off, which keeps pd
    non-decreasing as the threshold drops. Explicit detection lists carry
    no pixel sets and match by centroid alone.
    """

    radius: float = 4.0
    mode: str = "centroid"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.mode not in ("centroid", "containment"):
            raise ValueError(f"unknown match mode {self.mode!r}")


@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep points, ordered by strictly decreasing threshold."""

    thresholds: np.ndarray
    pd: np.ndarray
    pf: np.ndarray
    auc: float


@dataclass(frozen=True)
class RegionStats:
    """Means of target box and background ring plus the ring's deviation."""

    mu_t: float
    mu_b: float
    sigma_b: float
    target_bounds: tuple[int, int, int, int]
    ring_bounds: tuple[int, int, int, int]
    n_target: int
    n_ring: int


def _in_box_mask(
    gt: Sequence[GroundTruthRecord], shape: tuple[int, int]
) -> np.ndarray:
    covered = np.zeros(shape, dtype=bool)
    height, width = shape
    for rec in gt:
        x0, x1, y0, y1 = box_pixel_bounds(rec, width, height)
        if x0 <= x1 and y0 <= y1:
            covered[y0 : y1 + 1, x0 : x1 + 1] = True
    return covered


@dataclass(frozen=True)
class _Components:
    """Per-component centroids and peak scores derived from one mask.

    ``labels`` is the component image of the populated sub-rectangle
    (0 = background) whose top-left corner sits at ``origin`` = (x, y) in
    frame coordinates; centroids are in frame coordinates.
    """

    labels: np.ndarray
    origin: tuple[int, int]
    cx: np.ndarray
    cy: np.ndarray
    score: np.ndarray

    @property
    def count(self) -> int:
        return self.cx.size


_EMPTY = np.empty(0)
_NO_COMPONENTS = _Components(np.zeros((0, 0), dtype=np.int32), (0, 0), _EMPTY, _EMPTY, _EMPTY)


def _component_stats(mask: np.ndarray, values: np.ndarray) -> _Components:
    """Vectorized equivalent of extract_detections for match accounting."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return _NO_COMPONENTS
    cols = np.flatnonzero(mask.any(axis=0))
    window = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    sub_mask = mask[window]
    sub_values = values[window]
    labels, count = ndimage.label(sub_mask, structure=np.ones((3, 3), dtype=bool))
    idx = np.arange(1, count + 1)
    xgrid, ygrid = np.meshgrid(
        np.arange(cols[0], cols[-1] + 1, dtype=np.float64),
        np.arange(rows[0], rows[-1] + 1, dtype=np.float64),
    )
    peak = ndimage.maximum(sub_values, labels, idx)
    wsum = ndimage.sum_labels(sub_values, labels, idx)
    wx = ndimage.sum_labels(sub_values * xgrid, labels, idx)
    wy = ndimage.sum_labels(sub_values * ygrid, labels, idx)
    n = ndimage.sum_labels(sub_mask.astype(np.float64), labels, idx)
    sx = ndimage.sum_labels(xgrid, labels, idx)
    sy = ndimage.sum_labels(ygrid, labels, idx)
    weighted = wsum > 0
    cx = np.where(weighted, wx / np.where(weighted, wsum, 1.0), sx / n)
    cy = np.where(weighted, wy / np.where(weighted, wsum, 1.0), sy / n)
    return _Components(
        labels, (int(cols[0]), int(rows[0])), cx, cy, np.asarray(peak, dtype=np.float64)
    )


def _reaching_ids(
    comps: _Components, rec: GroundTruthRecord, rule: MatchRule, shape: tuple[int, int]
) -> set[int]:
    """Component ids with a pixel touching the target's neighborhood."""
    height, width = shape
    if rule.mode == "centroid":
        r = rule.radius
        x0 = max(0, math.ceil(rec.cx - r))
        x1 = min(width - 1, math.floor(rec.cx + r))
        y0 = max(0, math.ceil(rec.cy - r))
        y1 = min(height - 1, math.floor(rec.cy + r))
    else:
        x0, x1, y0, y1 = box_pixel_bounds(rec, width, height)
    # clip the neighborhood to the labeled window; outside it there are no
    # mask pixels at all
    ox, oy = comps.origin
    x0, x1 = max(x0, ox), min(x1, ox + comps.labels.shape[1] - 1)
    y0, y1 = max(y0, oy), min(y1, oy + comps.labels.shape[0] - 1)
    if x0 > x1 or y0 > y1:
        return set()
    patch = comps.labels[y0 - oy : y1 - oy + 1, x0 - ox : x1 - ox + 1]
    if rule.mode == "centroid":
        xs = np.arange(x0, x1 + 1, dtype=np.float64) - rec.cx
        ys = np.arange(y0, y1 + 1, dtype=np.float64) - rec.cy
        inside = (xs[None, :] ** 2 + ys[:, None] ** 2) <= rule.radius**2
        ids = np.unique(patch[inside])
    else:
        ids = np.unique(patch)
    return {int(i) for i in ids if i != 0}


def _greedy_hits(
    cx: np.ndarray,
    cy: np.ndarray,
    score: np.ndarray,
    gt: Sequence[GroundTruthRecord],
    rule: MatchRule,
    reach: Sequence[set[int]] | None = None,
) -> int:
    """Greedy by score: each detection claims at most one target, taking the
    nearest still-unclaimed one it matches."""
    if cx.size == 0 or not gt:
        return 0
    unclaimed = set(range(len(gt)))
    hits = 0
    for det in np.argsort(-score, kind="stable"):
        best: tuple[float, int] | None = None
        for j in unclaimed:
            rec = gt[j]
            dist = math.hypot(cx[det] - rec.cx, cy[det] - rec.cy)
            if rule.mode == "centroid":
                ok = dist <= rule.radius
            else:
                ok = (
                    abs(cx[det] - rec.cx) <= rec.w / 2.0
                    and abs(cy[det] - rec.cy) <= rec.h / 2.0
                )
            if not ok and reach is not None:
                ok = int(det) + 1 in reach[j]
            if ok and (best is None or dist < best[0]):
                best = (dist, j)
        if best is not None:
            unclaimed.discard(best[1])
            hits += 1
            if not unclaimed:
                break
    return hits


def _match_mask(
    mask: np.ndarray,
    values: np.ndarray,
    gt: Sequence[GroundTruthRecord],
    rule: MatchRule,
) -> int:
    if not gt:
        return 0
    comps = _component_stats(mask, values)
    if comps.count == 0:
        return 0
    reach = [_reaching_ids(comps, rec, rule, mask.shape) for rec in gt]
    return _greedy_hits(comps.cx, comps.cy, comps.score, gt, rule, reach)


def _count_hits(
    detections: Sequence[Detection], gt: Sequence[GroundTruthRecord], rule: MatchRule
) -> int:
    cx = np.array([d.cx for d in detections], dtype=np.float64)
    cy = np.array([d.cy for d in detections], dtype=np.float64)
    score = np.array([d.score for d in detections], dtype=np.float64)
    return _greedy_hits(cx, cy, score, gt, rule)


def match_frame(
    mask: np.ndarray,
    gt: Sequence[GroundTruthRecord],
    rule: MatchRule = MatchRule(),
    *,
    detections: Sequence[Detection] | None = None,
    score_map: np.ndarray | None = None,
) -> tuple[int, int, int]:
    """Score one frame: (hit targets, total targets, false pixels).

    Detections are derived from the mask's connected components unless
    supplied; ``score_map`` feeds their centroids and scores (the mask
    itself when omitted). A mask pixel inside no ground-truth box counts
    as false.
    """
    mask = np.asarray(mask, dtype=bool)
    if detections is None:
        weights = score_map if score_map is not None else mask.astype(np.float64)
        if weights.shape != mask.shape:
            raise ValueError(f"dimension mismatch: {weights.shape} vs {mask.shape}")
        hits = _match_mask(mask, weights, gt, rule)
    else:
        hits = _count_hits(detections, gt, rule)
    false_pixels = int(mask.sum()) - int((mask & _in_box_mask(gt, mask.shape)).sum())
    return hits, len(gt), false_pixels


def aggregate_pd_pf(
    per_frame: Iterable[tuple[int, int, int]],
    frame_dims: tuple[int, int],
    frame_count: int,
) -> tuple[float, float]:
    """Pool per-frame tuples into (pd, pf); pd is NaN when no targets exist."""
    if frame_count < 1:
        raise ValueError("need at least one frame")
    hits = targets = false_pixels = 0
    for h, t, f in per_frame:
        hits += h
        targets += t
        false_pixels += f
    pd = hits / targets if targets > 0 else float("nan")
    pf = false_pixels / (frame_dims[0] * frame_dims[1] * frame_count)
    return pd, pf


def _reach_peak(
    values: np.ndarray, rec: GroundTruthRecord, rule: MatchRule
) -> float:
    """Largest map value inside the target's neighborhood (disk or box)."""
    height, width = values.shape
    if rule.mode == "centroid":
        r = rule.radius
        x0 = max(0, math.ceil(rec.cx - r))
        x1 = min(width - 1, math.floor(rec.cx + r))
        y0 = max(0, math.ceil(rec.cy - r))
        y1 = min(height - 1, math.floor(rec.cy + r))
        if x0 > x1 or y0 > y1:
            return -math.inf
        patch = values[y0 : y1 + 1, x0 : x1 + 1]
        xs = np.arange(x0, x1 + 1, dtype=np.float64) - rec.cx
        ys = np.arange(y0, y1 + 1, dtype=np.float64) - rec.cy
        inside = (xs[None, :] ** 2 + ys[:, None] ** 2) <= r * r
        if not inside.any():
            return -math.inf
        return float(patch[inside].max())
    x0, x1, y0, y1 = box_pixel_bounds(rec, width, height)
    if x0 > x1 or y0 > y1:
        return -math.inf
    return float(values[y0 : y1 + 1, x0 : x1 + 1].max())


def _sweep_one_frame(
    values: np.ndarray,
    gt: Sequence[GroundTruthRecord],
    rule: MatchRule,
    thresholds: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-threshold (hits, false_pixels) for one frame's map."""
    steps = thresholds.size
    hits = np.zeros(steps, dtype=np.int64)
    false_pixels = np.zeros(steps, dtype=np.int64)

    in_box = _in_box_mask(gt, values.shape)
    # False pixels per threshold by rank: strict > t over out-of-box values.
    outside_sorted = np.sort(values[~in_box])
    false_pixels[:] = outside_sorted.size - np.searchsorted(
        outside_sorted, thresholds, side="right"
    )
    if not gt:
        return hits, false_pixels

    peak = values.max()
    # Single-target shortcut: once a mask pixel exists inside the target's
    # neighborhood, the component containing it matches via the reach
    # clause, so the frame scores its hit without labeling anything.
    reach_peak = _reach_peak(values, gt[0], rule) if len(gt) == 1 else -math.inf
    for i, t in enumerate(thresholds):
        if peak <= t:
            continue  # empty mask, nothing to match
        if reach_peak > t:
            hits[i] = 1
            continue
        hits[i] = _match_mask(values > t, values, gt, rule)
    return hits, false_pixels


def roc_sweep(
    maps: Mapping[int, np.ndarray],
    gt: Iterable[GroundTruthRecord],
    rule: MatchRule = MatchRule(),
    steps: int = 256,
    threads: int | None = None,
) -> RocCurve:
    """Sweep a descending threshold grid over [0, 1] across all frames.

    Each threshold re-segments every map (strict >) and pools the match
    counts into one (pd, pf) point. Only frames present in ``maps`` are
    evaluated, so ground truth on warm-up frames is ignored. The area
    under the curve is the trapezoid over the observed (pf, pd) points,
    extended at the final pd from the largest observed pf out to pf = 1.
    """
    if not maps:
        raise ValueError("no maps to evaluate")
    if steps < 2:
        raise ValueError(f"need at least 2 sweep steps, got {steps}")
    thresholds = np.linspace(1.0, 0.0, steps)
    gt_by_frame = group_by_frame(list(gt))
    frame_dims = next(iter(maps.values())).shape

    def evaluate(item: tuple[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        index, values = item
        if values.shape != frame_dims:
            raise ValueError(
                f"frame {index}: map shape {values.shape} != {frame_dims}"
            )
        return _sweep_one_frame(values, gt_by_frame.get(index, ()), rule, thresholds)

    workers = min(resolve_threads(threads), len(maps))
    items = sorted(maps.items())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_frame = list(pool.map(evaluate, items))
    else:
        per_frame = [evaluate(item) for item in items]

    hits = np.sum([h for h, _ in per_frame], axis=0)
    false_pixels = np.sum([f for _, f in per_frame], axis=0)
    total_targets = sum(len(gt_by_frame.get(index, ())) for index, _ in items)
    pixels = frame_dims[0] * frame_dims[1] * len(items)

    pd = hits / total_targets if total_targets > 0 else np.full(steps, np.nan)
    pf = false_pixels / pixels
    return RocCurve(thresholds=thresholds, pd=pd, pf=pf, auc=_auc(pd, pf))


def _auc(pd: np.ndarray, pf: np.ndarray) -> float:
    if np.isnan(pd).all():
        return float("nan")
    area = float(np.trapezoid(pd, pf))
    # Constant extension past the largest observed pf: beyond the lowest
    # threshold the curve is flat at its final detection rate.
    return area + (1.0 - float(pf[-1])) * float(pd[-1])


# ---------------------------------------------------------------------------
# SCR family


def region_stats(
    image: np.ndarray,
    box: GroundTruthRecord,
    ring_width: float | None = None,
) -> RegionStats:
    """Target-box and background-ring statistics for one annotated target.

    The ring is the box dilated by ``ring_width`` per side (default: the
    larger box extent), minus the box, clipped to the frame. Both regions
    must contain at least one pixel and the box must lie inside the frame.
    """
    height, width = image.shape
    if ring_width is None:
        ring_width = max(box.w, box.h)
    if ring_width <= 0:
        raise ValueError(f"ring_width must be > 0, got {ring_width}")
    if (
        box.cx - box.w / 2.0 < -0.5
        or box.cx + box.w / 2.0 > width - 0.5
        or box.cy - box.h / 2.0 < -0.5
        or box.cy + box.h / 2.0 > height - 0.5
    ):
        raise ValueError(f"target box {box} extends outside {width}x{height} frame")

    tx0, tx1, ty0, ty1 = box_pixel_bounds(box, width, height)
    if tx0 > tx1 or ty0 > ty1:
        raise ValueError(f"target box {box} covers no pixel")
    dilated = GroundTruthRecord(
        box.frame_index, box.cx, box.cy, box.w + 2 * ring_width, box.h + 2 * ring_width
    )
    rx0, rx1, ry0, ry1 = box_pixel_bounds(dilated, width, height)

    target = image[ty0 : ty1 + 1, tx0 : tx1 + 1]
    ring_region = image[ry0 : ry1 + 1, rx0 : rx1 + 1]
    ring_mask = np.ones(ring_region.shape, dtype=bool)
    ring_mask[ty0 - ry0 : ty1 - ry0 + 1, tx0 - rx0 : tx1 - rx0 + 1] = False
    ring = ring_region[ring_mask]
    if ring.size == 0:
        raise ValueError(f"background ring for {box} contains no pixel")

    return RegionStats(
        mu_t=float(target.mean()),
        mu_b=float(ring.mean()),
        sigma_b=float(ring.std()),
        target_bounds=(tx0, tx1, ty0, ty1),
        ring_bounds=(rx0, rx1, ry0, ry1),
        n_target=target.size,
        n_ring=ring.size,
    )


def scr(stats: RegionStats) -> float:
    """Signal-to-clutter ratio |mu_t - mu_b| / sigma_b, epsilon-floored."""
    return abs(stats.mu_t - stats.mu_b) / max(stats.sigma_b, EPS)


def scrg_bsf(
    input_frame: np.ndarray,
    output_map: np.ndarray,
    gt_box: GroundTruthRecord,
    ring_width: float | None = None,
) -> tuple[float, float]:
    """Decibel gain of SCR and background suppression through the pipeline.

    SCRG = 10*log10(SCR_out / SCR_in); BSF = 10*log10(sigma_in / sigma_out),
    sigma taken over the background ring. Epsilon floors on every ratio
    term keep both outputs finite.
    """
    if input_frame.shape != output_map.shape:
        raise ValueError(
            f"dimension mismatch: {input_frame.shape} vs {output_map.shape}"
        )
    stats_in = region_stats(input_frame, gt_box, ring_width)
    stats_out = region_stats(output_map, gt_box, ring_width)
    gain = 10.0 * math.log10(max(scr(stats_out), EPS) / max(scr(stats_in), EPS))
    suppression = 10.0 * math.log10(
        max(stats_in.sigma_b, EPS) / max(stats_out.sigma_b, EPS)
    )
    return gain, suppression


def scrg_bsf_over_run(
    inputs: Mapping[int, np.ndarray],
    outputs: Mapping[int, np.ndarray],
    gt: Iterable[GroundTruthRecord],
    ring_width: float | None = None,
) -> tuple[float, float]:
    """Mean per-frame SCRG and BSF over frames present in ``outputs``."""
    gains: list[float] = []
    suppressions: list[float] = []
    for rec in gt:
        if rec.frame_index not in outputs:
            continue
        g, b = scrg_bsf(
            inputs[rec.frame_index], outputs[rec.frame_index], rec, ring_width
        )
        gains.append(g)
        suppressions.append(b)
    if not gains:
        return float("nan"), float("nan")
    return float(np.mean(gains)), float(np.mean(suppressions))


# ---------------------------------------------------------------------------
# CSV interfaces


def _format_value(value: float) -> str:
    return "NA" if isinstance(value, float) and math.isnan(value) else repr(value)


def write_roc_csv(curve: RocCurve, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "pd", "pf"])
        for t, pd, pf in zip(curve.thresholds, curve.pd, curve.pf):
            writer.writerow([repr(float(t)), _format_value(float(pd)), repr(float(pf))])


def write_summary_csv(entries: Mapping[str, float], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name, value in entries.items():
            writer.writerow([name, _format_value(float(value))])
