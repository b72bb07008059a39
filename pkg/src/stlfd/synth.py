"""Deterministic synthetic infrared scenes with exact ground truth.

Every frame is background + target + sensor noise, clamped to [0, 1]:

* the background is one seeded low-pass-filtered noise field, sampled with
  wrap-around at an integer offset that accumulates per-frame drift
  (rounded, residual carried) plus an integer jitter draw;
* the target is a small Gaussian blob added on top of the background along
  a straight constant-velocity trajectory;
* the noise is white Gaussian, drawn independently per frame.

All randomness comes from the Philox counter-based 64-bit generator, keyed
by (seed, lane, frame index). The algorithm is frozen: identical seeds
give identical bytes on any platform, and frames can be rendered in any
order or in parallel without changing the output.

Presets mirror the scene families the detector is meant for: a drifting
background, a shaking (jittering) background, and a static sky with a
low-contrast moving target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgcore import GroundTruthRecord, write_frame_png, write_ground_truth

TRAJECTORY_MARGIN = 10  # px the target center must keep from every border

# Philox key lanes; frame index occupies the low bits.
_LANE_BACKGROUND = 1
_LANE_JITTER = 2
_LANE_NOISE = 3

# Background field shaping (level + contrast of the low-pass noise).
_BG_LEVEL = 0.35
_BG_CONTRAST = 0.10

PRESET_NAMES = ("drift", "jitter", "static")


@dataclass(frozen=True)
class BackgroundConfig:
    smoothness: float = 3.0
    drift: tuple[float, float] = (0.0, 0.0)
    jitter_amp: int = 0

    def __post_init__(self):
        if self.smoothness <= 0:
            raise ValueError(f"smoothness must be > 0, got {self.smoothness}")
        if self.jitter_amp < 0:
            raise ValueError(f"jitter_amp must be >= 0, got {self.jitter_amp}")


@dataclass(frozen=True)
class TargetConfig:
    amplitude: float = 0.35
    psf_sigma: float = 1.2
    velocity: tuple[float, float] = (0.75, 0.55)
    start: tuple[float, float] = (48.0, 36.0)

    def __post_init__(self):
        # amplitude 0 means "no target": the blob contributes nothing but
        # the trajectory and ground truth are still defined.
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.psf_sigma <= 0:
            raise ValueError(f"psf_sigma must be > 0, got {self.psf_sigma}")


@dataclass(frozen=True)
class SynthConfig:
    width: int = 256
    height: int = 256
    frames: int = 200
    seed: int = 0
    background: BackgroundConfig = field(default_factory=BackgroundConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    noise_sigma: float = 0.01

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError(f"scene must be at least 16x16, got {self.width}x{self.height}")
        if self.frames < 1:
            raise ValueError(f"need at least one frame, got {self.frames}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for f in (0, self.frames - 1):
            cx, cy = target_position(self, f)
            if not (
                TRAJECTORY_MARGIN <= cx <= self.width - 1 - TRAJECTORY_MARGIN
                and TRAJECTORY_MARGIN <= cy <= self.height - 1 - TRAJECTORY_MARGIN
            ):
                raise ValueError(
                    f"target trajectory exits the {TRAJECTORY_MARGIN}px margin "
                    f"at frame {f}: center ({cx:.1f}, {cy:.1f})"
                )

    @property
    def gt_box_side(self) -> int:
        return math.ceil(6.0 * self.target.psf_sigma)


def _rng(seed: int, lane: int, frame: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (lane << 56) | frame], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@lru_cache(maxsize=8)
def _base_background(width: int, height: int, seed: int, smoothness: float) -> np.ndarray:
    """Seeded low-pass noise field, shaped to a fixed level and contrast."""
    white = _rng(seed, _LANE_BACKGROUND).standard_normal((height, width))
    smooth = gaussian_filter(white, sigma=smoothness, mode="wrap")
    spread = smooth.std()
    if spread > 0:
        smooth = (smooth - smooth.mean()) / spread
    field_ = _BG_LEVEL + _BG_CONTRAST * smooth
    field_.setflags(write=False)
    return field_


def target_position(cfg: SynthConfig, frame: int) -> tuple[float, float]:
    """Target center (cx, cy) on the straight constant-velocity trajectory."""
    vx, vy = cfg.target.velocity
    sx, sy = cfg.target.start
    return sx + vx * frame, sy + vy * frame


def _jitter_offset(cfg: SynthConfig, frame: int) -> tuple[int, int]:
    amp = cfg.background.jitter_amp
    if amp == 0:
        return 0, 0
    draw = _rng(cfg.seed, _LANE_JITTER, frame).integers(-amp, amp + 1, size=2)
    return int(draw[0]), int(draw[1])


def render_frame(cfg: SynthConfig, frame: int) -> np.ndarray:
    """Pixels of one frame; pure in (cfg, frame), safe to call in any order."""
    if not 0 <= frame < cfg.frames:
        raise ValueError(f"frame {frame} outside 0..{cfg.frames - 1}")
    base = _base_background(cfg.width, cfg.height, cfg.seed, cfg.background.smoothness)

    dx, dy = cfg.background.drift
    jx, jy = _jitter_offset(cfg, frame)
    # Accumulated drift rounds once per frame, so sub-pixel residue carries.
    shift_x = round(dx * frame) + jx
    shift_y = round(dy * frame) + jy
    pixels = np.roll(base, shift=(shift_y, shift_x), axis=(0, 1)).copy()

    if cfg.target.amplitude > 0:
        _add_blob(pixels, cfg, frame)
    if cfg.noise_sigma > 0:
        pixels += cfg.noise_sigma * _rng(cfg.seed, _LANE_NOISE, frame).standard_normal(
            pixels.shape
        )
    return np.clip(pixels, 0.0, 1.0)


def _add_blob(pixels: np.ndarray, cfg: SynthConfig, frame: int) -> None:
    cx, cy = target_position(cfg, frame)
    sigma = cfg.target.psf_sigma
    reach = math.ceil(6.0 * sigma)  # beyond 6 sigma the tail is negligible
    x0 = max(0, math.floor(cx) - reach)
    x1 = min(cfg.width - 1, math.ceil(cx) + reach)
    y0 = max(0, math.floor(cy) - reach)
    y1 = min(cfg.height - 1, math.ceil(cy) + reach)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    xs = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    blob = cfg.target.amplitude * np.exp(
        -((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma)
    )
    pixels[y0 : y1 + 1, x0 : x1 + 1] += blob


def ground_truth(cfg: SynthConfig) -> list[GroundTruthRecord]:
    side = cfg.gt_box_side
    return [
        GroundTruthRecord(f, *target_position(cfg, f), side, side)
        for f in range(cfg.frames)
    ]


@dataclass(frozen=True)
class GeneratedSequence:
    out_dir: Path
    frame_paths: list[Path]
    gt_path: Path
    config: SynthConfig


def generate(cfg: SynthConfig, out_dir: str | Path) -> GeneratedSequence:
    """Write the full sequence (16-bit PNGs) plus its ground-truth CSV.

    Identical configs produce byte-identical directories.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_paths: list[Path] = []
    for f in range(cfg.frames):
        path = out_dir / f"frame_{f:05d}.png"
        write_frame_png(render_frame(cfg, f), path)
        frame_paths.append(path)
    gt_path = out_dir / "ground_truth.csv"
    write_ground_truth(ground_truth(cfg), gt_path)
    return GeneratedSequence(out_dir, frame_paths, gt_path, cfg)


def preset(name: str, *, seed: int = 0, frames: int = 200, **overrides) -> SynthConfig:
    """Named scene families; keyword overrides go to SynthConfig fields.

    drift:  textured background slides ~0.5 px/frame with slight shake
    jitter: textured background shakes +/-2 px around a fixed position
    static: frozen smooth sky, low-contrast moving target, light noise
    """
    if name == "drift":
        background = BackgroundConfig(smoothness=3.0, drift=(0.5, 0.2), jitter_amp=1)
        target = TargetConfig()
        noise_sigma = 0.01
    elif name == "jitter":
        background = BackgroundConfig(smoothness=3.0, drift=(0.0, 0.0), jitter_amp=2)
        target = TargetConfig()
        noise_sigma = 0.01
    elif name == "static":
        background = BackgroundConfig(smoothness=8.0, drift=(0.0, 0.0), jitter_amp=0)
        target = TargetConfig(amplitude=0.22)
        noise_sigma = 0.005
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    cfg = SynthConfig(
        seed=seed,
        frames=frames,
        background=background,
        target=target,
        noise_sigma=noise_sigma,
    )
    return replace(cfg, **overrides) if overrides else cfg
