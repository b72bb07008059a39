"""Image, sequence, and annotation data model with file ingestion and persistence.

Conventions used across the package:

* Frames are grayscale, unit-normalized: pixel intensities live in [0, 1]
  as 2-D float64 arrays, scaled at load time by 1/255 (8-bit sources) or
  1/65535 (16-bit sources).
* Feature maps are plain 2-D float64 arrays; binary masks are plain 2-D
  bool arrays. Both share the dimensions of the frame they derive from.
* Coordinates: ``cx`` is the column and ``cy`` the row, with pixel centers
  on the integer grid. A pixel lies inside a box iff its center falls in
  the closed interval [cx - w/2, cx + w/2] x [cy - h/2, cy + h/2].

All objects are treated as immutable after construction and are safe to
share between threads.
"""

from __future__ import annotations

import csv
import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
from PIL import Image

# Smallest frame that admits one placement of the default 9x9 spatial kernel.
MIN_FRAME_SIDE = 9

MASK_PREFIX = "mask"
GROUND_TRUTH_HEADER = ("frame", "cx", "cy", "w", "h")


@dataclass(frozen=True)
class Frame:
    """One grayscale frame: stream position ``index`` plus unit-scale pixels."""

    index: int
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", pixels)
        if self.index < 0:
            raise ValueError(f"frame index must be non-negative, got {self.index}")
        if pixels.ndim != 2:
            raise ValueError(f"frame pixels must be 2-D, got shape {pixels.shape}")
        if min(pixels.shape) < MIN_FRAME_SIDE:
            raise ValueError(
                f"frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, "
                f"got {pixels.shape[1]}x{pixels.shape[0]}"
            )
        lo, hi = float(pixels.min()), float(pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values outside [0, 1]: min={lo}, max={hi}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class GroundTruthRecord:
    """Annotated target: center (cx, cy) and box extent (w, h) on one frame."""

    frame_index: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(
                f"ground-truth box must be at least 1x1, got {self.w}x{self.h}"
            )


@dataclass(frozen=True)
class Detection:
    """One located target hypothesis.

    ``score`` is the peak map value over the detection's pixels; ``bbox`` is
    the tight integer rectangle (x0, y0, w, h) around them.
    """

    frame_index: int
    cx: float
    cy: float
    bbox: tuple[int, int, int, int]
    score: float

    def __post_init__(self):
        x0, y0, w, h = self.bbox
        if w < 1 or h < 1:
            raise ValueError(f"detection bbox must be non-empty, got {self.bbox}")

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.cx, self.cy)


# ---------------------------------------------------------------------------
# value <-> integer sample conversion


def to_uint16(values: np.ndarray) -> np.ndarray:
    """Quantize unit-scale values to uint16 with round-half-up (0.5 -> 32768)."""
    return np.floor(np.asarray(values, dtype=np.float64) * 65535.0 + 0.5).astype(
        np.uint16
    )


def mask_to_uint8(mask: np.ndarray) -> np.ndarray:
    """Bool mask to {0, 255} uint8."""
    return np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)


# ---------------------------------------------------------------------------
# frame loading


def load_frame(path: str | Path, index: int) -> Frame:
    """Load a single-channel 8/16-bit PGM or PNG image as a unit-scale Frame.

    Raises ValueError for color images, unsupported bit depths, or images
    smaller than the minimum kernel footprint.
    """
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        raw, maxval = _read_pgm(path)
        return Frame(index, raw.astype(np.float64) / float(maxval))

    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            denom = 255.0
        elif mode in ("I;16", "I;16B", "I;16L", "I"):
            denom = 65535.0
        else:
            raise ValueError(
                f"{path}: unsupported image mode {mode!r} "
                "(need single-channel 8-bit or 16-bit grayscale)"
            )
        raw = np.asarray(im)
    if raw.ndim != 2:
        raise ValueError(f"{path}: expected single channel, got shape {raw.shape}")
    if raw.min() < 0 or raw.max() > denom:
        raise ValueError(f"{path}: sample values exceed declared bit depth")
    return Frame(index, raw.astype(np.float64) / denom)


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) PGM; 16-bit samples are big-endian per the format."""
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(int(data[pos:end]))
            pos = end
    width, height, maxval = tokens
    pos += 1  # single whitespace byte after maxval
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raw.size != count:
        raise ValueError(f"{path}: truncated PGM pixel data")
    return raw.reshape(height, width), maxval


def _write_pgm16(samples: np.ndarray, path: Path) -> None:
    header = f"P5\n{samples.shape[1]} {samples.shape[0]}\n65535\n".encode("ascii")
    path.write_bytes(header + samples.astype(">u2").tobytes())


# ---------------------------------------------------------------------------
# sequences

_DIGITS = re.compile(r"\d+")


def frame_index_of(path: str | Path) -> int:
    """Frame index embedded in a filename: the last run of digits in the stem."""
    matches = _DIGITS.findall(Path(path).stem)
    if not matches:
        raise ValueError(f"{path}: filename carries no frame index digits")
    return int(matches[-1])


def list_sequence(directory: str | Path, pattern: str = "*.png") -> list[tuple[int, Path]]:
    """Resolve a frame directory to (index, path) pairs in ascending index order.

    Non-contiguous indices are reported with a warning; duplicates are an error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"{directory}: not a directory")
    entries = sorted((frame_index_of(p), p) for p in directory.glob(pattern))
    if not entries:
        raise ValueError(f"{directory}: no files match {pattern!r}")
    indices = [i for i, _ in entries]
    if len(set(indices)) != len(indices):
        raise ValueError(f"{directory}: duplicate frame indices in {pattern!r} matches")
    gaps = [
        (a, b) for a, b in zip(indices, indices[1:]) if b != a + 1
    ]
    if gaps:
        warnings.warn(
            f"{directory}: non-contiguous frame indices "
            + ", ".join(f"{a}->{b}" for a, b in gaps[:5]),
            RuntimeWarning,
            stacklevel=2,
        )
    return entries


def open_sequence(directory: str | Path, pattern: str = "*.png") -> Iterator[Frame]:
    """Yield the frames of a directory lazily, in ascending numeric index order.

    Each file is read only when its frame is consumed, so a streaming caller
    processing frame k never touches a file with index > k. All frames must
    share dimensions; a mismatch raises when the offending frame is reached.
    """
    entries = list_sequence(directory, pattern)

    def _frames() -> Iterator[Frame]:
        dims: tuple[int, int] | None = None
        for index, path in entries:
            frame = load_frame(path, index)
            if dims is None:
                dims = frame.pixels.shape
            elif frame.pixels.shape != dims:
                raise ValueError(
                    f"{path}: frame is {frame.width}x{frame.height}, "
                    f"sequence started at {dims[1]}x{dims[0]}"
                )
            yield frame

    return _frames()


# ---------------------------------------------------------------------------
# ground truth CSV


def load_ground_truth(path: str | Path) -> list[GroundTruthRecord]:
    """Parse a `frame,cx,cy,w,h` CSV; records come back sorted by frame index.

    Box-inside-frame checks are deferred to evaluation time, when the frame
    dimensions are known.
    """
    path = Path(path)
    records: list[GroundTruthRecord] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GROUND_TRUTH_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(GROUND_TRUTH_HEADER)!r}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                rec = GroundTruthRecord(
                    frame_index=int(row[0]),
                    cx=float(row[1]),
                    cy=float(row[2]),
                    w=float(row[3]),
                    h=float(row[4]),
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    records.sort(key=lambda r: r.frame_index)
    return records


def write_ground_truth(records: list[GroundTruthRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GROUND_TRUTH_HEADER)
        for rec in records:
            writer.writerow([rec.frame_index, rec.cx, rec.cy, rec.w, rec.h])


def group_by_frame(
    records: list[GroundTruthRecord],
) -> dict[int, list[GroundTruthRecord]]:
    grouped: dict[int, list[GroundTruthRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.frame_index, []).append(rec)
    return grouped


# ---------------------------------------------------------------------------
# result persistence


def write_mask(mask: np.ndarray, path: str | Path) -> None:
    """Persist a bool mask as an 8-bit PNG with values {0, 255}."""
    Image.fromarray(mask_to_uint8(mask), mode="L").save(Path(path), format="PNG")


def read_mask(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: mask PNG must be 8-bit grayscale")
        return np.asarray(im) > 0


def write_map_pgm(values: np.ndarray, path: str | Path) -> None:
    """Persist a unit-scale map as a 16-bit PGM (sample = round-half-up(v*65535))."""
    _write_pgm16(to_uint16(values), Path(path))


def read_map_pgm(path: str | Path) -> np.ndarray:
    raw, maxval = _read_pgm(Path(path))
    return raw.astype(np.float64) / float(maxval)


def write_map_f32(values: np.ndarray, path: str | Path) -> None:
    """Raw dump: row-major little-endian float32, no header."""
    Path(path).write_bytes(np.asarray(values, dtype="<f4").tobytes())


def read_map_f32(path: str | Path, shape: tuple[int, int]) -> np.ndarray:
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    if raw.size != shape[0] * shape[1]:
        raise ValueError(f"{path}: expected {shape[0] * shape[1]} samples, got {raw.size}")
    return raw.reshape(shape).astype(np.float64)


def write_frame_png(values: np.ndarray, path: str | Path) -> None:
    """Persist unit-scale pixels as a 16-bit grayscale PNG."""
    Image.fromarray(to_uint16(values)).save(Path(path), format="PNG")


def write_outputs(
    out_dir: str | Path,
    frame_index: int,
    mask: np.ndarray | None = None,
    maps: Mapping[str, np.ndarray] | None = None,
    raw_maps: Mapping[str, np.ndarray] | None = None,
) -> dict[str, Path]:
    """Write one frame's result files into ``out_dir``; returns name -> path.

    Masks become {0,255} PNGs, maps 16-bit PGMs, raw_maps headerless
    little-endian float32 dumps. Filenames carry the frame index.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if mask is not None:
        path = out_dir / f"{MASK_PREFIX}_{frame_index:06d}.png"
        write_mask(mask, path)
        written[MASK_PREFIX] = path
    for name, values in (maps or {}).items():
        path = out_dir / f"{name}_{frame_index:06d}.pgm"
        write_map_pgm(values, path)
        written[name] = path
    for name, values in (raw_maps or {}).items():
        path = out_dir / f"{name}_{frame_index:06d}.f32"
        write_map_f32(values, path)
        written[f"{name}.f32"] = path
    return written


def box_pixel_bounds(
    rec: GroundTruthRecord, width: int, height: int
) -> tuple[int, int, int, int]:
    """Integer pixel coverage (x0, x1, y0, y1 inclusive) of a box, clipped to frame."""
    x0 = max(0, math.ceil(rec.cx - rec.w / 2.0))
    x1 = min(width - 1, math.floor(rec.cx + rec.w / 2.0))
    y0 = max(0, math.ceil(rec.cy - rec.h / 2.0))
    y1 = min(height - 1, math.floor(rec.cy + rec.h / 2.0))
    return x0, x1, y0, y1
