"""Causal temporal feature extraction over buffered spatial maps.

The temporal filter looks at the spatial maps of the newest frame k and of
frames k-gap and k-2*gap, never at anything newer than k, and responds to
per-pixel change: the map is the range (max - min) of the three values,
normalized to a unit global maximum. A static scene therefore yields an
all-zero temporal map, while anything that moved between the sampled
frames lights up at its old and new positions.

The buffer keeps the 2*gap+1 most recent consecutive maps, so memory stays
bounded regardless of stream length, and the stride cannot be reconfigured
mid-run without tripping the consecutive-index check.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .spatial import unit_normalize


@dataclass(frozen=True)
class TemporalConfig:
    """Stride between the three sampled frames: k, k-gap, k-2*gap."""

    gap: int = 5

    def __post_init__(self):
        if self.gap < 1:
            raise ValueError(f"gap must be >= 1, got {self.gap}")


class SmapBuffer:
    """Ring buffer of the most recent 2*gap+1 spatial maps, keyed by frame index.

    Pushes must be consecutive; the buffer reports ready once it holds maps
    for k, k-gap and k-2*gap, i.e. once it is full.
    """

    def __init__(self, gap: int):
        if gap < 1:
            raise ValueError(f"gap must be >= 1, got {gap}")
        self.gap = gap
        self._maps: deque[np.ndarray] = deque(maxlen=2 * gap + 1)
        self._newest: int | None = None

    @property
    def capacity(self) -> int:
        return 2 * self.gap + 1

    @property
    def newest_index(self) -> int | None:
        return self._newest

    def __len__(self) -> int:
        return len(self._maps)

    def push(self, smap: np.ndarray, index: int) -> None:
        """Append the next frame's map; evicts the oldest once full."""
        if self._newest is not None and index != self._newest + 1:
            raise ValueError(
                f"frame index {index} not consecutive after {self._newest}"
            )
        self._maps.append(smap)
        self._newest = index

    @property
    def ready(self) -> bool:
        return len(self._maps) == self.capacity

    def sampled_maps(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Maps at frames k, k-gap, k-2*gap (requires ready)."""
        if not self.ready:
            raise ValueError("buffer is still warming up")
        return self._maps[-1], self._maps[self.gap], self._maps[0]


def compute_tmap(
    buffer: SmapBuffer, cfg: TemporalConfig | None = None
) -> np.ndarray | None:
    """Temporal map from the buffered spatial maps, or None while warming up.

    Warming up (fewer than 2*gap+1 buffered maps) is a normal outcome, not
    an error. The result is invariant under permutation of the three
    sampled maps and lies in [0, 1].
    """
    if cfg is not None and cfg.gap != buffer.gap:
        raise ValueError(
            f"gap mismatch: buffer built for {buffer.gap}, config says {cfg.gap}"
        )
    if not buffer.ready:
        return None
    newest, mid, oldest = buffer.sampled_maps()
    peak = np.maximum(np.maximum(newest, mid), oldest)
    trough = np.minimum(np.minimum(newest, mid), oldest)
    return unit_normalize(peak - trough)
