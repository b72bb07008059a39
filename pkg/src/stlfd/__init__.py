"""Small moving target detection in infrared image sequences.

A streaming detector built from a per-frame spatial local-contrast filter,
a causal temporal filter over buffered spatial maps, multiplicative fusion
with pixel-level adaptive background suppression, and dynamic-threshold
segmentation; plus a deterministic synthetic-scene generator and a full
evaluation harness (ROC/AUC, SCR, SCRG, BSF).
"""

__version__ = "0.1.0"

from .fusion import (
    AbsConfig,
    ThresholdConfig,
    abs_suppress,
    dynamic_threshold,
    extract_detections,
    fuse,
    segment,
)
from .imgcore import (
    Detection,
    Frame,
    GroundTruthRecord,
    load_frame,
    load_ground_truth,
    open_sequence,
    write_outputs,
)
from .metrics import (
    MatchRule,
    RegionStats,
    RocCurve,
    aggregate_pd_pf,
    match_frame,
    region_stats,
    roc_sweep,
    scr,
    scrg_bsf,
)
from .pipeline import (
    DETECTED,
    WARMING_UP,
    Detector,
    DetectorConfig,
    FrameResult,
    RunSummary,
    run_sequence,
)
from .spatial import SpatialConfig, compute_smap, compute_smap_reference
from .synth import SynthConfig, generate, preset, render_frame, target_position
from .temporal import SmapBuffer, TemporalConfig, compute_tmap

__all__ = [
    "AbsConfig",
    "DETECTED",
    "Detection",
    "Detector",
    "DetectorConfig",
    "Frame",
    "FrameResult",
    "GroundTruthRecord",
    "MatchRule",
    "RegionStats",
    "RocCurve",
    "RunSummary",
    "SmapBuffer",
    "SpatialConfig",
    "SynthConfig",
    "TemporalConfig",
    "ThresholdConfig",
    "WARMING_UP",
    "abs_suppress",
    "aggregate_pd_pf",
    "compute_smap",
    "compute_smap_reference",
    "compute_tmap",
    "dynamic_threshold",
    "extract_detections",
    "fuse",
    "generate",
    "load_frame",
    "load_ground_truth",
    "match_frame",
    "open_sequence",
    "preset",
    "region_stats",
    "render_frame",
    "roc_sweep",
    "run_sequence",
    "scr",
    "scrg_bsf",
    "segment",
    "target_position",
    "write_outputs",
]
