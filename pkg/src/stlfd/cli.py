"""Command-line surface: `stlfd detect | eval | synth`.

Every run directory receives a manifest recording the fully resolved
configuration, input paths, tool version and seed, sufficient to reproduce
the run bit-exactly. Exit codes are a stable contract: 0 success, 1
runtime failure, 2 usage error. The STLFD_THREADS environment variable
caps internal parallelism (0 = auto); it never changes results.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from .fusion import AbsConfig, ThresholdConfig
from .imgcore import (
    frame_index_of,
    list_sequence,
    load_frame,
    load_ground_truth,
    open_sequence,
    read_map_f32,
    read_map_pgm,
)
from .metrics import (
    MatchRule,
    resolve_threads,
    roc_sweep,
    scrg_bsf_over_run,
    write_roc_csv,
    write_summary_csv,
)
from .pipeline import DetectorConfig, run_sequence
from .spatial import SpatialConfig
from .synth import PRESET_NAMES, generate, preset
from .temporal import TemporalConfig

MANIFEST_NAME = "manifest.json"

_DETECT_DEFAULTS = {
    "pattern": "*.png",
    "patch": 3,
    "gap": 5,
    "abs_kernel": 15,
    "no_abs": False,
    "k_sigma": 10.0,
    "emit_intermediate": False,
}


def _odd_int(text: str) -> int:
    value = int(text)
    if value < 1 or value % 2 == 0:
        raise argparse.ArgumentTypeError(f"must be an odd integer >= 1, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError(f"must be finite and >= 0, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"must be finite and > 0, got {text}")
    return value


def _drift_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected DX,DY, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected DX,DY, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stlfd",
        description="Small moving target detection in infrared sequences.",
    )
    parser.add_argument("--version", action="version", version=f"stlfd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="run the detector over a frame directory")
    detect.add_argument("--input", required=True, help="directory of frames")
    detect.add_argument("--out", required=True, help="run output directory")
    detect.add_argument("--pattern", help="frame filename glob (default *.png)")
    detect.add_argument("--gap", type=_positive_int, help="temporal stride (default 5)")
    detect.add_argument("--patch", type=_odd_int, help="spatial patch side (default 3)")
    detect.add_argument(
        "--abs-kernel", type=_odd_int, help="background-suppression window (default 15)"
    )
    detect.add_argument(
        "--no-abs",
        action="store_const",
        const=True,
        help="disable adaptive background suppression (ablation)",
    )
    detect.add_argument(
        "--k-sigma", type=_nonneg_float, help="segmentation multiplier (default 10)"
    )
    detect.add_argument(
        "--emit-intermediate",
        action="store_const",
        const=True,
        help="persist spatial/temporal/fused maps besides the final one",
    )
    detect.add_argument("--config", help="TOML config file or manifest.json to start from")
    detect.set_defaults(func=cmd_detect)

    evaluate = sub.add_parser("eval", help="score a detect run against ground truth")
    evaluate.add_argument("--run", required=True, help="detect run directory")
    evaluate.add_argument("--gt", required=True, help="ground-truth CSV")
    evaluate.add_argument(
        "--input", help="input frame directory (default: from the run manifest)"
    )
    evaluate.add_argument(
        "--match-radius", type=_positive_float, default=4.0,
        help="centroid match distance in px (default 4)",
    )
    evaluate.add_argument(
        "--match-mode", choices=("centroid", "containment"), default="centroid"
    )
    evaluate.add_argument(
        "--roc-steps", type=_positive_int, default=256,
        help="threshold sweep resolution (default 256)",
    )
    evaluate.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="generate a synthetic sequence + ground truth")
    synth.add_argument("--out", required=True, help="sequence output directory")
    synth.add_argument("--preset", choices=PRESET_NAMES, default="drift")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--frames", type=_positive_int, default=200)
    synth.add_argument("--amplitude", type=_nonneg_float, help="target contrast")
    synth.add_argument("--drift", type=_drift_pair, help="background drift DX,DY px/frame")
    synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"stlfd: error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# detect


def _load_config_file(path: str) -> dict:
    """Read detect settings from a TOML file ([detect] section) or a manifest."""
    file_path = Path(path)
    if file_path.suffix == ".json":
        manifest = json.loads(file_path.read_text())
        cfg = manifest.get("config", {})
        return {
            "patch": cfg.get("spatial", {}).get("patch"),
            "gap": cfg.get("temporal", {}).get("gap"),
            "abs_kernel": cfg.get("abs", {}).get("kernel"),
            "no_abs": not cfg.get("abs", {}).get("enabled", True),
            "k_sigma": cfg.get("threshold", {}).get("k_sigma"),
            "emit_intermediate": cfg.get("emit_intermediate"),
            "pattern": manifest.get("pattern"),
        }
    with file_path.open("rb") as fh:
        data = tomllib.load(fh)
    return data.get("detect", {})


def _resolve_detect_settings(args: argparse.Namespace) -> dict:
    file_values = _load_config_file(args.config) if args.config else {}
    settings = {}
    for key, default in _DETECT_DEFAULTS.items():
        flag = getattr(args, key)
        file_value = file_values.get(key)
        settings[key] = flag if flag is not None else (
            file_value if file_value is not None else default
        )
    if settings["abs_kernel"] % 2 == 0 or settings["patch"] % 2 == 0:
        raise ValueError("patch and abs_kernel must be odd")
    return settings


def _detector_config(settings: dict) -> DetectorConfig:
    return DetectorConfig(
        spatial=SpatialConfig(patch=settings["patch"]),
        temporal=TemporalConfig(gap=settings["gap"]),
        abs=AbsConfig(kernel=settings["abs_kernel"], enabled=not settings["no_abs"]),
        threshold=ThresholdConfig(k_sigma=settings["k_sigma"]),
        emit_intermediate=settings["emit_intermediate"],
    )


def _write_manifest(out_dir: Path, manifest: dict) -> Path:
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def cmd_detect(args: argparse.Namespace) -> int:
    settings = _resolve_detect_settings(args)
    cfg = _detector_config(settings)
    out_dir = Path(args.out)
    source = open_sequence(args.input, settings["pattern"])
    summary = run_sequence(source, cfg, out_dir)
    _write_manifest(
        out_dir,
        {
            "command": "detect",
            "tool": "stlfd",
            "version": __version__,
            "seed": None,
            "input": str(args.input),
            "pattern": settings["pattern"],
            "out": str(args.out),
            "config": {
                "spatial": {"patch": settings["patch"]},
                "temporal": {"gap": settings["gap"]},
                "abs": {
                    "kernel": settings["abs_kernel"],
                    "enabled": not settings["no_abs"],
                },
                "threshold": {"k_sigma": settings["k_sigma"]},
                "emit_intermediate": settings["emit_intermediate"],
            },
        },
    )
    fps = summary.steady_state_fps
    print(
        f"processed {summary.frames_total} frames "
        f"({summary.frames_detected} detected-status, "
        f"{summary.detections_total} detections, {fps:.1f} fps steady-state)"
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def _load_run_maps(run_dir: Path) -> dict:
    """Final maps of a detect run, exact .f32 dumps preferred over PGMs."""
    maps = {}
    pgms = sorted(run_dir.glob("stlfd_*.pgm"))
    if not pgms:
        raise ValueError(f"{run_dir}: no stlfd_*.pgm maps found; not a detect run?")
    for pgm in pgms:
        index = frame_index_of(pgm)
        values = read_map_pgm(pgm)
        raw = pgm.with_suffix(".f32")
        if raw.exists():
            values = read_map_f32(raw, values.shape)
        maps[index] = values
    return maps


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise ValueError(f"{run_dir}: not a directory")
    gt_path = Path(args.gt)
    if not gt_path.is_file():
        raise ValueError(f"{gt_path}: ground truth file not found")

    input_dir = args.input
    pattern = "*.png"
    manifest_path = run_dir / MANIFEST_NAME
    if input_dir is None and manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
        input_dir = manifest.get("input")
        pattern = manifest.get("pattern", pattern)
    if input_dir is None:
        raise ValueError(
            f"{run_dir}: no manifest with an input path; pass --input explicitly"
        )

    maps = _load_run_maps(run_dir)
    gt = load_ground_truth(gt_path)
    rule = MatchRule(radius=args.match_radius, mode=args.match_mode)
    threads = resolve_threads()

    curve = roc_sweep(maps, gt, rule, steps=args.roc_steps, threads=threads)

    inputs = {}
    for index, path in list_sequence(input_dir, pattern):
        if index in maps:
            inputs[index] = load_frame(path, index).pixels
    mean_scrg, mean_bsf = scrg_bsf_over_run(inputs, maps, gt)

    write_roc_csv(curve, run_dir / "roc.csv")
    write_summary_csv(
        {"auc": curve.auc, "mean_scrg": mean_scrg, "mean_bsf": mean_bsf},
        run_dir / "summary.csv",
    )
    print(f"auc {curve.auc:.6f}  mean_scrg {mean_scrg:.4f} dB  mean_bsf {mean_bsf:.4f} dB")
    return 0


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = preset(args.preset, seed=args.seed, frames=args.frames)
    if args.amplitude is not None:
        cfg = replace(cfg, target=replace(cfg.target, amplitude=args.amplitude))
    if args.drift is not None:
        cfg = replace(cfg, background=replace(cfg.background, drift=args.drift))
    out_dir = Path(args.out)
    result = generate(cfg, out_dir)
    _write_manifest(
        out_dir,
        {
            "command": "synth",
            "tool": "stlfd",
            "version": __version__,
            "seed": cfg.seed,
            "preset": args.preset,
            "out": str(args.out),
            "config": {
                "width": cfg.width,
                "height": cfg.height,
                "frames": cfg.frames,
                "noise_sigma": cfg.noise_sigma,
                "background": {
                    "smoothness": cfg.background.smoothness,
                    "drift": list(cfg.background.drift),
                    "jitter_amp": cfg.background.jitter_amp,
                },
                "target": {
                    "amplitude": cfg.target.amplitude,
                    "psf_sigma": cfg.target.psf_sigma,
                    "velocity": list(cfg.target.velocity),
                    "start": list(cfg.target.start),
                },
            },
        },
    )
    print(f"wrote {len(result.frame_paths)} frames + ground truth to {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
