"""Command line interface.

Subcommands: segment, evaluate, phantom, compare. Exit codes: 0 success
(including a clean "no hemorrhage found"), 1 usage or configuration error,
2 unusable input data, 3 internal invariant failure. The HEMOSEG_LOG
environment variable sets the log level (DEBUG, INFO, WARNING, ERROR).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, HemosegError, InternalError
from .io import load_mask, load_nifti, load_raw, parse_kv, save_nifti
from .metrics import evaluate, load_boxes, render_report, save_boxes
from .overlay import overlay_slices
from .phantom import PhantomSpec, generate, parse_phantom_spec
from .pipeline import ALGORITHMS, build_run_config, compare_algorithms, segment_volume

log = logging.getLogger("hemoseg.cli")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _setup_logging() -> None:
    level_name = os.environ.get("HEMOSEG_LOG", "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _load_volume(path):
    p = Path(path)
    if p.suffix in (".nii", ".hdr"):
        return load_nifti(p)
    if p.suffix == ".raw":
        return load_raw(p, Path(str(p) + ".txt"))
    raise DataError(f"{p}: unrecognized input extension "
                    "(expected .nii, .hdr, or .raw with a .raw.txt sidecar)")


def _config_from(args) -> dict[str, str]:
    kv: dict[str, str] = {}
    if getattr(args, "config", None):
        p = Path(args.config)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"{p}: cannot read config: {exc}") from exc
        kv = parse_kv(text, source=str(p), error=ConfigError)
    overrides = {
        "window.min": getattr(args, "window_min", None),
        "window.max": getattr(args, "window_max", None),
        "em.min_region_voxels": getattr(args, "min_region_voxels", None),
        "em.max_clusters": getattr(args, "max_clusters", None),
        "fcm.threshold_hu": getattr(args, "fcm_threshold", None),
    }
    connectivity = getattr(args, "connectivity", None)
    if connectivity is not None:
        overrides["brain.connectivity"] = connectivity
        overrides["em.connectivity"] = connectivity
    for key, value in overrides.items():
        if value is not None:
            kv[key] = str(value)
    return kv


def _write_segmentation(result, brain, out_dir: Path, overlays: bool, run_config) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_nifti(result.hemorrhage_mask, out_dir / "mask.nii")
    save_nifti(result.cluster_map, out_dir / "clusters.nii")
    (out_dir / "report.txt").write_text(result.report)
    if overlays:
        overlay_slices(brain.volume, result.hemorrhage_mask, None,
                       out_dir / "overlays", run_config.preprocess.window)


def cmd_segment(args) -> int:
    vol, _params = _load_volume(args.input)
    run_config = build_run_config(_config_from(args), algorithm=args.algorithm)
    result, brain = segment_volume(vol, run_config)
    _write_segmentation(result, brain, Path(args.output), args.overlays, run_config)
    sys.stdout.write(result.report)
    return 0


def cmd_evaluate(args) -> int:
    pred = load_mask(args.pred)
    truth = load_mask(args.truth)
    boxes = load_boxes(args.boxes) if args.boxes else ()
    volume = None
    if args.volume:
        volume, _ = _load_volume(args.volume)
    report = evaluate(pred, truth, boxes, volume, min_overlap_voxels=args.min_overlap)
    text = render_report(report)
    sys.stdout.write(text)
    if args.output:
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(text)
        if args.overlays:
            if volume is None:
                raise ConfigError("--overlays needs --volume for the grayscale base")
            overlay_slices(volume, pred, truth, out_dir / "overlays")
    elif args.overlays:
        raise ConfigError("--overlays needs --output to hold the images")
    return 0


def cmd_phantom(args) -> int:
    if args.spec:
        p = Path(args.spec)
        try:
            text = p.read_text()
        except OSError as exc:
            raise DataError(f"{p}: cannot read spec: {exc}") from exc
        spec = parse_phantom_spec(text, source=str(p))
    else:
        spec = PhantomSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    output = generate(spec)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_nifti(output.volume, out_dir / "volume.nii")
    save_nifti(output.truth, out_dir / "truth.nii")
    save_boxes(output.boxes, out_dir / "boxes.txt")
    for s in output.blob_stats:
        sys.stdout.write(f"blob={s.label} tag={s.tag} voxels={s.n_voxels} "
                         f"centroid={s.centroid[0]:.2f},{s.centroid[1]:.2f},{s.centroid[2]:.2f} "
                         f"mean_hu={s.intensity_mean:.2f}\n")
    log.info("phantom written to %s (%d blob(s))", out_dir, len(output.blob_stats))
    return 0


def cmd_compare(args) -> int:
    vol, _params = _load_volume(args.input)
    truth = load_mask(args.truth)
    algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    for name in algorithms:
        if name not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
    if not algorithms:
        raise ConfigError("no algorithms requested")
    boxes = load_boxes(args.boxes) if args.boxes else ()

    run_config = build_run_config(_config_from(args))
    results, brain = compare_algorithms(vol, run_config, algorithms)

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in algorithms:
        result = results[name]
        save_nifti(result.hemorrhage_mask, out_dir / f"{name}_mask.nii")
        (out_dir / f"{name}_report.txt").write_text(result.report)
        report = evaluate(result.hemorrhage_mask, truth, boxes, brain.volume)
        det = f" detection={report.detection.rate:.6f}" if report.detection else ""
        lines.append(f"algorithm={name} dice={report.dice:.6f}{det}")
        if args.overlays:
            overlay_slices(brain.volume, result.hemorrhage_mask, truth,
                           out_dir / f"overlays_{name}", run_config.preprocess.window)
    table = "\n".join(lines) + "\n"
    (out_dir / "compare.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def _add_config_flags(p) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--window-min", type=float, help="working window lower bound (HU)")
    p.add_argument("--window-max", type=float, help="working window upper bound (HU)")
    p.add_argument("--min-region-voxels", type=int,
                   help="minimum bright-region size that seeds a cluster")
    p.add_argument("--max-clusters", type=int, help="cap on total mixture clusters")
    p.add_argument("--connectivity", type=int, choices=(6, 26),
                   help="neighbor connectivity for components")
    p.add_argument("--fcm-threshold", type=float,
                   help="HU threshold flagging FCM clusters as hemorrhage")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hemoseg",
                     description="Unsupervised hemorrhage segmentation for head CT volumes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one volume")
    p.add_argument("--input", required=True, help=".nii/.hdr volume or .raw with sidecar")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--algorithm", default="mixture", choices=ALGORITHMS)
    p.add_argument("--overlays", action="store_true", help="write per-slice PPM overlays")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score a predicted mask against truth")
    p.add_argument("--pred", required=True, help="predicted mask (.nii)")
    p.add_argument("--truth", required=True, help="truth mask (.nii)")
    p.add_argument("--boxes", help="per-slice bounding box file")
    p.add_argument("--volume", help="source volume, enables intensity bins and overlays")
    p.add_argument("--min-overlap", type=int, default=1,
                   help="predicted voxels inside a box required to call it detected")
    p.add_argument("--output", help="directory for report.txt (and overlays)")
    p.add_argument("--overlays", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("phantom", help="generate a synthetic head volume with truth")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--spec", help="phantom spec file (key = value)")
    p.add_argument("--seed", type=int, default=None, help="noise seed")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("compare", help="run several algorithms on one volume")
    p.add_argument("--input", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--boxes", help="per-slice bounding box file")
    p.add_argument("--output", required=True)
    p.add_argument("--algorithms", default="mixture,fcm40,fcm45",
                   help="comma-separated algorithm list")
    p.add_argument("--overlays", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"{parser.prog}: error: {exc}\n")
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except DataError as exc:
        log.error("%s", exc)
        return 2
    except InternalError as exc:
        log.error("internal invariant violated: %s", exc)
        return 3
    except HemosegError as exc:
        log.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
