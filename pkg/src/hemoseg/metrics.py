"""Segmentation quality metrics and their text reports.

Two views of quality: voxelwise overlap (Dice) against a truth mask, and
per-lesion detection against per-slice bounding boxes (a box counts as
detected when enough predicted voxels fall inside it). Detection is broken
down by box size and, when the source volume is available, by the box's
peak intensity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .volume import BoundingBox, LabelMask, Volume3D, VoxelCoord, check_same_dims


def dice(pred: LabelMask, truth: LabelMask) -> float:
    """2|X and Y| / (|X| + |Y|); two empty masks count as perfect overlap."""
    check_same_dims(pred, truth, "dice inputs")
    x = pred.binary()
    y = truth.binary()
    total = int(x.sum()) + int(y.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((x & y).sum()) / total


@dataclass(frozen=True)
class BoxOutcome:
    box: BoundingBox
    n_inside: int
    detected: bool
    max_intensity: float | None = None


@dataclass(frozen=True)
class BinStat:
    label: str
    detected: int
    total: int

    @property
    def rate(self) -> float:
        return self.detected / self.total if self.total else 0.0


@dataclass(frozen=True, eq=False)
class DetectionReport:
    outcomes: tuple[BoxOutcome, ...]
    by_size: tuple[BinStat, ...]
    by_intensity: tuple[BinStat, ...]

    @property
    def n_detected(self) -> int:
        return sum(1 for o in self.outcomes if o.detected)

    @property
    def n_boxes(self) -> int:
        return len(self.outcomes)

    @property
    def rate(self) -> float:
        return self.n_detected / self.n_boxes if self.n_boxes else 0.0


def _bin_labels(edges: tuple[float, ...]) -> list[str]:
    bounds = ["0"] + [f"{e:g}" for e in edges] + ["inf"]
    return [f"[{lo},{hi})" for lo, hi in zip(bounds[:-1], bounds[1:])]


def _bin_stats(values, detected, edges) -> tuple[BinStat, ...]:
    labels = _bin_labels(edges)
    idx = np.searchsorted(np.asarray(edges, dtype=np.float64),
                          np.asarray(values, dtype=np.float64), side="right")
    stats = []
    for b, label in enumerate(labels):
        hit = idx == b
        total = int(hit.sum())
        if total == 0:
            continue
        stats.append(BinStat(label, int(np.asarray(detected)[hit].sum()), total))
    return tuple(stats)


DEFAULT_SIZE_EDGES = (100.0, 500.0)
DEFAULT_INTENSITY_EDGES = (60.0, 80.0)


def detection_rate(pred: LabelMask, boxes, min_overlap_voxels: int = 1,
                   volume: Volume3D | None = None,
                   size_edges=DEFAULT_SIZE_EDGES,
                   intensity_edges=DEFAULT_INTENSITY_EDGES) -> DetectionReport:
    """Score each box as detected when >= min_overlap_voxels predicted voxels
    fall inside it; bins by box voxel count and (with a volume) peak HU."""
    if min_overlap_voxels < 1:
        raise DataError(f"min_overlap_voxels must be >= 1, got {min_overlap_voxels}")
    if volume is not None:
        check_same_dims(pred, volume, "prediction and volume")
    nx, ny, nz = pred.dims
    data = pred.binary()
    outcomes = []
    for box in boxes:
        lo, hi = box.min_corner, box.max_corner
        if not (0 <= lo.i and hi.i < nx and 0 <= lo.j and hi.j < ny
                and 0 <= box.slice_index < nz):
            raise DataError(f"box {box} exceeds volume dims {pred.dims}")
        window = (slice(lo.i, hi.i + 1), slice(lo.j, hi.j + 1), box.slice_index)
        inside = int(data[window].sum())
        peak = float(volume.data[window].max()) if volume is not None else None
        outcomes.append(BoxOutcome(box, inside, inside >= min_overlap_voxels, peak))

    sizes = [o.box.n_voxels for o in outcomes]
    hits = [o.detected for o in outcomes]
    by_size = _bin_stats(sizes, hits, size_edges) if outcomes else ()
    if volume is not None and outcomes:
        by_intensity = _bin_stats([o.max_intensity for o in outcomes], hits, intensity_edges)
    else:
        by_intensity = ()
    return DetectionReport(tuple(outcomes), by_size, by_intensity)


@dataclass(frozen=True, eq=False)
class EvalReport:
    """One volume's scores: Dice plus optional box detection."""

    dice: float
    detection: DetectionReport | None = None
    tags: tuple[str, ...] = ()


def evaluate(pred: LabelMask, truth: LabelMask, boxes=(), volume: Volume3D | None = None,
             min_overlap_voxels: int = 1) -> EvalReport:
    """Dice against truth plus detection against the boxes (when given)."""
    check_same_dims(pred, truth, "prediction and truth")
    boxes = tuple(boxes)
    detection = None
    if boxes:
        detection = detection_rate(pred, boxes, min_overlap_voxels, volume)
    tags = tuple(sorted({b.tag for b in boxes if b.tag}))
    return EvalReport(dice=dice(pred, truth), detection=detection, tags=tags)


@dataclass(frozen=True)
class GroupSummary:
    group: str
    n: int
    mean: float
    max: float
    std: float


def summarize(reports) -> list[GroupSummary]:
    """Aggregate Dice over all reports and per tag; population std.

    Groups with no members are omitted; "all" always covers every report.
    """
    reports = list(reports)
    if not reports:
        return []
    groups = [("all", reports)]
    for tag in sorted({t for r in reports for t in r.tags}):
        groups.append((tag, [r for r in reports if tag in r.tags]))
    rows = []
    for name, members in groups:
        values = np.array([r.dice for r in members], dtype=np.float64)
        rows.append(GroupSummary(group=name, n=len(members), mean=float(values.mean()),
                                 max=float(values.max()), std=float(values.std(ddof=0))))
    return rows


def render_report(report: EvalReport) -> str:
    """Deterministic key=value lines for one evaluation."""
    lines = [f"dice={report.dice:.6f}"]
    det = report.detection
    if det is not None:
        lines.append(f"boxes={det.n_boxes} detected={det.n_detected} rate={det.rate:.6f}")
        for stat in det.by_size:
            lines.append(f"size{stat.label} detected={stat.detected} "
                         f"total={stat.total} rate={stat.rate:.6f}")
        for stat in det.by_intensity:
            lines.append(f"intensity{stat.label} detected={stat.detected} "
                         f"total={stat.total} rate={stat.rate:.6f}")
    if report.tags:
        lines.append("tags=" + ",".join(report.tags))
    return "\n".join(lines) + "\n"


def render_summary(rows) -> str:
    lines = [f"group={r.group} n={r.n} mean={r.mean:.6f} max={r.max:.6f} std={r.std:.6f}"
             for r in rows]
    return "\n".join(lines) + "\n"


def load_boxes(path) -> list[BoundingBox]:
    """Read box lines: ``z x_min y_min x_max y_max tag`` (tag optional)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: cannot read: {exc}") from exc
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) not in (5, 6):
            raise DataError(f"{path}:{lineno}: expected 5 or 6 fields, got {len(parts)}")
        try:
            z, x_min, y_min, x_max, y_max = (int(p) for p in parts[:5])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-integer coordinate") from exc
        if min(z, x_min, y_min, x_max, y_max) < 0:
            raise DataError(f"{path}:{lineno}: negative coordinate")
        tag = parts[5] if len(parts) == 6 else ""
        try:
            boxes.append(BoundingBox(VoxelCoord(x_min, y_min, z), VoxelCoord(x_max, y_max, z),
                                     slice_index=z, tag=tag))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return boxes


def save_boxes(boxes, path) -> None:
    """Write boxes in the line format load_boxes reads."""
    lines = []
    for box in boxes:
        lo, hi = box.min_corner, box.max_corner
        entry = f"{box.slice_index} {lo.i} {lo.j} {hi.i} {hi.j}"
        if box.tag:
            entry += f" {box.tag}"
        lines.append(entry)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
