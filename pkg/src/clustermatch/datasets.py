"""Frame dataset ingestion, count pruning and persistence.

Frames are stored as JSON Lines, one record per line::

    {"version": 1, "frame_id": 0, "flowers": [[x, y, z], ...]}
    {"version": 1, "frame_id": 1, "raw": {"pixels": [[u, v, depth], ...],
        "intrinsics": {"fx": .., "fy": .., "cx": .., "cy": ..},
        "pose": [[...4x4...]], "depth_model": "ray"}}

Coordinates are meters. ``intrinsics`` may instead be given as
``{"K": [[...3x3...]]}``. A record may carry an optional ``timestamp``;
unknown keys are ignored. Files ending in ``.csv`` use the columns
``frame_id, flower_idx, x, y, z``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descriptor import Cluster
from .errors import (
    ClusterMatchError,
    EmptyAfterPruning,
    ParseError,
    SchemaVersionMismatch,
    ValidationError,
)
from .geometry import CameraIntrinsics, CameraPose, PixelDetection, frame_to_cluster
from .montecarlo import STREAM_DATASET, standard_normal_trials, stream
from .unscented import DescriptorDistribution, NoiseModel

SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class Dataset:
    frames: tuple
    declared_flower_count: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.declared_flower_count == other.declared_flower_count
            and self.name == other.name
            and self.frames == other.frames
        )


@dataclass
class PruneReport:
    dropped: list = field(default_factory=list)  # (frame_id, found_count)
    kept: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["frame_id", "found_count"])
            w.writerows(self.dropped)


def prune(frames, expected_count: int) -> tuple[list, PruneReport]:
    kept, report = [], PruneReport()
    for c in frames:
        if len(c) == expected_count:
            kept.append(c)
        else:
            report.dropped.append((c.frame_id, len(c)))
    report.kept = len(kept)
    return kept, report


def _check_version(rec, where):
    v = rec.get("version", SCHEMA_VERSION)
    if v != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{where}: unsupported schema version {v!r}")


def _intrinsics(fields) -> CameraIntrinsics:
    if "K" in fields:
        return CameraIntrinsics.from_matrix(fields["K"])
    return CameraIntrinsics(float(fields["fx"]), float(fields["fy"]), float(fields["cx"]), float(fields["cy"]))


def parse_record(rec: dict, source: str | None = None) -> Cluster:
    """Turn one decoded FrameRecord into a world-frame cluster."""
    if not isinstance(rec, dict):
        raise ValidationError("record must be a JSON object")
    if "frame_id" not in rec:
        raise ValidationError("missing required field 'frame_id'")
    has_flowers, has_raw = "flowers" in rec, "raw" in rec
    if has_flowers == has_raw:
        raise ValidationError("exactly one of 'flowers' or 'raw' must be present")
    fid = rec["frame_id"]
    if isinstance(fid, bool) or not isinstance(fid, int):
        raise ValidationError(f"frame_id must be an integer, got {fid!r}")
    if has_flowers:
        pts = np.asarray(rec["flowers"], dtype=float)
        if pts.size and (pts.ndim != 2 or pts.shape[1] != 3):
            raise ValidationError("'flowers' must be a list of [x, y, z] triples")
        if pts.size == 0:
            return _EmptyCluster(fid, source)
        return Cluster(pts, frame_id=fid, source=source)
    raw = rec["raw"]
    pixels = raw.get("pixels")
    if not pixels:
        return _EmptyCluster(fid, source)
    dets = [PixelDetection(float(u), float(v), float(d)) for u, v, d in pixels]
    return frame_to_cluster(
        dets,
        _intrinsics(raw["intrinsics"]),
        CameraPose(raw.get("pose", np.eye(4))),
        frame_id=fid,
        depth_model=raw.get("depth_model", "ray"),
        source=source,
    )


class _EmptyCluster:
    """Stand-in for a frame with zero detections; only ever pruned."""

    def __init__(self, frame_id, source):
        self.frame_id = frame_id
        self.source = source
        self.points = np.empty((0, 3))

    def __len__(self):
        return 0


def _read_jsonl(path: Path, name: str):
    frames = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno, path=path) from exc
            if isinstance(rec, dict):
                _check_version(rec, f"{path}:{lineno}")
            try:
                frames.append(parse_record(rec, source=name))
            except SchemaVersionMismatch:
                raise
            except (ClusterMatchError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from exc
    return frames


def _read_csv(path: Path, name: str):
    groups: dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = {"frame_id", "flower_idx", "x", "y", "z"} - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"missing columns {sorted(missing)}", line=1, path=path)
        for row in reader:
            try:
                fid = int(row["frame_id"])
                groups.setdefault(fid, []).append(
                    (int(row["flower_idx"]), float(row["x"]), float(row["y"]), float(row["z"]))
                )
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=reader.line_num, path=path) from exc
    frames = []
    for fid, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        try:
            frames.append(Cluster([r[1:] for r in rows], frame_id=fid, source=name))
        except ClusterMatchError as exc:
            raise ParseError(f"frame {fid}: {exc}", path=path) from exc
    return frames


def read_frames(path) -> list:
    path = Path(path)
    name = path.stem
    if path.suffix.lower() == ".csv":
        return _read_csv(path, name)
    return _read_jsonl(path, name)


def load_dataset(path, expected_count: int, name: str | None = None) -> tuple[Dataset, PruneReport]:
    """Load frames and drop every frame whose point count differs from ``expected_count``."""
    path = Path(path)
    frames = read_frames(path)
    kept, report = prune(frames, expected_count)
    if not kept:
        raise EmptyAfterPruning(
            f"{path}: no frame has exactly {expected_count} points ({len(report.dropped)} dropped)"
        )
    return Dataset(kept, expected_count, name if name is not None else path.stem), report


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["frame_id", "flower_idx", "x", "y", "z"])
            for c in ds.frames:
                for k, (x, y, z) in enumerate(c.points.tolist()):
                    w.writerow([c.frame_id, k, repr(x), repr(y), repr(z)])
        return
    with open(path, "w", encoding="utf-8") as f:
        for c in ds.frames:
            rec = {"version": SCHEMA_VERSION, "frame_id": c.frame_id, "flowers": c.points.tolist()}
            f.write(json.dumps(rec) + "\n")


def distribution_to_dict(dist: DescriptorDistribution) -> dict:
    out = {
        "version": SCHEMA_VERSION,
        "mean": dist.mean.tolist(),
        "cov": dist.cov.tolist(),
        "flower_count": dist.flower_count,
    }
    if dist.meta:
        out["meta"] = dist.meta
    return out


def distribution_from_dict(doc: dict) -> DescriptorDistribution:
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported or missing schema version {doc.get('version')!r}")
    missing = [k for k in ("mean", "cov", "flower_count") if k not in doc]
    if missing:
        raise SchemaVersionMismatch(f"distribution document lacks required fields {missing}")
    return DescriptorDistribution(
        np.asarray(doc["mean"], dtype=float),
        np.asarray(doc["cov"], dtype=float),
        doc["flower_count"],
        dict(doc.get("meta", {})),
    )


def save_distribution(dist: DescriptorDistribution, path) -> None:
    # json writes floats with repr(), which round-trips every double exactly
    with open(path, "w", encoding="utf-8") as f:
        json.dump(distribution_to_dict(dist), f, indent=2)
        f.write("\n")


def load_distribution(path) -> DescriptorDistribution:
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=path) from exc
    return distribution_from_dict(doc)


def synthesize_dataset(
    base: Cluster,
    n_frames: int,
    noise: NoiseModel,
    seed: int = 0,
    corruption_rate: float = 0.0,
    name: str = "synthetic",
) -> Dataset:
    """Frames of ``base`` perturbed by ``noise``.

    With ``corruption_rate > 0`` each frame independently has, with that
    probability, one point dropped or one spurious point added, which
    mimics detector miscounts that pruning later removes. The returned
    dataset is NOT pruned.
    """
    n = len(base)
    z = standard_normal_trials(seed, 0, n_frames, base.points.shape, purpose=STREAM_DATASET)
    pts = base.points + z * noise.axis_sigmas()
    rng = stream(seed, STREAM_DATASET, 2**32)
    corrupt = rng.random(n_frames) < corruption_rate
    add = rng.random(n_frames) < 0.5
    extra = rng.uniform(base.points.min(axis=0), base.points.max(axis=0), size=(n_frames, 3))
    frames = []
    for i in range(n_frames):
        p = pts[i]
        if corrupt[i]:
            p = np.vstack([p, extra[i]]) if add[i] or n <= 2 else p[:-1]
        frames.append(Cluster(p, frame_id=i, source=name))
    return Dataset(frames, n, name)
