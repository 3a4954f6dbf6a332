"""Manifest loading, class balancing, patient-disjoint splitting and batching."""

from __future__ import annotations

import csv
import math
import os
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from PIL import Image

from .errors import EmptyClass, InvalidLabel, MalformedRow, MissingFile, UnreadableImage
from .preprocess import ImageBuffer

MANIFEST_COLUMNS = ("image_path", "label", "patient_id", "view")
VIEWS = ("PA", "AP", "UNKNOWN")


@dataclass(frozen=True)
class SampleRecord:
    image_path: str
    label: int
    patient_id: str = ""
    view: str = "UNKNOWN"

    def __post_init__(self):
        if not self.image_path:
            raise ValueError("image_path must be non-empty")
        if self.label not in (0, 1):
            raise InvalidLabel(f"label must be 0 or 1, got {self.label!r}")
        if self.view not in VIEWS:
            raise ValueError(f"view must be one of {VIEWS}, got {self.view!r}")
        if not self.patient_id:
            object.__setattr__(self, "patient_id", Path(self.image_path).stem)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SampleRecord, ...] = ()
    source_tag: str = ""

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        seen = set()
        for r in records:
            if r.image_path in seen:
                raise MalformedRow(f"duplicate image_path {r.image_path!r}")
            seen.add(r.image_path)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def class_counts(self) -> dict[int, int]:
        c = Counter(r.label for r in self.records)
        return {0: c.get(0, 0), 1: c.get(1, 0)}

    def count(self, label: int) -> int:
        return self.class_counts()[label]

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def patient_ids(self) -> set[str]:
        return {r.patient_id for r in self.records}


def load_manifest(csv_path, source_tag: str | None = None) -> DatasetManifest:
    """Read a manifest CSV.

    Relative ``image_path`` entries are resolved against the CSV's directory
    so the manifest can be moved together with its images. Image files are
    not touched here; unreadable images surface when batches are drawn.
    """
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise MissingFile(f"manifest not found: {csv_path}")
    base = csv_path.resolve().parent
    records = []
    with open(csv_path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MalformedRow(f"{csv_path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        n = len(header)
        if n < 2 or tuple(header) != MANIFEST_COLUMNS[:n]:
            raise MalformedRow(
                f"{csv_path}: header must be {','.join(MANIFEST_COLUMNS)} "
                f"(last two optional), got {','.join(header)}"
            )
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n:
                raise MalformedRow(f"{csv_path}: row {lineno} has {len(row)} columns, expected {n}")
            fields = dict(zip(header, (c.strip() for c in row)))
            if fields["label"] not in ("0", "1"):
                raise InvalidLabel(f"{csv_path}: row {lineno} has label {fields['label']!r}, expected 0 or 1")
            if not fields["image_path"]:
                raise MalformedRow(f"{csv_path}: row {lineno} has an empty image_path")
            path = fields["image_path"]
            if not os.path.isabs(path):
                path = os.path.normpath(base / path)
            view = fields.get("view", "").upper() or "UNKNOWN"
            if view not in VIEWS:
                raise MalformedRow(f"{csv_path}: row {lineno} has unknown view {fields['view']!r}")
            records.append(
                SampleRecord(
                    image_path=path,
                    label=int(fields["label"]),
                    patient_id=fields.get("patient_id", ""),
                    view=view,
                )
            )
    return DatasetManifest(tuple(records), source_tag if source_tag is not None else csv_path.stem)


def save_manifest(manifest: DatasetManifest, csv_path, relative: bool = True) -> Path:
    """Write ``manifest`` as CSV; paths are stored relative to the CSV when possible."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    base = csv_path.resolve().parent
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in manifest.records:
            path = r.image_path
            if relative and os.path.isabs(path):
                try:
                    path = os.path.relpath(path, base)
                except ValueError:  # different drive on Windows
                    pass
            w.writerow([path, r.label, r.patient_id, "" if r.view == "UNKNOWN" else r.view])
    return csv_path


def balance_classes(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Undersample the majority class down to the minority count."""
    by_class = {0: [], 1: []}
    for r in manifest.records:
        by_class[r.label].append(r)
    if not by_class[0] or not by_class[1]:
        raise EmptyClass(
            f"both classes need records, got {len(by_class[0])} negative / {len(by_class[1])} positive"
        )
    rng = np.random.default_rng(seed)
    k = min(len(by_class[0]), len(by_class[1]))
    kept = []
    for label in (0, 1):
        group = by_class[label]
        if len(group) > k:
            idx = np.sort(rng.choice(len(group), size=k, replace=False))
            group = [group[i] for i in idx]
        kept.extend(group)
    order = rng.permutation(len(kept))
    return DatasetManifest(tuple(kept[i] for i in order), manifest.source_tag)


def split_train_val(
    manifest: DatasetManifest, train_fraction: float = 0.8, seed: int = 0
) -> tuple[DatasetManifest, DatasetManifest]:
    """Patient-disjoint split that tracks per-class targets.

    Patients are visited largest group first (random order within a size)
    and a patient goes to the training side when doing so reduces the total
    distance to the per-class targets ``floor(train_fraction * n_class)``.
    With singleton patients the targets are met exactly.
    """
    if not 0 < train_fraction <= 1:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")

    groups: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(manifest.records):
        groups[r.patient_id].append(i)
    counts = manifest.class_counts()
    target = np.array([math.floor(train_fraction * counts[0]), math.floor(train_fraction * counts[1])])
    if train_fraction == 1:
        target = np.array([counts[0], counts[1]])

    rng = np.random.default_rng(seed)
    patients = sorted(groups)
    tiebreak = rng.permutation(len(patients))
    order = sorted(range(len(patients)), key=lambda j: (-len(groups[patients[j]]), tiebreak[j]))

    have = np.zeros(2, dtype=np.int64)
    in_train = set()
    for j in order:
        pid = patients[j]
        g = np.zeros(2, dtype=np.int64)
        for i in groups[pid]:
            g[manifest.records[i].label] += 1
        if np.abs(target - have - g).sum() < np.abs(target - have).sum():
            have += g
            in_train.add(pid)

    train = tuple(r for r in manifest.records if r.patient_id in in_train)
    val = tuple(r for r in manifest.records if r.patient_id not in in_train)
    return DatasetManifest(train, "train"), DatasetManifest(val, "val")


def read_image(path) -> ImageBuffer:
    """Load a PNG/JPEG as a 1- or 3-channel float buffer in 0..255."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "RGB"):
                arr = np.asarray(im)
            elif im.mode in ("I;16", "I;16B", "I;16L", "I"):
                raw = np.asarray(im, dtype=np.float64)
                peak = raw.max() if raw.size and raw.max() > 255 else 255.0
                arr = raw * (255.0 / peak)
            elif im.mode == "LA":
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (OSError, ValueError, SyntaxError) as exc:
        raise UnreadableImage(path, str(exc)) from exc
    return ImageBuffer(arr)


def record_seed(seed: int, epoch: int, position: int) -> int:
    """Per-image augmentation seed derived from (seed, epoch, position)."""
    return int(np.random.SeedSequence([seed, epoch, position]).generate_state(1)[0])


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(
    manifest: DatasetManifest,
    batch_size: int,
    seed: int,
    pipeline: Callable,
    epoch: int = 0,
    shuffle: bool = True,
    workers: int = 0,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(images, labels)`` covering every record once.

    ``images`` is ``float32`` of shape ``(b, H, W, 3)``; ``labels`` is
    ``int64`` of shape ``(b,)``. ``pipeline(img, seed)`` maps a raw
    :class:`ImageBuffer` to the model input. The shuffle order depends only
    on ``(seed, epoch)``; ``workers > 0`` decodes images on a thread pool
    without changing the order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(manifest)
    order = epoch_order(n, seed, epoch) if shuffle else np.arange(n)

    def load(pos):
        rec = manifest.records[order[pos]]
        img = read_image(rec.image_path)
        out = pipeline(img, record_seed(seed, epoch, int(order[pos])))
        return out.values if isinstance(out, ImageBuffer) else np.asarray(out)

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 0 else None
    try:
        for start in range(0, n, batch_size):
            positions = range(start, min(start + batch_size, n))
            imgs = list(pool.map(load, positions)) if pool else [load(p) for p in positions]
            x = np.stack(imgs).astype(np.float32)
            y = np.array([manifest.records[order[p]].label for p in positions], dtype=np.int64)
            x.setflags(write=False)
            y.setflags(write=False)
            yield x, y
    finally:
        if pool:
            pool.shutdown(wait=True)


def n_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)
