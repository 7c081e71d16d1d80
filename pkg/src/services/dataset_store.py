"""
Dataset store for mmforge
Sharded JSONL manifests, training exports, subsets and splits
"""
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple

import numpy as np

from ..config import DEFAULT_TRAIN_SIZE, DEFAULT_VAL_SIZE, SCHEMA_VERSION, SHARD_SIZE
from ..errors import IoFailure, SizeExceedsDataset
from ..models.dataset import DatasetManifest, ExportConfig, SampleManifest, SubsetSpec, Supervision
from ..utils.canonical import dumps_line

logger = logging.getLogger(__name__)

SHARD_GLOB = "manifest-*.jsonl"
DATASET_META = "dataset.json"
CAPTION_INSTRUCTION = "Describe what happens in the video."
SEED_MASK = 0xFFFFFFFFFFFFFFFF

_shard_locks: Dict[str, threading.Lock] = {}
_shard_locks_guard = threading.Lock()


def _lock_for(path: Path) -> threading.Lock:
    with _shard_locks_guard:
        return _shard_locks.setdefault(os.fspath(path), threading.Lock())


def shard_path(root: Path, image_id: int) -> Path:
    return Path(root) / f"manifest-{image_id // SHARD_SIZE:05d}.jsonl"


def write_sample(manifest: SampleManifest, root) -> Path:
    """Append one sample line to the shard holding its id range"""
    manifest.validate()
    root = Path(root)
    path = shard_path(root, manifest.image_id)
    data = dumps_line(manifest.to_dict()).encode("utf-8")
    try:
        root.mkdir(parents=True, exist_ok=True)
        with _lock_for(path):
            fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                os.write(fd, data)
            finally:
                os.close(fd)
    except OSError as e:
        raise IoFailure(f"could not append sample {manifest.image_id} to {path}: {e}") from e
    return path


def _iter_shard(path: Path) -> Iterable[SampleManifest]:
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.endswith("\n"):
                logger.warning(f"Ignoring incomplete trailing line {lineno} in {path.name}")
                continue
            if not line.strip():
                continue
            try:
                yield SampleManifest.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                logger.warning(f"Skipping unreadable line {lineno} in {path.name}: {e}")


def read_dataset(root) -> DatasetManifest:
    """Load every shard; later lines for the same image win"""
    root = Path(root)
    samples: Dict[int, SampleManifest] = {}
    for path in sorted(root.glob(SHARD_GLOB)):
        for sample in _iter_shard(path):
            samples[sample.image_id] = sample
    return DatasetManifest(samples=[samples[i] for i in sorted(samples)], schema_version=_read_schema(root))


def _read_schema(root: Path) -> int:
    meta = root / DATASET_META
    if meta.is_file():
        try:
            return int(json.loads(meta.read_text(encoding="utf-8"))["schema_version"])
        except (OSError, ValueError, KeyError, TypeError):
            logger.warning(f"Unreadable {meta}, assuming schema {SCHEMA_VERSION}")
    return SCHEMA_VERSION


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(dataset: DatasetManifest, root) -> List[Path]:
    """Write a whole dataset as canonical shards, replacing existing ones"""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        shards: Dict[Path, List[str]] = {}
        for sample in dataset.samples:
            shards.setdefault(shard_path(root, sample.image_id), []).append(dumps_line(sample.to_dict()))
        for stale in set(root.glob(SHARD_GLOB)) - set(shards):
            stale.unlink()
        for path, lines in sorted(shards.items()):
            _atomic_write(path, "".join(lines))
        _atomic_write(root / DATASET_META, dumps_line({"schema_version": dataset.schema_version}))
    except OSError as e:
        raise IoFailure(f"could not write dataset under {root}: {e}") from e
    return sorted(shards)


def compact_shards(root) -> DatasetManifest:
    """Rewrite shards in canonical order without duplicates or partial lines"""
    dataset = read_dataset(root)
    write_manifest(dataset, root)
    return dataset


# Exports

def _record(sample: SampleManifest, inputs: Dict[str, Any], target: str) -> Dict[str, Any]:
    return {
        "image_id": sample.image_id,
        "inputs": {"video": list(sample.video), **inputs},
        "target": target,
    }


def export_training_set(dataset: DatasetManifest, config: ExportConfig) -> List[Dict[str, Any]]:
    """
    Supervision records per sample, in canonical order:
    captions -> 1 caption record;
    captions_plus_vqa -> caption + 3 VQA (+ counting QA when flagged);
    vqa_only -> 3 VQA (+ counting QA when flagged).
    """
    records: List[Dict[str, Any]] = []
    for sample in dataset.samples:
        if config.supervision in (Supervision.CAPTIONS, Supervision.CAPTIONS_PLUS_VQA):
            records.append(_record(sample, {"instruction": CAPTION_INSTRUCTION}, sample.caption.text))
        if config.supervision == Supervision.CAPTIONS:
            continue
        for pair in sample.vqa.pairs:
            records.append(_record(sample, {"question": pair.question}, pair.answer))
        if config.include_counting_qa:
            for pair in sample.counting_qa:
                records.append(_record(sample, {"question": pair.question}, pair.answer))
    return records


def write_export(records: List[Dict[str, Any]], root, supervision: Supervision) -> Path:
    path = Path(root) / "exports" / f"{supervision.value}.jsonl"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, "".join(dumps_line(r) for r in records))
    except OSError as e:
        raise IoFailure(f"could not write export {path}: {e}") from e
    logger.info(f"Wrote {len(records)} {supervision.value} records to {path}")
    return path


# Subsets and splits

def _permutation(n: int, seed: int) -> np.ndarray:
    # numpy only takes non-negative seeds; negative ones wrap to 64 bits
    return np.random.default_rng(seed & SEED_MASK).permutation(n)


def _take(dataset: DatasetManifest, positions: Iterable[int]) -> DatasetManifest:
    return DatasetManifest(
        samples=[dataset.samples[i] for i in sorted(int(p) for p in positions)],
        schema_version=dataset.schema_version,
    )


def subset(dataset: DatasetManifest, spec: SubsetSpec) -> DatasetManifest:
    """
    Seeded subset as a prefix of one shuffle, so a smaller draw with the same
    seed is always contained in a larger one.
    """
    if spec.size < 0 or spec.size > len(dataset):
        raise SizeExceedsDataset(f"subset of {spec.size} requested from {len(dataset)} samples")
    order = _permutation(len(dataset), spec.seed)
    return _take(dataset, order[:spec.size])


def split(
    dataset: DatasetManifest,
    train_size: int = DEFAULT_TRAIN_SIZE,
    val_size: int = DEFAULT_VAL_SIZE,
    seed: int = 0,
) -> Tuple[DatasetManifest, DatasetManifest]:
    """Disjoint seeded train/val split"""
    if train_size < 0 or val_size < 0 or train_size + val_size > len(dataset):
        raise SizeExceedsDataset(
            f"split of {train_size}+{val_size} requested from {len(dataset)} samples"
        )
    order = _permutation(len(dataset), seed)
    train = _take(dataset, order[:train_size])
    val = _take(dataset, order[train_size:train_size + val_size])
    leaks = find_leaks(train, val)
    if leaks:
        logger.warning(f"Train and val share {len(leaks)} source images: {leaks[:5]}")
    return train, val


def find_leaks(train: DatasetManifest, val: DatasetManifest) -> List[str]:
    """Source image refs present in both splits"""
    train_refs = {s.image_ref for s in train.samples}
    return sorted({s.image_ref for s in val.samples} & train_refs)
