"""
COCO instances ingestion for mmforge
Parses annotation documents into a DatasetIndex and derives per-image count labels
"""
import json
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ..errors import MalformedDocument, MissingSection, UnknownImage, BadResponse
from ..models.coco import (
    CategoryDef, CountLabel, DatasetIndex, ImageRecord, InstanceAnnotation,
    Violation, ViolationKind,
)
from ..models.mask import BinaryMask, RleMask
from ..utils.masks import merge_masks, rle_decode

logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("images", "annotations", "categories")
_WHITESPACE = re.compile(r"\s+")


def normalize_category_name(name: str) -> str:
    """Lowercase, trim and collapse internal whitespace"""
    return _WHITESPACE.sub(" ", str(name)).strip().lower()


def parse_dataset(data: bytes) -> DatasetIndex:
    """
    Parse a COCO instances document into a DatasetIndex.

    Annotations whose image or category cannot be resolved are dropped and
    reported in ``index.diagnostics``; bboxes leaving the image are clamped.
    """
    try:
        document = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedDocument(f"annotation file is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise MalformedDocument("annotation document must be a JSON object")

    for section in REQUIRED_SECTIONS:
        if section not in document:
            raise MissingSection(f"annotation document has no '{section}' block")
        if not isinstance(document[section], list):
            raise MalformedDocument(f"'{section}' block must be a list")

    index = DatasetIndex()
    _ingest_images(document["images"], index)
    _ingest_categories(document["categories"], index)
    _ingest_annotations(document["annotations"], index)

    logger.info(
        f"Parsed dataset: {len(index.images)} images, {len(index.categories)} categories, "
        f"{index.annotation_count()} annotations, {len(index.diagnostics)} diagnostics"
    )
    return index


def load_dataset(path) -> DatasetIndex:
    """Read and parse an annotation file from disk"""
    return parse_dataset(Path(path).read_bytes())


def _ingest_images(entries: List[Dict[str, Any]], index: DatasetIndex) -> None:
    for entry in entries:
        try:
            image = ImageRecord(
                id=int(entry["id"]),
                file_name=str(entry["file_name"]),
                width=int(entry["width"]),
                height=int(entry["height"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedDocument(f"malformed image entry {entry!r}: {e}") from e

        if image.id in index.images:
            index.diagnostics.append(Violation(
                ViolationKind.DUPLICATE_ID, f"duplicate image id {image.id}", image_id=image.id
            ))
            continue
        if image.width <= 0 or image.height <= 0:
            index.diagnostics.append(Violation(
                ViolationKind.INVALID_SIZE,
                f"image {image.id} has size {image.width}x{image.height}",
                image_id=image.id,
            ))
            continue
        index.images[image.id] = image
        index.annotations_by_image[image.id] = []


def _ingest_categories(entries: List[Dict[str, Any]], index: DatasetIndex) -> None:
    seen_names = set()
    for entry in entries:
        try:
            category = CategoryDef(id=int(entry["id"]), name=normalize_category_name(entry["name"]))
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedDocument(f"malformed category entry {entry!r}: {e}") from e

        if category.id in index.categories:
            index.diagnostics.append(Violation(
                ViolationKind.DUPLICATE_ID, f"duplicate category id {category.id}"
            ))
            continue
        if category.name in seen_names:
            index.diagnostics.append(Violation(
                ViolationKind.DUPLICATE_ID, f"duplicate category name '{category.name}'"
            ))
        seen_names.add(category.name)
        index.categories[category.id] = category


def _ingest_annotations(entries: List[Dict[str, Any]], index: DatasetIndex) -> None:
    seen_ids = set()
    for entry in entries:
        try:
            ann_id = int(entry["id"])
            image_id = int(entry["image_id"])
            category_id = int(entry["category_id"])
            bbox = tuple(float(v) for v in entry.get("bbox", (0, 0, 0, 0)))
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedDocument(f"malformed annotation entry {entry!r}: {e}") from e

        if ann_id in seen_ids:
            index.diagnostics.append(Violation(
                ViolationKind.DUPLICATE_ID, f"duplicate annotation id {ann_id}",
                image_id=image_id, annotation_id=ann_id,
            ))
            continue
        seen_ids.add(ann_id)

        image = index.images.get(image_id)
        if image is None or category_id not in index.categories:
            missing = "image" if image is None else "category"
            index.diagnostics.append(Violation(
                ViolationKind.DANGLING_REFERENCE,
                f"annotation {ann_id} references unknown {missing}",
                image_id=image_id, annotation_id=ann_id,
            ))
            continue

        if len(bbox) != 4:
            raise MalformedDocument(f"annotation {ann_id} bbox must have 4 values")
        clamped = clamp_bbox(bbox, image.width, image.height)
        if clamped != bbox:
            index.diagnostics.append(Violation(
                ViolationKind.OUT_OF_BOUNDS,
                f"annotation {ann_id} bbox {list(bbox)} clamped to {list(clamped)}",
                image_id=image_id, annotation_id=ann_id,
            ))

        index.annotations_by_image[image_id].append(InstanceAnnotation(
            id=ann_id,
            image_id=image_id,
            category_id=category_id,
            bbox=clamped,
            segmentation=_parse_segmentation(entry.get("segmentation"), ann_id),
            iscrowd=bool(entry.get("iscrowd", 0)),
            area=max(float(entry.get("area", 0.0)), 0.0),
        ))


def _parse_segmentation(segmentation: Any, ann_id: int):
    if segmentation is None:
        return None
    if isinstance(segmentation, list):
        return [list(map(float, polygon)) for polygon in segmentation]
    if isinstance(segmentation, dict):
        try:
            return RleMask.from_coco(segmentation)
        except BadResponse as e:
            logger.debug(f"Annotation {ann_id}: unsupported segmentation ({e})")
            return None
    return None


def clamp_bbox(bbox: Tuple[float, ...], width: int, height: int) -> Tuple[float, float, float, float]:
    """Clamp an (x, y, w, h) box into the image"""
    x, y, w, h = bbox
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, x0), float(width))
    y1 = min(max(y + h, y0), float(height))
    return (x0, y0, x1 - x0, y1 - y0)


def _bbox_in_bounds(bbox: Tuple[float, ...], width: int, height: int) -> bool:
    x, y, w, h = bbox
    return x >= 0 and y >= 0 and w >= 0 and h >= 0 and x + w <= width and y + h <= height


def count_labels(image_id: int, index: DatasetIndex) -> CountLabel:
    """Aggregate instance annotations of an image into per-category counts"""
    if image_id not in index.images:
        raise UnknownImage(f"image {image_id} is not in the dataset index")
    # crowd regions count once
    tally = Counter(
        index.categories[a.category_id].name
        for a in index.annotations_by_image.get(image_id, [])
    )
    per_category = dict(sorted(tally.items()))
    return CountLabel(image_id=image_id, per_category=per_category, total=sum(per_category.values()))


def validate_dataset(index: DatasetIndex) -> List[Violation]:
    """Report every invariant breach; never raises"""
    violations = list(index.diagnostics)

    for image in index.images.values():
        if image.width <= 0 or image.height <= 0:
            violations.append(Violation(
                ViolationKind.INVALID_SIZE,
                f"image {image.id} has size {image.width}x{image.height}",
                image_id=image.id,
            ))

    seen_ids = set()
    for image_id, annotations in index.annotations_by_image.items():
        image = index.images.get(image_id)
        for ann in annotations:
            if ann.id in seen_ids:
                violations.append(Violation(
                    ViolationKind.DUPLICATE_ID, f"duplicate annotation id {ann.id}",
                    image_id=image_id, annotation_id=ann.id,
                ))
            seen_ids.add(ann.id)
            if image is None or ann.image_id != image_id or ann.category_id not in index.categories:
                violations.append(Violation(
                    ViolationKind.DANGLING_REFERENCE,
                    f"annotation {ann.id} does not resolve",
                    image_id=ann.image_id, annotation_id=ann.id,
                ))
                continue
            if not _bbox_in_bounds(ann.bbox, image.width, image.height):
                violations.append(Violation(
                    ViolationKind.OUT_OF_BOUNDS,
                    f"annotation {ann.id} bbox {list(ann.bbox)} leaves image {image.width}x{image.height}",
                    image_id=image_id, annotation_id=ann.id,
                ))
    return violations


def write_diagnostics(violations: Iterable[Violation], path) -> int:
    """Write violations as a JSONL sidecar, one per line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for violation in violations:
            f.write(json.dumps(violation.to_dict(), sort_keys=True) + "\n")
            count += 1
    return count


def serialize_index(index: DatasetIndex) -> Dict[str, Any]:
    """Re-serialize an index as a COCO instances document"""
    annotations = []
    for image_id in index.image_ids():
        for ann in index.annotations_by_image.get(image_id, []):
            if isinstance(ann.segmentation, RleMask):
                segmentation = ann.segmentation.to_coco()
            else:
                segmentation = ann.segmentation or []
            annotations.append({
                "id": ann.id,
                "image_id": ann.image_id,
                "category_id": ann.category_id,
                "bbox": list(ann.bbox),
                "segmentation": segmentation,
                "iscrowd": int(ann.iscrowd),
                "area": ann.area,
            })
    return {
        "images": [
            {"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}
            for i in (index.images[k] for k in index.image_ids())
        ],
        "categories": [
            {"id": c.id, "name": c.name} for c in sorted(index.categories.values(), key=lambda c: c.id)
        ],
        "annotations": annotations,
    }


def annotation_mask(annotation: InstanceAnnotation, image: ImageRecord) -> Optional[BinaryMask]:
    """Rasterize an annotation's segmentation on demand"""
    segmentation = annotation.segmentation
    if isinstance(segmentation, RleMask):
        return rle_decode(segmentation)
    if not segmentation:
        return None

    canvas = Image.new("1", (image.width, image.height), 0)
    draw = ImageDraw.Draw(canvas)
    for polygon in segmentation:
        if len(polygon) < 6:
            continue
        points = list(zip(polygon[0::2], polygon[1::2]))
        draw.polygon(points, fill=1, outline=1)
    return BinaryMask(np.array(canvas, dtype=bool))


def class_masks(image_id: int, index: DatasetIndex) -> Dict[str, BinaryMask]:
    """Pixel-union of all instance masks per category on one image"""
    if image_id not in index.images:
        raise UnknownImage(f"image {image_id} is not in the dataset index")
    image = index.images[image_id]
    per_class: Dict[str, List[BinaryMask]] = {}
    for ann in index.annotations_by_image.get(image_id, []):
        mask = annotation_mask(ann, image)
        if mask is None:
            continue
        per_class.setdefault(index.categories[ann.category_id].name, []).append(mask)
    return {name: merge_masks(masks) for name, masks in sorted(per_class.items())}


def ground_truth_masks(index: DatasetIndex, image_ids: Iterable[int]) -> Dict[int, Dict[str, BinaryMask]]:
    """Per-class COCO masks for each listed image, keyed by image id"""
    return {image_id: class_masks(image_id, index) for image_id in sorted(set(image_ids))}
