"""
Mask codec and overlap utilities for mmforge
"""
import logging
from typing import Dict, List, Mapping

import numpy as np

from ..errors import DimensionMismatch, EmptyTrack, LengthMismatch
from ..models.mask import BinaryMask, MaskTrack, RleMask, TrackDiagnostics

logger = logging.getLogger(__name__)


def rle_encode(mask: BinaryMask) -> RleMask:
    """
    Encode a mask as canonical COCO uncompressed RLE.

    Runs are read column-major and alternate background/foreground,
    starting with a (possibly empty) background run.
    """
    flat = mask.bits.ravel(order="F").astype(np.int8)
    changes = np.flatnonzero(np.diff(flat)) + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(width=mask.width, height=mask.height, counts=tuple(int(c) for c in counts))


def rle_decode(rle: RleMask) -> BinaryMask:
    """Decode COCO uncompressed RLE back into a mask"""
    if rle.width <= 0 or rle.height <= 0:
        raise LengthMismatch(f"invalid RLE size {rle.height}x{rle.width}")
    counts = np.asarray(rle.counts, dtype=np.int64)
    if (counts < 0).any():
        raise LengthMismatch("negative run length")
    expected = rle.width * rle.height
    if int(counts.sum()) != expected:
        raise LengthMismatch(f"RLE counts sum to {int(counts.sum())}, expected {expected}")
    values = (np.arange(counts.size) % 2).astype(bool)
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape((rle.height, rle.width), order="F"))


def _check_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(
            f"mask sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; two empty masks score 1.0"""
    _check_dims(a, b)
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    intersection = int(np.count_nonzero(a.bits & b.bits))
    return intersection / union


def track_diagnostics(track: MaskTrack) -> TrackDiagnostics:
    """Area-change and empty-frame summary of a mask track"""
    if not track.frames:
        raise EmptyTrack(f"track {track.object_id} has no frames")
    areas = [frame.area for frame in track.frames]
    max_ratio = 0.0
    for prev, cur in zip(areas, areas[1:]):
        max_ratio = max(max_ratio, abs(cur - prev) / max(prev, 1))
    empty = [i for i, a in enumerate(areas) if a == 0]
    if empty:
        logger.debug(f"Track {track.object_id} is empty in frames {empty}")
    return TrackDiagnostics(
        object_id=track.object_id,
        max_area_change_ratio=max_ratio,
        empty_frame_indices=empty,
    )


def per_class_iou(pred: Mapping[str, BinaryMask], gt: Mapping[str, BinaryMask]) -> Dict[str, float]:
    """IoU for every ground-truth class; classes missing from pred score 0.0"""
    scores = {}
    for name in sorted(gt):
        if name not in pred:
            scores[name] = 0.0
            continue
        scores[name] = iou(pred[name], gt[name])
    return scores


def merge_masks(masks: List[BinaryMask]) -> BinaryMask:
    """Pixel union of same-sized masks"""
    merged = masks[0].bits.copy()
    for mask in masks[1:]:
        _check_dims(masks[0], mask)
        merged |= mask.bits
    return BinaryMask(merged)


class ClassIouAccumulator:
    """Dataset-level per-class IoU: sums intersections and unions over images"""

    def __init__(self):
        self.intersections: Dict[str, int] = {}
        self.unions: Dict[str, int] = {}
        self.gt_areas: Dict[str, int] = {}

    def add(self, pred: Mapping[str, BinaryMask], gt: Mapping[str, BinaryMask]) -> None:
        for name, gt_mask in gt.items():
            pred_mask = pred.get(name)
            if pred_mask is None:
                pred_bits = np.zeros_like(gt_mask.bits)
            else:
                _check_dims(pred_mask, gt_mask)
                pred_bits = pred_mask.bits
            self.intersections[name] = self.intersections.get(name, 0) + int(np.count_nonzero(pred_bits & gt_mask.bits))
            self.unions[name] = self.unions.get(name, 0) + int(np.count_nonzero(pred_bits | gt_mask.bits))
            self.gt_areas[name] = self.gt_areas.get(name, 0) + gt_mask.area

    def result(self) -> Dict[str, float]:
        """Per-class IoU, excluding classes whose ground truth is empty everywhere"""
        return {
            name: self.intersections[name] / self.unions[name]
            for name in sorted(self.unions)
            if self.gt_areas[name] > 0
        }
