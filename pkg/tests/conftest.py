"""
Shared fixtures for the mmforge test suite
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Tuple

import pytest

from src.models.pipeline import PipelineConfig

CATEGORY_NAMES = ["person", "dog", "cat", "car", "bicycle"]

# Per-class IoUs, baseline vs fine-tuned on synthetic videos
FINETUNE_IOUS: Dict[str, Tuple[float, float]] = {
    "Toilet": (0.10, 0.79),
    "Sink": (0.13, 0.87),
    "Bed": (0.06, 0.99),
    "Bicycle": (0.26, 0.83),
    "Car": (0.09, 0.56),
    "Dog": (0.46, 0.75),
    "Microwave": (0.81, 0.68),
    "Apple": (0.80, 0.74),
    "Cake": (0.91, 0.55),
    "Knife": (0.69, 0.60),
    "Train": (0.73, 0.45),
    "Surfboard": (0.69, 0.28),
}

# 2K vs 5K synthetic videos
SCALE_IOUS: Dict[str, Tuple[float, float]] = {
    "Toilet": (0.10, 0.79),
    "Sink": (0.15, 0.87),
    "Bed": (0.50, 0.99),
    "Bicycle": (0.65, 0.83),
    "Car": (0.20, 0.56),
    "Dog": (0.48, 0.75),
    "Microwave": (0.84, 0.68),
    "Cake": (0.77, 0.55),
    "Knife": (0.62, 0.60),
    "Train": (0.74, 0.45),
    "Surfboard": (0.58, 0.28),
}

NUM_CLASSES = 74


def make_coco(num_images: int = 5, width: int = 640, height: int = 480) -> Dict[str, Any]:
    """COCO instances document; image i carries (i % 3) + 1 annotations"""
    images = [
        {"id": i, "file_name": f"{i:012d}.jpg", "width": width, "height": height}
        for i in range(1, num_images + 1)
    ]
    categories = [{"id": k + 1, "name": name} for k, name in enumerate(CATEGORY_NAMES)]
    annotations: List[Dict[str, Any]] = []
    next_id = 1
    for image in images:
        for j in range(image["id"] % 3 + 1):
            x = 20 + 60 * j
            annotations.append({
                "id": next_id,
                "image_id": image["id"],
                "category_id": (image["id"] + j) % len(CATEGORY_NAMES) + 1,
                "bbox": [x, 20, 50, 40],
                "segmentation": [[x, 20, x + 50, 20, x + 50, 60, x, 60]],
                "iscrowd": 0,
                "area": 2000.0,
            })
            next_id += 1
    return {"images": images, "categories": categories, "annotations": annotations}


@pytest.fixture
def write_coco(tmp_path):
    """Write a COCO document to disk and return its path"""
    def _write(document: Dict[str, Any] = None, name: str = "instances.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document if document is not None else make_coco()), encoding="utf-8")
        return path
    return _write


@pytest.fixture
def make_config(tmp_path):
    """PipelineConfig rooted in a fresh directory under tmp_path"""
    def _make(subdir: str = "out", **overrides: Any) -> PipelineConfig:
        return PipelineConfig(output_root=tmp_path / subdir, **overrides)
    return _make


def _with_fillers(
    listed: Dict[str, Tuple[float, float]],
    miou_baseline: float,
    miou_ours: float,
    improved: int,
    degraded: int,
    degraded_delta: float = -0.05,
) -> Tuple[Dict[str, float], Dict[str, float]]:
    """
    Pad the listed classes to NUM_CLASSES so the means hit the target
    mIoU values. Fillers share one baseline; ``improved`` of them gain a
    common delta, ``degraded`` lose ``degraded_delta``, the rest stay put.
    """
    fillers = NUM_CLASSES - len(listed)
    base_sum = sum(b for b, _ in listed.values())
    ours_sum = sum(o for _, o in listed.values())
    filler_base = (NUM_CLASSES * miou_baseline - base_sum) / fillers
    filler_gain = NUM_CLASSES * (miou_ours - miou_baseline) - (ours_sum - base_sum)
    gain = (filler_gain - degraded * degraded_delta) / improved

    baseline = {name: b for name, (b, _) in listed.items()}
    ours = {name: o for name, (_, o) in listed.items()}
    for k in range(fillers):
        name = f"class_{k:02d}"
        baseline[name] = filler_base
        if k < improved:
            ours[name] = filler_base + gain
        elif k < improved + degraded:
            ours[name] = filler_base + degraded_delta
        else:
            ours[name] = filler_base
    return baseline, ours


@pytest.fixture
def finetune_ious():
    # 6 listed classes improve and 6 degrade, fillers bring it to 36/26/12
    return _with_fillers(FINETUNE_IOUS, 0.4711, 0.5239, improved=30, degraded=20)


@pytest.fixture
def scale_ious():
    return _with_fillers(SCALE_IOUS, 0.4694, 0.5239, improved=40, degraded=10)
