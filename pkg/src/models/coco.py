"""
COCO dataset models for mmforge
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from .mask import RleMask


class ViolationKind(Enum):
    """Kinds of dataset invariant breach"""
    OUT_OF_BOUNDS = "OutOfBounds"
    DUPLICATE_ID = "DuplicateId"
    DANGLING_REFERENCE = "DanglingReference"
    INVALID_SIZE = "InvalidSize"


@dataclass(frozen=True)
class ImageRecord:
    """One source image, referenced by path only"""
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class CategoryDef:
    """Object category with a normalized name"""
    id: int
    name: str


Polygons = List[List[float]]


@dataclass
class InstanceAnnotation:
    """Object instance annotation"""
    id: int
    image_id: int
    category_id: int
    bbox: Tuple[float, float, float, float]
    segmentation: Union[Polygons, RleMask, None] = None
    iscrowd: bool = False
    area: float = 0.0


@dataclass(frozen=True)
class CountLabel:
    """Per-image object counts"""
    image_id: int
    per_category: Dict[str, int]
    total: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "image_id": self.image_id,
            "per_category": dict(sorted(self.per_category.items())),
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CountLabel":
        return cls(
            image_id=int(data["image_id"]),
            per_category={str(k): int(v) for k, v in data["per_category"].items()},
            total=int(data["total"]),
        )


@dataclass
class Violation:
    """Single invariant breach found in an annotation document"""
    kind: ViolationKind
    message: str
    image_id: Optional[int] = None
    annotation_id: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "message": self.message,
            "image_id": self.image_id,
            "annotation_id": self.annotation_id,
        }


@dataclass
class DatasetIndex:
    """Indexed, read-only view of a COCO instances document"""
    images: Dict[int, ImageRecord] = field(default_factory=dict)
    categories: Dict[int, CategoryDef] = field(default_factory=dict)
    annotations_by_image: Dict[int, List[InstanceAnnotation]] = field(default_factory=dict)
    diagnostics: List[Violation] = field(default_factory=list)

    def image_ids(self) -> List[int]:
        """Image ids in canonical (ascending) order"""
        return sorted(self.images)

    def annotation_count(self) -> int:
        return sum(len(v) for v in self.annotations_by_image.values())
