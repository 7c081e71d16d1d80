"""
Mask data models for mmforge
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from ..errors import LengthMismatch, BadResponse


@dataclass(eq=False)
class BinaryMask:
    """Foreground bit grid, indexed bits[row, column]"""
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2 or self.bits.shape[0] == 0 or self.bits.shape[1] == 0:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {self.bits.shape}")

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_pixels(cls, width: int, height: int, pixels) -> "BinaryMask":
        """Build a mask from (row, column) pairs"""
        bits = np.zeros((height, width), dtype=bool)
        for row, col in pixels:
            bits[row, col] = True
        return cls(bits)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area})"


@dataclass(frozen=True)
class RleMask:
    """COCO uncompressed run-length mask (column-major, zero-run first)"""
    width: int
    height: int
    counts: Tuple[int, ...]

    @property
    def area(self) -> int:
        return int(sum(self.counts[1::2]))

    def validate(self) -> None:
        """Check length and canonical form"""
        if self.width <= 0 or self.height <= 0:
            raise LengthMismatch(f"invalid RLE size {self.height}x{self.width}")
        if any(c < 0 for c in self.counts):
            raise LengthMismatch("negative run length")
        total = sum(self.counts)
        if total != self.width * self.height:
            raise LengthMismatch(
                f"RLE counts sum to {total}, expected {self.width * self.height}"
            )
        if any(c == 0 for c in self.counts[1:]):
            raise LengthMismatch("RLE is not canonical: zero-length interior or trailing run")

    def to_coco(self) -> Dict[str, Any]:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_coco(cls, data: Dict[str, Any]) -> "RleMask":
        try:
            height, width = data["size"]
            counts = data["counts"]
        except (KeyError, TypeError, ValueError) as e:
            raise BadResponse(f"malformed RLE document: {e}") from e
        if isinstance(counts, str):
            raise BadResponse("compressed RLE strings are not supported")
        return cls(width=int(width), height=int(height), counts=tuple(int(c) for c in counts))


@dataclass
class MaskTrack:
    """One object's mask through every frame of a generated video"""
    object_id: int
    category: str
    frames: List[RleMask] = field(default_factory=list)

    def validate(self, expected_frames: int = None) -> None:
        if not self.frames:
            raise BadResponse(f"track {self.object_id} has no frames")
        sizes = {(f.width, f.height) for f in self.frames}
        if len(sizes) != 1:
            raise BadResponse(f"track {self.object_id} mixes frame sizes {sorted(sizes)}")
        if expected_frames is not None and len(self.frames) != expected_frames:
            raise BadResponse(
                f"track {self.object_id} has {len(self.frames)} frames, expected {expected_frames}"
            )
        for frame in self.frames:
            try:
                frame.validate()
            except LengthMismatch as e:
                raise BadResponse(f"track {self.object_id}: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            "object_id": self.object_id,
            "category": self.category,
            "frames": [f.to_coco() for f in self.frames],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MaskTrack":
        try:
            return cls(
                object_id=int(data["object_id"]),
                category=str(data["category"]),
                frames=[RleMask.from_coco(f) for f in data["frames"]],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise BadResponse(f"malformed mask track: {e}") from e


@dataclass
class TrackDiagnostics:
    """Temporal consistency summary for one track"""
    object_id: int
    max_area_change_ratio: float
    empty_frame_indices: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "object_id": self.object_id,
            "max_area_change_ratio": self.max_area_change_ratio,
            "empty_frame_indices": list(self.empty_frame_indices),
        }
