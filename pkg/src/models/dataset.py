"""
Dataset manifest models for mmforge
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from ..config import SCHEMA_VERSION, VQA_PAIR_COUNT
from ..errors import InvariantViolation
from .annotation import CaptionRecord, VqaPair, VqaSet
from .coco import CountLabel


class Supervision(Enum):
    """Which annotation types a training export carries"""
    CAPTIONS = "captions"
    CAPTIONS_PLUS_VQA = "captions_plus_vqa"
    VQA_ONLY = "vqa_only"


@dataclass(frozen=True)
class TrackRef:
    """Pointer to one object's mask track inside a sample's tracks.json"""
    object_id: int
    category: str
    ref: str
    num_frames: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "object_id": self.object_id,
            "category": self.category,
            "ref": self.ref,
            "num_frames": self.num_frames,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrackRef":
        return cls(
            object_id=int(data["object_id"]),
            category=str(data["category"]),
            ref=str(data["ref"]),
            num_frames=int(data["num_frames"]),
        )


@dataclass
class SampleManifest:
    """Everything generated for one source image"""
    image_id: int
    image_ref: str
    caption: CaptionRecord
    count_label: CountLabel
    vqa: VqaSet
    counting_qa: List[VqaPair] = field(default_factory=list)
    video: List[str] = field(default_factory=list)
    tracks: List[TrackRef] = field(default_factory=list)
    audio_ref: Optional[str] = None

    def validate(self) -> None:
        if len(self.vqa.pairs) != VQA_PAIR_COUNT:
            raise InvariantViolation(
                f"sample {self.image_id}: {len(self.vqa.pairs)} VQA pairs, expected {VQA_PAIR_COUNT}"
            )
        if not self.video:
            raise InvariantViolation(f"sample {self.image_id}: video has no frames")
        for track in self.tracks:
            if track.num_frames != len(self.video):
                raise InvariantViolation(
                    f"sample {self.image_id}: track {track.object_id} has {track.num_frames} frames, "
                    f"video has {len(self.video)}"
                )
        if self.caption.image_id != self.image_id or self.count_label.image_id != self.image_id:
            raise InvariantViolation(f"sample {self.image_id}: annotations belong to another image")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "image_id": self.image_id,
            "image_ref": self.image_ref,
            "caption": self.caption.to_dict(),
            "count_label": self.count_label.to_dict(),
            "vqa": self.vqa.to_dict(),
            "counting_qa": [p.to_dict() for p in self.counting_qa],
            "video": list(self.video),
            "tracks": [t.to_dict() for t in self.tracks],
            "audio_ref": self.audio_ref,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SampleManifest":
        return cls(
            image_id=int(data["image_id"]),
            image_ref=str(data["image_ref"]),
            caption=CaptionRecord.from_dict(data["caption"]),
            count_label=CountLabel.from_dict(data["count_label"]),
            vqa=VqaSet.from_dict(data["vqa"]),
            counting_qa=[VqaPair.from_dict(p) for p in data.get("counting_qa", [])],
            video=[str(f) for f in data.get("video", [])],
            tracks=[TrackRef.from_dict(t) for t in data.get("tracks", [])],
            audio_ref=data.get("audio_ref"),
        )


@dataclass
class DatasetManifest:
    """All samples of a dataset in canonical image_id order"""
    samples: List[SampleManifest] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        ids = [s.image_id for s in self.samples]
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise InvariantViolation("dataset samples must have strictly increasing image ids")

    def __len__(self) -> int:
        return len(self.samples)

    def image_ids(self) -> List[int]:
        return [s.image_id for s in self.samples]

    def by_id(self) -> Dict[int, SampleManifest]:
        return {s.image_id: s for s in self.samples}


@dataclass(frozen=True)
class ExportConfig:
    """Training-set export options"""
    supervision: Supervision
    include_counting_qa: bool = False

    def __post_init__(self):
        if isinstance(self.supervision, str):
            try:
                object.__setattr__(self, "supervision", Supervision(self.supervision))
            except ValueError:
                raise InvariantViolation(f"unknown supervision '{self.supervision}'")


@dataclass(frozen=True)
class SubsetSpec:
    """Seeded subset request"""
    size: int
    seed: int
