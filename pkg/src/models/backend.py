"""
Backend request/response contracts for mmforge

Every response type validates itself; the gateway calls ``validate`` before
a reply is handed to the orchestrator.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

from ..config import REQUEST_TIMEOUT, MAX_RETRIES, BACKOFF_BASE_MS
from ..errors import BadResponse, ConfigInvalid, LengthMismatch
from .mask import MaskTrack, RleMask

EMBED_NORM_TOLERANCE = 1e-6


class StageKind(Enum):
    """Generation stages of the per-sample DAG"""
    CAPTION = "caption"
    VQA = "vqa"
    VIDEO = "video"
    SEGMENT = "segment"
    PROPAGATE = "propagate"
    AUDIO = "audio"


class ConditioningMode(Enum):
    """Inputs that drive video generation"""
    TEXT_ONLY = "text_only"
    IMAGE_ONLY = "image_only"
    BOTH = "both"


EMBED_STAGE = "embed"
BACKEND_STAGES = tuple(kind.value for kind in StageKind) + (EMBED_STAGE,)


def check_type(name: str, value: Any, expected) -> None:
    """ConfigInvalid unless ``value`` is an instance of ``expected``; bool never counts as a number"""
    if isinstance(value, bool) and bool not in (expected if isinstance(expected, tuple) else (expected,)):
        raise ConfigInvalid(f"{name} must be {_type_names(expected)}, got {value!r}")
    if not isinstance(value, expected):
        raise ConfigInvalid(f"{name} must be {_type_names(expected)}, got {value!r}")


def _type_names(expected) -> str:
    types = expected if isinstance(expected, tuple) else (expected,)
    return " or ".join(t.__name__ for t in types)


@dataclass(frozen=True)
class BackendEndpoint:
    """Where and how to reach one stage backend"""
    stage: str
    base_url: str
    timeout: float = REQUEST_TIMEOUT
    max_retries: int = MAX_RETRIES
    backoff_base: float = BACKOFF_BASE_MS  # milliseconds

    def __post_init__(self):
        if self.stage not in BACKEND_STAGES:
            raise ConfigInvalid(f"unknown backend stage '{self.stage}'")
        check_type(f"endpoints.{self.stage}.base_url", self.base_url, str)
        check_type(f"endpoints.{self.stage}.timeout", self.timeout, (int, float))
        check_type(f"endpoints.{self.stage}.max_retries", self.max_retries, int)
        check_type(f"endpoints.{self.stage}.backoff_base", self.backoff_base, (int, float))
        if self.timeout <= 0:
            raise ConfigInvalid(f"{self.stage}: timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigInvalid(f"{self.stage}: max_retries must be >= 0")
        if self.backoff_base < 0:
            raise ConfigInvalid(f"{self.stage}: backoff_base must be >= 0")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise BadResponse(message)


# Caption

@dataclass(frozen=True)
class CaptionRequest:
    prompt: str
    image_ref: str
    seed: int

    def to_payload(self) -> Dict[str, Any]:
        return {"prompt": self.prompt, "image_ref": self.image_ref, "seed": self.seed}


@dataclass(frozen=True)
class CaptionResponse:
    text: str

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> "CaptionResponse":
        text = data.get("text")
        _require(isinstance(text, str), "caption reply has no 'text' string")
        # single logical paragraph
        paragraph = " ".join(text.split())
        _require(bool(paragraph), "caption reply is empty")
        return cls(text=paragraph)

    def to_payload(self) -> Dict[str, Any]:
        return {"text": self.text}


# VQA

@dataclass(frozen=True)
class VqaRequest:
    prompt: str
    image_ref: str
    seed: int

    def to_payload(self) -> Dict[str, Any]:
        return {"prompt": self.prompt, "image_ref": self.image_ref, "seed": self.seed}


@dataclass(frozen=True)
class VqaResponse:
    text: str

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> "VqaResponse":
        text = data.get("text")
        _require(isinstance(text, str), "vqa reply has no 'text' string")
        return cls(text=text)

    def to_payload(self) -> Dict[str, Any]:
        return {"text": self.text}


# Video

@dataclass(frozen=True)
class VideoRequest:
    image_ref: Optional[str]
    caption: str
    conditioning_mode: ConditioningMode
    num_frames: int
    fps: float
    seed: int
    width: int
    height: int

    def validate(self) -> None:
        if self.conditioning_mode != ConditioningMode.TEXT_ONLY and not self.image_ref:
            raise ConfigInvalid(f"conditioning mode {self.conditioning_mode.value} needs an image_ref")
        if self.num_frames < 1:
            raise ConfigInvalid("num_frames must be >= 1")
        if self.fps <= 0:
            raise ConfigInvalid("fps must be > 0")
        if self.width <= 0 or self.height <= 0:
            raise ConfigInvalid("frame size must be positive")

    def to_payload(self) -> Dict[str, Any]:
        return {
            "image_ref": self.image_ref,
            "caption": self.caption,
            "conditioning_mode": self.conditioning_mode.value,
            "num_frames": self.num_frames,
            "fps": self.fps,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True)
class VideoResponse:
    frame_refs: List[str]

    @classmethod
    def from_payload(cls, data: Dict[str, Any], request: VideoRequest) -> "VideoResponse":
        refs = data.get("frame_refs")
        _require(isinstance(refs, list) and all(isinstance(r, str) and r for r in refs),
                 "video reply has no 'frame_refs' list of strings")
        _require(len(refs) == request.num_frames,
                 f"video reply has {len(refs)} frames, expected {request.num_frames}")
        return cls(frame_refs=list(refs))

    def to_payload(self) -> Dict[str, Any]:
        return {"frame_refs": list(self.frame_refs)}


# Segment

@dataclass(frozen=True)
class SegmentedObject:
    object_id: int
    category: str
    mask: RleMask

    def to_payload(self) -> Dict[str, Any]:
        return {"object_id": self.object_id, "category": self.category, "mask": self.mask.to_coco()}

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> "SegmentedObject":
        try:
            return cls(
                object_id=int(data["object_id"]),
                category=str(data["category"]),
                mask=RleMask.from_coco(data["mask"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise BadResponse(f"malformed segmented object: {e}") from e


@dataclass(frozen=True)
class SegmentRequest:
    frame_ref: str
    width: int
    height: int
    categories: List[str]
    seed: int

    def to_payload(self) -> Dict[str, Any]:
        return {
            "frame_ref": self.frame_ref,
            "width": self.width,
            "height": self.height,
            "categories": list(self.categories),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SegmentResponse:
    objects: List[SegmentedObject]

    @classmethod
    def from_payload(cls, data: Dict[str, Any], request: SegmentRequest) -> "SegmentResponse":
        raw = data.get("objects")
        _require(isinstance(raw, list), "segment reply has no 'objects' list")
        objects = [SegmentedObject.from_payload(o) for o in raw]
        ids = [o.object_id for o in objects]
        _require(len(ids) == len(set(ids)), f"segment reply repeats object ids {ids}")
        for obj in objects:
            _require((obj.mask.width, obj.mask.height) == (request.width, request.height),
                     f"object {obj.object_id} mask is {obj.mask.width}x{obj.mask.height}, "
                     f"expected {request.width}x{request.height}")
            try:
                obj.mask.validate()
            except LengthMismatch as e:
                raise BadResponse(f"object {obj.object_id}: {e}") from e
        return cls(objects=objects)

    def to_payload(self) -> Dict[str, Any]:
        return {"objects": [o.to_payload() for o in self.objects]}


# Propagate

@dataclass(frozen=True)
class PropagateRequest:
    frame_refs: List[str]
    objects: List[SegmentedObject]
    seed: int

    def to_payload(self) -> Dict[str, Any]:
        return {
            "frame_refs": list(self.frame_refs),
            "objects": [o.to_payload() for o in self.objects],
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PropagateResponse:
    tracks: List[MaskTrack]

    @classmethod
    def from_payload(cls, data: Dict[str, Any], request: PropagateRequest) -> "PropagateResponse":
        raw = data.get("tracks")
        _require(isinstance(raw, list), "propagate reply has no 'tracks' list")
        tracks = [MaskTrack.from_dict(t) for t in raw]
        got = sorted(t.object_id for t in tracks)
        want = sorted(o.object_id for o in request.objects)
        _require(got == want, f"propagate reply tracks {got}, expected one per object {want}")
        frame_size = {o.object_id: (o.mask.width, o.mask.height) for o in request.objects}
        for track in tracks:
            track.validate(expected_frames=len(request.frame_refs))
            for i, frame in enumerate(track.frames):
                _require((frame.width, frame.height) == frame_size[track.object_id],
                         f"track {track.object_id} frame {i} mask is {frame.width}x{frame.height}, "
                         f"expected {frame_size[track.object_id][0]}x{frame_size[track.object_id][1]}")
        return cls(tracks=sorted(tracks, key=lambda t: t.object_id))

    def to_payload(self) -> Dict[str, Any]:
        return {"tracks": [t.to_dict() for t in self.tracks]}


# Embed

@dataclass(frozen=True)
class EmbedRequest:
    text: Optional[str] = None
    image_ref: Optional[str] = None

    def validate(self) -> None:
        if (self.text is None) == (self.image_ref is None):
            raise ConfigInvalid("embed request needs exactly one of text or image_ref")

    def to_payload(self) -> Dict[str, Any]:
        return {"text": self.text, "image_ref": self.image_ref}


@dataclass(frozen=True)
class EmbedResponse:
    vector: List[float]
    dim: int

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> "EmbedResponse":
        vector = data.get("vector")
        _require(isinstance(vector, list) and bool(vector), "embed reply has no 'vector' list")
        vector = [float(v) for v in vector]
        dim = int(data.get("dim", len(vector)))
        _require(len(vector) == dim, f"embed reply has length {len(vector)}, advertised {dim}")
        norm = math.sqrt(sum(v * v for v in vector))
        _require(abs(norm - 1.0) <= EMBED_NORM_TOLERANCE, f"embed reply is not unit length (norm {norm})")
        return cls(vector=vector, dim=dim)

    def to_payload(self) -> Dict[str, Any]:
        return {"vector": list(self.vector), "dim": self.dim}


# Audio

@dataclass(frozen=True)
class AudioRequest:
    frame_refs: List[str]
    caption: str
    seed: int

    def to_payload(self) -> Dict[str, Any]:
        return {"frame_refs": list(self.frame_refs), "caption": self.caption, "seed": self.seed}


@dataclass(frozen=True)
class AudioResponse:
    audio_ref: str

    @classmethod
    def from_payload(cls, data: Dict[str, Any]) -> "AudioResponse":
        ref = data.get("audio_ref")
        _require(isinstance(ref, str) and bool(ref), "audio reply has no 'audio_ref'")
        return cls(audio_ref=ref)

    def to_payload(self) -> Dict[str, Any]:
        return {"audio_ref": self.audio_ref}
