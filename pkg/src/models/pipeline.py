"""
Pipeline run models for mmforge
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..config import (
    DEFAULT_CONDITIONING_MODE, DEFAULT_FPS, DEFAULT_FRAME_HEIGHT, DEFAULT_FRAME_WIDTH,
    DEFAULT_MAX_WORKERS, DEFAULT_NUM_FRAMES, DEFAULT_SEED,
)
from ..errors import ConfigInvalid
from .backend import BackendEndpoint, ConditioningMode, StageKind, check_type

StageKey = str

# StageKind dependencies; every stage comes after the ones it lists
STAGE_DEPENDENCIES: Dict[StageKind, tuple] = {
    StageKind.CAPTION: (),
    StageKind.VQA: (StageKind.CAPTION,),
    StageKind.VIDEO: (StageKind.CAPTION,),
    StageKind.SEGMENT: (StageKind.VIDEO,),
    StageKind.PROPAGATE: (StageKind.SEGMENT, StageKind.VIDEO),
    StageKind.AUDIO: (StageKind.VIDEO, StageKind.CAPTION),
}


@dataclass
class PipelineConfig:
    """Run configuration; keys mirror the TOML config file"""
    output_root: Path
    endpoints: Dict[str, BackendEndpoint] = field(default_factory=dict)
    annotations_path: Optional[Path] = None
    image_root: str = ""
    conditioning_mode: ConditioningMode = ConditioningMode(DEFAULT_CONDITIONING_MODE)
    num_frames: int = DEFAULT_NUM_FRAMES
    fps: float = DEFAULT_FPS
    frame_width: int = DEFAULT_FRAME_WIDTH
    frame_height: int = DEFAULT_FRAME_HEIGHT
    seed: int = DEFAULT_SEED
    audio_enabled: bool = False
    max_workers: int = DEFAULT_MAX_WORKERS
    caption_template_path: Optional[Path] = None
    vqa_template_path: Optional[Path] = None

    def __post_init__(self):
        self.output_root = Path(self.output_root)
        if not isinstance(self.conditioning_mode, ConditioningMode):
            try:
                self.conditioning_mode = ConditioningMode(self.conditioning_mode)
            except (TypeError, ValueError):
                raise ConfigInvalid(f"unknown conditioning_mode {self.conditioning_mode!r}")

    def validate(self) -> None:
        check_type("image_root", self.image_root, str)
        check_type("seed", self.seed, int)
        check_type("audio_enabled", self.audio_enabled, bool)
        for name in ("max_workers", "num_frames", "frame_width", "frame_height"):
            check_type(name, getattr(self, name), int)
        check_type("fps", self.fps, (int, float))
        for name, endpoint in self.endpoints.items():
            check_type(f"endpoints.{name}", endpoint, BackendEndpoint)
        if self.max_workers < 1:
            raise ConfigInvalid("max_workers must be >= 1")
        if self.num_frames < 1:
            raise ConfigInvalid("num_frames must be >= 1")
        if self.fps <= 0:
            raise ConfigInvalid("fps must be > 0")
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ConfigInvalid("frame_width and frame_height must be > 0")


@dataclass
class StageFailure:
    """One failed sample"""
    image_id: int
    stage: str
    error: str

    def to_dict(self) -> Dict[str, Any]:
        return {"image_id": self.image_id, "stage": self.stage, "error": self.error}


@dataclass
class RunReport:
    """Outcome of execute_run"""
    samples_total: int = 0
    samples_succeeded: int = 0
    samples_failed: int = 0
    cache_hits: int = 0
    wall_time: float = 0.0
    failures: List[StageFailure] = field(default_factory=list)

    def merge(self, other: "RunReport") -> "RunReport":
        """Commutative merge of two partial reports"""
        return RunReport(
            samples_total=self.samples_total + other.samples_total,
            samples_succeeded=self.samples_succeeded + other.samples_succeeded,
            samples_failed=self.samples_failed + other.samples_failed,
            cache_hits=self.cache_hits + other.cache_hits,
            wall_time=max(self.wall_time, other.wall_time),
            failures=sorted(self.failures + other.failures, key=lambda f: (f.image_id, f.stage)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "samples_total": self.samples_total,
            "samples_succeeded": self.samples_succeeded,
            "samples_failed": self.samples_failed,
            "cache_hits": self.cache_hits,
            "wall_time": self.wall_time,
            "failures": [f.to_dict() for f in self.failures],
        }
