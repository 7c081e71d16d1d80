"""
Seeded mock backends for desk-scale runs and tests

Every mock is a pure function of (seed, request payload); asset files are
written under ``asset_root/scratch`` and returned as paths relative to it.
"""
import logging
import os
import wave
from pathlib import Path
from typing import Any, Dict

import numpy as np
from PIL import Image

from ..config import MOCK_EMBED_DIM
from ..errors import BackendError
from ..models.backend import BackendEndpoint
from ..models.mask import BinaryMask, RleMask
from ..utils.canonical import canonical_json, hex_digest, int_digest
from ..utils.masks import rle_decode, rle_encode

logger = logging.getLogger(__name__)

SCENE_WORDS = ("park", "street", "kitchen", "beach", "living room", "field", "station", "garden")
MOTION_WORDS = ("walking", "rolling", "drifting", "turning", "running", "sliding", "waving", "rising")
COLOR_WORDS = ("brown", "white", "red", "blue", "green", "black", "yellow", "gray")


class MockBackend:
    """Base class: deterministic reply for (seed, payload)"""

    stage = ""

    def __init__(self, seed: int, asset_root: Path):
        self.seed = seed
        self.asset_root = Path(asset_root)

    def digest(self, payload: Dict[str, Any]) -> str:
        return hex_digest(self.stage.encode(), str(self.seed).encode(), canonical_json(payload))

    def pick(self, payload: Dict[str, Any], words, salt: str) -> str:
        return words[int_digest([self.seed, salt, payload]) % len(words)]

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        raise NotImplementedError


class MockCaptionBackend(MockBackend):
    stage = "caption"

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        name = Path(payload.get("image_ref") or "image").stem
        scene = self.pick(payload, SCENE_WORDS, "scene")
        motion = self.pick(payload, MOTION_WORDS, "motion")
        return {
            "text": (
                f"Moments after the scene in {name}, everything in the {scene} starts {motion} "
                f"while the objects keep their places relative to each other."
            )
        }


class MockVqaBackend(MockBackend):
    stage = "vqa"

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        scene = self.pick(payload, SCENE_WORDS, "scene")
        motion = self.pick(payload, MOTION_WORDS, "motion")
        color = self.pick(payload, COLOR_WORDS, "color")
        return {
            "text": (
                f"Q: Where does the scene take place?\nA: {scene}\n"
                f"Q: What are the objects doing?\nA: {motion}\n"
                f"Q: What color is the main object?\nA: {color}\n"
            )
        }


class MockVideoBackend(MockBackend):
    """Writes num_frames tiny solid-color PNG frames"""

    stage = "video"

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        digest = self.digest(payload)
        rel_dir = Path("scratch") / "video" / digest[:24]
        out_dir = self.asset_root / rel_dir
        out_dir.mkdir(parents=True, exist_ok=True)

        base = bytes.fromhex(digest[:6])
        size = (int(payload["width"]), int(payload["height"]))
        refs = []
        for i in range(int(payload["num_frames"])):
            color = tuple((c + 4 * i) % 256 for c in base)
            name = f"frame_{i:04d}.png"
            Image.new("RGB", size, color).save(out_dir / name, format="PNG")
            refs.append((rel_dir / name).as_posix())
        return {"frame_refs": refs}


class MockSegmentBackend(MockBackend):
    """One rectangle mask per requested category"""

    stage = "segment"

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        width, height = int(payload["width"]), int(payload["height"])
        rect_w, rect_h = max(1, width // 4), max(1, height // 4)
        objects = []
        for object_id, category in enumerate(payload["categories"], start=1):
            h = int_digest([self.seed, payload["frame_ref"], category])
            col = h % (width - rect_w + 1)
            row = (h // 7919) % (height - rect_h + 1)
            bits = np.zeros((height, width), dtype=bool)
            bits[row:row + rect_h, col:col + rect_w] = True
            objects.append({
                "object_id": object_id,
                "category": category,
                "mask": rle_encode(BinaryMask(bits)).to_coco(),
            })
        return {"objects": objects}


def translate_right(mask: BinaryMask, shift: int) -> BinaryMask:
    """Move a mask right by ``shift`` columns, cutting what leaves the frame"""
    bits = np.zeros_like(mask.bits)
    if shift < mask.width:
        bits[:, shift:] = mask.bits[:, :mask.width - shift]
    return BinaryMask(bits)


class MockPropagateBackend(MockBackend):
    """Translates each frame-0 mask one pixel per frame"""

    stage = "propagate"

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        num_frames = len(payload["frame_refs"])
        tracks = []
        for obj in payload["objects"]:
            first = rle_decode(RleMask.from_coco(obj["mask"]))
            frames = [rle_encode(translate_right(first, t)).to_coco() for t in range(num_frames)]
            tracks.append({"object_id": obj["object_id"], "category": obj["category"], "frames": frames})
        return {"tracks": tracks}


class MockEmbedBackend(MockBackend):
    """Hashes text or image_ref into a unit vector"""

    stage = "embed"

    def __init__(self, seed: int, asset_root: Path, dim: int = MOCK_EMBED_DIM):
        super().__init__(seed, asset_root)
        self.dim = dim

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        source = payload.get("text") if payload.get("text") is not None else payload.get("image_ref")
        rng = np.random.default_rng(int_digest([self.seed, source]))
        vector = rng.standard_normal(self.dim)
        vector /= np.linalg.norm(vector)
        return {"vector": [float(v) for v in vector], "dim": self.dim}


class MockAudioBackend(MockBackend):
    """Writes a short silent WAV track"""

    stage = "audio"
    sample_rate = 8000

    async def handle(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        digest = self.digest(payload)
        rel_path = Path("scratch") / "audio" / digest[:24] / "audio.wav"
        path = self.asset_root / rel_path
        path.parent.mkdir(parents=True, exist_ok=True)
        frames = max(1, len(payload["frame_refs"])) * self.sample_rate // 10
        with wave.open(os.fspath(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(self.sample_rate)
            w.writeframes(b"\x00\x00" * frames)
        return {"audio_ref": rel_path.as_posix()}


def mock_suite(seed: int, asset_root=".") -> Dict[str, MockBackend]:
    """One deterministic mock per backend stage"""
    asset_root = Path(asset_root)
    backends = (
        MockCaptionBackend, MockVqaBackend, MockVideoBackend, MockSegmentBackend,
        MockPropagateBackend, MockEmbedBackend, MockAudioBackend,
    )
    return {cls.stage: cls(seed, asset_root) for cls in backends}


class MockTransport:
    """Routes gateway calls to in-process mocks"""

    def __init__(self, backends: Dict[str, MockBackend]):
        self.backends = backends

    async def post(self, endpoint: BackendEndpoint, path: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        backend = self.backends.get(endpoint.stage)
        if backend is None:
            raise BackendError(f"no mock for stage '{endpoint.stage}'")
        logger.debug(f"Mock {endpoint.stage} call to {path}")
        return await backend.handle(payload)
