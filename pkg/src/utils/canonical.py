"""
Canonical serialization and digests
"""
import hashlib
import json
from typing import Any


def canonical_json(value: Any) -> bytes:
    """Deterministic JSON bytes: sorted keys, compact separators, UTF-8"""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def dumps_line(value: Any) -> str:
    """One JSONL line, newline included"""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def hex_digest(*parts: bytes) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return h.hexdigest()


def int_digest(value: Any, nbytes: int = 8) -> int:
    """Stable integer hash of a JSON-serializable value"""
    return int.from_bytes(hashlib.sha256(canonical_json(value)).digest()[:nbytes], "big")


def sample_seed(seed: int, image_id: int) -> int:
    """Per-sample seed: run seed xor a digest of the image id"""
    return seed ^ int_digest({"image_id": image_id}, nbytes=4)
