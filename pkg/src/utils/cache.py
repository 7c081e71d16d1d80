"""
Content-addressed stage cache for mmforge
"""
import asyncio
import json
import logging
import os
import shutil
import uuid
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, Iterable, Optional, Tuple

from ..errors import ComputeAbandoned
from ..utils.canonical import canonical_json

logger = logging.getLogger(__name__)

RESPONSE_FILE = "response.json"
TMP_PREFIX = ".tmp-"


class StageCache:
    """
    On-disk cache of stage responses keyed by StageKey.

    Layout: <root>/<stage>/<first 2 hex>/<key>/response.json plus assets.
    Entries are published by renaming a finished temp directory, so an entry
    is either absent or complete.
    """

    def __init__(self, root: Path, asset_root: Path):
        self.root = Path(root)
        self.asset_root = Path(asset_root)
        self.hits = 0
        self.misses = 0
        self._inflight: Dict[Tuple[str, str], asyncio.Future] = {}
        self._lock = asyncio.Lock()

    def entry_dir(self, stage: str, key: str) -> Path:
        return self.root / stage / key[:2] / key

    def relative_entry(self, stage: str, key: str) -> str:
        return self.entry_dir(stage, key).relative_to(self.asset_root).as_posix()

    def get(self, stage: str, key: str) -> Optional[Dict[str, Any]]:
        """Cached response payload, or None"""
        path = self.entry_dir(stage, key) / RESPONSE_FILE
        if not path.is_file():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Unreadable cache entry {path}: {e}")
            return None

    def publish(self, stage: str, key: str, payload: Dict[str, Any], asset_refs: Iterable[str] = ()) -> Dict[str, Any]:
        """
        Atomically store a response. Local asset files named in ``asset_refs``
        (relative to the asset root) move into the entry and the payload is
        rewritten to point at their new location.
        """
        final = self.entry_dir(stage, key)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.parent / f"{TMP_PREFIX}{key}-{uuid.uuid4().hex}"
        tmp.mkdir()

        renamed: Dict[str, str] = {}
        entry_rel = self.relative_entry(stage, key)
        for ref in asset_refs:
            source = self.asset_root / ref
            if not source.is_file():
                continue
            shutil.move(os.fspath(source), os.fspath(tmp / source.name))
            renamed[ref] = f"{entry_rel}/{source.name}"

        stored = _rewrite_refs(payload, renamed)
        (tmp / RESPONSE_FILE).write_bytes(canonical_json(stored))
        try:
            os.rename(tmp, final)
        except OSError:
            # another writer published first
            shutil.rmtree(tmp, ignore_errors=True)
            existing = self.get(stage, key)
            if existing is not None:
                return existing
            raise
        logger.debug(f"Published cache entry {stage}/{key}")
        return stored

    async def get_or_compute(
        self,
        stage: str,
        key: str,
        compute: Callable[[], Awaitable[Tuple[Dict[str, Any], Iterable[str]]]],
    ) -> Tuple[Dict[str, Any], bool]:
        """
        Return (payload, served_from_cache). At most one computation per key
        is in flight; concurrent callers wait for it.
        """
        async with self._lock:
            cached = self.get(stage, key)
            if cached is not None:
                self.hits += 1
                logger.debug(f"Cache hit for {stage}/{key}")
                return cached, True
            pending = self._inflight.get((stage, key))
            if pending is None:
                pending = asyncio.get_running_loop().create_future()
                self._inflight[(stage, key)] = pending
                owner = True
            else:
                owner = False

        if not owner:
            payload = await asyncio.shield(pending)
            self.hits += 1
            return payload, True

        self.misses += 1
        logger.debug(f"Cache miss for {stage}/{key}, calling backend...")
        try:
            payload, assets = await compute()
            stored = self.publish(stage, key, payload, assets)
        except asyncio.CancelledError:
            # waiters fail their own sample with an ordinary error
            pending.set_exception(ComputeAbandoned(f"{stage}/{key}: computation was cancelled"))
            pending.exception()
            raise
        except Exception as e:
            pending.set_exception(e)
            # waiters re-raise; the owner retrieves here so the loop does not warn
            pending.exception()
            raise
        else:
            pending.set_result(stored)
            return stored, False
        finally:
            async with self._lock:
                self._inflight.pop((stage, key), None)

    def sweep_partial(self) -> int:
        """Remove temp directories left by interrupted publishes"""
        if not self.root.exists():
            return 0
        removed = 0
        for tmp in self.root.glob(f"*/*/{TMP_PREFIX}*"):
            shutil.rmtree(tmp, ignore_errors=True)
            removed += 1
        if removed:
            logger.info(f"Removed {removed} partial cache entries")
        return removed

    def get_stats(self) -> Dict[str, Any]:
        """Get cache statistics"""
        total = self.hits + self.misses
        return {
            "hits": self.hits,
            "misses": self.misses,
            "hit_rate": self.hits / total if total else 0.0,
        }


def _rewrite_refs(value: Any, renamed: Dict[str, str]) -> Any:
    if not renamed:
        return value
    if isinstance(value, str):
        return renamed.get(value, value)
    if isinstance(value, list):
        return [_rewrite_refs(v, renamed) for v in value]
    if isinstance(value, dict):
        return {k: _rewrite_refs(v, renamed) for k, v in value.items()}
    return value
