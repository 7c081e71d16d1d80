import asyncio
import json

import pytest

from src.errors import ComputeAbandoned
from src.utils.cache import StageCache


def test_publish_moves_assets_and_rewrites_refs(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)
    scratch = tmp_path / "scratch"
    scratch.mkdir()
    (scratch / "frame_0000.png").write_bytes(b"png")

    stored = cache.publish("video", "ab" + "0" * 62, {"frame_refs": ["scratch/frame_0000.png"]},
                           ["scratch/frame_0000.png"])
    ref = stored["frame_refs"][0]
    assert ref == f"cache/video/ab/ab{'0' * 62}/frame_0000.png"
    assert (tmp_path / ref).read_bytes() == b"png"
    assert not (scratch / "frame_0000.png").exists()
    assert cache.get("video", "ab" + "0" * 62) == stored


def test_second_publish_of_same_key_keeps_first(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)
    first = cache.publish("caption", "cd1", {"text": "first"})
    assert cache.publish("caption", "cd1", {"text": "second"}) == first
    assert not list((tmp_path / "cache" / "caption" / "cd").glob(".tmp-*"))


def test_partial_entries_are_invisible_and_swept(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)
    tmp = tmp_path / "cache" / "caption" / "ef" / ".tmp-ef12-dead"
    tmp.mkdir(parents=True)
    (tmp / "response.json").write_text(json.dumps({"text": "half"}))
    assert cache.get("caption", "ef12") is None
    assert cache.sweep_partial() == 1
    assert not tmp.exists()


def test_concurrent_requests_for_one_key_compute_once(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)
    calls = []

    async def compute():
        calls.append(1)
        await asyncio.sleep(0.01)
        return {"text": "done"}, ()

    async def main():
        return await asyncio.gather(*(cache.get_or_compute("caption", "aa1", compute) for _ in range(5)))

    results = asyncio.run(main())
    assert len(calls) == 1
    assert [hit for _, hit in results].count(False) == 1
    assert all(payload == {"text": "done"} for payload, _ in results)
    assert cache.get_stats()["misses"] == 1


def test_failed_compute_leaves_no_entry(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)

    async def compute():
        raise RuntimeError("backend down")

    with pytest.raises(RuntimeError):
        asyncio.run(cache.get_or_compute("caption", "bb1", compute))
    assert cache.get("caption", "bb1") is None


def test_cancelled_owner_fails_waiters_with_ordinary_error(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)

    async def compute():
        await asyncio.sleep(10)
        return {"text": "never"}, ()

    async def main():
        owner = asyncio.create_task(cache.get_or_compute("caption", "cc1", compute))
        await asyncio.sleep(0)
        waiter = asyncio.create_task(cache.get_or_compute("caption", "cc1", compute))
        await asyncio.sleep(0.01)
        owner.cancel()
        with pytest.raises(asyncio.CancelledError):
            await owner
        with pytest.raises(ComputeAbandoned):
            await waiter

    asyncio.run(main())
    assert cache.get("caption", "cc1") is None


def test_stats_track_hits_and_misses(tmp_path):
    cache = StageCache(tmp_path / "cache", tmp_path)

    async def compute():
        return {"text": "x"}, ()

    async def main():
        await cache.get_or_compute("caption", "dd1", compute)
        await cache.get_or_compute("caption", "dd1", compute)
        await cache.get_or_compute("caption", "dd1", compute)

    asyncio.run(main())
    assert cache.get_stats() == {"hits": 2, "misses": 1, "hit_rate": pytest.approx(2 / 3)}
