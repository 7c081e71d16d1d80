import json
import random
import threading

import pytest

from src.errors import InvariantViolation, SizeExceedsDataset
from src.models.annotation import CaptionRecord, VqaPair, VqaSet
from src.models.coco import CountLabel
from src.models.dataset import DatasetManifest, ExportConfig, SampleManifest, SubsetSpec, Supervision, TrackRef
from src.services.annotation_engine import counts_to_qa
from src.services.dataset_store import (
    compact_shards, export_training_set, find_leaks, read_dataset, shard_path, split, subset,
    write_export, write_manifest, write_sample,
)


def make_sample(image_id, per_category=None, image_ref=None, num_frames=4, caption="later the dog runs"):
    per_category = per_category if per_category is not None else {"dog": 1}
    label = CountLabel(image_id=image_id, per_category=per_category, total=sum(per_category.values()))
    frames = [f"assets/{image_id}/frames/frame_{i:04d}.png" for i in range(num_frames)]
    return SampleManifest(
        image_id=image_id,
        image_ref=image_ref or f"{image_id:012d}.jpg",
        caption=CaptionRecord(image_id=image_id, text=caption),
        count_label=label,
        vqa=VqaSet(image_id=image_id, pairs=[VqaPair(f"q{k}?", f"a{k}") for k in range(3)]),
        counting_qa=counts_to_qa(label),
        video=frames,
        tracks=[TrackRef(object_id=1, category="dog", ref=f"assets/{image_id}/tracks.json", num_frames=num_frames)],
    )


def make_dataset(n, start=1):
    return DatasetManifest(samples=[make_sample(i) for i in range(start, start + n)])


def test_shard_path_groups_by_thousand(tmp_path):
    assert shard_path(tmp_path, 5).name == "manifest-00000.jsonl"
    assert shard_path(tmp_path, 1234).name == "manifest-00001.jsonl"


def test_write_and_read_samples(tmp_path):
    for i in (1002, 3, 1):
        write_sample(make_sample(i), tmp_path)
    dataset = read_dataset(tmp_path)
    assert dataset.image_ids() == [1, 3, 1002]
    assert dataset.by_id()[3] == make_sample(3)


def test_read_ignores_partial_line_and_keeps_latest(tmp_path):
    write_sample(make_sample(1, caption="first"), tmp_path)
    write_sample(make_sample(1, caption="second"), tmp_path)
    with shard_path(tmp_path, 2).open("a") as f:
        f.write('{"image_id": 2, "image_ref"')
    dataset = read_dataset(tmp_path)
    assert dataset.image_ids() == [1]
    assert dataset.samples[0].caption.text == "second"


def test_compact_shards_is_canonical(tmp_path):
    for i in (2, 1, 2):
        write_sample(make_sample(i), tmp_path)
    compact_shards(tmp_path)
    lines = shard_path(tmp_path, 1).read_text().splitlines()
    assert [json.loads(line)["image_id"] for line in lines] == [1, 2]
    assert json.loads((tmp_path / "dataset.json").read_text()) == {"schema_version": 1}


def test_write_sample_validates(tmp_path):
    bad = make_sample(1)
    bad.vqa.pairs.pop()
    with pytest.raises(InvariantViolation):
        write_sample(bad, tmp_path)
    short_track = make_sample(2)
    short_track.tracks[0] = TrackRef(object_id=1, category="dog", ref="t.json", num_frames=3)
    with pytest.raises(InvariantViolation):
        write_sample(short_track, tmp_path)


def test_dataset_ids_must_increase():
    with pytest.raises(InvariantViolation):
        DatasetManifest(samples=[make_sample(2), make_sample(1)])


def test_export_cardinalities_on_random_labels():
    rng = random.Random(3)
    names = ["cat", "dog", "car", "person", "kite"]
    samples = []
    for i in range(1, 41):
        chosen = rng.sample(names, rng.randint(0, 4))
        samples.append(make_sample(i, {name: rng.randint(1, 5) for name in chosen}))
    dataset = DatasetManifest(samples=samples)
    n = len(samples)
    counting = sum(len(s.count_label.per_category) + 1 for s in samples)

    assert len(export_training_set(dataset, ExportConfig(Supervision.CAPTIONS))) == n
    assert len(export_training_set(dataset, ExportConfig(Supervision.VQA_ONLY))) == 3 * n
    assert len(export_training_set(dataset, ExportConfig(Supervision.CAPTIONS_PLUS_VQA))) == 4 * n
    assert len(export_training_set(dataset, ExportConfig("captions_plus_vqa", include_counting_qa=True))) == 4 * n + counting
    assert len(export_training_set(dataset, ExportConfig(Supervision.VQA_ONLY, include_counting_qa=True))) == 3 * n + counting


def test_export_record_shape(tmp_path):
    dataset = make_dataset(2)
    records = export_training_set(dataset, ExportConfig(Supervision.CAPTIONS_PLUS_VQA))
    assert records[0] == {
        "image_id": 1,
        "inputs": {"video": dataset.samples[0].video, "instruction": "Describe what happens in the video."},
        "target": "later the dog runs",
    }
    assert records[1]["inputs"]["question"] == "q0?"
    path = write_export(records, tmp_path, Supervision.CAPTIONS_PLUS_VQA)
    assert path == tmp_path / "exports" / "captions_plus_vqa.jsonl"
    assert len(path.read_text().splitlines()) == 8


def test_unknown_supervision():
    with pytest.raises(InvariantViolation):
        ExportConfig("everything")


def test_subsets_are_nested():
    dataset = make_dataset(6000)
    for seed in range(20):
        small = set(subset(dataset, SubsetSpec(2000, seed)).image_ids())
        large = set(subset(dataset, SubsetSpec(5000, seed)).image_ids())
        assert len(small) == 2000
        assert small <= large


def test_subset_is_deterministic_and_ordered():
    dataset = make_dataset(100)
    a = subset(dataset, SubsetSpec(10, 4)).image_ids()
    assert a == subset(dataset, SubsetSpec(10, 4)).image_ids()
    assert a == sorted(a)


def test_subset_too_large():
    with pytest.raises(SizeExceedsDataset):
        subset(make_dataset(10), SubsetSpec(11, 0))


def test_default_split_is_disjoint():
    train, val = split(make_dataset(6000))
    assert (len(train), len(val)) == (5000, 1000)
    assert not set(train.image_ids()) & set(val.image_ids())


def test_split_too_large():
    with pytest.raises(SizeExceedsDataset):
        split(make_dataset(10), train_size=8, val_size=3)


def test_find_leaks_reports_shared_sources():
    train = DatasetManifest(samples=[make_sample(1, image_ref="a.jpg"), make_sample(2, image_ref="b.jpg")])
    val = DatasetManifest(samples=[make_sample(3, image_ref="b.jpg")])
    assert find_leaks(train, val) == ["b.jpg"]


def test_write_manifest_replaces_stale_shards(tmp_path):
    write_manifest(DatasetManifest(samples=[make_sample(1), make_sample(1500)]), tmp_path)
    write_manifest(make_dataset(2), tmp_path)
    assert sorted(p.name for p in tmp_path.glob("manifest-*.jsonl")) == ["manifest-00000.jsonl"]
    assert read_dataset(tmp_path).image_ids() == [1, 2]


def test_negative_seeds_draw_valid_subsets_and_splits():
    dataset = make_dataset(50)
    small = subset(dataset, SubsetSpec(3, -1))
    large = subset(dataset, SubsetSpec(20, -1))
    assert len(small) == 3
    assert set(small.image_ids()) <= set(large.image_ids())
    assert small.image_ids() == subset(dataset, SubsetSpec(3, -1)).image_ids()

    train, val = split(dataset, 5, 3, seed=-7)
    assert (len(train), len(val)) == (5, 3)
    assert not set(train.image_ids()) & set(val.image_ids())


def test_concurrent_writers_keep_every_line_whole(tmp_path):
    ids = list(range(1, 201))

    def writer(chunk):
        for i in chunk:
            write_sample(make_sample(i, caption="x" * 2000), tmp_path)

    threads = [threading.Thread(target=writer, args=(ids[k::2],)) for k in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    lines = shard_path(tmp_path, 1).read_text().splitlines()
    assert len(lines) == len(ids)
    assert sorted(json.loads(line)["image_id"] for line in lines) == ids
    assert read_dataset(tmp_path).image_ids() == ids
