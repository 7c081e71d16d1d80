import json
import random

import pytest

from src.errors import MalformedDocument, MissingSection, UnknownImage
from src.models.coco import ViolationKind
from src.services.coco_ingest import (
    annotation_mask, class_masks, count_labels, load_dataset, normalize_category_name,
    parse_dataset, serialize_index, validate_dataset, write_diagnostics,
)

from .conftest import make_coco


def doc(images, annotations, categories=None):
    return json.dumps({
        "images": images,
        "categories": categories if categories is not None else [
            {"id": 1, "name": "dog"}, {"id": 2, "name": "cat"}, {"id": 3, "name": "car"},
        ],
        "annotations": annotations,
    }).encode()


def image(id, w=100, h=80):
    return {"id": id, "file_name": f"{id:06d}.jpg", "width": w, "height": h}


def ann(id, image_id, category_id, bbox=(10, 10, 20, 20), **extra):
    return {"id": id, "image_id": image_id, "category_id": category_id, "bbox": list(bbox), **extra}


def test_empty_document():
    index = parse_dataset(doc([], []))
    assert index.images == {}
    assert index.annotation_count() == 0
    assert index.diagnostics == []


def test_annotations_grouped_by_image():
    index = parse_dataset(doc([image(1), image(2)], [ann(1, 1, 1), ann(2, 1, 2), ann(3, 2, 1)]))
    assert {k: len(v) for k, v in index.annotations_by_image.items()} == {1: 2, 2: 1}


def test_dangling_annotation_dropped_with_diagnostic():
    index = parse_dataset(doc([image(1)], [ann(1, 99, 1)]))
    assert index.annotation_count() == 0
    assert len(index.diagnostics) == 1
    assert index.diagnostics[0].kind == ViolationKind.DANGLING_REFERENCE


def test_duplicate_annotation_id_dropped():
    index = parse_dataset(doc([image(1)], [ann(1, 1, 1), ann(1, 1, 2)]))
    assert index.annotation_count() == 1
    assert [v.kind for v in index.diagnostics] == [ViolationKind.DUPLICATE_ID]


def test_missing_section():
    with pytest.raises(MissingSection):
        parse_dataset(json.dumps({"images": [], "categories": []}).encode())


@pytest.mark.parametrize("data", [b"{not json", b"[]", json.dumps({"images": {}, "categories": [], "annotations": []}).encode()])
def test_malformed_document(data):
    with pytest.raises(MalformedDocument):
        parse_dataset(data)


def test_category_names_are_normalized():
    index = parse_dataset(doc([image(1)], [], categories=[{"id": 1, "name": "  Traffic   Light "}]))
    assert index.categories[1].name == "traffic light"
    assert normalize_category_name("Hot\tDog") == "hot dog"


def test_out_of_bounds_bbox_is_clamped():
    index = parse_dataset(doc([image(1, w=100, h=80)], [ann(1, 1, 1, bbox=(90, 10, 30, 20))]))
    assert index.annotations_by_image[1][0].bbox == (90.0, 10.0, 10.0, 20.0)
    assert [v.kind for v in index.diagnostics] == [ViolationKind.OUT_OF_BOUNDS]


def test_count_labels_empty_image():
    index = parse_dataset(doc([image(1)], []))
    label = count_labels(1, index)
    assert label.per_category == {}
    assert label.total == 0


def test_count_labels_tally():
    index = parse_dataset(doc([image(1)], [ann(1, 1, 1), ann(2, 1, 1), ann(3, 1, 2, iscrowd=1)]))
    label = count_labels(1, index)
    assert label.per_category == {"cat": 1, "dog": 2}
    assert label.total == 3


def test_count_labels_single_category():
    index = parse_dataset(doc([image(1)], [ann(i, 1, 3) for i in range(1, 8)]))
    assert count_labels(1, index).per_category == {"car": 7}
    assert count_labels(1, index).total == 7


def test_count_labels_unknown_image():
    with pytest.raises(UnknownImage):
        count_labels(5, parse_dataset(doc([image(1)], [])))


def test_count_labels_match_brute_force_on_random_documents():
    rng = random.Random(9)
    names = {1: "dog", 2: "cat", 3: "car"}
    for _ in range(100):
        num_images = rng.randint(1, 6)
        anns = [
            ann(i, rng.randint(1, num_images + 1), rng.randint(1, 3), iscrowd=rng.randint(0, 1))
            for i in range(1, rng.randint(0, 40) + 1)
        ]
        index = parse_dataset(doc([image(i) for i in range(1, num_images + 1)], anns))
        for image_id in range(1, num_images + 1):
            expected = {}
            for a in anns:
                if a["image_id"] == image_id:
                    name = names[a["category_id"]]
                    expected[name] = expected.get(name, 0) + 1
            label = count_labels(image_id, index)
            assert label.per_category == expected
            assert label.total == sum(expected.values())
            assert list(label.per_category) == sorted(expected)


def test_validate_clean_dataset():
    index = parse_dataset(doc([image(1), image(2)], [ann(1, 1, 1), ann(2, 2, 2)]))
    assert validate_dataset(index) == []


def test_validate_reports_out_of_bounds_and_duplicate_image():
    index = parse_dataset(doc(
        [image(1, w=100), image(1)],
        [ann(1, 1, 1, bbox=(95, 0, 10, 10))],
    ))
    kinds = sorted(v.kind.value for v in validate_dataset(index))
    assert kinds == ["DuplicateId", "OutOfBounds"]


def test_write_diagnostics_jsonl(tmp_path):
    index = parse_dataset(doc([image(1)], [ann(1, 2, 1)]))
    path = tmp_path / "diag" / "ingest.jsonl"
    assert write_diagnostics(validate_dataset(index), path) == 1
    line = json.loads(path.read_text().splitlines()[0])
    assert line["kind"] == "DanglingReference"
    assert line["annotation_id"] == 1


def test_load_dataset_and_serialize_roundtrip(write_coco):
    index = load_dataset(write_coco(make_coco(4)))
    again = parse_dataset(json.dumps(serialize_index(index)).encode())
    assert again.image_ids() == index.image_ids() == [1, 2, 3, 4]
    assert again.annotation_count() == index.annotation_count()
    assert [count_labels(i, again) for i in again.image_ids()] == [count_labels(i, index) for i in index.image_ids()]


def test_polygon_rasterization_and_class_union():
    square = [[10, 10, 19, 10, 19, 19, 10, 19]]
    index = parse_dataset(doc(
        [image(1, w=40, h=30)],
        [
            ann(1, 1, 1, segmentation=square),
            ann(2, 1, 1, segmentation=[[p + 15 if k % 2 == 0 else p for k, p in enumerate(square[0])]]),
            ann(3, 1, 2),
        ],
    ))
    first = annotation_mask(index.annotations_by_image[1][0], index.images[1])
    assert (first.width, first.height) == (40, 30)
    assert first.bits[15, 15] and not first.bits[0, 0]
    assert annotation_mask(index.annotations_by_image[1][2], index.images[1]) is None

    masks = class_masks(1, index)
    assert list(masks) == ["dog"]
    assert masks["dog"].area == 2 * first.area
