import json

import pytest

from src.cli.main import run
from src.services.coco_ingest import class_masks, load_dataset
from src.services.dataset_store import read_dataset
from src.utils.masks import rle_encode

from .conftest import make_coco


@pytest.fixture
def project(tmp_path, write_coco, monkeypatch):
    """Config file next to a 5-image COCO document"""
    monkeypatch.delenv("MMFORGE_OUTPUT_ROOT", raising=False)
    write_coco(make_coco(5))
    config = tmp_path / "mmforge.toml"
    config.write_text(
        'output_root = "out"\n'
        'annotations_path = "instances.json"\n'
        "seed = 7\n"
        "num_frames = 4\n"
        "\n"
        "[endpoints.default]\n"
        'base_url = "http://localhost:9000"\n'
    )
    return tmp_path, config


@pytest.fixture
def generated(project, capsys):
    root, config = project
    assert run(["generate", "--config", str(config), "--mock", "--limit", "5"]) == 0
    capsys.readouterr()
    return root / "out", config


def test_generate_mock_run(project, capsys):
    root, config = project
    assert run(["generate", "--config", str(config), "--mock", "--limit", "3", "--workers", "2"]) == 0
    out = capsys.readouterr().out
    assert "samples: 3  succeeded: 3  failed: 0  cache hits: 0" in out
    assert read_dataset(root / "out").image_ids() == [1, 2, 3]
    assert (root / "out" / "mmforge.log").is_file()


def test_generate_requires_config(capsys):
    assert run(["generate", "--mock"]) == 2
    assert "requires --config" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert run(["generate", "--turbo"]) == 2
    assert run(["paint"]) == 2


def test_help_lists_flags(capsys):
    assert run(["generate", "--help"]) == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--mock", "--limit", "--workers", "--seed"):
        assert flag in out


def test_bad_config_is_usage_error(tmp_path, capsys):
    config = tmp_path / "bad.toml"
    config.write_text('output_root = "out"\nflavour = "mint"\n')
    assert run(["generate", "--config", str(config), "--mock"]) == 2
    assert "flavour" in capsys.readouterr().err


@pytest.mark.parametrize("line", [
    'max_workers = "4"',
    'seed = "7"',
    "num_frames = 2.5",
    '[endpoints.default]\ntimeout = "fast"',
])
def test_wrongly_typed_config_is_usage_error(project, capsys, line):
    root, config = project
    config.write_text(
        'output_root = "out"\n'
        'annotations_path = "instances.json"\n'
        f"{line}\n"
    )
    assert run(["generate", "--config", str(config), "--mock", "--limit", "2"]) == 2
    assert "must be" in capsys.readouterr().err
    assert not (root / "out" / "manifest-00000.jsonl").exists()


def test_ingest_summary(project, capsys):
    root, _ = project
    assert run(["ingest", "--annotations", str(root / "instances.json")]) == 0
    out = capsys.readouterr().out
    assert "images: 5" in out
    assert "categories: 5" in out
    assert "violations: 0" in out


def test_export_vqa_only(generated, capsys):
    out_root, config = generated
    assert run(["export", "--config", str(config), "--supervision", "vqa_only"]) == 0
    assert "15 records" in capsys.readouterr().out
    lines = (out_root / "exports" / "vqa_only.jsonl").read_text().splitlines()
    assert len(lines) == 15
    assert all(set(json.loads(line)) == {"image_id", "inputs", "target"} for line in lines)


def test_subset_and_split(generated, tmp_path):
    out_root, _ = generated
    assert run(["subset", "--dataset", str(out_root), "--size", "3", "--seed", "1",
                "--out", str(tmp_path / "sub")]) == 0
    assert len(read_dataset(tmp_path / "sub")) == 3

    assert run(["split", "--dataset", str(out_root), "--train-size", "3", "--val-size", "2",
                "--out", str(tmp_path / "splits")]) == 0
    train = read_dataset(tmp_path / "splits" / "train")
    val = read_dataset(tmp_path / "splits" / "val")
    assert (len(train), len(val)) == (3, 2)
    assert sorted(train.image_ids() + val.image_ids()) == [1, 2, 3, 4, 5]

    assert run(["subset", "--dataset", str(out_root), "--size", "9", "--out", str(tmp_path / "big")]) == 1


def test_inspect(generated, capsys):
    out_root, config = generated
    assert run(["inspect", "2", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("Sample 2")
    assert "4 frames" in out
    assert run(["inspect", "99", "--dataset", str(out_root)]) == 1


def test_evaluate_counting(generated, tmp_path, capsys):
    out_root, _ = generated
    predictions = tmp_path / "counts.jsonl"
    predictions.write_text("".join(
        json.dumps({"image_id": s.image_id, "predicted_total": s.count_label.total}) + "\n"
        for s in read_dataset(out_root).samples
    ))
    assert run(["evaluate", "--task", "counting", "--dataset", str(out_root),
                "--predictions", str(predictions), "--dataset-name", "COCO"]) == 0
    assert "| COCO | ours | 0.00 | 0.00 |" in capsys.readouterr().out


def test_evaluate_vqa_mock(generated, tmp_path, capsys):
    out_root, _ = generated
    predictions = tmp_path / "vqa.jsonl"
    predictions.write_text("".join(
        json.dumps({"image_id": s.image_id, "question": p.question, "answer": p.answer}) + "\n"
        for s in read_dataset(out_root).samples for p in s.vqa.pairs
    ))
    assert run(["evaluate", "--task", "vqa", "--mock", "--dataset", str(out_root),
                "--predictions", str(predictions)]) == 0
    out = capsys.readouterr().out
    assert "## Video VQA" in out
    assert "| ours | 100.00 | 1.00 |" in out


def test_evaluate_vqa_needs_backend_or_mock(generated, tmp_path):
    out_root, _ = generated
    predictions = tmp_path / "vqa.jsonl"
    predictions.write_text('{"image_id": 1, "answer": "park"}\n')
    assert run(["evaluate", "--task", "vqa", "--dataset", str(out_root), "--predictions", str(predictions)]) == 2


def test_evaluate_segmentation_and_report(finetune_ious, tmp_path, capsys):
    baseline, ours = finetune_ious
    (tmp_path / "baseline.json").write_text(json.dumps(baseline))
    (tmp_path / "ours.json").write_text(json.dumps(ours))
    assert run(["evaluate", "--task", "segmentation", "--baseline", str(tmp_path / "baseline.json"),
                "--predictions", str(tmp_path / "ours.json"), "--out", str(tmp_path / "seg")]) == 0
    out = capsys.readouterr().out
    assert "| **mIoU** | **0.4711** | **0.5239** | **+0.0528** |" in out
    assert "Improved: 36  Degraded: 26  Unchanged: 12" in out
    assert (tmp_path / "seg.md").read_text() == out
    assert (tmp_path / "seg.csv").is_file()

    counting = {"counting": [{"dataset": "COCO", "model": "ours", "mae": 0.5, "mse": 0.75}], "vqa": []}
    (tmp_path / "counting.json").write_text(json.dumps(counting))
    assert run(["report", str(tmp_path / "counting.json"), str(tmp_path / "seg.json"), "--format", "csv"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("Dataset,Model,MAE,MSE\nCOCO,ours,0.50,0.75\n\nClass,Baseline,ours,Delta\n")


def test_evaluate_segmentation_class_mismatch(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"dog": 0.5}))
    (tmp_path / "b.json").write_text(json.dumps({"cat": 0.5}))
    assert run(["evaluate", "--task", "segmentation", "--baseline", str(tmp_path / "a.json"),
                "--predictions", str(tmp_path / "b.json")]) == 1


@pytest.mark.parametrize("line", ['{"image_id": 1}', "not json", "[1, 2]", '{"image_id": 1, "predicted_total": "many"}'])
def test_evaluate_counting_malformed_predictions(generated, tmp_path, capsys, line):
    out_root, _ = generated
    predictions = tmp_path / "counts.jsonl"
    predictions.write_text('{"image_id": 2, "predicted_total": 1}\n' + line + "\n")
    assert run(["evaluate", "--task", "counting", "--dataset", str(out_root),
                "--predictions", str(predictions)]) == 1
    assert f"{predictions}:2:" in capsys.readouterr().err


def test_report_rejects_malformed_files(tmp_path, capsys):
    (tmp_path / "broken.json").write_text("{")
    (tmp_path / "partial.json").write_text(json.dumps({"counting": [{"dataset": "COCO"}]}))
    (tmp_path / "ious.json").write_text(json.dumps({"dog": "high"}))
    (tmp_path / "ok.json").write_text(json.dumps({"dog": 0.5}))
    assert run(["report", str(tmp_path / "broken.json")]) == 1
    assert run(["report", str(tmp_path / "partial.json")]) == 1
    assert "partial.json" in capsys.readouterr().err
    assert run(["evaluate", "--task", "segmentation", "--baseline", str(tmp_path / "ok.json"),
                "--predictions", str(tmp_path / "ious.json")]) == 1


def test_evaluate_segmentation_against_coco_masks(project, tmp_path, capsys):
    root, _ = project
    annotations = root / "instances.json"
    index = load_dataset(annotations)
    perfect = tmp_path / "perfect.jsonl"
    empty = tmp_path / "empty.jsonl"
    perfect.write_text("".join(
        json.dumps({"image_id": i, "masks": {name: rle_encode(m).to_coco() for name, m in class_masks(i, index).items()}})
        + "\n"
        for i in (1, 2, 3)
    ))
    empty.write_text("".join(json.dumps({"image_id": i, "masks": {}}) + "\n" for i in (1, 2, 3)))

    assert run(["evaluate", "--task", "segmentation", "--annotations", str(annotations),
                "--baseline", str(empty), "--predictions", str(perfect)]) == 0
    out = capsys.readouterr().out
    classes = {name for i in (1, 2, 3) for name in class_masks(i, index)}
    assert f"Improved: {len(classes)}  Degraded: 0  Unchanged: 0" in out
    assert "| **mIoU** | **0.0000** | **1.0000** | **+1.0000** |" in out

    assert run(["evaluate", "--task", "segmentation", "--annotations", str(annotations),
                "--ground-truth", str(perfect), "--baseline", str(empty), "--predictions", str(perfect)]) == 2
