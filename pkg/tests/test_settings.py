import pytest

from src.errors import ConfigInvalid
from src.models.backend import BACKEND_STAGES, ConditioningMode
from src.utils.settings import config_from_mapping, default_config, load_pipeline_config, parse_endpoints


@pytest.fixture(autouse=True)
def no_env_root(monkeypatch):
    monkeypatch.delenv("MMFORGE_OUTPUT_ROOT", raising=False)


def test_load_resolves_relative_paths(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'output_root = "out"\n'
        'annotations_path = "coco/instances.json"\n'
        'conditioning_mode = "image_only"\n'
        "audio_enabled = true\n"
        "\n"
        "[endpoints.video]\n"
        'base_url = "http://gpu:9000"\n'
        "timeout = 600\n"
    )
    config = load_pipeline_config(path, {"seed": 5, "max_workers": None})
    assert config.output_root == tmp_path / "out"
    assert config.annotations_path == tmp_path / "coco" / "instances.json"
    assert config.conditioning_mode == ConditioningMode.IMAGE_ONLY
    assert config.seed == 5
    assert config.endpoints["video"].timeout == 600
    assert config.endpoints["caption"].base_url == "http://localhost:8080"


def test_default_endpoint_fills_missing_stages():
    endpoints = parse_endpoints({"default": {"base_url": "http://shared", "max_retries": 1},
                                 "embed": {"base_url": "http://clip"}})
    assert set(endpoints) == set(BACKEND_STAGES)
    assert endpoints["caption"].base_url == "http://shared"
    assert endpoints["embed"].base_url == "http://clip"
    assert endpoints["embed"].max_retries == 1


@pytest.mark.parametrize("data", [
    {"output_root": "out", "colour": "red"},
    {"output_root": "out", "endpoints": {"painter": {"base_url": "http://x"}}},
    {"output_root": "out", "endpoints": {"video": {"url": "http://x"}}},
    {"output_root": "out", "max_workers": 0},
    {"output_root": "out", "conditioning_mode": "sketch"},
    {},
])
def test_invalid_mappings(data):
    with pytest.raises(ConfigInvalid):
        config_from_mapping(data)


def test_env_overrides_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MMFORGE_OUTPUT_ROOT", str(tmp_path / "elsewhere"))
    assert default_config(output_root="ignored").output_root == tmp_path / "elsewhere"


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_pipeline_config(tmp_path / "absent.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("output_root = \n")
    with pytest.raises(ConfigInvalid):
        load_pipeline_config(broken)


@pytest.mark.parametrize("data", [
    {"output_root": "out", "max_workers": "4"},
    {"output_root": "out", "seed": "7"},
    {"output_root": "out", "seed": 7.5},
    {"output_root": "out", "num_frames": True},
    {"output_root": "out", "fps": "fast"},
    {"output_root": "out", "audio_enabled": "yes"},
    {"output_root": "out", "image_root": 3},
    {"output_root": "out", "conditioning_mode": 3},
    {"output_root": "out", "annotations_path": 5},
    {"output_root": 42},
    {"output_root": "out", "endpoints": {"default": {"timeout": "fast"}}},
    {"output_root": "out", "endpoints": {"video": {"max_retries": 1.5}}},
    {"output_root": "out", "endpoints": {"embed": {"base_url": 8080}}},
    {"output_root": "out", "endpoints": {"audio": {"backoff_base": "slow"}}},
])
def test_wrongly_typed_values(data):
    with pytest.raises(ConfigInvalid):
        config_from_mapping(data)


def test_numeric_fields_accept_ints_and_floats():
    config = config_from_mapping({"output_root": "out", "fps": 12, "endpoints": {"default": {"timeout": 2}}})
    assert config.fps == 12
    assert config.endpoints["caption"].timeout == 2
