"""
TOML config loading for PipelineConfig
"""
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional

from ..config import DEFAULT_ENDPOINT, ENDPOINT_CONFIG_KEYS, OUTPUT_ROOT_ENV, PIPELINE_CONFIG_KEYS, get_env_var
from ..errors import ConfigInvalid
from ..models.backend import BACKEND_STAGES, BackendEndpoint, check_type
from ..models.pipeline import PipelineConfig

logger = logging.getLogger(__name__)

_PATH_KEYS = ("annotations_path", "caption_template_path", "vqa_template_path")


def parse_endpoints(table: Dict[str, Any]) -> Dict[str, BackendEndpoint]:
    """
    ``[endpoints.<stage>]`` tables; ``[endpoints.default]`` fills in for
    stages that are not listed.
    """
    if not isinstance(table, dict):
        raise ConfigInvalid("'endpoints' must be a table")
    default = dict(DEFAULT_ENDPOINT)
    default.update(_endpoint_fields("default", table.get("default", {})))

    endpoints: Dict[str, BackendEndpoint] = {}
    for stage in BACKEND_STAGES:
        fields = dict(default)
        fields.update(_endpoint_fields(stage, table.get(stage, {})))
        endpoints[stage] = BackendEndpoint(stage=stage, **fields)

    unknown = set(table) - set(BACKEND_STAGES) - {"default"}
    if unknown:
        raise ConfigInvalid(f"unknown endpoint stages: {sorted(unknown)}")
    return endpoints


def _endpoint_fields(stage: str, raw: Any) -> Dict[str, Any]:
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"endpoints.{stage} must be a table")
    unknown = set(raw) - set(ENDPOINT_CONFIG_KEYS)
    if unknown:
        raise ConfigInvalid(f"unknown keys in endpoints.{stage}: {sorted(unknown)}")
    return raw


def config_from_mapping(data: Dict[str, Any], base_dir: Optional[Path] = None) -> PipelineConfig:
    """Build a PipelineConfig from already-parsed key/value data"""
    unknown = set(data) - set(PIPELINE_CONFIG_KEYS)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")

    fields = dict(data)
    fields["endpoints"] = parse_endpoints(fields.get("endpoints", {}))

    # relative paths resolve against the config file's directory
    for key in _PATH_KEYS:
        if fields.get(key):
            check_type(key, fields[key], (str, os.PathLike))
            path = Path(fields[key])
            fields[key] = path if path.is_absolute() or base_dir is None else base_dir / path

    env_root = get_env_var(OUTPUT_ROOT_ENV)
    if env_root:
        logger.info(f"{OUTPUT_ROOT_ENV} overrides output_root with {env_root}")
        fields["output_root"] = env_root
    if not fields.get("output_root"):
        raise ConfigInvalid(f"output_root is required (config key or {OUTPUT_ROOT_ENV})")
    check_type("output_root", fields["output_root"], (str, os.PathLike))
    output_root = Path(fields["output_root"])
    if not output_root.is_absolute() and base_dir is not None and not env_root:
        output_root = base_dir / output_root
    fields["output_root"] = output_root

    try:
        config = PipelineConfig(**fields)
    except TypeError as e:
        raise ConfigInvalid(f"bad config values: {e}") from e
    config.validate()
    return config


def load_pipeline_config(path, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Read a TOML config file, apply CLI overrides, validate"""
    path = Path(path)
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigInvalid(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(f"config file {path} is not valid TOML: {e}") from e

    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    logger.debug(f"Loaded config {path} with keys {sorted(data)}")
    return config_from_mapping(data, base_dir=path.parent)


def default_config(output_root=None, **overrides: Any) -> PipelineConfig:
    """Config without a file: defaults, env override, then keyword overrides"""
    data = {k: v for k, v in overrides.items() if v is not None}
    if output_root is not None:
        data["output_root"] = os.fspath(output_root)
    return config_from_mapping(data)
