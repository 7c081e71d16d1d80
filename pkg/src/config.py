"""
Configuration settings for the mmforge synthetic multimodal pipeline
"""
import os
from typing import Dict, Any

from dotenv import load_dotenv

load_dotenv()


# Load environment variables
def get_env_var(key: str, default: str = None) -> str:
    """Get environment variable with fallback to default value"""
    return os.getenv(key, default)


# Environment overrides
OUTPUT_ROOT_ENV = "MMFORGE_OUTPUT_ROOT"
BEARER_TOKEN = get_env_var("MMFORGE_BEARER_TOKEN")
LOG_LEVEL = get_env_var("MMFORGE_LOG_LEVEL", "INFO")
LOG_FILE_NAME = "mmforge.log"

# Backend Endpoints - one POST route per stage under a common prefix
API_PREFIX = "/v1"
STAGE_PATHS = {
    "caption": f"{API_PREFIX}/caption",
    "vqa": f"{API_PREFIX}/vqa",
    "video": f"{API_PREFIX}/video",
    "segment": f"{API_PREFIX}/segment",
    "propagate": f"{API_PREFIX}/propagate",
    "embed": f"{API_PREFIX}/embed",
    "audio": f"{API_PREFIX}/audio",
}

# Retry Settings
REQUEST_TIMEOUT = 30
MAX_RETRIES = 3
BACKOFF_BASE_MS = 250
BACKOFF_FACTOR = 2

# Generation defaults
DEFAULT_NUM_FRAMES = 16
DEFAULT_FPS = 8
DEFAULT_FRAME_WIDTH = 64
DEFAULT_FRAME_HEIGHT = 48
DEFAULT_SEED = 0
DEFAULT_MAX_WORKERS = 4
DEFAULT_CONDITIONING_MODE = "both"
MOCK_EMBED_DIM = 64
VQA_PAIR_COUNT = 3

# Dataset Settings
SCHEMA_VERSION = 1
SHARD_SIZE = 1000
DEFAULT_TRAIN_SIZE = 5000
DEFAULT_VAL_SIZE = 1000

# Evaluation Settings
UNCHANGED_EPSILON = 0.005
COUNT_DECIMALS = 2
VQA_DECIMALS = 2
IOU_DECIMALS = 2
MIOU_DECIMALS = 4

# Counting question templates
COUNTING_TEMPLATES: Dict[str, str] = {
    "per_category": "How many {name} are in the video?",
    "total": "How many objects are in the video in total?",
}

# Exit codes
EXIT_CODES: Dict[str, int] = {
    "success": 0,
    "partial_failure": 1,
    "usage_error": 2,
}

# PipelineConfig keys accepted in the TOML file
PIPELINE_CONFIG_KEYS = (
    "output_root",
    "annotations_path",
    "image_root",
    "conditioning_mode",
    "num_frames",
    "fps",
    "frame_width",
    "frame_height",
    "seed",
    "audio_enabled",
    "max_workers",
    "caption_template_path",
    "vqa_template_path",
    "endpoints",
)

ENDPOINT_CONFIG_KEYS = ("base_url", "timeout", "max_retries", "backoff_base")

DEFAULT_ENDPOINT: Dict[str, Any] = {
    "base_url": "http://localhost:8080",
    "timeout": REQUEST_TIMEOUT,
    "max_retries": MAX_RETRIES,
    "backoff_base": BACKOFF_BASE_MS,
}
