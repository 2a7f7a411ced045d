"""Django settings for the skillseg project.

Only the pieces a batch command-line tool needs are configured: installed
apps, logging and the ``SKILLSEG`` block of pipeline defaults. There is no
database and no URL configuration.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Tuple

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from a local .env file if present.
load_dotenv(BASE_DIR / ".env", override=True)

SECRET_KEY = os.getenv("SECRET_KEY") or "skillseg-insecure-not-used"

DEBUG = os.getenv("DEBUG", "False").lower() in {"1", "true", "yes", "on"}

ALLOWED_HOSTS: list = []

INSTALLED_APPS = [
    "rest_framework",
    "app.segmentation",
]

DATABASES: Dict[str, dict] = {}

USE_TZ = True
TIME_ZONE = os.getenv("TIME_ZONE", "UTC")

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, str(default)))


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, str(default)))


def _env_dims(name: str, default: str) -> Tuple[int, ...]:
    raw = os.getenv(name, default)
    return tuple(int(part) for part in raw.split(",") if part.strip())


# Pipeline defaults. CLI flags override these.
SKILLSEG = {
    "SEED": _env_int("SKILLSEG_SEED", 0),
    "FPS": _env_float("SKILLSEG_FPS", 24.0),
    "FRAME_WIDTH": _env_float("SKILLSEG_FRAME_WIDTH", 960.0),
    "FRAME_HEIGHT": _env_float("SKILLSEG_FRAME_HEIGHT", 540.0),
    "EPSILON": _env_float("SKILLSEG_EPSILON", 0.01),
    "HEURISTIC_M": _env_int("SKILLSEG_HEURISTIC_M", 32),
    "HEURISTIC_STRIDE": _env_int("SKILLSEG_HEURISTIC_STRIDE", 3),
    "FNR_RADIUS": _env_int("SKILLSEG_FNR_RADIUS", 2),
    "EDGE_BIN_WIDTH": _env_int("SKILLSEG_EDGE_BIN_WIDTH", 5),
    "THRESHOLDS": _env_int("SKILLSEG_THRESHOLDS", 100),
    "HIDDEN": _env_dims("SKILLSEG_HIDDEN", "256,128,64"),
    "ACTIVATION": os.getenv("SKILLSEG_ACTIVATION", "leaky_relu"),
    "EPOCHS": _env_int("SKILLSEG_EPOCHS", 500),
    "BATCH_SIZE": _env_int("SKILLSEG_BATCH_SIZE", 512),
    "LEARNING_RATE": _env_float("SKILLSEG_LEARNING_RATE", 0.0001),
    "SPLIT_RATIO": _env_float("SKILLSEG_SPLIT_RATIO", 0.8),
}

# Logging
_log_level = os.getenv("SKILLSEG_LOG", "WARNING").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "stderr": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "app.segmentation": {
            "handlers": ["stderr"],
            "level": _log_level,
            "propagate": False,
        },
    },
}
