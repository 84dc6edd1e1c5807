"""
Django settings for dpdlab project.

The project hosts a single app, `predistortion`, driven from management
commands. Numeric defaults can be overridden with DPD_* environment
variables or a .env file.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv("DPD_SECRET_KEY", "dpdlab-insecure-local-only")

DEBUG = os.getenv("DPD_DEBUG", "0") == "1"

ALLOWED_HOSTS = ["localhost"]


# Application definition

INSTALLED_APPS = [
    "predistortion.apps.PredistortionConfig",
    "django.contrib.contenttypes",
]


# Database

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": Path(os.getenv("DPD_DATABASE", BASE_DIR / "dpdlab.sqlite3")),
    }
}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Experiment defaults
DPD_OUTPUT_ROOT = Path(os.getenv("DPD_OUTPUT_ROOT", BASE_DIR / "runs"))
DPD_HISTOGRAM_BINS = int(os.getenv("DPD_HISTOGRAM_BINS", "256"))
DPD_GAIN_EXCITATION_LENGTH = int(os.getenv("DPD_GAIN_EXCITATION_LENGTH", "4096"))
DPD_GAIN_EXCITATION_SEED = int(os.getenv("DPD_GAIN_EXCITATION_SEED", "2024"))
DPD_LUT_SIZE = int(os.getenv("DPD_LUT_SIZE", "1024"))
DPD_WELCH_SEGMENT = int(os.getenv("DPD_WELCH_SEGMENT", "1024"))

# Logging
DPD_LOG_LEVEL = os.getenv("DPD_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "{asctime} {levelname} {name}: {message}", "style": "{"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "predistortion": {
            "handlers": ["console"],
            "level": DPD_LOG_LEVEL,
            "propagate": False,
        },
    },
}
