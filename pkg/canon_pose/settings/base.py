"""
Django settings for the canon_pose project.

canon_pose trains and evaluates a rotation-invariant adversarial autoencoder.
Django provides the settings layer, the management commands that make up the
CLI and the run registry database; there is no web surface.

Environment-specific values live in local.py and production.py.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# These will be overridden in environment-specific settings
SECRET_KEY = None
DEBUG = None
ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'alignment',
]

MIDDLEWARE = []


# Database
# The run registry; overridden in environment-specific settings
DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Data and output locations
CANON_POSE_DATA = Path(config('CANON_POSE_DATA', default=str(BASE_DIR / 'data')))
CANON_POSE_OUTPUT = Path(config('CANON_POSE_OUTPUT', default=str(BASE_DIR / 'runs')))

# 0 means "all available cores"; 1 switches on determinism mode
CANON_POSE_THREADS = config('CANON_POSE_THREADS', default=0, cast=int)

CANON_POSE_LOG_LEVEL = config('CANON_POSE_LOG_LEVEL', default='INFO')
