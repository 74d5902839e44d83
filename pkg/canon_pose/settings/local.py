from .base import *
from decouple import config
import dj_database_url

SECRET_KEY = config('SECRET_KEY', default='canon-pose-local-not-secret')

DEBUG = True

# Run registry
DATABASES = {
    'default': dj_database_url.config(
        default=config('DATABASE_URL', default=f"sqlite:///{BASE_DIR / 'canon_pose.sqlite3'}"),
    )
}

# Logging for development
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
        },
        'alignment': {
            'handlers': ['console'],
            'level': CANON_POSE_LOG_LEVEL,
        },
        'canon_pose': {
            'handlers': ['console'],
            'level': CANON_POSE_LOG_LEVEL,
        },
    },
}
