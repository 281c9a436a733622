from pathlib import Path
import os
import environ

env = environ.Env()
# Optional .env next to settings.py
environ.Env.read_env(os.path.join(os.path.dirname(__file__), '.env'))

BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY: no HTTP surface is served
SECRET_KEY = env("SECRET_KEY", default="regime-sentinel-local-only")
DEBUG = env.bool("DEBUG", default=False)
ALLOWED_HOSTS = env.list("ALLOWED_HOSTS", default=['localhost', '127.0.0.1'])

# APPS
INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Regime Sentinel apps
    'timeseries',
    'segmentation',
    'fleet',
    'metamodel',
    'simulator',
    'telemetry',
]

MIDDLEWARE = []

# DATABASE
DATABASES = {
    'default': env.db(default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}"),
}
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'

# PIPELINE DEFAULTS: every tunable of telemetry.config.PipelineConfig
SENTINEL_M = env.int("SENTINEL_M", default=25)
SENTINEL_CAC_THRESHOLD = env.float("SENTINEL_CAC_THRESHOLD", default=0.45)
SENTINEL_K_MAD = env.float("SENTINEL_K_MAD", default=5.0)
SENTINEL_MIN_FRACTION = env.float("SENTINEL_MIN_FRACTION", default=0.2)
SENTINEL_BASELINE_WINDOW = env.int("SENTINEL_BASELINE_WINDOW", default=100)
SENTINEL_COINCIDENCE_WINDOW = env.int("SENTINEL_COINCIDENCE_WINDOW", default=10)
SENTINEL_NO_INTEREST_THRESHOLD = env.int("SENTINEL_NO_INTEREST_THRESHOLD", default=3)
SENTINEL_SAMPLING_INTERVAL = env.float("SENTINEL_SAMPLING_INTERVAL", default=6.0)

# Caps the per-series worker pool (0 = all cores)
REGIME_SENTINEL_THREADS = env.int("REGIME_SENTINEL_THREADS", default=0)

# LOGGING: console only, project apps on stderr
SENTINEL_LOG_LEVEL = env("SENTINEL_LOG_LEVEL", default="WARNING")

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {'format': '%(asctime)s %(levelname)s %(name)s: %(message)s'},
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': SENTINEL_LOG_LEVEL, 'propagate': False}
        for app in ('timeseries', 'segmentation', 'fleet', 'metamodel', 'simulator', 'telemetry')
    },
}
