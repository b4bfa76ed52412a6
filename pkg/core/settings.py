"""
Django settings for core project.

The project hosts a single app, ``qrng``: a simulator of the phase-diffusion
random number generator and its randomness-metrology toolkit. It is driven from
the command line through management commands; there is no web surface.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv
load_dotenv()
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'qrng-development-key')
DEBUG = os.getenv('DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'qrng',
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True
LANGUAGES = [
    ('uz', 'O‘zbek'),
    ('ru', 'Русский'),
    ('en', 'English'),
]

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Generator settings

# Directory searched for qrng.json when a command gets no --config.
QRNG_CONFIG_DIR = Path(os.getenv('QRNG_CONFIG_DIR', BASE_DIR / 'config'))
# 0 means "use every core".
QRNG_WORKERS = int(os.getenv('QRNG_WORKERS', '0'))
QRNG_CHUNK_BITS = int(os.getenv('QRNG_CHUNK_BITS', str(1 << 22)))
QRNG_RECORD_RUNS = os.getenv('QRNG_RECORD_RUNS', '1') == '1'
QRNG_LOG_LEVEL = os.getenv('QRNG_LOG_LEVEL', 'INFO')


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'qrng': {
            'handlers': ['console'],
            'level': QRNG_LOG_LEVEL,
            'propagate': False,
        },
    },
}
