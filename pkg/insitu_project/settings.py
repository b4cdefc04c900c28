"""
Django settings for insitu_project project.

Holds the configuration of the search engine (``SYMBOLIC_SEARCH``) next to
the usual Django settings. Experiment-specific values (benchmarks, priors,
constraints, trainer) come from JSON experiment configs; the values here
are the defaults those configs fall back to.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Quick-start development settings - unsuitable for production

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY",
    "django-insecure-3v!h0c$1q0k#4ld^r9m8z@n2t6w+p7x5s(y)e-=j_u%b&a*f",
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get("DJANGO_DEBUG", "1") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "symbolic",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "insitu_project.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "insitu_project.wsgi.application"


# Database

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}


# Password validation

AUTH_PASSWORD_VALIDATORS = [
    {
        "NAME": "django.contrib.auth.password_validation.UserAttributeSimilarityValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.MinimumLengthValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.CommonPasswordValidator",
    },
    {
        "NAME": "django.contrib.auth.password_validation.NumericPasswordValidator",
    },
]


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)

STATIC_URL = "static/"

# Default primary key field type

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# REST framework: the results API is read-only JSON.

REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": ["rest_framework.renderers.JSONRenderer"],
}


# Logging

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "symbolic": {
            "handlers": ["console"],
            "level": os.environ.get("SYMBOLIC_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# Search engine defaults. Experiment configs override these per run.

SYMBOLIC_SEARCH = {
    "BATCH_SIZE": 500,
    "MAX_ITERATIONS": 2000,
    "LEARNING_RATE": 5e-4,
    "RISK_QUANTILE": 0.1,
    "ENTROPY_WEIGHT": 5e-3,
    "HIDDEN_WIDTH": 32,
    "CELL": "gru",
    "MAX_LENGTH": 32,
    "SOFT_LENGTH_LOC": 10,
    "SOFT_LENGTH_SCALE": 5,
    "RECOVERY_THRESHOLD": 1e-12,
    "ENUMERATION_LIMIT": 10**6,
    "RESULTS_DIR": BASE_DIR / "results",
    "REGISTRY_PATH": BASE_DIR / "symbolic" / "data" / "nguyen.json",
    "PRESETS_DIR": BASE_DIR / "symbolic" / "data" / "presets",
    "WORKERS": int(os.environ.get("SYMBOLIC_WORKERS", "1")),
}
