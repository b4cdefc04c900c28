"""Access to the ``SYMBOLIC_SEARCH`` settings dict with built-in fallbacks."""

from pathlib import Path

from django.conf import settings

_APP_DIR = Path(__file__).resolve().parent

DEFAULTS = {
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
    "RESULTS_DIR": Path("results"),
    "REGISTRY_PATH": _APP_DIR / "data" / "nguyen.json",
    "PRESETS_DIR": _APP_DIR / "data" / "presets",
    "WORKERS": 1,
}


def search_setting(name):
    """Return ``settings.SYMBOLIC_SEARCH[name]``, falling back to DEFAULTS."""
    configured = getattr(settings, "SYMBOLIC_SEARCH", {})
    if name in configured:
        return configured[name]
    return DEFAULTS[name]
