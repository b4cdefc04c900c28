"""
WSGI config for insitu_project project.

Serves the read-only results API (``/symbolic/``) and the admin.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "insitu_project.settings")

application = get_wsgi_application()
