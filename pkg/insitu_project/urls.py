"""
URL configuration for insitu_project project.

The engine itself is driven from management commands; HTTP only exposes
persisted experiment results:

    /admin/                 Django admin over ExperimentRun / RunResult
    /symbolic/runs/         paginated run results with dynamic filters
    /symbolic/summary/      recovery rate and steps-to-solve per group
    /symbolic/benchmarks/   registered benchmark definitions
"""

from django.contrib import admin
from django.urls import path, include

urlpatterns = [
    path("admin/", admin.site.urls),
    path("symbolic/", include("symbolic.urls")),
]
