from datetime import timedelta

from django.db.models import Q
from django.utils import timezone

RANGES = {
    'week': timedelta(weeks=1),
    'month': timedelta(days=30),
    'year': timedelta(days=365),
}


def _coerce(value):
    lowered = value.lower() if isinstance(value, str) else value
    if lowered == 'true':
        return True
    if lowered == 'false':
        return False
    return value


def apply_dynamic_filters(queryset, params, exclude_keys=None):
    """
    Applies dynamic filters to a queryset based on request parameters.

    Args:
        queryset: Django QuerySet to filter
        params: Dictionary of filter parameters (e.g., request.query_params)
        exclude_keys: List of parameter keys to ignore

    Supported Filters:
        - Standard Django lookups: benchmark=Nguyen-1, best_reward__gte=0.9
        - NOT logic: not__solved=true
        - OR logic: or__benchmark=Nguyen-1, or__benchmark__icontains=12 (combined with OR)
        - Range: range=week/month/year (filters by created_at)

    'true'/'false' are passed to the ORM as booleans.

    Returns:
        Filtered QuerySet
    """
    exclude_keys = set(exclude_keys or []) | {'range', 'page', 'page_size'}

    filters = Q()
    or_filters = Q()

    for key, value in params.items():
        if key in exclude_keys:
            continue
        value = _coerce(value)
        if key.startswith('not__'):
            filters &= ~Q(**{key[len('not__'):]: value})
        elif key.startswith('or__'):
            or_filters |= Q(**{key[len('or__'):]: value})
        else:
            filters &= Q(**{key: value})

    if or_filters:
        filters &= or_filters

    window = RANGES.get(params.get('range'))
    if window is not None:
        queryset = queryset.filter(created_at__gte=timezone.now() - window)

    return queryset.filter(filters)
