from dataclasses import asdict

from django.core.exceptions import FieldError, ValidationError
from django.db.models import Avg, Count, F, Q
from rest_framework.response import Response
from rest_framework.views import APIView

from .exceptions import ConfigError
from .models import RunResult
from .pagination import RunResultPagination
from .sr_task import load_registry
from .utils import apply_dynamic_filters

RESULT_FIELDS = (
    'id', 'benchmark', 'seed', 'solved', 'steps_to_solve', 'max_iterations',
    'best_reward', 'best_expression', 'best_infix', 'wall_time',
)


class RunResultList(APIView):
    """
    Persisted run results.

    Query Parameters:
        - page, page_size (optional): pagination (60 per page, max 1000)
        - range (optional): 'week', 'month' or 'year'
        - Dynamic filters supported (e.g., benchmark=Nguyen-1, not__solved=true,
          experiment__name__icontains=all)

    Returns:
        Paginated list of run results with their experiment name and method
    """
    pagination_class = RunResultPagination

    def get(self, request):
        queryset = RunResult.objects.select_related('experiment').order_by('id')
        try:
            queryset = apply_dynamic_filters(queryset, request.query_params)
            data = list(queryset.values(
                *RESULT_FIELDS,
                experiment_name=F('experiment__name'),
                method=F('experiment__method'),
            ))
        except (FieldError, ValidationError, ValueError) as exc:
            return Response({"error": f"Invalid filter: {exc}"}, status=400)

        paginator = self.pagination_class()
        page = paginator.paginate_queryset(data, request, view=self)
        return paginator.get_paginated_response(page)


class RecoverySummary(APIView):
    """
    Recovery rate and mean steps to solve.

    Query Parameters:
        - group (optional): 'experiment' (default) or 'benchmark'
        - Dynamic filters supported

    Returns:
        List of {label, method, runs, solved, recovery_rate, mean_steps};
        unsolved runs count at their iteration cap.
    """
    def get(self, request):
        group = request.query_params.get('group', 'experiment')
        if group == 'experiment':
            label = F('experiment__name')
        elif group == 'benchmark':
            label = F('benchmark')
        else:
            return Response({"error": "Invalid group"}, status=400)

        queryset = RunResult.objects.select_related('experiment')
        try:
            queryset = apply_dynamic_filters(queryset, request.query_params, exclude_keys=['group'])
            rows = queryset.values(label=label, method=F('experiment__method')).annotate(
                runs=Count('id'),
                solved=Count('id', filter=Q(solved=True)),
                mean_steps=Avg('steps_to_solve'),
            ).order_by('label', 'method')
            rows = list(rows)
        except (FieldError, ValidationError, ValueError) as exc:
            return Response({"error": f"Invalid filter: {exc}"}, status=400)

        for row in rows:
            row['recovery_rate'] = row['solved'] / row['runs']
        return Response(rows)


class BenchmarkList(APIView):
    """Registered benchmark definitions."""

    def get(self, request):
        try:
            registry = load_registry()
        except ConfigError as exc:
            return Response({"error": str(exc)}, status=500)
        data = [
            {
                'name': benchmark.name,
                'description': benchmark.description,
                'expression': benchmark.expression,
                'operators': benchmark.operators,
                'domains': [asdict(domain) for domain in benchmark.domains],
            }
            for benchmark in registry.values()
        ]
        return Response(data)
