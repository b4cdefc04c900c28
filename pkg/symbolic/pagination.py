from rest_framework.pagination import PageNumberPagination


class RunResultPagination(PageNumberPagination):
    """One page per experiment-sized block of runs (12 benchmarks x 5 seeds)."""
    page_size = 60
    page_size_query_param = 'page_size'
    max_page_size = 1000
