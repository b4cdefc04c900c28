from django.urls import path
from .views import BenchmarkList, RecoverySummary, RunResultList

urlpatterns = [
    path('runs/', RunResultList.as_view(), name='runs'),
    path('summary/', RecoverySummary.as_view(), name='summary'),
    path('benchmarks/', BenchmarkList.as_view(), name='benchmarks'),
]
