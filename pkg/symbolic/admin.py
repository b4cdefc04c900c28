from django.contrib import admin
from .models import ExperimentRun, RunResult

@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('id', 'name', 'method', 'config_hash', 'created_at')
    list_filter = ('method', 'created_at')
    search_fields = ('name', 'config_hash')
    date_hierarchy = 'created_at'

@admin.register(RunResult)
class RunResultAdmin(admin.ModelAdmin):
    list_display = ('id', 'experiment', 'benchmark', 'seed', 'solved', 'steps_to_solve', 'best_reward')
    list_filter = ('solved', 'benchmark')
    search_fields = ('benchmark', 'best_infix', 'experiment__name')
    raw_id_fields = ('experiment',)
