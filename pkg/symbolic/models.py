from django.db import models


class ExperimentRun(models.Model):
    """One experiment config, identified by the hash of its JSON."""

    config_hash = models.CharField(max_length=64, unique=True)
    name = models.CharField(max_length=200)
    method = models.CharField(max_length=32)
    config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        indexes = [
            models.Index(fields=['name', 'method'], name='symbolic_ex_name_0f3c2a_idx'),
            models.Index(fields=['created_at'], name='symbolic_ex_created_8d41b7_idx'),
        ]

    def __str__(self):
        return f"{self.name} ({self.method})"

    @classmethod
    def for_config(cls, config):
        run, _ = cls.objects.get_or_create(
            config_hash=config.config_hash,
            defaults={'name': config.name, 'method': config.method, 'config': config.raw},
        )
        return run


class RunResult(models.Model):
    experiment = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='results')
    benchmark = models.CharField(max_length=100)
    seed = models.PositiveIntegerField()
    solved = models.BooleanField(default=False)
    steps_to_solve = models.PositiveIntegerField()
    max_iterations = models.PositiveIntegerField()
    best_reward = models.FloatField()
    best_expression = models.JSONField(default=list)
    best_infix = models.TextField(blank=True)
    reward_trace = models.JSONField(default=list)
    wall_time = models.FloatField(default=0.0)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        indexes = [
            models.Index(fields=['experiment', 'benchmark'], name='symbolic_ru_experim_5a9e10_idx'),
            models.Index(fields=['solved'], name='symbolic_ru_solved_c27f64_idx'),
        ]

    def __str__(self):
        status = 'solved' if self.solved else 'unsolved'
        return f"{self.benchmark} seed {self.seed}: {status} at {self.steps_to_solve}"

    @classmethod
    def from_record(cls, experiment, record):
        return cls.objects.create(
            experiment=experiment,
            benchmark=record.benchmark,
            seed=record.seed,
            solved=record.solved,
            steps_to_solve=record.steps_to_solve,
            max_iterations=record.max_iterations,
            best_reward=record.best_reward,
            best_expression=record.best_expression,
            best_infix=record.best_infix,
            reward_trace=record.reward_trace,
            wall_time=record.wall_time,
        )
