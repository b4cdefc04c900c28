# Generated by Django 5.2.9 on 2026-10-19 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("config_hash", models.CharField(max_length=64, unique=True)),
                ("name", models.CharField(max_length=200)),
                ("method", models.CharField(max_length=32)),
                ("config", models.JSONField(default=dict)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "indexes": [
                    models.Index(
                        fields=["name", "method"], name="symbolic_ex_name_0f3c2a_idx"
                    ),
                    models.Index(
                        fields=["created_at"], name="symbolic_ex_created_8d41b7_idx"
                    ),
                ],
            },
        ),
        migrations.CreateModel(
            name="RunResult",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("benchmark", models.CharField(max_length=100)),
                ("seed", models.PositiveIntegerField()),
                ("solved", models.BooleanField(default=False)),
                ("steps_to_solve", models.PositiveIntegerField()),
                ("max_iterations", models.PositiveIntegerField()),
                ("best_reward", models.FloatField()),
                ("best_expression", models.JSONField(default=list)),
                ("best_infix", models.TextField(blank=True)),
                ("reward_trace", models.JSONField(default=list)),
                ("wall_time", models.FloatField(default=0.0)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                (
                    "experiment",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="results",
                        to="symbolic.experimentrun",
                    ),
                ),
            ],
            options={
                "indexes": [
                    models.Index(
                        fields=["experiment", "benchmark"],
                        name="symbolic_ru_experim_5a9e10_idx",
                    ),
                    models.Index(fields=["solved"], name="symbolic_ru_solved_c27f64_idx"),
                ],
            },
        ),
    ]
