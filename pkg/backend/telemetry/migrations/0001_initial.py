# Generated by Django 5.1.6 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='PipelineRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_type', models.CharField(choices=[('run', 'Run'), ('simulate', 'Simulate'), ('profile', 'Profile'), ('graph_export', 'Graph export')], max_length=20, verbose_name='run type')),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20, verbose_name='status')),
                ('config_hash', models.CharField(blank=True, max_length=64, verbose_name='config hash')),
                ('input_digest', models.CharField(blank=True, max_length=64, verbose_name='input digest')),
                ('seed', models.BigIntegerField(blank=True, null=True, verbose_name='seed')),
                ('summary', models.JSONField(blank=True, default=dict, verbose_name='summary')),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'verbose_name': 'pipeline run',
                'verbose_name_plural': 'pipeline runs',
                'ordering': ['-started_at', '-id'],
            },
        ),
    ]
