# Generated by Django 5.1.6 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EventSignature',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('signature_id', models.CharField(max_length=32, unique=True, verbose_name='signature id')),
                ('participants', models.JSONField(default=list, verbose_name='participants')),
                ('magnitude_band', models.IntegerField(verbose_name='magnitude band')),
                ('occurrences', models.PositiveIntegerField(default=0, verbose_name='occurrences')),
                ('last_seen', models.IntegerField(blank=True, null=True, verbose_name='last seen bin')),
                ('operator_objection', models.BooleanField(default=False, verbose_name='operator objection')),
                ('no_interest', models.BooleanField(default=False, verbose_name='no interest')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'event signature',
                'verbose_name_plural': 'event signatures',
                'ordering': ['created_at', 'id'],
            },
        ),
    ]
