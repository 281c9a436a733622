from django.apps import AppConfig


class TimeseriesConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'timeseries'
    verbose_name = 'Time-Series Kernels'
