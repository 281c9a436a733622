from django.apps import AppConfig


class MetamodelConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'metamodel'
    verbose_name = 'Symbolic Metamodel'
