from django.apps import AppConfig


class PredistortionConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "predistortion"
    verbose_name = "Digital predistortion experiments"
