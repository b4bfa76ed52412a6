from django.apps import AppConfig


class QrngConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'qrng'
    verbose_name = 'Phase-diffusion RNG'
