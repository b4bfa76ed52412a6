from django.db import models
from django.utils.crypto import get_random_string
from django.utils.text import slugify
from django.utils.translation import gettext_lazy as _


class BaseModel(models.Model):
    """Vaqt belgilari bilan abstrakt asosiy model."""
    created_at = models.DateTimeField(
        auto_now_add=True,
        verbose_name=_("Yaratilgan vaqt"),
        help_text=_("Yozuv yaratilgan sana va vaqt")
    )
    updated_at = models.DateTimeField(
        auto_now=True,
        verbose_name=_("Yangilangan vaqt"),
        help_text=_("Yozuv oxirgi marta o‘zgartirilgan sana va vaqt")
    )

    class Meta:
        abstract = True


class RunRecord(BaseModel):
    """Bitta buyruq chaqiruvi: nima ishga tushdi, qaysi urug‘ va konfiguratsiya bilan, qanday tugadi."""
    STATUS_CHOICES = [
        ('running', _('Bajarilmoqda')),
        ('ok', _('Muvaffaqiyatli')),
        ('config_error', _('Konfiguratsiya xatosi')),
        ('io_error', _('Kiritish/chiqarish xatosi')),
        ('numerical_error', _('Hisoblash xatosi')),
    ]
    EXIT_STATUS = {0: 'ok', 1: 'config_error', 2: 'io_error', 3: 'numerical_error'}

    command = models.CharField(
        max_length=32,
        verbose_name=_("Buyruq"),
        db_index=True
    )
    slug = models.SlugField(
        max_length=64,
        unique=True,
        blank=True,
        verbose_name=_("Slug")
    )
    seed = models.DecimalField(
        max_digits=20,
        decimal_places=0,
        null=True,
        blank=True,
        verbose_name=_("Urug‘ qiymati"),
        help_text=_("Generator urug‘i, 0 <= urug‘ < 2**64")
    )
    config = models.JSONField(
        default=dict,
        blank=True,
        verbose_name=_("Konfiguratsiya")
    )
    outputs = models.JSONField(
        default=dict,
        blank=True,
        verbose_name=_("Natijalar"),
        help_text=_("Yozilgan fayllar va yakuniy qiymatlar")
    )
    status = models.CharField(
        max_length=20,
        choices=STATUS_CHOICES,
        default='running',
        verbose_name=_("Holat")
    )
    exit_code = models.PositiveSmallIntegerField(
        null=True,
        blank=True,
        verbose_name=_("Chiqish kodi")
    )
    message = models.TextField(
        blank=True,
        verbose_name=_("Xabar")
    )

    class Meta:
        verbose_name = _("Ishga tushirish")
        verbose_name_plural = _("Ishga tushirishlar")
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['command', 'status']),
        ]

    def save(self, *args, **kwargs):
        if not self.slug:
            self.slug = self._generate_unique_slug()
        super().save(*args, **kwargs)

    def _generate_unique_slug(self):
        slug = slugify(f"{self.command}-{self.seed if self.seed is not None else 'noseed'}")
        original_slug = slug
        while RunRecord.objects.filter(slug=slug).exclude(pk=self.pk).exists():
            slug = f"{original_slug}-{get_random_string(6).lower()}"
        return slug

    def __str__(self):
        return f"{self.command} #{self.pk} ({self.status})"

    def finish(self, exit_code, outputs=None, message=''):
        """Chiqish kodi, holat va natijalarni saqlaydi."""
        self.exit_code = exit_code
        self.status = self.EXIT_STATUS.get(exit_code, 'numerical_error')
        if outputs:
            self.outputs = outputs
        self.message = message
        self.save(update_fields=['exit_code', 'status', 'outputs', 'message', 'updated_at'])


class PredictabilityRecord(BaseModel):
    """``report`` chiqaradigan bashorat qilinuvchanlik jadvalining bitta katagi."""
    DISTRUST_CHOICES = [
        ('ordinary', _('Oddiy')),
        ('digitizer-paranoid', _('Raqamlashtirgichga ishonchsiz')),
        ('fully-paranoid', _('To‘liq ishonchsiz')),
    ]

    run = models.ForeignKey(
        RunRecord,
        on_delete=models.CASCADE,
        null=True,
        blank=True,
        related_name="predictability",
        verbose_name=_("Ishga tushirish")
    )
    distrust = models.CharField(
        max_length=20,
        choices=DISTRUST_CHOICES,
        verbose_name=_("Ishonchsizlik darajasi")
    )
    k = models.PositiveIntegerField(verbose_name=_("Har bir chiqish bitiga xom bitlar"))
    n_sigmas = models.PositiveIntegerField(default=6, verbose_name=_("Ishonch koeffitsienti"))
    sigma_vc = models.FloatField(verbose_name=_("v_c ning sigmasi (mV)"))
    vc_bound = models.FloatField(verbose_name=_("v_c chegarasi (mV)"))
    epsilon_max = models.FloatField(verbose_name=_("Bir bitdagi ortiqcha bashorat qilinuvchanlik"))
    epsilon_max_k = models.FloatField(verbose_name=_("Ajratishdan keyingi ortiqcha bashorat qilinuvchanlik"))
    tail_fraction = models.FloatField(verbose_name=_("Dum ulushi"))
    freshness_low = models.FloatField(null=True, blank=True, verbose_name=_("Yangilik quyi chegarasi (ns)"))
    freshness_high = models.FloatField(null=True, blank=True, verbose_name=_("Yangilik yuqori chegarasi (ns)"))

    class Meta:
        verbose_name = _("Bashorat qilinuvchanlik chegarasi")
        verbose_name_plural = _("Bashorat qilinuvchanlik chegaralari")
        ordering = ['created_at', 'id']
        indexes = [
            models.Index(fields=['distrust', 'k']),
        ]

    def __str__(self):
        return f"{self.distrust} k={self.k}: {self.epsilon_max_k:.2g}"

    @classmethod
    def from_report(cls, report, run=None):
        freshness = report.freshness_ns
        return cls(
            run=run,
            distrust=report.distrust.value if report.distrust else 'ordinary',
            k=report.k,
            n_sigmas=report.confidence_sigmas,
            sigma_vc=report.sigma_vc,
            vc_bound=report.vc_bound,
            epsilon_max=report.epsilon_max,
            epsilon_max_k=report.epsilon_max_k,
            tail_fraction=report.tail_fraction,
            freshness_low=freshness.lower if freshness else None,
            freshness_high=freshness.upper if freshness else None,
        )

    @classmethod
    def table_rows(cls, queryset=None):
        """Jadval ko‘rinishidagi (distrust, sigma_vc, {k: (epsilon_max_k, freshness_high)}) qatorlari."""
        queryset = cls.objects.all() if queryset is None else queryset
        rows = {}
        for record in queryset.order_by('created_at', 'id'):
            row = rows.setdefault(record.distrust, {'sigma_vc': record.sigma_vc, 'cells': {}})
            row['cells'][record.k] = (record.epsilon_max_k, record.freshness_high)
        return [(distrust, row['sigma_vc'], row['cells']) for distrust, row in rows.items()]
