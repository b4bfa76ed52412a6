from django import forms
from django.utils.translation import gettext_lazy as _

from .domain import DistrustLevel, HangoverMode, PhaseMode
from .pipeline import MIN_BENCH_BITS
from .stats import EXPORT_FORMATS

DISTRUST_CHOICES = [(level.value, level.label) for level in DistrustLevel] + [('all', _('Barcha darajalar'))]
STAGE_CHOICES = [
    ('raw', _('Xom bitlar d')),
    ('extracted', _('Ajratilgan bitlar x')),
    ('distilled', _('Distillangan bitlar z')),
]
FORMAT_CHOICES = [(name, name) for name in EXPORT_FORMATS]
TRACE_FORMAT_CHOICES = [('csv', 'csv'), ('f32', 'f32')]


class IntegerListField(forms.CharField):
    """Vergul bilan ajratilgan musbat butun sonlar, masalan ``4,6``."""

    def to_python(self, value):
        value = super().to_python(value)
        if isinstance(value, (list, tuple)):
            return [int(item) for item in value]
        if not value:
            return []
        try:
            items = [int(item) for item in str(value).split(',') if item.strip()]
        except ValueError:
            raise forms.ValidationError(_("Vergul bilan ajratilgan butun sonlarni kiriting."))
        if any(item < 1 for item in items):
            raise forms.ValidationError(_("Har bir qiymat kamida 1 bo‘lishi kerak."))
        return items


class CommonForm(forms.Form):
    """Barcha buyruqlar qabul qiladigan parametrlar."""
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1, required=False, label=_("Urug‘ qiymati"))
    workers = forms.IntegerField(min_value=0, required=False, label=_("Ishchi oqimlar"))
    config = forms.CharField(required=False, label=_("Konfiguratsiya fayli"))

    def violations(self):
        return [f"--{field.replace('_', '-')}: {error}" for field, errors in self.errors.items() for error in errors]


class SimulateForm(CommonForm):
    bits = forms.IntegerField(required=False, label=_("Impulslar soni"))
    out = forms.CharField(required=False, label=_("Bit fayli"))
    k = forms.IntegerField(min_value=1, required=False, initial=1, label=_("Distillash koeffitsienti"))
    stage = forms.ChoiceField(choices=STAGE_CHOICES, required=False, label=_("Yoziladigan bosqich"))
    stdout_raw = forms.BooleanField(required=False)
    phase_mode = forms.ChoiceField(choices=[(mode.value, mode.value) for mode in PhaseMode], required=False)
    hangover_mode = forms.ChoiceField(choices=[(mode.value, mode.value) for mode in HangoverMode], required=False)
    bias = forms.FloatField(min_value=-0.999999, max_value=0.999999, required=False, label=_("Maqsadli og‘ish"))
    vref_offset = forms.FloatField(required=False)
    no_feedback = forms.BooleanField(required=False)
    pulses_csv = forms.CharField(required=False)
    samples_f32 = forms.CharField(required=False)
    analog_pulses = forms.IntegerField(min_value=1, required=False)
    interrupted_train = forms.IntegerField(min_value=3, required=False, label=_("Ketma-ketlik uzunligi"))
    scope_sigma = forms.FloatField(min_value=0.0, required=False)
    transition_csv = forms.CharField(required=False)
    transition_pulses = forms.IntegerField(min_value=1, required=False)
    splitter_sigma = forms.FloatField(min_value=0.0, required=False)

    def clean_bits(self):
        bits = self.cleaned_data.get('bits')
        if bits is not None and bits < 1:
            raise forms.ValidationError(_("Kamida bitta impuls kerak."))
        return bits

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('stdout_raw') and cleaned_data.get('out'):
            raise forms.ValidationError(_("--out va --stdout-raw birga ishlatilmaydi."))
        return cleaned_data


class ExtractForm(CommonForm):
    input = forms.CharField(label=_("Xom bitlar fayli"))
    out = forms.CharField(required=False)
    k = forms.IntegerField(min_value=1, required=False, initial=1)
    x0 = forms.IntegerField(min_value=0, max_value=1, required=False, initial=0)
    stdout_raw = forms.BooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        if not cleaned_data.get('out') and not cleaned_data.get('stdout_raw'):
            raise forms.ValidationError(_("--out yoki --stdout-raw ni ko‘rsating."))
        return cleaned_data


class ReportForm(CommonForm):
    distrust = forms.ChoiceField(choices=DISTRUST_CHOICES, required=False)
    k = IntegerListField(required=False)
    sigmas = forms.IntegerField(min_value=1, required=False)
    csv = forms.CharField(required=False)
    p1_mean = forms.FloatField(required=False)
    samples = forms.CharField(required=False)
    bin_width = forms.FloatField(required=False)
    jitter_tail = forms.FloatField(min_value=0.0, max_value=1.0, required=False)
    jitter_traces = forms.IntegerField(min_value=1, required=False)
    jitter_observed = forms.IntegerField(min_value=0, required=False)

    def clean_p1_mean(self):
        p1_mean = self.cleaned_data.get('p1_mean')
        if p1_mean is not None and not 0.0 < p1_mean < 1.0:
            raise forms.ValidationError(_("Xom bitlar o‘rtachasi 0 va 1 oralig‘ida bo‘lishi kerak."))
        return p1_mean

    def clean_bin_width(self):
        bin_width = self.cleaned_data.get('bin_width')
        if bin_width is not None and bin_width <= 0:
            raise forms.ValidationError(_("Interval kengligi musbat bo‘lishi kerak."))
        return bin_width


class AutocorrForm(CommonForm):
    input = forms.CharField()
    kmax = forms.IntegerField(min_value=1, required=False)
    out = forms.CharField(required=False)
    epsilon = forms.FloatField(min_value=0.0, max_value=1.0, required=False)


class BatteryForm(CommonForm):
    input = forms.CharField()
    sequences = forms.IntegerField(min_value=1, required=False)


class HeterodyneForm(CommonForm):
    input = forms.CharField(required=False)
    trace_format = forms.ChoiceField(choices=TRACE_FORMAT_CHOICES, required=False)
    diffusion = forms.FloatField(min_value=0.0, required=False)
    damping = forms.FloatField(min_value=0.0, required=False)
    equilibrium = forms.FloatField(min_value=0.0, required=False)
    noise_sigma = forms.FloatField(min_value=0.0, required=False)
    samples = forms.IntegerField(min_value=1000, required=False)
    process_noise = forms.FloatField(required=False)
    measurement_noise = forms.FloatField(required=False)
    dt_ps = forms.FloatField(required=False)
    bins = forms.IntegerField(min_value=1, required=False)
    min_pairs = forms.IntegerField(min_value=1, required=False)
    out = forms.CharField(required=False)
    forward_only = forms.BooleanField(required=False)

    def clean_process_noise(self):
        value = self.cleaned_data.get('process_noise')
        if value is not None and value <= 0:
            raise forms.ValidationError(_("Jarayon shovqini musbat bo‘lishi kerak."))
        return value

    def clean_measurement_noise(self):
        value = self.cleaned_data.get('measurement_noise')
        if value is not None and value <= 0:
            raise forms.ValidationError(_("O‘lchash shovqini musbat bo‘lishi kerak."))
        return value

    def clean_dt_ps(self):
        value = self.cleaned_data.get('dt_ps')
        if value is not None and value <= 0:
            raise forms.ValidationError(_("Kechikish musbat bo‘lishi kerak."))
        return value


class BenchForm(CommonForm):
    bits = forms.IntegerField(min_value=1, required=False)
    repeat = forms.IntegerField(min_value=1, required=False)
    allow_small = forms.BooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        bits = cleaned_data.get('bits')
        if bits is not None and bits < MIN_BENCH_BITS and not cleaned_data.get('allow_small'):
            raise forms.ValidationError(
                _("Sinov uchun kamida %(minimum)d bit kerak; tezkor sinov uchun --allow-small bering."),
                params={'minimum': MIN_BENCH_BITS},
            )
        return cleaned_data


class ExportForm(CommonForm):
    input = forms.CharField()
    format = forms.ChoiceField(choices=FORMAT_CHOICES, required=False)
    out = forms.CharField(required=False)
    stdout_raw = forms.BooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        if not cleaned_data.get('out') and not cleaned_data.get('stdout_raw'):
            raise forms.ValidationError(_("--out yoki --stdout-raw ni ko‘rsating."))
        if cleaned_data.get('out') and not cleaned_data.get('format'):
            raise forms.ValidationError(_("--out uchun --format kerak."))
        return cleaned_data
