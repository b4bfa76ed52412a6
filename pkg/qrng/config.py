"""Structured configuration file.

The file is JSON with one nested section per value type::

    {
      "comparator": {...},
      "noise": {...},
      "phase": {...},
      "simulation": {...},
      "timing": {...}
    }

Missing sections and keys take the measured defaults; unknown keys are errors.
``dump_config`` is canonical (sorted keys, two-space indent, trailing newline),
so a dumped file loads and dumps back to the same bytes.
"""
import json
import logging
from pathlib import Path

from django.conf import settings
from pydantic import Field, ValidationError

from .domain import (
    ComparatorSettings,
    FrozenModel,
    NoiseModel,
    PhaseProcess,
    SimConfig,
    TimingBudget,
    default_noise_model,
    require_valid,
)
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

CONFIG_FILENAME = 'qrng.json'


class GeneratorConfig(FrozenModel):
    simulation: SimConfig = Field(default_factory=SimConfig)
    noise: NoiseModel = Field(default_factory=default_noise_model)
    phase: PhaseProcess = Field(default_factory=PhaseProcess)
    timing: TimingBudget = Field(default_factory=TimingBudget)
    comparator: ComparatorSettings = Field(default_factory=ComparatorSettings)

    @property
    def phase_process(self):
        """Phase parameters with the mode chosen in the simulation section."""
        return self.phase.model_copy(update={'mode': self.simulation.phase_mode})

    def with_simulation(self, **changes):
        changes = {key: value for key, value in changes.items() if value is not None}
        return self.model_copy(update={'simulation': self.simulation.model_copy(update=changes)})

    def validated(self):
        require_valid(self.simulation, self.noise, self.phase_process, self.timing)
        return self


def _violations(exc):
    return [
        f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
        for error in exc.errors()
    ]


def loads_config(text):
    try:
        return GeneratorConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigurationError("invalid config file", _violations(exc)) from exc


def load_config(path):
    path = Path(path)
    logger.debug("loading config from %s", path)
    return loads_config(path.read_text(encoding='utf-8'))


def dump_config(config):
    return json.dumps(config.model_dump(mode='json'), indent=2, sort_keys=True) + '\n'


def save_config(config, path):
    Path(path).write_text(dump_config(config), encoding='utf-8')


def default_config_path():
    return Path(settings.QRNG_CONFIG_DIR) / CONFIG_FILENAME


def resolve_config(path=None):
    """Config from ``path``, else from the default config directory, else the defaults."""
    if path:
        return load_config(path)
    candidate = default_config_path()
    if candidate.is_file():
        return load_config(candidate)
    return GeneratorConfig()
