"""
YAML configuration files.

A configuration file is a single YAML document with any of the sections
scenario, model, oracle and train. Each section holds the fields of the
matching dataclass; anything left out keeps its default. For example:

    scenario:
      n_t: 4
      p_max_dbm: 30
    train:
      epochs: 5
      head: beam_direct
"""

from dataclasses import dataclass, field, replace
from importlib.resources import files
from pathlib import Path

import yamale

from rispls.baselines import OracleConfig
from rispls.channel import ScenarioConfig
from rispls.errors import ConfigurationError
from rispls.model import ModelConfig
from rispls.training import TrainConfig


@dataclass
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def override(self, section: str, **changes) -> None:
        """Replace fields of one section, skipping values that are None."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if changes:
            setattr(self, section, replace(getattr(self, section), **changes))


def load_config(filename: str | None = None, content: str | None = None):
    """Load a Config from a file or a string; neither gives the defaults."""
    if filename is not None:
        data = yamale.make_data(path=Path(filename))
    elif content is not None:
        data = yamale.make_data(content=content)
    else:
        return Config()

    schema = yamale.make_schema(
        content=files("rispls.resources")
        .joinpath("config_schema.yaml")
        .read_text()
    )
    data = list(data)
    if len(data) > 1:
        raise ConfigurationError(
            "Configuration files must only contain one document."
        )
    if not data or data[0][0] is None:
        return Config()
    try:
        yamale.validate(schema, data)
    except yamale.YamaleError as e:
        raise ConfigurationError(str(e)) from None
    data = data[0][0]

    return Config(
        ScenarioConfig(**data.get("scenario", {})),
        ModelConfig(**data.get("model", {})),
        OracleConfig(**data.get("oracle", {})),
        TrainConfig(**data.get("train", {})),
    )
