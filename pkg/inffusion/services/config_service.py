"""
Experiment configuration files.

A TOML file with up to three flat sections::

    [train]
    lr = 1e-4
    epochs = 10
    seed = 0

    [network]
    spectral_depth = 2
    upsampler = "inf3"

    [fusion]
    d1 = 64
    weight_mode = "cosine"

Command-line flags override file values; a flag that disagrees with the file is
logged with both values, or rejected in strict mode.
"""
import logging
import os
from typing import Any, Dict, Optional

import pydantic
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource

from inffusion.errors import ConfigConflictError, MissingInputError, ValidationError
from inffusion.schemas.configs import TrainConfig

logger = logging.getLogger(__name__)

SECTIONS = ("train", "network", "fusion")


class ExperimentFile(BaseSettings):
    """Raw sections of an experiment file"""
    train: Dict[str, Any] = {}
    network: Dict[str, Any] = {}
    fusion: Dict[str, Any] = {}

    model_config = SettingsConfigDict(extra="forbid")


def read_experiment_file(path: str) -> Dict[str, Dict[str, Any]]:
    if not os.path.isfile(path):
        raise MissingInputError(f"config file not found: {path}", path=path)
    try:
        raw = TomlConfigSettingsSource(ExperimentFile, toml_file=path)()
        sections = ExperimentFile.model_validate(raw)
    except pydantic.ValidationError as e:
        raise ValidationError(f"{path}: {e.error_count()} invalid entr(y/ies)", path=path,
                              errors=[err["msg"] for err in e.errors()])
    except ValueError as e:
        # TOML syntax errors
        raise ValidationError(f"{path}: {e}", path=path)
    return {name: dict(getattr(sections, name)) for name in SECTIONS}


def merge_overrides(
    sections: Dict[str, Dict[str, Any]],
    overrides: Dict[str, Dict[str, Any]],
    strict: bool = False,
) -> Dict[str, Dict[str, Any]]:
    """Apply flag values section by section; None means the flag was not given"""
    merged = {name: dict(sections.get(name, {})) for name in SECTIONS}
    for section, values in overrides.items():
        for key, value in values.items():
            if value is None:
                continue
            current = merged[section].get(key)
            if current is not None and current != value:
                message = f"{section}.{key}: config file says {current!r}, flag says {value!r}"
                if strict:
                    raise ConfigConflictError(message, key=f"{section}.{key}",
                                              file_value=current, flag_value=value)
                logger.warning(f"{message}; using the flag")
            merged[section][key] = value
    return merged


def build_train_config(sections: Dict[str, Dict[str, Any]]) -> TrainConfig:
    try:
        network = dict(sections.get("network", {}))
        network["fusion"] = dict(sections.get("fusion", {}))
        return TrainConfig.model_validate({**sections.get("train", {}), "network": network})
    except pydantic.ValidationError as e:
        raise ValidationError(f"invalid training configuration: {e.error_count()} error(s)",
                              errors=[f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()])


def load_train_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Dict[str, Any]]] = None,
    strict: bool = False,
    defaults: Optional[Dict[str, Dict[str, Any]]] = None,
) -> TrainConfig:
    """Defaults, then the file, then flags"""
    sections = read_experiment_file(path) if path else {name: {} for name in SECTIONS}
    merged = merge_overrides(sections, overrides or {}, strict)
    layered = {name: {**(defaults or {}).get(name, {}), **merged[name]} for name in SECTIONS}
    cfg = build_train_config(layered)
    logger.debug(f"Training config: {cfg.model_dump(mode='json')}")
    return cfg
