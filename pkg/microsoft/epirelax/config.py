# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Loading of experiment configurations, profile specs and density tables."""

import hashlib
import logging
import numpy as np
import tomllib
from dataclasses import dataclass
from microsoft.epirelax.adatom import AdatomMeasure, build_measure
from microsoft.epirelax.elastic import ElasticityTensor
from microsoft.epirelax.envelope import SurfaceDensity, surface_density_from_config
from microsoft.epirelax.errors import ConfigError
from microsoft.epirelax.models import ExperimentConfig, ProfileSpec, SurfaceDensityKind
from microsoft.epirelax.profile import Profile, decompose, profile_from_spec
from pathlib import Path
from pydantic import BaseModel, ValidationError
from typing import Any, Dict, Optional, Tuple, Type, TypeVar, Union


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ModelT = TypeVar('ModelT', bound=BaseModel)


def describe_validation_error(exc: ValidationError) -> str:
    """One line per failing field, `loc: message`."""
    lines = []
    for error in exc.errors():
        loc = '.'.join(str(part) for part in error['loc']) or '<root>'
        lines.append(f'{loc}: {error["msg"]}')
    return '; '.join(lines)


def _read_toml(path: Path) -> Tuple[Dict[str, Any], bytes]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f'cannot read {path}: {exc.strerror or exc}') from exc
    try:
        return tomllib.loads(raw.decode('utf-8')), raw
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f'{path}: {exc}') from exc


def _validate(model: Type[ModelT], data: Dict[str, Any], path: Path) -> ModelT:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f'{path}: {describe_validation_error(exc)}') from exc


@dataclass(frozen=True)
class LoadedConfig:
    """A validated configuration with its location and hash.

    Attributes:
        config: The validated configuration.
        path: The configuration file.
        config_hash: SHA-256 of the raw file bytes.
    """

    config: ExperimentConfig
    path: Path
    config_hash: str

    @property
    def base_dir(self) -> Path:
        """Directory relative paths are resolved against."""
        return self.path.parent

    def resolve(self, relative: PathLike) -> Path:
        """Resolve a path from the configuration and check that it exists.

        Raises:
            ConfigError: The file does not exist.
        """
        path = Path(relative)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f'referenced file not found: {path}')
        return path


def load_config(path: PathLike) -> LoadedConfig:
    """Read and validate an experiment configuration.

    Raises:
        ConfigError: The file is unreadable, is not TOML, fails validation or refers to
            missing files.
    """
    path = Path(path)
    data, raw = _read_toml(path)
    config = _validate(ExperimentConfig, data, path)
    loaded = LoadedConfig(config=config, path=path, config_hash=hashlib.sha256(raw).hexdigest())
    loaded.resolve(config.profile)
    if config.surface_density.kind is SurfaceDensityKind.TABLE:
        loaded.resolve(config.surface_density.table)
    logger.debug('loaded %s (sha256 %s)', path, loaded.config_hash)
    return loaded


def load_profile_spec(path: PathLike) -> ProfileSpec:
    """Read a profile spec file."""
    path = Path(path)
    data, _ = _read_toml(path)
    return _validate(ProfileSpec, data, path)


def load_profile(path: PathLike) -> Profile:
    """Read a profile spec file and build the profile it describes."""
    return profile_from_spec(load_profile_spec(path))


def load_table(path: PathLike) -> np.ndarray:
    """Read a surface density table: header `s,value`, then numeric rows.

    Raises:
        ConfigError: The file cannot be parsed, its header is not `s,value` or it does
            not have two columns.
    """
    try:
        with open(path, encoding='utf-8') as f:
            header = f.readline()
    except OSError as exc:
        raise ConfigError(f'cannot read density table {path}: {exc}') from exc
    if [name.strip() for name in header.split(',')] != ['s', 'value']:
        raise ConfigError(f'density table {path} must start with the header `s,value`, found {header.strip()!r}')
    try:
        rows = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2, comments='#')
    except (OSError, ValueError) as exc:
        raise ConfigError(f'cannot read density table {path}: {exc}') from exc
    if rows.shape[1] != 2:
        raise ConfigError(f'density table {path} must have two columns, found {rows.shape[1]}')
    return rows


@dataclass(frozen=True, eq=False)
class Experiment:
    """Everything an experiment needs, built from a configuration file.

    Attributes:
        loaded: The configuration with its hash.
        profile: Target profile.
        psi: Surface density.
        measure: Target adatom measure.
        tensor: Elasticity tensor, when configured.
    """

    loaded: LoadedConfig
    profile: Profile
    psi: SurfaceDensity
    measure: AdatomMeasure
    tensor: Optional[ElasticityTensor]

    @property
    def config(self) -> ExperimentConfig:
        """The validated configuration."""
        return self.loaded.config


def load_experiment(path: PathLike) -> Experiment:
    """Load a configuration and build its profile, surface density and measure."""
    loaded = load_config(path)
    config = loaded.config
    profile = load_profile(loaded.resolve(config.profile))
    table = None
    if config.surface_density.kind is SurfaceDensityKind.TABLE:
        table = load_table(loaded.resolve(config.surface_density.table))
    psi = surface_density_from_config(config.surface_density, table)
    measure = build_measure(decompose(profile), config.measure.densities, config.measure.atoms)
    tensor = None
    if config.elasticity is not None:
        el = config.elasticity
        tensor = ElasticityTensor(el.lam, el.mu, el.t)
    return Experiment(loaded, profile, psi, measure, tensor)
