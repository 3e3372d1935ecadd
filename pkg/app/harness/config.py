"""Sweep configuration and scenario files.

Values are merged with increasing precedence:
environment defaults < preset < config file < command-line overrides.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from pydantic import ValidationError

from app.core import settings
from app.core.channel import Scenario, make_link
from app.core.exceptions import ConfigError, ValidationException
from app.schemas.config import SweepConfig
from app.schemas.scenario import LinkDocument, ScenarioDocument, UserDocument

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def env_defaults() -> Dict[str, Any]:
    return {
        "trials": settings.DEFAULT_TRIALS,
        "seed": settings.DEFAULT_SEED,
        "geometry_draws": settings.DEFAULT_GEOMETRIES,
        "tol": settings.DEFAULT_TOL,
        "max_iter": settings.DEFAULT_MAX_ITER,
        "workers": settings.DEFAULT_WORKERS,
    }


def load_presets(path: Optional[PathLike] = None) -> Dict[str, Dict[str, Any]]:
    path = Path(path or settings.PRESETS_PATH)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read presets file {path}: {e}", details={"path": str(path)})
    return data.get("presets", {})


def read_key_values(path: PathLike) -> Dict[str, str]:
    """Parses `key = value` lines; `#` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}", details={"path": str(path)})
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value'", details={"line": raw})
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{number}: empty key", details={"line": raw})
        if key in values:
            raise ConfigError(f"{path}:{number}: duplicate key '{key}'", details={"key": key})
        values[key] = value
    return values


def _describe(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "config"
    if first["type"] == "extra_forbidden":
        message = f"unknown config key '{key}'"
    elif first["type"] == "missing":
        message = f"missing config key '{key}'"
    else:
        message = f"invalid value for '{key}': {first['msg']}"
    return ConfigError(message, details={"errors": [e["msg"] for e in error.errors()]})


def build_config(file_values: Optional[Mapping[str, Any]] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 presets_path: Optional[PathLike] = None) -> SweepConfig:
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    preset_name = overrides.get("preset", file_values.get("preset"))
    preset_values: Dict[str, Any] = {}
    if preset_name is not None:
        presets = load_presets(presets_path)
        if preset_name not in presets:
            raise ConfigError(f"unknown preset '{preset_name}'", details={"choices": sorted(presets)})
        preset_values = presets[preset_name]

    merged = {**env_defaults(), **preset_values, **file_values, **overrides}
    try:
        config = SweepConfig.model_validate(merged)
    except ValidationError as e:
        raise _describe(e)
    if config.scenario_file:
        load_scenario(config.scenario_file)
    logger.debug("sweep config: %s", config.model_dump())
    return config


def parse_config(path: PathLike, overrides: Optional[Mapping[str, Any]] = None) -> SweepConfig:
    return build_config(read_key_values(path), overrides)


# --- SCENARIO FILES ---

def scenario_from_document(doc: ScenarioDocument) -> Scenario:
    links = tuple(
        tuple(make_link(l.amplitudes, l.aod, l.aoa, doc.nt[j], user.nr) for j, l in enumerate(user.links))
        for user in doc.users
    )
    return Scenario(
        n_cells=doc.cells,
        serving=tuple(u.serving for u in doc.users),
        nt=tuple(doc.nt),
        nr=tuple(u.nr for u in doc.users),
        power=tuple(doc.power) if doc.power is not None else (1.0,) * doc.cells,
        weights=tuple(u.weight for u in doc.users),
        links=links,
        streams=tuple(u.streams for u in doc.users),
    )


def document_from_scenario(scenario: Scenario) -> ScenarioDocument:
    users = []
    for k in range(scenario.n_users):
        links = [
            LinkDocument(
                amplitudes=link.amplitudes.tolist(),
                aod=link.aod.tolist(),
                aoa=link.aoa.tolist(),
            )
            for link in scenario.links[k]
        ]
        users.append(UserDocument(
            serving=scenario.serving[k],
            nr=scenario.nr[k],
            weight=scenario.weights[k],
            streams=scenario.streams[k],
            links=links,
        ))
    return ScenarioDocument(cells=scenario.n_cells, nt=list(scenario.nt), power=list(scenario.power), users=users)


def load_scenario(path: PathLike) -> Scenario:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}", details={"path": str(path)})
    try:
        doc = ScenarioDocument.model_validate(data or {})
    except ValidationError as e:
        raise _describe(e)
    try:
        return scenario_from_document(doc)
    except ValidationException as e:
        raise ConfigError(f"invalid scenario file {path}: {e.message}", details={"path": str(path), **e.details})


def dump_scenario(scenario: Scenario, path: PathLike) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(document_from_scenario(scenario).model_dump(), f, sort_keys=False)
    except OSError as e:
        raise ConfigError(f"cannot write scenario file {path}: {e}", details={"path": str(path)})
