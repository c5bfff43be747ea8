import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from src.training.config import TrainConfig
from src.utils.errors import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parents[2] / 'config'
SCALES = ('desk', 'paper')

DEFAULT_LOGGING = {
    'level': 'INFO',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'date_format': '%Y-%m-%d %H:%M:%S',
    'file_name_format': '%Y%m%d_%H%M%S',
    'log_dir': 'logs',
    'add_process_info': True,
}


@dataclass
class RunConfig(TrainConfig):
    scale: str = 'desk'
    dataset: str = 'data'
    output_dir: str = 'runs/default'
    checkpoint_interval: int = 1000
    log_dir: str = 'logs'
    workers: int = 1
    extract_resolution: int = 256

    def validate(self) -> 'RunConfig':
        super().validate()
        if self.scale not in SCALES:
            raise ConfigurationError(f"scale must be one of {SCALES}, got '{self.scale}'")
        if self.checkpoint_interval < 0:
            raise ConfigurationError("checkpoint_interval must be non-negative")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.extract_resolution < 2:
            raise ConfigurationError("extract_resolution must be at least 2")
        return self


def _read_json(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path} is not valid JSON: {e}")


def load_preset(scale: str, config_dir: Path = CONFIG_DIR) -> Dict[str, Any]:
    """desk lives in config.json next to the logging section; paper has its own document"""
    if scale == 'desk':
        return dict(_read_json(config_dir / 'config.json').get('desk', {}))
    if scale == 'paper':
        return dict(_read_json(config_dir / 'paper.json'))
    raise ConfigurationError(f"Unknown scale preset '{scale}', expected one of {SCALES}")


def load_logging_config(config_dir: Path = CONFIG_DIR) -> Dict[str, Any]:
    config = dict(DEFAULT_LOGGING)
    path = config_dir / 'config.json'
    if path.exists():
        config.update(_read_json(path).get('logging', {}))
    config['log_level'] = logging.getLevelName(str(config.pop('level')).upper())
    return config


def parse_override(text: str) -> Tuple[str, Any]:
    """KEY=VALUE, VALUE read as JSON when it parses (numbers, true/false), else as a string"""
    if '=' not in text:
        raise ConfigurationError(f"Override '{text}' is not of the form KEY=VALUE")
    key, raw = text.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _coerce(name: str, value: Any, kind: type) -> Any:
    try:
        if kind is bool:
            if isinstance(value, str):
                if value.lower() not in ('true', 'false'):
                    raise ValueError(value)
                return value.lower() == 'true'
            return bool(value)
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"Config key '{name}' expects {kind.__name__}, got {value!r}")


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}")
    defaults = RunConfig()
    coerced = {name: _coerce(name, value, type(getattr(defaults, name))) for name, value in values.items()}
    return RunConfig(**coerced).validate()


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Union[Dict[str, Any], Iterable[str]]] = None,
                    config_dir: Path = CONFIG_DIR) -> RunConfig:
    """Preset named by `scale` (default desk), then the document at `path`, then overrides"""
    document = _read_json(Path(path)) if path else {}
    if isinstance(overrides, dict):
        extra = dict(overrides)
    else:
        extra = dict(parse_override(item) for item in (overrides or []))

    scale = extra.get('scale', document.get('scale', 'desk'))
    values = load_preset(scale, config_dir)
    values.update(document)
    values.update(extra)
    values['scale'] = scale
    return build_run_config(values)


def save_run_config(cfg: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
    return path
