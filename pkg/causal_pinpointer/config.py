#!/usr/bin/env python3
"""
Configuration System - YAML/JSON config file support

Supports configuration via:
- Default settings
- User config file (~/.causal-pinpointer/config.yaml)
- Project config file (./causal-pinpointer.yaml)
- Environment variables (CAUSALPIN_*)
- Command-line arguments (highest priority, applied by the CLI)
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class DiscoveryConfig:
    """Defaults for discover / oracle"""
    ell_max: int = 1
    k_max: Optional[int] = None  # None: smallest order supporting ell_max
    threshold_scale: float = 1.0
    exact_threshold: float = 1e-7
    match_tol: float = 0.1
    im_tol: float = 1e-6
    sep_tol: float = 1e-8
    rank_tol: float = 1e-8
    support_tol: float = 1e-3
    ratio_tol: float = 0.05


@dataclass
class BenchConfig:
    """Defaults for bench"""
    setting: str = "a"
    noise: str = "gamma"  # gamma, lognormal, beta
    noise_params: Optional[Dict[str, float]] = None  # shape overrides, e.g. {"a": 3.0}
    n: int = 10000
    reps: int = 10
    seed: int = 0
    jobs: int = 1
    path_tol: float = 1e-3
    exact: bool = False
    source_scales: Optional[List[float]] = None  # [low, high] per-source standard deviations


@dataclass
class OutputConfig:
    """Output formatting configuration"""
    format: str = "rich"  # rich, plain, json
    colors: bool = True
    emoji: bool = True
    verbosity: str = "normal"  # quiet, normal, verbose, debug


@dataclass
class CausalPinpointerConfig:
    """Complete configuration"""
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    export_dir: str = "./causal_reports"


_SECTIONS = {"discovery": DiscoveryConfig, "bench": BenchConfig, "output": OutputConfig}


class ConfigManager:
    """Manages configuration loading and merging"""

    DEFAULT_CONFIG_LOCATIONS = [
        Path.home() / ".causal-pinpointer" / "config.yaml",
        Path.home() / ".causal-pinpointer" / "config.json",
        Path("./causal-pinpointer.yaml"),
        Path("./causal-pinpointer.json"),
    ]

    ENV_MAPPINGS = {
        "CAUSALPIN_ELL_MAX": ["discovery", "ell_max"],
        "CAUSALPIN_K_MAX": ["discovery", "k_max"],
        "CAUSALPIN_THRESHOLD_SCALE": ["discovery", "threshold_scale"],
        "CAUSALPIN_MATCH_TOL": ["discovery", "match_tol"],
        "CAUSALPIN_SEED": ["bench", "seed"],
        "CAUSALPIN_JOBS": ["bench", "jobs"],
        "CAUSALPIN_OUTPUT_FORMAT": ["output", "format"],
        "CAUSALPIN_COLORS": ["output", "colors"],
        "CAUSALPIN_VERBOSITY": ["output", "verbosity"],
        "CAUSALPIN_EXPORT_DIR": ["export_dir"],
    }

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = Path(config_file) if config_file else None
        self.loaded_file: Optional[Path] = None
        self.config = self.load_config()

    def load_config(self) -> CausalPinpointerConfig:
        """Load configuration from files and environment"""
        config_dict: Dict[str, Any] = {}

        if self.config_file is not None:
            if not self.config_file.exists():
                raise ConfigError(f"Config file not found: {self.config_file}")
            config_dict = self._load_file(self.config_file, strict=True)
            self.loaded_file = self.config_file
        else:
            for location in self.DEFAULT_CONFIG_LOCATIONS:
                if location.exists():
                    config_dict = self._load_file(location)
                    self.loaded_file = location
                    break

        config_dict = self._apply_env_overrides(config_dict)
        config = self._dict_to_config(config_dict)

        if self.loaded_file:
            logger.info(f"Loaded configuration from: {self.loaded_file}")
        return config

    def _load_file(self, path: Path, strict: bool = False) -> Dict[str, Any]:
        """Load config from YAML or JSON file; parse errors only raise for explicit files"""
        try:
            with open(path, "r", encoding="utf-8") as f:
                if path.suffix in [".yaml", ".yml"]:
                    data = yaml.safe_load(f) or {}
                elif path.suffix == ".json":
                    data = json.load(f)
                else:
                    raise ConfigError(f"Unsupported config format: {path.suffix}")
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            if strict:
                raise ConfigError(f"Failed to parse config from {path}: {e}") from e
            logger.warning(f"Failed to parse config from {path}: {e}")
            return {}
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must contain a mapping")
        return data

    def _apply_env_overrides(self, config_dict: Dict[str, Any]) -> Dict[str, Any]:
        """Apply environment variable overrides"""
        for env_var, keys in self.ENV_MAPPINGS.items():
            value = os.getenv(env_var)
            if not value:
                continue
            current = config_dict
            for key in keys[:-1]:
                current = current.setdefault(key, {})

            final_key = keys[-1]
            try:
                if final_key in ["ell_max", "k_max", "seed", "jobs"]:
                    value = int(value)
                elif final_key in ["threshold_scale", "match_tol"]:
                    value = float(value)
                elif final_key == "colors":
                    value = value.lower() in ["true", "1", "yes"]
            except ValueError as e:
                raise ConfigError(f"Invalid value for {env_var}: {value!r}") from e
            current[final_key] = value
        return config_dict

    def _dict_to_config(self, config_dict: Dict[str, Any]) -> CausalPinpointerConfig:
        """Convert dictionary to config object; unknown keys are rejected"""
        top_level = {f.name for f in fields(CausalPinpointerConfig)}
        unknown = set(config_dict) - top_level
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")

        values = dict(config_dict)
        for name, cls in _SECTIONS.items():
            section = values.get(name)
            if section is None:
                continue
            if not isinstance(section, dict):
                raise ConfigError(f"Config section {name!r} must be a mapping")
            allowed = {f.name for f in fields(cls)}
            unknown = set(section) - allowed
            if unknown:
                raise ConfigError(f"Unknown keys in {name!r}: {sorted(unknown)}")
            values[name] = cls(**section)
        return CausalPinpointerConfig(**values)

    def save_config(self, config: Optional[CausalPinpointerConfig] = None, path: Optional[Path] = None,
                    format: str = "yaml") -> Path:
        """Save configuration to file

        Args:
            config: Config to save. If None, saves self.config
            path: Path to save to. If None, uses default location
            format: 'yaml' or 'json'

        Returns:
            Path where config was saved
        """
        config_to_save = config if config is not None else self.config
        if path is None:
            path = Path.home() / ".causal-pinpointer" / f"config.{format}"
        path.parent.mkdir(parents=True, exist_ok=True)

        config_dict = asdict(config_to_save)
        with open(path, "w", encoding="utf-8") as f:
            if format == "yaml":
                yaml.dump(config_dict, f, default_flow_style=False, sort_keys=False)
            elif format == "json":
                json.dump(config_dict, f, indent=2)
            else:
                raise ConfigError(f"Unsupported config format: {format}")
        return path

    def create_example_config(self, path: Path) -> Path:
        """Create an example configuration file"""
        example = asdict(CausalPinpointerConfig())
        example["discovery"]["ell_max"] = 2
        example["bench"].update({"setting": "e", "reps": 100, "jobs": 4})

        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            if path.suffix in [".yaml", ".yml"]:
                yaml.dump(example, f, default_flow_style=False, sort_keys=False)
            elif path.suffix == ".json":
                json.dump(example, f, indent=2)
            else:
                raise ConfigError(f"Unsupported config format: {path.suffix}")
        logger.info(f"Example configuration created at: {path}")
        return path


# Global config instance
_config: Optional[ConfigManager] = None


def get_config(config_file: Optional[str] = None) -> CausalPinpointerConfig:
    """Get or create global config instance"""
    global _config
    if _config is None or config_file:
        _config = ConfigManager(config_file)
    return _config.config
