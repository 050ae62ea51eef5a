# retypelab/core/config.py - Process settings and per-run pipeline configuration
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import psutil
from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError as SchemaError
from pydantic_settings import BaseSettings

from retypelab.core.errors import ConfigError
from retypelab.schemas.asm import LabelScheme
from retypelab.schemas.model import Algorithm, coerce_hyperparameter
from retypelab.schemas.selection import GridSpec, SelectionMethod, default_grid, default_selection_menu
from retypelab.schemas.synth import SynthConfig

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "RETYPELAB_CONFIG"


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "retypelab"
    VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Run registry
    DATABASE_URL: str = "sqlite:///./retypelab_runs.db"
    REGISTRY_ENABLED: bool = True

    # Reproducibility and workers
    DEFAULT_SEED: Optional[int] = None
    MAX_THREADS: Optional[int] = None

    # Pattern extraction
    MAX_CHUNK_LEN: int = 8
    PATTERN_BUDGET: int = 64
    STRICT_MNEMONICS: bool = False

    # Dataset
    MIN_SUPPORT_ROWS: int = 2

    # Model selection
    SELECTION_TIE_TOLERANCE: float = 0.005
    SELECTION_IMPORTANCE_TREES: int = 50
    GRID_CAP: int = 64
    CV_FOLDS: int = 3

    # Evaluation
    EVAL_REPETITIONS: int = 30
    COV_WINDOW: int = 10
    METHOD2_THRESHOLD: float = 0.01
    SIZE_THRESHOLD: float = 0.02
    HOLDOUT_FRACTION: float = 0.2

    # Rule mining
    RULE_MIN_SUPPORT: float = 0.01
    RULE_MAX_ANTECEDENTS: int = 2
    RULE_MIN_CONFIDENCE: float = 1.0

    class Config:
        env_file = ".env"
        env_prefix = "RETYPELAB_"
        case_sensitive = True
        extra = "ignore"


settings = Settings()


def default_threads() -> int:
    return settings.MAX_THREADS or psutil.cpu_count(logical=True) or 1


class PipelineConfig(BaseModel):
    """Resolved configuration of one CLI run: settings, then config file, then flags."""
    seed: int = Field(ge=0, lt=2 ** 64)
    threads: int = Field(default_factory=default_threads, ge=1)
    scheme: LabelScheme = LabelScheme.HIGH_LEVEL

    corpus_dir: Path = Path("corpus")
    dataset_path: Path = Path("data/dataset.csv")
    model_path: Path = Path("models/model.json")
    report_dir: Path = Path("reports")

    algorithm: Algorithm = Algorithm.DECISION_TREE
    hyperparameters: Dict[str, Any] = {}

    max_chunk_len: int = Field(default_factory=lambda: settings.MAX_CHUNK_LEN, ge=1)
    pattern_budget: int = Field(default_factory=lambda: settings.PATTERN_BUDGET, ge=1)
    include_post: bool = True
    include_advanced: bool = True
    anchor_mode: Optional[bool] = None
    strict_mnemonics: bool = Field(default_factory=lambda: settings.STRICT_MNEMONICS)
    min_support_rows: int = Field(default_factory=lambda: settings.MIN_SUPPORT_ROWS, ge=1)

    selection_methods: List[SelectionMethod] = Field(default_factory=default_selection_menu)
    tie_tolerance: float = Field(default_factory=lambda: settings.SELECTION_TIE_TOLERANCE, ge=0.0)
    grid: GridSpec = Field(default_factory=lambda: default_grid(settings.GRID_CAP))
    cv_folds: int = Field(default_factory=lambda: settings.CV_FOLDS, ge=2)

    eval_method: int = Field(default=1, ge=1, le=3)
    repetitions: int = Field(default_factory=lambda: settings.EVAL_REPETITIONS, ge=2)
    cov_window: int = Field(default_factory=lambda: settings.COV_WINDOW, ge=2)
    method2_threshold: float = Field(default_factory=lambda: settings.METHOD2_THRESHOLD, gt=0.0)
    holdout_fraction: float = Field(default_factory=lambda: settings.HOLDOUT_FRACTION, gt=0.0, lt=1.0)

    min_support: float = Field(default_factory=lambda: settings.RULE_MIN_SUPPORT, gt=0.0, le=1.0)
    max_antecedents: int = Field(default_factory=lambda: settings.RULE_MAX_ANTECEDENTS, ge=1)
    min_confidence: float = Field(default_factory=lambda: settings.RULE_MIN_CONFIDENCE, ge=0.0, le=1.0)

    synth: SynthConfig = Field(default_factory=SynthConfig)
    programs: int = Field(default=1, ge=1)

    timestamp: bool = True
    registry: bool = Field(default_factory=lambda: settings.REGISTRY_ENABLED)


_LIST_KEYS = {"selection_methods"}
_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _coerce_bool(key: str, value: str) -> bool:
    try:
        return _BOOL_WORDS[value.strip().lower()]
    except KeyError:
        raise ConfigError(f"Config key {key} expects a boolean, got {value!r}")


def resolve_config_path(path: Optional[Path]) -> Optional[Path]:
    if path is None:
        env_path = os.getenv(CONFIG_ENV_VAR)
        path = Path(env_path) if env_path else None
    if path is not None and not path.is_file():
        raise ConfigError(f"Config file {path} not found")
    return path


def load_pipeline_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """
    Merge settings, the key=value config file and CLI overrides.

    Overrides with value None are ignored, so argparse namespaces can be passed
    through directly.
    """
    path = resolve_config_path(path)
    file_values: Dict[str, Optional[str]] = dict(dotenv_values(path)) if path else {}
    data: Dict[str, Any] = {}
    synth_values: Dict[str, str] = {}
    hyperparameters: Dict[str, Any] = {}
    grid = default_grid(settings.GRID_CAP)

    try:
        for key, raw in file_values.items():
            if raw is None:
                continue
            if key.startswith("synth."):
                synth_values[key[len("synth."):]] = raw
            elif key.startswith("hyperparameter."):
                name = key[len("hyperparameter."):]
                hyperparameters[name] = coerce_hyperparameter(name, raw)
            elif key.startswith("grid."):
                _, algorithm, name = key.split(".", 2)
                grid = grid.with_values(Algorithm(algorithm), name, raw)
            elif key in _LIST_KEYS:
                data[key] = [SelectionMethod.parse(t) for t in raw.split(",") if t.strip()]
            elif key in ("include_post", "include_advanced", "timestamp", "registry", "strict_mnemonics"):
                data[key] = _coerce_bool(key, raw)
            elif key == "anchor_mode":
                data[key] = None if raw.strip().lower() == "auto" else _coerce_bool(key, raw)
            elif key in PipelineConfig.model_fields:
                data[key] = raw.strip()
            else:
                raise ConfigError(f"Unknown config key {key!r} in {path}")

        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == "hyperparameters":
                hyperparameters.update(value)
            elif key in PipelineConfig.model_fields:
                data[key] = value

        if "seed" not in data and settings.DEFAULT_SEED is not None:
            data["seed"] = settings.DEFAULT_SEED
        if "seed" not in data:
            raise ConfigError("A seed is required: pass --seed, set seed= in the config file or RETYPELAB_DEFAULT_SEED")

        seed = int(data["seed"])
        if "rng_seed" not in synth_values and "seed" not in synth_values:
            synth_values["rng_seed"] = str(seed)
        data["synth"] = SynthConfig.from_mapping(synth_values)
        data["hyperparameters"] = hyperparameters
        data["grid"] = grid
        config = PipelineConfig(**data)
    except SchemaError as e:
        raise ConfigError(f"Invalid configuration: {e}")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid configuration: {e}")

    logger.debug(f"Resolved config from {path or 'defaults'}: seed={config.seed}, threads={config.threads}")
    return config
