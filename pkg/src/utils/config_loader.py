"""
Configuration Loader Module

This module handles loading the YAML pipeline configuration, applying the environment
override for the output directory, and building the typed PipelineConfig every command runs on.
"""

import os
import copy
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

import yaml
from dotenv import load_dotenv

from src.data.datagen import GeneratorConfig
from src.detection.latent_anomaly import DbscanConfig
from src.models.autoencoder import FORMAT_VERSION, AEConfig
from src.models.search import SearchSpace
from src.utils.errors import AEEError, ConfigError
from src.utils.logger import LOG_LEVELS, get_logger
from src.xai.ensemble import EnsembleConfig, ScalingBounds
from src.xai.explainers import EXPLAINER_METHODS, ExplainerConfigs
from src.xai.explanation import ExplanationTarget
from src.xai.kernel_shap import KernelShapConfig
from src.xai.lime import LimeConfig
from src.xai.lrp import LrpConfig
from src.xai.quality import PerturbationConfig, QMConfig

logger = get_logger()

OUTPUT_DIR_ENV = "AEE_OUTPUT_DIR"
SPLITS = ("train", "validation", "test", "all")
TOP_LEVEL_KEYS = (
    "paths", "generator", "autoencoder", "dbscan", "explainer", "ensemble", "qm", "search",
    "master_seed", "format_version", "log_level",
)


@dataclass(frozen=True)
class PathsConfig:
    """
    Attributes:
        output_dir: Root of every artifact
        dataset: External corpus (CSV or NDJSON); None uses the generated one
        model: Model file; None uses <output_dir>/model/model.aee
        log_directory: Log files (never artifacts)
    """

    output_dir: str = "output"
    dataset: Optional[str] = None
    model: Optional[str] = None
    log_directory: str = "logs"


@dataclass(frozen=True)
class DetectionSection:
    dbscan: DbscanConfig = DbscanConfig()
    split: str = "test"


@dataclass(frozen=True)
class ExplainerSection:
    """
    Attributes:
        methods: Explainers run by the explain command
        target: Default target, "combined" or a latent index
        ids: Instances to explain; empty selects the QM protocol instances
        configs: Per-method settings
    """

    methods: Tuple[str, ...] = EXPLAINER_METHODS
    target: str = "combined"
    ids: Tuple[str, ...] = ()
    configs: ExplainerConfigs = ExplainerConfigs()


@dataclass(frozen=True)
class EnsembleSection:
    config: EnsembleConfig = EnsembleConfig()
    methods: Tuple[str, ...] = EXPLAINER_METHODS


@dataclass(frozen=True)
class SearchSection:
    space: SearchSpace = SearchSpace()
    trials: int = 10
    epochs: int = 50


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view of config.yaml; every section validated by its owning module."""

    paths: PathsConfig = PathsConfig()
    generator: GeneratorConfig = GeneratorConfig()
    autoencoder: AEConfig = AEConfig()
    detection: DetectionSection = DetectionSection()
    explainer: ExplainerSection = ExplainerSection()
    ensemble: EnsembleSection = EnsembleSection()
    qm: QMConfig = QMConfig()
    search: SearchSection = SearchSection()
    master_seed: int = 42
    format_version: int = FORMAT_VERSION
    log_level: str = "INFO"
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)


def load_config(config_path: str = "config.yaml") -> Dict[str, Any]:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to the YAML configuration file

    Returns:
        Dict[str, Any]: Dictionary containing configuration settings

    Raises:
        FileNotFoundError: If the configuration file is not found
        ConfigError: If the file is not valid YAML or not a mapping
    """
    logger.info(f"Loading configuration from {config_path}")

    try:
        with open(config_path, "r", encoding="utf-8") as config_file:
            config = yaml.safe_load(config_file) or {}
    except FileNotFoundError:
        logger.error(f"Configuration file not found: {config_path}")
        raise
    except yaml.YAMLError as e:
        logger.error(f"Error parsing YAML configuration: {str(e)}")
        raise ConfigError(f"invalid YAML in {config_path}: {e}") from e

    if not isinstance(config, dict):
        raise ConfigError(f"{config_path} must hold a mapping at the top level")

    config = _apply_environment_overrides(config)
    logger.info("Configuration loaded successfully")
    return config


def _apply_environment_overrides(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Apply the output-directory override from the environment (or a .env file).

    Only AEE_OUTPUT_DIR is honored; every other setting comes from the file or flags.
    """
    load_dotenv()
    output_dir = os.environ.get(OUTPUT_DIR_ENV)
    if output_dir:
        config = copy.deepcopy(config)
        config.setdefault("paths", {})["output_dir"] = output_dir
        logger.debug(f"Applied output directory from {OUTPUT_DIR_ENV}")
    return config


def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = raw.get(name)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(value)


def _build(name: str, factory: Callable[..., Any], data: Dict[str, Any]) -> Any:
    """Construct a section, turning unknown keys and invalid values into ConfigError."""
    try:
        built = factory(**data)
        validate = getattr(built, "validate", None)
        return validate() if callable(validate) else built
    except TypeError as e:
        logger.error(f"Invalid {name} section: {e}")
        raise ConfigError(f"invalid {name} section: {e}") from e
    except AEEError as e:
        if isinstance(e, ConfigError):
            raise
        logger.error(f"Invalid {name} section: {e}")
        raise ConfigError(f"invalid {name} section: {e}") from e


def _build_explainer(data: Dict[str, Any]) -> ExplainerSection:
    lime = _build("explainer.lime", LimeConfig, _section(data, "lime"))
    shap = _build("explainer.shap", KernelShapConfig, _section(data, "shap"))
    lrp = _build("explainer.lrp", LrpConfig, _section(data, "lrp"))
    if _section(data, "gradcam"):
        raise ConfigError("explainer.gradcam takes no settings")
    for key in ("lime", "shap", "lrp", "gradcam"):
        data.pop(key, None)

    methods = tuple(data.pop("methods", EXPLAINER_METHODS))
    unknown = [m for m in methods if m not in EXPLAINER_METHODS]
    if unknown:
        raise ConfigError(f"unknown explainer methods {unknown}")
    target = str(data.pop("target", "combined"))
    try:
        ExplanationTarget.parse(target)
    except AEEError as e:
        raise ConfigError(f"invalid explainer.target: {e}") from e
    ids = tuple(str(i) for i in (data.pop("ids", None) or ()))
    if data:
        raise ConfigError(f"unknown keys in explainer section: {sorted(data)}")
    return ExplainerSection(methods, target, ids, ExplainerConfigs(lime, shap, lrp))


def _build_ensemble(data: Dict[str, Any]) -> EnsembleSection:
    bounds = ScalingBounds(float(data.pop("a_min", 0.0)), float(data.pop("a_max", 1.0)))
    weights = data.pop("weights", None)
    if weights is not None:
        if not isinstance(weights, dict):
            raise ConfigError("ensemble.weights must map method names to weights")
        weights = tuple(sorted((str(k), float(v)) for k, v in weights.items()))
    methods = tuple(data.pop("methods", EXPLAINER_METHODS))
    if len(methods) < 2 or any(m not in EXPLAINER_METHODS for m in methods):
        raise ConfigError(f"ensemble.methods must name at least two of {EXPLAINER_METHODS}, got {list(methods)}")
    if data:
        raise ConfigError(f"unknown keys in ensemble section: {sorted(data)}")
    config = _build("ensemble", EnsembleConfig, {"bounds": bounds, "weights": weights})
    if weights is not None:
        missing = [m for m in methods if m not in dict(weights)]
        if missing:
            raise ConfigError(f"ensemble.weights missing for {missing}")
    return EnsembleSection(config, methods)


def _build_qm(data: Dict[str, Any]) -> QMConfig:
    perturbation = _build("qm.perturbation", PerturbationConfig, _section(data, "perturbation"))
    data.pop("perturbation", None)
    return _build("qm", QMConfig, dict(data, perturbation=perturbation))


def _build_search(data: Dict[str, Any]) -> SearchSection:
    trials = int(data.pop("trials", 10))
    epochs = int(data.pop("epochs", 50))
    space = _build("search", SearchSpace, {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})
    if trials < 1 or epochs < 1:
        raise ConfigError("search.trials and search.epochs must be >= 1")
    return SearchSection(space, trials, epochs)


def _build_detection(data: Dict[str, Any]) -> DetectionSection:
    split = data.pop("split", "test")
    if split not in SPLITS:
        raise ConfigError(f"dbscan.split must be one of {SPLITS}, got {split!r}")
    return DetectionSection(_build("dbscan", DbscanConfig, data), split)


def build_pipeline_config(raw: Dict[str, Any]) -> PipelineConfig:
    """
    Validate a raw configuration tree and build the typed PipelineConfig.

    The master seed is the root of every seed: it replaces the generator and training seeds.

    Args:
        raw: Dictionary from load_config (after overrides)

    Returns:
        PipelineConfig: Typed configuration

    Raises:
        ConfigError: On unknown keys or values a section rejects
    """
    logger.debug("Validating configuration")
    unknown = sorted(set(raw) - set(TOP_LEVEL_KEYS))
    if unknown:
        logger.error(f"Unknown configuration keys: {unknown}")
        raise ConfigError(f"unknown configuration keys: {unknown}")

    master_seed = int(raw.get("master_seed", 42))
    format_version = int(raw.get("format_version", FORMAT_VERSION))
    if format_version != FORMAT_VERSION:
        raise ConfigError(f"format_version {format_version} is not supported (expected {FORMAT_VERSION})")
    log_level = str(raw.get("log_level", "INFO")).upper()
    if log_level not in LOG_LEVELS:
        raise ConfigError(f"log_level must be one of {LOG_LEVELS}, got {log_level!r}")

    paths = _build("paths", PathsConfig, _section(raw, "paths"))
    generator = _build("generator", GeneratorConfig.from_dict, {"data": _section(raw, "generator")})
    generator = replace(generator, master_seed=master_seed)
    autoencoder = _build("autoencoder", AEConfig.from_dict, {"data": _section(raw, "autoencoder")})
    autoencoder = autoencoder.with_training(seed=master_seed)
    try:
        autoencoder.validate(generator.length)
    except AEEError as e:
        raise ConfigError(f"autoencoder does not fit series of length {generator.length}: {e}") from e

    config = PipelineConfig(
        paths=paths,
        generator=generator,
        autoencoder=autoencoder,
        detection=_build_detection(_section(raw, "dbscan")),
        explainer=_build_explainer(_section(raw, "explainer")),
        ensemble=_build_ensemble(_section(raw, "ensemble")),
        qm=_build_qm(_section(raw, "qm")),
        search=_build_search(_section(raw, "search")),
        master_seed=master_seed,
        format_version=format_version,
        log_level=log_level,
        raw=copy.deepcopy(raw),
    )
    logger.info("Configuration validation successful")
    return config


def save_config(config: Dict[str, Any], config_path: str = "config.yaml") -> bool:
    """
    Save configuration to YAML file.

    Args:
        config: Configuration dictionary
        config_path: Path to save the YAML configuration file

    Returns:
        bool: True if save was successful, False otherwise
    """
    logger.info(f"Saving configuration to {config_path}")

    try:
        os.makedirs(os.path.dirname(os.path.abspath(config_path)), exist_ok=True)

        with open(config_path, "w", encoding="utf-8") as config_file:
            yaml.safe_dump(config, config_file, default_flow_style=False, sort_keys=True)

        logger.info("Configuration saved successfully")
        return True

    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Error saving configuration: {str(e)}")
        return False


def default_config_dict() -> Dict[str, Any]:
    """Desk-scale defaults: the full corpus shape with a short training schedule."""
    return {
        "master_seed": 42,
        "format_version": FORMAT_VERSION,
        "log_level": "INFO",
        "paths": {"output_dir": "output", "dataset": None, "model": None, "log_directory": "logs"},
        "generator": {"length": 1024, "size": 5000, "nok_rate": 0.0068},
        "autoencoder": {
            "latent_dim": 3,
            "training": {"epochs": 20, "batch_size": 32, "optimizer": "adam", "lr": 0.001},
        },
        "dbscan": {"eps": None, "min_pts": 5, "standardize": False, "split": "test"},
        "explainer": {
            "methods": list(EXPLAINER_METHODS),
            "target": "combined",
            "ids": [],
            "lime": {"segments": 64, "samples": 1000, "kernel_width": 0.25, "ridge": 1.0},
            "shap": {"segments": 64, "samples": 2048, "exact": False},
            "lrp": {"epsilon": 1e-6},
        },
        "ensemble": {"a_min": 0.0, "a_max": 1.0, "weights": None, "methods": list(EXPLAINER_METHODS)},
        "qm": {"perturbation": {"fraction": 0.1, "strategy": "shuffle"}, "trials": 5, "ok_count": 100,
               "stability_runs": 3, "stability_instances": 5},
        "search": {"trials": 10, "epochs": 50},
    }


def create_default_config(config_path: str = "config.yaml") -> Dict[str, Any]:
    """
    Create a default configuration file.

    Args:
        config_path: Path to save the default configuration

    Returns:
        Dict[str, Any]: The default configuration dictionary
    """
    logger.info("Creating default configuration")
    default_config = default_config_dict()
    if not save_config(default_config, config_path):
        raise ConfigError(f"could not write {config_path}")
    return default_config


def set_config_value(config: Dict[str, Any], key_path: str, value: Any) -> Dict[str, Any]:
    """Set a dot-notation path in a copy of the configuration, creating sections as needed."""
    updated = copy.deepcopy(config)
    keys = key_path.split(".")
    node = updated
    for key in keys[:-1]:
        if node.get(key) is None:
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value
    return updated
