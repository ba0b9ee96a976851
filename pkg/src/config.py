"""
Configuration loader for wdsrkit.
Loads runtime settings and run configurations from YAML files.
"""

import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, get_args

import yaml

from src.errors import ConfigError

logger = logging.getLogger(__name__)

# Default config directory (src/config.py -> src -> project -> config)
CONFIG_DIR = Path(__file__).parent.parent / "config"

THREADS_ENV = "WDSRKIT_THREADS"
ECHO_FILE = "config.yaml"

# lr0 per normalization when the config leaves it null
LR0_WEIGHT_NORM = 1e-3
LR0_DEFAULT = 1e-4


class ConfigLoader:
    """Loads and manages configuration from YAML files."""

    def __init__(self, config_dir: Optional[Path] = None):
        """
        Initialize config loader.

        Args:
            config_dir: Path to config directory (default: project/config/)
        """
        self.config_dir = Path(config_dir) if config_dir else CONFIG_DIR
        self._settings = None
        self._run_defaults = None

    def load_settings(self) -> dict:
        """Load settings.yaml configuration."""
        if self._settings is None:
            self._settings = self._load_yaml(self.config_dir / "settings.yaml")
        return self._settings

    def load_run_defaults(self) -> dict:
        """Load run.yaml, the documented default RunConfig."""
        if self._run_defaults is None:
            self._run_defaults = self._load_yaml(self.config_dir / "run.yaml")
        return self._run_defaults

    def _load_yaml(self, path: Path) -> dict:
        """Load a YAML file (missing file -> {} with an error log)."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except FileNotFoundError:
            logger.error(f"Config file not found: {path}")
            return {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Error parsing YAML file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping of key: value lines")
        return data

    # ==========================================
    # Convenience Methods
    # ==========================================

    def get_logging_settings(self) -> dict:
        """
        Get logging settings.

        Returns:
            Dict with 'level'
        """
        logging_cfg = self.load_settings().get("logging", {}) or {}
        return {"level": str(logging_cfg.get("level", "INFO")).upper()}

    def get_runtime_settings(self) -> dict:
        """
        Get runtime settings.

        Returns:
            Dict with 'threads', 'runs_root' (absolute) and 'bench_repeats'
        """
        runtime = self.load_settings().get("runtime", {}) or {}
        runs_root = Path(runtime.get("runs_root", "runs"))
        if not runs_root.is_absolute():
            runs_root = self.config_dir.parent / runs_root
        return {
            "threads": runtime.get("threads"),
            "runs_root": runs_root,
            "bench_repeats": int(runtime.get("bench_repeats", 5)),
        }


# ==========================================
# Run Configuration
# ==========================================

@dataclass
class RunConfig:
    """Flat, fully merged configuration of one command."""
    # network
    topology: str = "wdsr"
    family: str = "wdsr-a"
    scale: int = 2
    n_blocks: int = 8
    width: int = 32
    expansion: int = 4
    budget_width: Optional[int] = None
    kernel: int = 3
    normalization: str = "weight-norm"
    residual_scale: float = 1.0
    # training
    lr0: Optional[float] = None
    lr_halving_period: int = 200_000
    batch_size: int = 16
    patch_size: int = 96
    max_steps: int = 5000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    augment: bool = True
    val_every: int = 1000
    log_every: int = 50
    checkpoint_every: int = 1000
    val_crop: int = 0
    psnr_shave: int = 0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    prefetch: int = 2
    # paths
    train_manifest: Optional[str] = None
    val_manifest: Optional[str] = None
    out_dir: Optional[str] = None
    # budget report
    budget_input_h: int = 48
    budget_input_w: int = 48
    # runtime
    threads: Optional[int] = None

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: dict, source: str = "config") -> "RunConfig":
        return cls().merged(data, source)

    def merged(self, data: dict, source: str = "override") -> "RunConfig":
        """New RunConfig with data's keys applied on top (unknown key -> ConfigError)."""
        known = {f.name: f for f in fields(self)}
        values = self.to_dict()
        for key, raw in (data or {}).items():
            if key not in known:
                raise ConfigError(f"{source}: unknown config key {key!r}")
            values[key] = _coerce(key, raw, _field_kind(known[key].type), _nullable(known[key].type))
        return RunConfig(**values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def resolve_lr0(self) -> "RunConfig":
        if self.lr0 is not None:
            return self
        lr0 = LR0_WEIGHT_NORM if self.normalization == "weight-norm" else LR0_DEFAULT
        return self.merged({'lr0': lr0})

    def echo(self, out_dir) -> Path:
        """Write the resolved config as sorted YAML into out_dir/config.yaml."""
        path = Path(out_dir) / ECHO_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=True, default_flow_style=False)
        return path

    # ---------- views ----------

    def netspec(self, rgb_mean=None):
        """NetSpec of the configured network (rgb_mean defaults to the DIV2K mean)."""
        from src.models import DIV2K_RGB_MEAN, BlockSpec, NetSpec, match_widths

        if self.family == "vanilla" and self.expansion != 1:
            logger.debug(f"expansion={self.expansion} ignored for vanilla blocks")
        width = self.width
        if self.family == "wdsr-a" and self.budget_width:
            width, _ = match_widths(self.budget_width, self.expansion)
            logger.info(f"wdsr-a slimmed to w1={width} to match the budget of w1={self.budget_width}")
        block = BlockSpec(
            family=self.family,
            w1=width,
            r=1 if self.family == "vanilla" else self.expansion,
            kernel=self.kernel,
            normalization=self.normalization,
            residual_scale=self.residual_scale,
            budget_width=self.budget_width,
        )
        return NetSpec(
            topology=self.topology,
            scale=self.scale,
            n_blocks=self.n_blocks,
            block=block,
            rgb_mean=tuple(rgb_mean) if rgb_mean is not None else DIV2K_RGB_MEAN,
        )

    def train_config(self, workers: int):
        from src.engine.runner import TrainConfig

        resolved = self.resolve_lr0()
        return TrainConfig(
            lr0=resolved.lr0,
            lr_halving_period=self.lr_halving_period,
            batch_size=self.batch_size,
            patch_size=self.patch_size,
            max_steps=self.max_steps,
            seed=self.seed,
            normalization=self.normalization,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            augment=self.augment,
            val_every=self.val_every,
            log_every=self.log_every,
            checkpoint_every=self.checkpoint_every,
            val_crop=self.val_crop,
            psnr_shave=self.psnr_shave,
            prefetch=self.prefetch if workers > 0 else 0,
            workers=workers,
        )


def _field_kind(annotation) -> type:
    args = [a for a in get_args(annotation) if a is not type(None)]
    return args[0] if args else annotation


def _nullable(annotation) -> bool:
    return type(None) in get_args(annotation)


def _coerce(key: str, value, kind: type, nullable: bool):
    if value is None or (isinstance(value, str) and value.strip().lower() in ("null", "none", "~")):
        if nullable:
            return None
        raise ConfigError(f"config key {key!r} cannot be null")
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "yes", "on", "1", "false", "no", "off", "0"):
                return value.lower() in ("true", "yes", "on", "1")
            raise ValueError(value)
        if kind is int:
            if isinstance(value, bool):
                raise ValueError(value)
            number = float(value)
            if number != int(number):
                raise ValueError(value)
            return int(number)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key {key!r}: expected {kind.__name__}, got {value!r}") from e


# ==========================================
# Loading / Merging
# ==========================================

def parse_overrides(pairs: Iterable[str]) -> dict:
    """['k=v', ...] -> {k: yaml-scalar(v)}"""
    overrides = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        try:
            overrides[key.strip()] = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"--set {pair!r}: {e}") from e
    return overrides


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Error parsing YAML file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of key: value lines")
    return data


def load_run_config(
    config_path=None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    out_dir=None,
    loader: Optional[ConfigLoader] = None,
) -> RunConfig:
    """
    Merge run.yaml defaults <- --config file <- --set pairs <- --seed / --out,
    then resolve lr0.

    Raises:
        ConfigError: unknown key, bad value, unreadable file
    """
    loader = loader or ConfigLoader()
    cfg = RunConfig.from_mapping(loader.load_run_defaults(), source=str(loader.config_dir / "run.yaml"))
    if config_path:
        cfg = cfg.merged(load_config_file(config_path), source=str(config_path))
    cfg = cfg.merged(parse_overrides(overrides), source="--set")
    if seed is not None:
        cfg = cfg.merged({'seed': seed}, source="--seed")
    if out_dir is not None:
        cfg = cfg.merged({'out_dir': str(out_dir)}, source="--out")
    return cfg.resolve_lr0()


def resolve_threads(cfg_threads: Optional[int] = None, loader: Optional[ConfigLoader] = None) -> int:
    """
    Worker-thread cap: WDSRKIT_THREADS, else the run config, else
    settings.yaml, else the CPU count. 0 means single-threaded deterministic mode.
    """
    env = os.environ.get(THREADS_ENV)
    if env is not None and env.strip() != "":
        try:
            threads = int(env)
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV} must be an integer >= 0, got {env!r}") from e
    elif cfg_threads is not None:
        threads = cfg_threads
    else:
        settings = (loader or ConfigLoader()).get_runtime_settings()
        threads = settings["threads"] if settings["threads"] is not None else (os.cpu_count() or 1)
    if threads < 0:
        raise ConfigError(f"thread count must be >= 0, got {threads}")
    return int(threads)

