# ----------------------------------------------------------------------
#  Donaldson Equation Toolkit - Configuration, Logging, Resources
#
#  - AnalysisConfig: every numeric default in one schema
#  - ConfigManager: defaults file + user file + command-line overrides
#  - EnhancedLogger: console + rotating file logging
#  - SystemMonitor: worker sizing for thread pools
# ----------------------------------------------------------------------

import json
import logging
import logging.handlers
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import psutil

from errors import InvalidInputError

DEFAULT_CONFIG_FILE = Path(__file__).parent / "config" / "default_config.json"


@dataclass
class AnalysisConfig:
    """Configuration for every stage (the documented config schema)"""
    # Symbolic tier
    catalog_max_degree: int = 4

    # Verifier
    roundoff_factor: float = 1e-10
    positivity_samples: int = 11

    # Transform
    root_tolerance: float = 1e-12
    liouville_tolerance_symbolic: float = 1e-6
    liouville_solver_factor: float = 10.0
    completeness_windows: List[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    diverging_exponent: float = 0.2
    bounded_exponent: float = 0.02

    # Complexify
    curvature_step: float = 1e-2
    bridge_samples: int = 100
    bridge_tolerance: float = 1e-12

    # Dirichlet solver
    grid_shape: List[int] = field(default_factory=lambda: [33, 33])
    box: List[List[float]] = field(default_factory=lambda: [[0.0, 1.0], [0.0, 1.0]])
    newton_tolerance: float = 1e-10
    max_newton_iterations: int = 30
    line_search_shrink: float = 0.5
    max_backtracks: int = 30
    linear_tolerance_factor: float = 1e-2
    linear_tolerance_floor: float = 1e-13
    krylov_max_iterations: int = 2000
    ellipticity_floor: float = 1e-8
    initial_margin_fraction: float = 0.25

    # Problem probe
    probe_domain_sizes: List[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    probe_points_per_unit: int = 16
    probe_core_fraction: float = 0.5
    perturbation_amplitude: float = 0.0
    perturbation_frequency: float = 1.0

    # Run
    seed: int = 0
    max_workers: int = 4
    report_format: str = "json"

    # Logging
    log_file: Optional[str] = None
    log_level: str = "INFO"
    max_log_size: int = 10 * 1024 * 1024  # 10MB
    log_backup_count: int = 5

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AnalysisConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidInputError(f"Unknown configuration keys: {unknown}")
        return cls(**data)


class ConfigManager:
    """Handles layered configuration: defaults file, user file, overrides"""

    def __init__(self, defaults_file: Path = DEFAULT_CONFIG_FILE):
        self.defaults_file = Path(defaults_file)
        self.defaults = AnalysisConfig().to_dict()

    def load_config(self, user_file: Optional[str] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> AnalysisConfig:
        """Load configuration, merging user settings over the shipped defaults"""
        merged = dict(self.defaults)
        if self.defaults_file.exists():
            merged.update(self._read_json(self.defaults_file))
        if user_file:
            path = Path(user_file)
            if not path.exists():
                raise InvalidInputError(f"Configuration file not found: {path}")
            merged.update(self._read_json(path))
        if overrides:
            merged.update(overrides)
        return AnalysisConfig.from_dict(merged)

    def save_config(self, config: AnalysisConfig, path: Path) -> bool:
        """Save the effective configuration next to the run artifacts"""
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as f:
                json.dump(config.to_dict(), f, indent=2)
            return True
        except OSError as e:
            logging.getLogger(__name__).error(f"Error saving config: {e}")
            return False

    @staticmethod
    def parse_override(text: str) -> Dict[str, Any]:
        """Parse one `key=value` override; the value is read as JSON when it parses"""
        if "=" not in text:
            raise InvalidInputError(f"Override must look like key=value, got {text!r}")
        key, raw = text.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        return {key.strip(): value}

    @staticmethod
    def _read_json(path: Path) -> Dict[str, Any]:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"Malformed configuration file {path}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidInputError(f"Configuration file {path} must hold a JSON object")
        return data


class EnhancedLogger:
    """Console logging plus an optional size-rotated log file"""

    FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    def __init__(self, config: AnalysisConfig, log_dir: Optional[Path] = None):
        self.logger = logging.getLogger()
        level = getattr(logging, str(config.log_level).upper(), None)
        if not isinstance(level, int):
            raise InvalidInputError(f"Unknown log level: {config.log_level}")
        self.logger.setLevel(level)
        self.logger.handlers.clear()

        formatter = logging.Formatter(self.FORMAT)

        # stdout carries reports, so the console handler writes to stderr
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        if config.log_file:
            log_path = Path(config.log_file)
            if log_dir is not None and not log_path.is_absolute():
                log_path = Path(log_dir) / log_path
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                log_path,
                maxBytes=config.max_log_size,
                backupCount=config.log_backup_count
            )
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)

        self.logger.debug("Logging initialized")


class SystemMonitor:
    """Size worker pools from the machine's resources"""

    def __init__(self, config: AnalysisConfig):
        self.config = config

    def get_optimal_workers(self) -> int:
        """Calculate optimal worker count based on system resources"""
        cpu_count = psutil.cpu_count() or 1
        memory_gb = psutil.virtual_memory().total / (1024**3)
        optimal_workers = max(1, min(cpu_count // 2, int(memory_gb // 2)))
        return max(1, min(optimal_workers, self.config.max_workers))

    def check_system_resources(self) -> Dict[str, float]:
        memory = psutil.virtual_memory()
        return {
            'memory_percent': memory.percent / 100,
            'memory_available_gb': memory.available / (1024**3),
            'cpu_count': float(psutil.cpu_count() or 1),
        }


def optimal_workers(config: Optional[AnalysisConfig] = None) -> int:
    return SystemMonitor(config or AnalysisConfig()).get_optimal_workers()
