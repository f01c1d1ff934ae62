"""
TDPT Experiment Configuration

Pydantic-based configuration for imaging experiments.
Supports JSON files and environment variables with type safety and validation.

Precedence: explicit keyword arguments > JSON file > environment (TDPT_ prefix,
nested with "__") > defaults. TDPT_OUTPUT_DIR always overrides system.output_dir.
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from tdpt.errors import ConfigurationError

logger = logging.getLogger("TDPT.Config")

OUTPUT_DIR_ENV = "TDPT_OUTPUT_DIR"


class SystemConfig(BaseModel):
    """System configuration settings."""
    version: str = Field(default="0.1.0", description="Package version")
    log_level: str = Field(default="INFO", description="Logging level")
    output_dir: str = Field(default="./output", description="Directory for datasets, tables and reports")
    threads: int = Field(default=1, ge=1, le=256, description="Worker threads for per-frequency work")
    structured_logging: bool = Field(default=False, description="Render logs through structlog")

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'Log level must be one of: {valid_levels}')
        return v.upper()


class ShapeConfig(BaseModel):
    """Reference shape B (normalized to unit area)."""
    kind: str = Field(default="disk", description="disk, ellipse, flower or kite")
    a: float = Field(default=2.0, gt=0, description="Ellipse first semi-axis before normalization")
    b: float = Field(default=1.0, gt=0, description="Ellipse second semi-axis before normalization")
    rotation: float = Field(default=0.0, description="Rotation in radians")
    petals: int = Field(default=5, ge=1, le=32, description="Flower petal count")
    amplitude: float = Field(default=0.3, ge=0.0, lt=1.0, description="Flower petal amplitude")
    nodes: int = Field(default=128, ge=32, le=1024, description="Quadrature nodes Q")

    @field_validator('kind')
    @classmethod
    def validate_kind(cls, v):
        valid = ['disk', 'ellipse', 'flower', 'kite']
        if v.lower() not in valid:
            raise ValueError(f'Shape kind must be one of: {valid}')
        return v.lower()

    @field_validator('nodes')
    @classmethod
    def validate_nodes(cls, v):
        if v % 2:
            raise ValueError('Node count must be even')
        return v


class InclusionConfig(BaseModel):
    """Inclusion D = εB + z."""
    epsilon: float = Field(default=0.05, gt=0.0, lt=1.0, description="Scale ε")
    contrast: float = Field(default=3.0, gt=0.0, description="Contrast k")
    center: List[float] = Field(default=[0.3, -0.1], min_length=2, max_length=2, description="Center z")

    @field_validator('contrast')
    @classmethod
    def validate_contrast(cls, v):
        if v == 1.0:
            raise ValueError('Contrast k = 1 describes no inclusion')
        return v


class LayoutConfig(BaseModel):
    """Coincident transmitter/receiver arrays."""
    geometry: str = Field(default="circle", description="circle or square")
    count: int = Field(default=70, ge=1, le=2000, description="Number of transmitters (= receivers)")
    radius: float = Field(default=1.0, gt=0, description="Circle radius")
    half_side: float = Field(default=1.0, gt=0, description="Half side of the square")

    @field_validator('geometry')
    @classmethod
    def validate_geometry(cls, v):
        if v.lower() not in ('circle', 'square'):
            raise ValueError("Layout geometry must be 'circle' or 'square'")
        return v.lower()

    @model_validator(mode='after')
    def validate_square_count(self):
        if self.geometry == 'square' and self.count % 4:
            raise ValueError('Square layouts need a multiple of 4 points')
        return self


class FrequencyConfig(BaseModel):
    """Symmetric frequency band [-ρ, ρ] and the time grid."""
    rho: float = Field(default=math.pi, gt=0, description="Band limit ρ")
    count: int = Field(default=256, ge=2, le=1 << 14, description="Frequencies sampled over [-ρ, ρ] (2L)")
    rho0: Optional[float] = Field(
        default=None, ge=0, description="Frequencies with |ω| <= ρ0 are dropped (default ρ/L)"
    )
    t_max: float = Field(default=5.0, gt=0, description="End of the time grid")
    t_points: int = Field(default=512, ge=2, le=100000, description="Time samples on [0, t_max]")

    @field_validator('count')
    @classmethod
    def validate_count(cls, v):
        if v % 2:
            raise ValueError('Frequency count must be even')
        return v

    @property
    def half_count(self) -> int:
        return self.count // 2


class NoiseConfig(BaseModel):
    """Additive measurement noise."""
    percent: float = Field(default=20.0, ge=0.0, le=1000.0, description="σ as a percentage of mean |A_ω|")
    seed: int = Field(default=0, ge=0, description="Noise RNG seed")
    realizations: int = Field(default=1, ge=1, le=10000, description="Independent noise realizations")


class TensorConfig(BaseModel):
    """Tensor recovery settings."""
    order: int = Field(default=1, ge=1, le=4, description="Recovered tensor order n")
    svd_cutoff_noiseless: float = Field(default=1e-12, gt=0, lt=1, description="Relative SVD cutoff, noiseless")
    svd_cutoff_noisy: float = Field(default=1e-6, gt=0, lt=1, description="Relative SVD cutoff, noisy")
    size_source: str = Field(default="monopole", description="monopole or prior")
    prior_volume: Optional[float] = Field(
        default=None, gt=0, description="Known |D| used when the monopole estimate is unusable or size_source is prior"
    )
    error_curves: bool = Field(default=True, description="Write absErr/relErr curves for noiseless runs")

    @field_validator('size_source')
    @classmethod
    def validate_size_source(cls, v):
        if v not in ('monopole', 'prior'):
            raise ValueError("size_source must be 'monopole' or 'prior'")
        return v


class OptimizerConfig(BaseModel):
    """Recursive shape optimization schedule."""
    enabled: bool = Field(default=False, description="Run the shape optimizer after the estimates")
    k_max: int = Field(default=4, ge=2, le=6, description="Highest harmonic order K")
    iterations: int = Field(default=30, ge=1, le=1000, description="Iterations per order")
    tolerance: float = Field(default=1e-6, gt=0, description="Relative-decrease stopping threshold")
    max_halvings: int = Field(default=8, ge=0, le=30, description="Backtracking halvings per step")
    damping: float = Field(default=1e-3, gt=0, le=1e3, description="Marquardt damping of the Gauss-Newton step")
    working_frequencies: int = Field(default=16, ge=2, description="Frequencies used for candidate tensors")
    working_t_points: int = Field(default=64, ge=2, description="Time samples used for candidate tensors")


class ExperimentConfig(BaseSettings):
    """Main experiment configuration class."""

    system: SystemConfig = Field(default_factory=SystemConfig)
    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    inclusion: InclusionConfig = Field(default_factory=InclusionConfig)
    layout: LayoutConfig = Field(default_factory=LayoutConfig)
    frequency: FrequencyConfig = Field(default_factory=FrequencyConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    tensor: TensorConfig = Field(default_factory=TensorConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)

    class Config:
        env_prefix = "TDPT_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_nested_delimiter = "__"
        case_sensitive = False
        extra = 'ignore'

    def __init__(self, config_file: Optional[str] = None, **kwargs):
        config_data = self._load_json_config(config_file)
        if config_data:
            kwargs = _deep_merge(config_data, kwargs)
        super().__init__(**kwargs)

        output_dir = os.environ.get(OUTPUT_DIR_ENV)
        if output_dir:
            self.system.output_dir = output_dir

    @staticmethod
    def _load_json_config(config_file: Optional[str]) -> Optional[Dict[str, Any]]:
        """Load configuration from a JSON file (config.json in the working directory by default)."""
        path = Path(config_file) if config_file else Path("config.json")
        if not path.exists():
            if config_file:
                raise ConfigurationError(f"Configuration file not found: {path}")
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in {path}: {e}") from e

    @model_validator(mode='after')
    def validate_band(self):
        if self.frequency.rho >= 1.0 / self.inclusion.epsilon:
            raise ValueError(
                f'Band limit ρ={self.frequency.rho:.4g} must stay below 1/ε={1.0 / self.inclusion.epsilon:.4g}'
            )
        step = self.frequency.rho / self.frequency.half_count
        rho0 = step if self.frequency.rho0 is None else self.frequency.rho0
        if rho0 >= self.frequency.rho - 1e-9 * step:
            raise ValueError(f'ρ0={rho0:.4g} removes every frequency of the band')
        return self

    @property
    def output_path(self) -> Path:
        return Path(self.system.output_dir)

    @property
    def svd_cutoff(self) -> float:
        return self.tensor.svd_cutoff_noisy if self.noise.percent > 0 else self.tensor.svd_cutoff_noiseless

    def save_to_file(self, filename: str = "config_resolved.json"):
        """Save current configuration to a JSON file."""
        with open(filename, 'w', encoding='utf-8') as f:
            f.write(self.model_dump_json(indent=2, exclude_none=True))


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Section-wise merge; values in override win."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


FIGURE_PRESETS: Dict[int, Dict[str, Any]] = {
    3: {
        "shape": {"kind": "disk"},
        "inclusion": {"epsilon": 0.05, "contrast": 3.0, "center": [0.3, -0.1]},
        "layout": {"geometry": "circle", "count": 70},
        "frequency": {"rho": math.pi, "count": 256, "t_max": 5.0, "t_points": 512},
        "noise": {"percent": 20.0},
        "tensor": {"order": 1, "prior_volume": 0.0025},
        "optimizer": {"enabled": False},
    },
    4: {
        "shape": {"kind": "disk"},
        "inclusion": {"epsilon": 0.05, "contrast": 3.0, "center": [0.3, -0.1]},
        "layout": {"geometry": "circle", "count": 70},
        "frequency": {"rho": math.pi, "count": 256, "t_max": 5.0, "t_points": 512},
        "noise": {"percent": 0.0},
        "tensor": {"order": 1, "error_curves": True, "prior_volume": 0.0025},
        "optimizer": {"enabled": False},
    },
    5: {
        "shape": {"kind": "flower", "petals": 3, "amplitude": 0.2},
        "inclusion": {"epsilon": 0.05, "contrast": 3.0, "center": [0.3, -0.1]},
        "layout": {"geometry": "circle", "count": 70},
        "frequency": {"rho": math.pi / 8, "count": 64, "t_max": 5.0, "t_points": 512},
        "noise": {"percent": 20.0},
        "tensor": {"order": 4, "prior_volume": 0.0025},
        "optimizer": {"enabled": True, "k_max": 4},
    },
}


def figure_config(figure: int) -> Dict[str, Any]:
    """Preset overrides reproducing one of the standard experiments (3, 4 or 5)."""
    if figure not in FIGURE_PRESETS:
        raise ConfigurationError(f"No preset for figure {figure}; choose one of {sorted(FIGURE_PRESETS)}")
    return json.loads(json.dumps(FIGURE_PRESETS[figure]))


def load_config(config_file: Optional[str] = None, figure: Optional[int] = None, **overrides) -> ExperimentConfig:
    """Load and return the experiment configuration."""
    if figure is not None:
        overrides = _deep_merge(figure_config(figure), overrides)
    try:
        return ExperimentConfig(config_file=config_file, **overrides)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e
