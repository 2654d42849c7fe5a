"""
Configuration for MCPST runs.

Two layers live here:

* ``Settings`` - process environment (``MCPST_*`` variables and ``.env``):
  seed fallback, logging and output locations.
* ``RunConfig`` - every model/training hyperparameter with its documented
  default, loaded from a flat ``key = value`` file and overridden by CLI flags.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.errors import ConfigError

# Load environment variables from .env file
ROOT_DIR = Path(__file__).parent.parent
ENV_FILE = ROOT_DIR / ".env"
if ENV_FILE.exists():
    load_dotenv(ENV_FILE)


class Settings(BaseSettings):
    """Process-level settings read from the environment."""

    model_config = SettingsConfigDict(
        env_prefix="MCPST_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ========================================
    # Reproducibility
    # ========================================
    seed: int = Field(
        default=0, description="Seed used when neither --seed nor the config sets one"
    )

    # ========================================
    # Logging Configuration
    # ========================================
    log_level: str = Field(default="INFO")
    log_dir: Optional[Path] = Field(default=Path("logs"))
    log_file_max_bytes: int = Field(default=10485760)
    log_backup_count: int = Field(default=5)

    # ========================================
    # Outputs
    # ========================================
    output_dir: Path = Field(default=Path("runs"))
    default_interval_minutes: float = Field(
        default=5.0, description="Sampling interval assumed for single-row series"
    )

    def create_directories(self) -> None:
        """Create log and output directories."""
        for directory in (self.log_dir, self.output_dir):
            if directory is not None:
                directory.mkdir(parents=True, exist_ok=True)


# Global settings instance
settings = Settings()


class RunConfig(BaseModel):
    """All hyperparameters of a run. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)

    # ========================================
    # Reproducibility
    # ========================================
    seed: Optional[int] = Field(default=None, description="Run seed; falls back to MCPST_SEED")

    # ========================================
    # Windows and data
    # ========================================
    history: int = Field(default=12, ge=1, description="L, historical steps per window")
    horizon: int = Field(default=12, ge=3, description="H, forecast steps per window")
    augment_features: bool = Field(
        default=True, description="Append degree/variance/neighbour/gradient channels"
    )
    train_ratio: float = Field(default=0.7, gt=0, lt=1)
    val_ratio: float = Field(default=0.1, ge=0, lt=1)
    adapt_days: float = Field(default=3.0, gt=0, description="Target adaptation span in days")
    keep_directed: bool = Field(
        default=False, description="Keep directed adjacency; disables the spectral phase"
    )

    # ========================================
    # Phase modules
    # ========================================
    hidden: int = Field(default=16, ge=4, description="d_h, phase feature width D")
    k_diff: int = Field(default=6, ge=1, description="Diffusion steps")
    kappa_min: float = Field(default=0.01, gt=0)
    kappa_max: float = Field(default=0.3, gt=0)
    capacity_min: float = Field(default=0.5, gt=0)
    capacity_max: float = Field(default=2.0, gt=0)
    k_sync: int = Field(default=10, ge=1, description="Synchronisation steps")
    sync_dt: float = Field(default=0.1, gt=0)
    gamma_global_min: float = Field(default=0.1, gt=0)
    gamma_global_max: float = Field(default=1.0, gt=0)
    k_spectral: int = Field(default=8, ge=1, description="Retained eigenvectors")

    # ========================================
    # Encoder
    # ========================================
    enc_hidden: int = Field(default=16, ge=1, description="h, per-scale LSTM width")
    scales: Tuple[int, ...] = Field(default=(1, 2, 4, 8))
    heads: int = Field(default=8, ge=1)
    layers: int = Field(default=2, ge=0)
    ffn_mult: int = Field(default=2, ge=1)
    dropout: float = Field(default=0.1, ge=0, lt=1, description="delta; keep probability 1 - delta")

    # ========================================
    # Component toggles (ablation)
    # ========================================
    use_diffusion: bool = True
    use_sync: bool = True
    use_spectral: bool = True
    use_multiscale: bool = True
    use_adaptive_fusion: bool = True

    # ========================================
    # Objective
    # ========================================
    lambda1: float = Field(default=0.1, ge=0, description="Phase-consistency weight")
    lambda2: float = Field(default=1.0, ge=0, description="Meta-loss weight")
    eta: float = Field(default=0.01, ge=0, description="Variance L1 weight")
    beta: float = Field(default=0.1, ge=0, description="JS weight inside the phase loss")
    nll: bool = Field(default=False, description="Use Gaussian NLL instead of the L1 variance term")

    # ========================================
    # Optimisation
    # ========================================
    batch_size: int = Field(default=32, ge=1)
    pretrain_epochs: int = Field(default=250, ge=0)
    finetune_epochs: int = Field(default=250, ge=0)
    pretrain_lr: float = Field(default=3e-4, gt=0)
    finetune_lr: float = Field(default=1e-4, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    clip_tau: float = Field(default=1.0, gt=0)
    patience: int = Field(default=20, ge=1)
    min_delta: float = Field(default=1e-5, ge=0)
    val_fraction: float = Field(default=0.1, gt=0, lt=1, description="Early-stopping slice")

    # ========================================
    # Meta-learning
    # ========================================
    support_size: int = Field(default=12, ge=1, description="K")
    query_size: int = Field(default=16, ge=1, description="Q")
    inner_lr: float = Field(default=5e-4, gt=0)
    outer_lr: float = Field(default=1e-4, gt=0)
    inner_steps: int = Field(default=5, ge=0)
    eval_inner_steps: int = Field(default=15, ge=0)
    meta_steps: int = Field(default=100, ge=0)
    meta_batch: int = Field(default=4, ge=1)

    # ========================================
    # Validation suite
    # ========================================
    fd_epsilon: float = Field(default=1e-5, ge=1e-7, le=1e-3)

    @field_validator("scales", mode="before")
    @classmethod
    def _parse_scales(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(int(part) for part in value.replace(" ", "").split(",") if part)
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if self.hidden % 4 != 0:
            raise ValueError(f"hidden must be divisible by 4, got {self.hidden}")
        if not self.scales or self.scales[0] != 1:
            raise ValueError("scales must start with 1")
        if self.kappa_min >= self.kappa_max or self.capacity_min >= self.capacity_max:
            raise ValueError("diffusion clip bounds must satisfy min < max")
        if self.gamma_global_min >= self.gamma_global_max:
            raise ValueError("gamma_global bounds must satisfy min < max")
        if self.train_ratio + self.val_ratio >= 1:
            raise ValueError("train_ratio + val_ratio must leave room for a test split")
        return self

    @property
    def input_channels(self) -> int:
        """Raw series channel plus the four augmented channels when enabled."""
        return 5 if self.augment_features else 1

    @property
    def test_ratio(self) -> float:
        return 1.0 - self.train_ratio - self.val_ratio

    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else settings.seed

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        return build_run_config({**self.model_dump(), **overrides})


def build_run_config(values: Mapping[str, Any]) -> RunConfig:
    """Validate a mapping into a RunConfig, translating pydantic errors."""
    try:
        return RunConfig(**dict(values))
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from exc


def parse_key_values(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{number}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value
    return values


def load_run_config(
    path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Load a RunConfig from a flat key-value file, then apply overrides.

    Args:
        path: Config file (optional; defaults apply when absent)
        overrides: Values from command-line flags; these win over the file

    Returns:
        Validated RunConfig
    """
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(parse_key_values(Path(path).read_text(encoding="utf-8"), str(path)))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return build_run_config(values)


def dump_run_config(config: RunConfig) -> str:
    """Serialise a RunConfig to the flat ``key = value`` format."""
    lines = []
    for key, value in config.model_dump().items():
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(item) for item in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
