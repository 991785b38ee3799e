"""
Run configuration shared by every subcommand.

A single JSON document holds all parameters; unknown keys are rejected and
numeric fields are range-checked when the config is built.
"""
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from dotenv import load_dotenv

from .calibration import TARGET_KINDS, FitHyperparameters
from .device import ImperfectionConfig
from .errors import ValidationError
from .utils import read_json, write_json

ENV_LOG_LEVEL = "UPP_TWIN_LOG_LEVEL"
ENV_OUTPUT_DIR = "UPP_TWIN_OUTPUT_DIR"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# name -> (low, high); None leaves that side open
RANGES = {
    "n_modes": (2, None),
    "seed": (0, None),
    "noise_seed": (0, None),
    "coupler_delta": (0.0, 0.5),
    "crosstalk_eps": (0.0, 1.0),
    "noise_sigma": (0.0, 0.2),
    "p2pi_mean_mw": (1e-6, None),
    "p2pi_sigma_mw": (0.0, None),
    "input_loss_db": (0.0, None),
    "output_loss_db": (0.0, None),
    "pigtail_loss_db": (0.0, None),
    "max_power_mw": (1e-6, None),
    "window": (0, None),
    "input_port": (0, None),
    "output_port": (0, None),
    "heater": (0, None),
    "scan_samples": (8, None),
    "routing_passes": (1, None),
    "train_count": (1, None),
    "power_min_mw": (0.0, None),
    "power_max_mw": (0.0, None),
    "validation_fraction": (0.0, 0.99),
    "max_iterations": (1, None),
    "sweep_passes": (0, None),
    "minibatch": (1, None),
    "fit_starts": (1, None),
    "validation_rms_limit": (0.0, None),
    "stability_power_mw": (0.0, None),
    "stability_hours": (1e-9, None),
    "stability_interval_hours": (1e-9, None),
    "target_count": (1, None),
    "target_seed": (0, None),
}


def default_output_dir() -> str:
    return os.environ.get(ENV_OUTPUT_DIR, ".")


def default_log_level() -> str:
    return os.environ.get(ENV_LOG_LEVEL, "INFO").upper()


@dataclass(frozen=True)
class RunConfig:
    device_path: str = "device.json"
    model_path: str = "model.json"
    output_dir: str = field(default_factory=default_output_dir)
    log_level: str = field(default_factory=default_log_level)

    n_modes: int = 6
    seed: int = 0
    noise_seed: int | None = None
    coupler_delta: float = 0.05
    crosstalk_eps: float = 0.05
    noise_sigma: float = 0.0
    p2pi_mean_mw: float = 46.0
    p2pi_sigma_mw: float = 2.0
    input_loss_db: float = 0.0
    output_loss_db: float = 0.0
    pigtail_loss_db: float = 0.0
    input_loss_overrides: dict = field(default_factory=dict)
    output_loss_overrides: dict = field(default_factory=dict)
    max_power_mw: float = 60.0
    window: int | None = None
    random_static_phase: bool = True
    drift_enabled: bool = False

    input_port: int = 0
    output_port: int | None = None
    heater: int = 1
    scan_samples: int = 30
    routing_passes: int = 10

    train_count: int = 2000
    power_min_mw: float = 0.0
    power_max_mw: float = 45.0
    validation_fraction: float = 0.1
    max_iterations: int = 50
    residual_mode: str = "amplitude"
    sweep_passes: int = 2
    minibatch: int | None = None
    fit_starts: int = 12
    validation_rms_limit: float = 0.02

    targets: str = "haar"
    target_count: int = 200
    target_seed: int = 1
    targets_path: str | None = None

    stability_power_mw: float = 57.0
    stability_hours: float = 12.0
    stability_interval_hours: float = 0.5

    def __post_init__(self):
        for name, (low, high) in RANGES.items():
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{name} must be numeric, got {value!r}")
            if (low is not None and value < low) or (high is not None and value > high):
                raise ValidationError(f"{name}={value} outside [{low}, {'inf' if high is None else high}]")
        if self.power_max_mw < self.power_min_mw or self.power_max_mw > self.max_power_mw:
            raise ValidationError(f"Training power range [{self.power_min_mw}, {self.power_max_mw}] mW "
                                  f"must fit within [0, {self.max_power_mw}] mW")
        if self.targets not in TARGET_KINDS:
            raise ValidationError(f"targets must be one of {TARGET_KINDS}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ValidationError(f"log_level must be one of {LOG_LEVELS}")
        for name in ("input_loss_overrides", "output_loss_overrides"):
            object.__setattr__(self, name, {str(k): float(v) for k, v in getattr(self, name).items()})

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValidationError(f"Unknown config keys: {unknown}")
        return cls(**payload)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "RunConfig":
        payload = read_json(path)
        if not isinstance(payload, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        return cls.from_dict(payload)

    def dump(self, path) -> Path:
        return write_json(path, self.to_dict())

    def with_overrides(self, **overrides) -> "RunConfig":
        """Applies command-line values; None means the flag was not given."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def output_port_for(self, n_modes: int) -> int:
        """Explicit output port, or the last port of an n_modes device."""
        return n_modes - 1 if self.output_port is None else self.output_port

    def imperfection_config(self) -> ImperfectionConfig:
        return ImperfectionConfig(
            coupler_delta=self.coupler_delta, crosstalk_eps=self.crosstalk_eps,
            p2pi_mean_mw=self.p2pi_mean_mw, p2pi_sigma_mw=self.p2pi_sigma_mw,
            noise_sigma=self.noise_sigma, input_loss_db=self.input_loss_db,
            output_loss_db=self.output_loss_db, pigtail_loss_db=self.pigtail_loss_db,
            input_loss_overrides={int(k): v for k, v in self.input_loss_overrides.items()},
            output_loss_overrides={int(k): v for k, v in self.output_loss_overrides.items()},
            random_static_phase=self.random_static_phase, window=self.window,
            max_power_mw=self.max_power_mw, drift_enabled=self.drift_enabled)

    def fit_hyperparameters(self) -> FitHyperparameters:
        return FitHyperparameters(
            max_iterations=self.max_iterations, residual_mode=self.residual_mode,
            window=self.window, sweep_passes=self.sweep_passes,
            validation_fraction=self.validation_fraction, minibatch=self.minibatch,
            max_power=self.max_power_mw, starts=self.fit_starts,
            accept_rms=self.validation_rms_limit, seed=self.seed)


def load_environment():
    load_dotenv()
