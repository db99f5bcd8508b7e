"""Scenario configuration: defaults, validation and JSON round-tripping."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

SPEED_OF_LIGHT = 2.998e8


class ConfigError(ValueError):
    """Raised when a configuration file cannot be parsed or validated."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SalehParams(_Section):
    alpha_a: float = Field(1.6623, ge=0)
    beta_a: float = Field(0.0552, ge=0)
    alpha_phi: float = Field(0.1533, ge=0)
    beta_phi: float = Field(0.3456, ge=0)


class PathLossParams(_Section):
    C0_db: float = -20.0
    alpha: float = Field(3.5, gt=0)


class DescentParams(_Section):
    step0: float = Field(1.0, gt=0)
    shrink: float = Field(0.5, gt=0, lt=1)
    max_inner: int = Field(200, ge=1)
    grad_tol: float = Field(1e-6, ge=0)
    max_backtracks: int = Field(40, ge=1)


class OptimizerParams(_Section):
    T: int = Field(50, ge=1)
    eps_conv: float = Field(1e-3, gt=0)
    lse_eps: float = Field(1e-1, gt=0)
    eps_p: float = Field(10 ** -1.5, gt=0)
    anneal: int = Field(0, ge=0)
    target_rms: float | None = Field(None, gt=0)
    descent: DescentParams = Field(default_factory=DescentParams)


Strategy = Literal["rom", "rom_unaware", "rom_as", "rom_pa", "rom_ao", "random_phase",
                   "quantized2", "quantized3", "quantized4", "zf"]


class SweepParams(_Section):
    axis: Literal["snr_db", "layers", "atoms_per_layer"] = "snr_db"
    values: List[float] = Field(default_factory=lambda: [0, 2, 4, 6, 8, 10, 12])
    frames: int = Field(20, ge=1)
    snr_db: float = 10.0
    strategies: List[Strategy] = Field(
        default_factory=lambda: ["rom", "random_phase", "quantized2", "quantized4", "zf"])

    @model_validator(mode="after")
    def _nonempty(self):
        if not self.values:
            raise ValueError("values must be nonempty")
        if not self.strategies:
            raise ValueError("strategies must be nonempty")
        return self


class ScenarioConfig(_Section):
    """Full experiment description.

    Physical defaults follow the 30 GHz, QPSK, 10-wavelength-thick setup;
    counts default to a 6x6-atom, 4-layer surface serving 4 users.
    """

    f0_hz: float = Field(30e9, gt=0)
    Nx: int = Field(6, ge=1)
    Ny: int = Field(6, ge=1)
    L: int = Field(4, ge=1)
    M: int = Field(8, ge=1)
    K: int = Field(4, ge=1)
    U: int = Field(128, ge=1)
    t_sim_wavelengths: float = Field(10.0, gt=0)
    delta_wavelengths: float = Field(0.5, gt=0, le=0.5)
    antenna_pitch_wavelengths: float = Field(0.5, gt=0)
    d_bs_m: float = 10.0
    d_ue_m: float = Field(10.0, gt=0)
    d_user_x_m: float = 100.0
    modulation: Literal["qpsk"] = "qpsk"
    path_loss: PathLossParams = Field(default_factory=PathLossParams)
    saleh: SalehParams = Field(default_factory=SalehParams)
    optimizer: OptimizerParams = Field(default_factory=OptimizerParams)
    sweep: SweepParams = Field(default_factory=SweepParams)
    zf_phases: Literal["random", "rom"] = "random"
    master_seed: int = Field(0, ge=0)
    out_dir: str = "out"

    @model_validator(mode="after")
    def _counts(self):
        if self.K > self.M:
            raise ValueError(f"K={self.K} users exceeds M={self.M} antennas")
        if self.d_user_x_m <= self.d_bs_m + self.t_sim_wavelengths * self.wavelength:
            raise ValueError("d_user_x_m must lie beyond the last layer")
        return self

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f0_hz

    @property
    def N(self) -> int:
        return self.Nx * self.Ny

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self).encode()).hexdigest()

    def replace(self, **updates) -> "ScenarioConfig":
        """Copy with top-level fields replaced, re-validated."""
        data = self.model_dump()
        data.update(updates)
        return ScenarioConfig.model_validate(data)


def canonical_json(config: ScenarioConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def _format_validation(err: ValidationError) -> str:
    lines = []
    for item in err.errors():
        field = ".".join(str(p) for p in item["loc"]) or "<root>"
        lines.append(f"{field}: {item['msg']}")
    return "; ".join(lines)


def config_from_dict(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid config: {_format_validation(err)}") from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: parse error at line {err.lineno} column {err.colno}: {err.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(data)


def save_config(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
