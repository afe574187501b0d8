"""Flat key = value pipeline configuration.

The text format doubles as the run manifest: serializing and re-parsing a
config reproduces the run exactly.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractError


@dataclass
class PipelineConfig:
    # energy
    alpha: float = 10.0
    beta: float = 51.0
    gamma: float = 6.0
    sigma1_sq: float = 0.5
    sigma2_sq: float = 0.5
    sigma3_sq: float = 0.1
    eps_log: float = 1e-6
    step: float = 1e-3
    max_iters: int = 500
    tol: float = 1e-4
    pairwise_adjacent_only: bool = True
    background_variant: str = "bg_full"  # bg_full | bg_nc2
    # superpixels
    kernel_size: int = 1
    max_dist: float = 10.0
    intensity_weight: float = 30.0
    # anatomy
    validity_fraction: float = 0.75
    band_merge_affinity: float = 0.9
    dark_intensity: float = 0.25
    dark_fraction: float = 0.6
    smooth_intensity: float = 0.6
    smooth_fraction: float = 0.8
    eps_foreground: float = 0.01
    z_low_sigmas: float = -3.0
    z_high_sigmas: float = -1.0
    # evaluation
    theta_sq: float = 0.3
    # input/output paths ("" means unset)
    image: str = ""
    prob_map: str = ""
    superpixels: str = ""
    out_dir: str = "out"
    # phantom generation
    width: int = 256
    height: int = 256
    noise_sigma: float = 10.0
    tumor_center_x: float = 0.5
    tumor_center_y: float = 0.45
    tumor_radius_x: float = 0.14
    tumor_radius_y: float = 0.11
    prob_blur: int = 3
    distractor: bool = False
    distractor_center_x: float = 0.75
    distractor_center_y: float = 0.85
    distractor_radius_x: float = 0.06
    distractor_radius_y: float = 0.05
    distractor_intensity: float = 45.0
    count: int = 1
    seed: int = 0
    # parameter sweep grids (comma-separated)
    sweep_alpha: str = "0,5,10"
    sweep_beta: str = "1,51,101,151"
    sweep_gamma: str = "1,6,11,16,21"


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    raw = raw.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ContractError(
            f"config key '{name}' expects a {kind}, got {raw!r}"
        ) from None


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ContractError(f"config line {lineno} is not 'key = value': {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ContractError(f"unknown config key '{key}' on line {lineno}")
        values[key] = _convert(key, raw)
    return PipelineConfig(**values)


def config_text(config: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def save_config(path, config: PipelineConfig) -> None:
    Path(path).write_text(config_text(config), encoding="utf-8")


def sweep_values(raw: str, name: str) -> list:
    try:
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ContractError(f"config key '{name}' must be comma-separated numbers") from None
