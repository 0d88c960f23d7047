"""JSON run configuration for the command line tool.

Every section rejects unknown keys. Relative paths are resolved against the
directory holding the configuration file. Path templates are formatted with a
``frame`` keyword, e.g. ``"density_{frame:04d}.lnsg"``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .render import AXES

__all__ = ["RunConfig", "load_config", "parse_frames"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSection(_Section):
    dims: tuple[int, int, int]
    spacing: float = Field(1.0, gt=0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)


class InputSection(_Section):
    density: Optional[str] = None
    velocity: Optional[str] = None
    particles: Optional[str] = None
    reference: Optional[str] = None
    style_image: Optional[str] = None
    bank: Optional[str] = None


class StylizeSection(_Section):
    attributes: list[Literal["density", "color", "position"]] = ["density"]
    attribute_weights: dict[Literal["density", "color", "position"], float] = {}
    views: list[str] = ["+z"]
    layer_weights: Optional[list[float]] = None
    h: Optional[float] = Field(None, gt=0)
    density_reg: float = Field(0.0, ge=0)
    position_reg: float = Field(0.0, ge=0)
    iterations: int = Field(200, ge=0)
    lr: float = Field(0.01, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    @field_validator("views")
    @classmethod
    def _views(cls, v):
        if not v:
            raise ValueError("at least one view is required")
        bad = [a for a in v if a not in AXES]
        if bad:
            raise ValueError(f"unknown view axes {bad}; use {sorted(AXES)}")
        return v

    @field_validator("attribute_weights")
    @classmethod
    def _weights(cls, v):
        if any(w < 0 for w in v.values()):
            raise ValueError("attribute weights must be >= 0")
        return v

    @field_validator("layer_weights")
    @classmethod
    def _layer_weights(cls, v):
        if v is not None and any(w < 0 for w in v):
            raise ValueError("layer weights must be >= 0")
        return v


class RenderSection(_Section):
    mode: Literal["smoke", "liquid"] = "smoke"
    gamma: float = Field(1.0, gt=0)
    emission: float = Field(1.0, ge=0)


class TemporalSection(_Section):
    sigma: float = Field(1.5, gt=0)
    radius: int = Field(3, ge=0)
    stride: int = Field(1, ge=1)
    warm_start: bool = True


class MultiScaleSection(_Section):
    r: float = Field(2.0, gt=0)
    n_s: int = Field(3, ge=0)


class ResampleSection(_Section):
    threshold: float = 0.0
    h: Optional[float] = Field(None, gt=0)
    redistribute_steps: int = Field(20, ge=0)
    step_size: float = Field(0.1, gt=0)
    dt: float = 1.0


class RunConfig(_Section):
    grid: Optional[GridSection] = None
    inputs: InputSection = InputSection()
    stylize: StylizeSection = StylizeSection()
    render: RenderSection = RenderSection()
    temporal: TemporalSection = TemporalSection()
    multiscale: MultiScaleSection = MultiScaleSection()
    resample: ResampleSection = ResampleSection()
    frames: Optional[str] = None
    output_dir: Optional[str] = None

    # set by load_config; not part of the JSON document
    base_dir: Path = Field(default=Path("."), exclude=True)

    def path(self, template: Optional[str], frame: int | None = None, key: str = "") -> Path:
        if template is None:
            raise ConfigError(f"missing configuration key {key}")
        try:
            name = template.format(frame=frame) if frame is not None else template
        except (KeyError, IndexError, ValueError) as e:
            raise ConfigError(f"{key}: cannot format path template {template!r}: {e}") from None
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: configuration file not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if "base_dir" in doc:
        raise ConfigError(f"{path}: base_dir: extra inputs are not permitted")
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from None
    return cfg.model_copy(update={"base_dir": path.parent})


def parse_frames(text: str | None, default: str | None = None) -> list[int]:
    """Parse an inclusive ``a..b`` (or single ``a``) frame range."""
    text = text or default or "0..0"
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
        else:
            a = b = int(text)
    except ValueError:
        raise ConfigError(f"frames: expected 'a..b', got {text!r}") from None
    if a < 0 or b < a:
        raise ConfigError(f"frames: invalid range {text!r}")
    return list(range(a, b + 1))
