"""
Configuration for the CAN translation toolkit.
Loads config.json from the repository root and validates it.
"""

import os
import json
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from .data.traces import AidRange
from .errors import ConfigError

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(__file__), '..', '..', 'config.json')

DEFAULTS: Dict[str, Any] = {
    "alpha": 0.50,
    "min_points": 10,
    "interpolation": "linear",
    "diag_ranges": ["7E8-7EF"],
    "request_ranges": ["7DF-7E7"],
    "workers": 4,
    "malformed_ratio_limit": 0.5,
    "api_host": "0.0.0.0",
    "api_port": 8001,
}


def parse_aid_range(text: str) -> AidRange:
    """
    Parse an AID interval written as ``LO-HI`` (hex) or a single hex AID.

    Bounds written with more than three digits, or above 0x7FF, select
    29-bit identifiers, so "18DAF100-18DAF1FF" never matches an 11-bit id.

    Args:
        text: Range text, e.g. "7E8-7EF" or "7DF"

    Returns:
        Inclusive AidRange
    """
    parts = text.strip().split('-')
    try:
        if len(parts) == 1:
            low = high = int(parts[0], 16)
        elif len(parts) == 2:
            low, high = int(parts[0], 16), int(parts[1], 16)
        else:
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"Invalid AID range: {text!r}")
    if low > high or low < 0 or high >= 1 << 29:
        raise ConfigError(f"Invalid AID range: {text!r}")
    extended = high > 0x7FF or any(len(part.strip()) > 3 for part in parts)
    return AidRange(low, high, extended)


class AnalysisConfig(BaseModel):
    """Validated analysis settings."""

    alpha: float = Field(DEFAULTS["alpha"], gt=0.0, le=1.0)
    min_points: int = Field(DEFAULTS["min_points"], ge=2)
    interpolation: Literal["linear", "hold"] = DEFAULTS["interpolation"]
    diag_ranges: List[str] = Field(default_factory=lambda: list(DEFAULTS["diag_ranges"]))
    request_ranges: List[str] = Field(default_factory=lambda: list(DEFAULTS["request_ranges"]))
    workers: int = Field(DEFAULTS["workers"], ge=1)
    malformed_ratio_limit: float = Field(DEFAULTS["malformed_ratio_limit"], gt=0.0, le=1.0)

    @field_validator("diag_ranges", "request_ranges")
    @classmethod
    def _check_ranges(cls, value: List[str]) -> List[str]:
        for item in value:
            parse_aid_range(item)
        return [item.strip().upper() for item in value]

    @property
    def diag_aid_ranges(self) -> List[AidRange]:
        return [parse_aid_range(item) for item in self.diag_ranges]

    @property
    def request_aid_ranges(self) -> List[AidRange]:
        return [parse_aid_range(item) for item in self.request_ranges]

    def echo(self) -> Dict[str, Any]:
        """Settings that affect the report, in report form."""
        return {
            "alpha": self.alpha,
            "min_points": self.min_points,
            "interpolation": self.interpolation,
            "diag_ranges": list(self.diag_ranges),
            "request_ranges": list(self.request_ranges),
        }


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Load configuration from config.json, falling back to defaults."""
    config_path = path or DEFAULT_CONFIG_PATH
    config = dict(DEFAULTS)
    if os.path.exists(config_path):
        try:
            with open(config_path, 'r') as f:
                config.update(json.load(f))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"Cannot read config {config_path}: {exc}")
    elif path is not None:
        raise ConfigError(f"Config file not found: {path}")
    return config


def build_analysis_config(overrides: Optional[Dict[str, Any]] = None,
                          path: Optional[str] = None) -> AnalysisConfig:
    """
    Merge file settings with explicit overrides and validate.

    Args:
        overrides: Values that take precedence (None values are ignored)
        path: Optional config file path

    Returns:
        Validated AnalysisConfig
    """
    settings = load_config(path)
    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = value
    fields = {k: v for k, v in settings.items() if k in AnalysisConfig.model_fields}
    try:
        return AnalysisConfig(**fields)
    except ValidationError as exc:
        raise ConfigError(str(exc))
