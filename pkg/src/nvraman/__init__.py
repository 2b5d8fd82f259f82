"""Optical Raman control of an NV-centre nuclear spin: models and analysis."""

from .params import MU_B, TWO_PI, ConfigError, ModelParams, load_params, parse_params

__all__ = ["MU_B", "TWO_PI", "ConfigError", "ModelParams", "load_params", "parse_params"]
__version__ = "0.1.0"
