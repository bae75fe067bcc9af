"""Numerical laboratory for mean curvature flow of closed hypersurfaces."""
from loguru import logger

from mcflab.config import ChecksConfig, FlowConfig, ScenarioSpec, parse_config, parse_config_text
from mcflab.mcflab_common import Backend, FlowMode, McfLabError, StopCause

logger.disable("mcflab")

__all__ = ["Backend", "ChecksConfig", "FlowConfig", "FlowMode", "McfLabError", "ScenarioSpec", "StopCause",
           "parse_config", "parse_config_text"]
