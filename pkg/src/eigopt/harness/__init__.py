"""Evaluation oracles, run configuration, artifact I/O and the command-line interface."""
from .config import RunConfig, SCHEMA_VERSION
from .oracles import Estimate, TrapResult, TrapSpec, beats, bound_trap, design_error, nmc_eig
from .presets import PRESETS, get_preset

__all__ = ["RunConfig", "SCHEMA_VERSION", "Estimate", "TrapResult", "TrapSpec", "beats", "bound_trap",
           "design_error", "nmc_eig", "PRESETS", "get_preset"]
