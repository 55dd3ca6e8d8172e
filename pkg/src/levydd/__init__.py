"""Drawdown laws of spectrally negative Lévy processes.

Scale functions (closed form or Laplace inversion), first-passage and
drawdown exit identities, the laws built on them, and a Monte Carlo oracle
that checks each law on simulated paths.
"""

from .drawdown_laws import ConditionSpec, LawKind, LawValue
from .errors import DomainError, InsufficientSampleError, InversionError
from .levy_model import Family, LevyModel, TiltedModel
from .mc_oracle import DecompRecord, PathRecord, SimConfig, SimMode
from .scale_functions import ScaleMethod, ScaleTable, invert_scale, scale_table

__version__ = "0.1.0"

__all__ = [
    "ConditionSpec",
    "DecompRecord",
    "DomainError",
    "Family",
    "InsufficientSampleError",
    "InversionError",
    "LawKind",
    "LawValue",
    "LevyModel",
    "PathRecord",
    "ScaleMethod",
    "ScaleTable",
    "SimConfig",
    "SimMode",
    "TiltedModel",
    "invert_scale",
    "scale_table",
]
