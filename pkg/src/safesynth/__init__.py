"""Lazy multi-resolution safety controller synthesis for sampled systems."""

from .abstraction import ExplorationStats, TransitionCache
from .closedloop import (BatchSummary, QuantizerView, SimVerdict, Trajectory,
                         simulate, simulate_batch, step)
from .config import ProblemConfig, assemble, load_config
from .dynamics import (ControlSystem, ReachBox, growth_radius,
                       integrate_nominal, reach_box)
from .errors import (ConfigError, DomainExitError, NumericalBlowupError,
                     PropertyViolationError)
from .grid import CellSet, LayerStack, SafeRegion
from .synthesis import (MultiController, SynthesisResult, cpre, eager_safe,
                        extract_controller, lazy_safe, safe_iteration,
                        single_layer_result, single_layer_safe)

__all__ = [
    "BatchSummary", "CellSet", "ConfigError", "ControlSystem",
    "DomainExitError", "ExplorationStats", "LayerStack", "MultiController",
    "NumericalBlowupError", "ProblemConfig", "PropertyViolationError",
    "QuantizerView", "ReachBox", "SafeRegion", "SimVerdict",
    "SynthesisResult", "Trajectory", "TransitionCache", "assemble", "cpre",
    "eager_safe", "extract_controller", "growth_radius", "integrate_nominal",
    "lazy_safe", "load_config", "reach_box", "safe_iteration", "simulate",
    "simulate_batch", "single_layer_result", "single_layer_safe", "step",
]

__version__ = "0.1.0"
