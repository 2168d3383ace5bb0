"""Proximal generative flows trained adversarially with a kinetic running cost."""

from .tape import Tape, Node, record, gradient, gradient_of_gradient
from .nn import MlpSpec, MlpParams, OptimizerState, init, adam_step
from .divergence import DivergenceConfig, f_star, dual_estimate, train_discriminator
from .flow import (FlowConfig, TrajectoryBatch, MetricsRecord, TrainResult,
                   simulate, kinetic_energy, generator_objective, train, generate)
from .indicators import hj_residual, terminal_error, should_stop
from .estimator import ProximalFlowSampler

__all__ = [
    "Tape", "Node", "record", "gradient", "gradient_of_gradient",
    "MlpSpec", "MlpParams", "OptimizerState", "init", "adam_step",
    "DivergenceConfig", "f_star", "dual_estimate", "train_discriminator",
    "FlowConfig", "TrajectoryBatch", "MetricsRecord", "TrainResult",
    "simulate", "kinetic_energy", "generator_objective", "train", "generate",
    "hj_residual", "terminal_error", "should_stop",
    "ProximalFlowSampler",
]

__version__ = "0.1.0"
