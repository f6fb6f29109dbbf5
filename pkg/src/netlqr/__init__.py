"""Optimal decentralized control of linear plants over lossy uplinks."""

__version__ = "0.1.0"

from .model import (
    ChannelSpec,
    CostStage,
    Dims,
    ModelSpec,
    NoiseSpec,
    PlantBlock,
    assemble_global,
    load_model,
    make_model,
    random_model,
    save_model,
    validate,
)
from .synthesis import BeliefSummary, GainSchedule, initial_value, omega, psi, synthesize, value_function
from .controller import LinearPolicy, compute_actions, message_sizes
from .simulator import monte_carlo, simulate_episode
from .oracle import exact_cost, stationarity_check
