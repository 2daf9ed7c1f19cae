"""Binary coherent-state discrimination over a two-branch lossy (fading) channel."""
from .anneal import AnnealConfig, DisplacementGrid, anneal_displacements, grid_search
from .episim import EpisodeRecord, RngStream, monte_carlo_success, sample_episode
from .qlearn import LearningCurve, QLearnConfig, QTable, train
from .receivers import (ReceiverStrategy, homodyne_success, kennedy_strategy, outcome_distribution,
                        success_probability)
from .states import ChannelEnsemble, SignalSource, helstrom_bound, helstrom_fock_oracle, pure_helstrom

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig", "ChannelEnsemble", "DisplacementGrid", "EpisodeRecord", "LearningCurve", "QLearnConfig",
    "QTable", "ReceiverStrategy", "RngStream", "SignalSource", "anneal_displacements", "grid_search",
    "helstrom_bound", "helstrom_fock_oracle", "homodyne_success", "kennedy_strategy", "monte_carlo_success",
    "outcome_distribution", "pure_helstrom", "sample_episode", "success_probability", "train",
]
