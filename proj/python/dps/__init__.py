"""Temporal-network preference-structure embeddings.

Thin Python wrapper over the C++ core: temporal graph storage, the two
learnable neighborhood samplers (time-decay and Gumbel-attention), the fusion
network, and the training/evaluation loops.
"""

from _dps_core import (  # noqa: F401
    ChronoSplit,
    DecayRates,
    DpsModel,
    GasModel,
    NeighborEntry,
    TemporalGraph,
    accuracy_score,
    auc_score,
    chrono_split,
    fit_tds,
    gradient_suite,
    load_gas,
    load_model,
    pretrain_gas,
    train_dps,
)

__all__ = [
    "ChronoSplit",
    "DecayRates",
    "DpsModel",
    "GasModel",
    "NeighborEntry",
    "TemporalGraph",
    "accuracy_score",
    "auc_score",
    "chrono_split",
    "fit_tds",
    "gradient_suite",
    "load_gas",
    "load_model",
    "pretrain_gas",
    "train_dps",
]
