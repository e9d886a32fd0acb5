"""Consistent cold-start initialization of LSTM internal states via
manifold learning: Brusselator data generation, a from-scratch LSTM,
diffusion-maps embeddings with Nystrom restriction, geometric-harmonics
state inference, and a latent one-step dynamics model.
"""

from .dynamics import (
    BrusselatorParams,
    Dataset,
    Trajectory,
    brusselator_rhs,
    generate_dataset,
    integrate_and_sample,
)
from .harmonics import (
    GeometricHarmonics,
    MatureStateTable,
    coldstart_states,
    collect_mature_states,
    evaluate_gh,
    fit_gh,
    impute_observable,
    infer_states,
)
from .harness import (
    ComparisonReport,
    ExperimentConfig,
    compare_initialization,
    long_horizon_mse,
    phase_error,
    reproduce_figures,
    state_manifold_report,
    sync_error_demo,
)
from .latent import (
    LatentDynamics,
    TransitionSet,
    build_transitions,
    rollout_latent,
    swish,
    train_latent,
)
from .lstm import (
    InternalState,
    LstmForecaster,
    LstmModel,
    RolloutRecord,
    cell_step,
    coldstart_rollout,
    rollout,
    train,
)
from .manifold import (
    DiffusionMapEmbedding,
    WindowSet,
    build_markov,
    extract_windows,
    fit_dmaps,
    median_epsilon,
    nystrom_extend,
    select_independent,
)
from .optim import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BrusselatorParams", "Dataset", "Trajectory", "brusselator_rhs",
    "generate_dataset", "integrate_and_sample",
    "LstmModel", "InternalState", "RolloutRecord", "LstmForecaster",
    "cell_step", "rollout", "coldstart_rollout", "train",
    "WindowSet", "DiffusionMapEmbedding", "extract_windows", "median_epsilon",
    "build_markov", "fit_dmaps", "select_independent", "nystrom_extend",
    "GeometricHarmonics", "MatureStateTable", "collect_mature_states",
    "fit_gh", "evaluate_gh", "coldstart_states", "infer_states", "impute_observable",
    "LatentDynamics", "TransitionSet", "build_transitions", "train_latent",
    "rollout_latent", "swish",
    "ComparisonReport", "ExperimentConfig", "compare_initialization",
    "sync_error_demo", "state_manifold_report", "reproduce_figures",
    "phase_error", "long_horizon_mse",
    "TrainConfig",
]
