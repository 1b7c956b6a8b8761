"""Delay-oriented distributed link scheduling on conflict graphs.

A desk-scale framework combining a slotted-time queue simulator, a
distributed Local Greedy Solver, and learned per-link utility estimators
(a GCN baseline and an attention-based estimator with candidate sampling
and structural positional encodings), trained with zeroth-order
optimization against the long-run backlog objective.
"""

from .graphs import (
    ConflictGraph,
    TopologyFamily,
    barabasi_albert_family,
    degree_stats,
    erdos_renyi_family,
    from_edge_list,
    generate,
    is_independent_set,
    load_graph,
    power_law_tree_family,
    save_graph,
    star_family,
    to_edge_list,
)
from .models import ModelConfig, init_params, load_model, make_policy, save_model, utilities
from .solver import Schedule, baseline_utilities, mwis_exact, queue_weighted_lgs, solve
from .traffic import (
    BacklogMetrics,
    FeasibilityError,
    NetworkState,
    TrafficConfig,
    run_episode,
    sample_arrivals,
    sample_rates,
    step,
)
from .training import (
    CurriculumPhase,
    TrainerConfig,
    TrainResult,
    default_curriculum,
    episode_reward,
    smoke_curriculum,
    train_curriculum,
    zeroth_order_grad,
)
from .evaluation import ExperimentSpec, PolicySpec, RatioReport, ablation_sweep, evaluate

__version__ = "0.1.0"
