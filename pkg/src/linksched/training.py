"""Curriculum training of utility estimators around the greedy solver.

The solver is deterministic but non-differentiable, so parameters are
updated with a Gaussian-smoothing zeroth-order gradient: antithetic
perturbation pairs evaluated on common random numbers (each pair sees the
identical episode batch), averaged into a descent direction for Adam.

A curriculum is a sequence of phases, each naming its topology families,
epoch budget, and load grid.  Validation runs after every epoch on a fixed
seed set; early stopping (patience-limited) and best-parameter tracking are
per phase, and the best parameters warm-start the next phase.

Everything is driven by one root seed: two runs with identical
configuration and seed produce bitwise-identical histories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import nn
from .graphs import TopologyFamily, generate
from .models import ModelConfig, init_params, make_policy
from .nn import AdamState, Params, adam_step, flatten_params, unflatten_params
from .traffic import TrafficConfig, run_episode

__all__ = [
    "CurriculumPhase",
    "TrainerConfig",
    "HistoryRecord",
    "TrainResult",
    "episode_reward",
    "zeroth_order_grad",
    "train_curriculum",
    "default_curriculum",
    "smoke_curriculum",
    "derive_seed",
    "history_csv_lines",
]


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of integers (seed lineage helper)."""
    flat = []
    for p in parts:
        flat.append(int(p) & 0xFFFFFFFFFFFFFFFF)
    return int(np.random.SeedSequence(flat).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class CurriculumPhase:
    """One curriculum stage: which graphs to train on and for how long."""

    name: str
    families: tuple[TopologyFamily, ...]
    epochs: int
    graphs_per_epoch: int = 8
    mus: tuple[float, ...] = (0.07,)

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError(f"phase {self.name!r}: epochs must be positive")
        if not self.families:
            raise ValueError(f"phase {self.name!r}: needs at least one topology family")
        if not self.mus:
            raise ValueError(f"phase {self.name!r}: needs at least one load value")


@dataclass(frozen=True)
class TrainerConfig:
    """Optimizer and evaluation-protocol knobs (defaults follow the report
    settings: Adam at lr 0.001, 64 episode evaluations per update, patience
    10)."""

    lr: float = 0.001
    sigma: float = 0.05
    num_pairs: int = 16
    episodes_per_reward: int = 2
    patience: int = 10
    val_instances_per_family: int = 20
    val_mu: float = 0.07
    horizon: int = 64

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.num_pairs < 1:
            raise ValueError("num_pairs must be >= 1")
        if self.episodes_per_reward < 1:
            raise ValueError("episodes_per_reward must be >= 1")

    @property
    def batch_episodes(self) -> int:
        # episode evaluations consumed by one parameter update
        return 2 * self.num_pairs * self.episodes_per_reward


@dataclass
class HistoryRecord:
    phase: str
    epoch: int
    train_reward: float
    val_mean_q: float
    improved: bool


@dataclass
class TrainState:
    """Mutable per-phase training state."""

    params: Params
    adam: AdamState
    epoch: int = 0
    best_val: float = math.inf
    best_params: Params | None = None
    patience_count: int = 0


@dataclass
class TrainResult:
    params: Params
    history: list[HistoryRecord]
    best_val_by_phase: dict[str, float]
    metadata: dict


def episode_reward(
    params: Params,
    model_config: ModelConfig,
    graph,
    cfg: TrafficConfig,
    seed,
) -> float:
    """Negative mean backlog of one episode under the model-driven solver."""
    policy = make_policy(model_config, params)
    return -run_episode(graph, cfg, policy, seed).mean_q


def zeroth_order_grad(
    reward_fn: Callable[[np.ndarray], float],
    flat: np.ndarray,
    sigma: float,
    num_perturbations: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Gaussian-smoothing gradient estimate from antithetic pairs.

    Evaluates reward_fn at flat +/- sigma*eps_i for num_perturbations
    draws (paired, so the count must be even) and returns the estimate of
    the gradient of the NEGATIVE reward, ready for a descent step:

        -(1/P) sum_i (R(+) - R(-)) / (2 sigma) * eps_i

    reward_fn must consume identical randomness for both elements of a
    pair; the caller arranges that by fixing episode seeds up front.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if num_perturbations < 2 or num_perturbations % 2 != 0:
        raise ValueError("num_perturbations must be even and >= 2")
    pairs = num_perturbations // 2
    dim = flat.size
    grad = np.zeros(dim)
    for _ in range(pairs):
        eps = rng.standard_normal(dim)
        r_up = reward_fn(flat + sigma * eps)
        r_dn = reward_fn(flat - sigma * eps)
        grad += (r_up - r_dn) / (2.0 * sigma) * eps
    return -grad / pairs


def _validation_episodes(
    phase_families: Sequence[TopologyFamily],
    trainer: TrainerConfig,
    root_seed: int,
) -> list[tuple[object, TrafficConfig, int]]:
    """Fixed validation set: instances + traffic seeds, constant across epochs."""
    cfg = TrafficConfig(mu=trainer.val_mu, horizon=trainer.horizon)
    episodes = []
    for fi, fam in enumerate(phase_families):
        for j in range(trainer.val_instances_per_family):
            g = generate(fam.with_seed(derive_seed(root_seed, 9100, fi, j)))
            episodes.append((g, cfg, derive_seed(root_seed, 9200, fi, j)))
    return episodes


def _validate(params, model_config, episodes) -> float:
    scores = []
    for g, cfg, seed in episodes:
        policy = make_policy(model_config, params)
        scores.append(run_episode(g, cfg, policy, seed).mean_q)
    return float(np.mean(scores))


def train_curriculum(
    phases: Sequence[CurriculumPhase],
    model_config: ModelConfig,
    seed: int,
    trainer: TrainerConfig = TrainerConfig(),
    checkpoint_dir=None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Run the phase sequence and return the last phase's best parameters.

    Per update: draw episodes_per_reward fresh (graph, load, traffic-seed)
    episodes, evaluate every antithetic perturbation on that same batch,
    then take one Adam step.  graphs_per_epoch controls how many fresh
    instances an epoch consumes, so updates_per_epoch =
    ceil(graphs_per_epoch / episodes_per_reward).
    """
    if not phases:
        raise ValueError("need at least one curriculum phase")
    phases = list(phases)
    init_rng = np.random.default_rng(derive_seed(seed, 1))
    params = init_params(model_config, init_rng)
    template = params

    history: list[HistoryRecord] = []
    best_by_phase: dict[str, float] = {}
    say = log or (lambda msg: None)
    global_epoch = 0

    for pi, phase in enumerate(phases):
        state = TrainState(params=params, adam=AdamState.init(params, lr=trainer.lr))
        val_eps = _validation_episodes(phase.families, trainer, derive_seed(seed, 2, pi))
        updates_per_epoch = max(
            1, math.ceil(phase.graphs_per_epoch / trainer.episodes_per_reward)
        )
        for epoch in range(phase.epochs):
            global_epoch += 1
            reward_sum = 0.0
            reward_n = 0
            for upd in range(updates_per_epoch):
                batch = []
                batch_rng = np.random.default_rng(derive_seed(seed, 3, pi, epoch, upd))
                for e in range(trainer.episodes_per_reward):
                    fam = phase.families[batch_rng.integers(len(phase.families))]
                    mu = phase.mus[batch_rng.integers(len(phase.mus))]
                    g = generate(
                        fam.with_seed(derive_seed(seed, 4, pi, epoch, upd, e))
                    )
                    cfg = TrafficConfig(mu=float(mu), horizon=trainer.horizon)
                    batch.append((g, cfg, derive_seed(seed, 5, pi, epoch, upd, e)))

                def reward_fn(flat):
                    nonlocal reward_sum, reward_n
                    p = unflatten_params(flat, template)
                    total = 0.0
                    for g, cfg, ep_seed in batch:
                        total += episode_reward(p, model_config, g, cfg, ep_seed)
                    reward_sum += total / len(batch)
                    reward_n += 1
                    return total / len(batch)

                pert_rng = np.random.default_rng(derive_seed(seed, 6, pi, epoch, upd))
                flat = flatten_params(state.params)
                grad_flat = zeroth_order_grad(
                    reward_fn, flat, trainer.sigma, 2 * trainer.num_pairs, pert_rng
                )
                grads = unflatten_params(grad_flat, template)
                state.params, state.adam = adam_step(state.params, grads, state.adam)

            val = _validate(state.params, model_config, val_eps)
            improved = val < state.best_val
            if improved:
                state.best_val = val
                state.best_params = {k: v.copy() for k, v in state.params.items()}
                state.patience_count = 0
                if checkpoint_dir is not None:
                    from .models import save_model

                    save_model(
                        f"{checkpoint_dir}/{phase.name}_best.ckpt",
                        state.best_params,
                        model_config,
                        extra_meta={"phase": phase.name, "epoch": str(global_epoch)},
                    )
            else:
                state.patience_count += 1
            mean_reward = reward_sum / max(reward_n, 1)
            history.append(
                HistoryRecord(
                    phase=phase.name,
                    epoch=global_epoch,
                    train_reward=mean_reward,
                    val_mean_q=val,
                    improved=improved,
                )
            )
            say(
                f"[{phase.name}] epoch {global_epoch}: train reward {mean_reward:.4f} "
                f"val mean_q {val:.4f}{' *' if improved else ''}"
            )
            if state.patience_count >= trainer.patience:
                say(f"[{phase.name}] early stop after {state.patience_count} stagnant epochs")
                break
        params = state.best_params if state.best_params is not None else state.params
        best_by_phase[phase.name] = state.best_val

    metadata = {
        "seed": seed,
        "batch_episodes_per_update": trainer.batch_episodes,
        "lr": trainer.lr,
        "sigma": trainer.sigma,
        "num_pairs": trainer.num_pairs,
        "episodes_per_reward": trainer.episodes_per_reward,
        "patience": trainer.patience,
        "val_mu": trainer.val_mu,
        "val_instances_per_family": trainer.val_instances_per_family,
        "horizon": trainer.horizon,
        "model": model_config.to_meta(),
        "phases": [
            {
                "name": ph.name,
                "families": [fam.label() for fam in ph.families],
                "epochs": ph.epochs,
                "graphs_per_epoch": ph.graphs_per_epoch,
                "mus": list(ph.mus),
            }
            for ph in phases
        ],
    }
    return TrainResult(
        params=params,
        history=history,
        best_val_by_phase=best_by_phase,
        metadata=metadata,
    )


def history_csv_lines(history: Sequence[HistoryRecord]) -> list[str]:
    lines = ["phase,epoch,train_reward,val_mean_q,improved"]
    for rec in history:
        lines.append(
            f"{rec.phase},{rec.epoch},{rec.train_reward!r},{rec.val_mean_q!r},"
            f"{int(rec.improved)}"
        )
    return lines


def default_curriculum(
    star_sizes=(10, 20),
    er_n: int = 30,
    ba_n: int = 30,
    tree_n: int = 30,
    mus=(0.05, 0.07, 0.08),
) -> list[CurriculumPhase]:
    """Full schedule: stars for 50 epochs, sparse random graphs for 75,
    heterogeneous graphs for 76 (201 epochs total)."""
    from .graphs import (
        barabasi_albert_family,
        erdos_renyi_family,
        power_law_tree_family,
        star_family,
    )

    stars = tuple(star_family(k) for k in star_sizes)
    return [
        CurriculumPhase(name="star", families=stars, epochs=50, mus=tuple(mus)),
        CurriculumPhase(
            name="er",
            families=(erdos_renyi_family(er_n, 0.1),),
            epochs=75,
            mus=tuple(mus),
        ),
        CurriculumPhase(
            name="hetero",
            families=(
                barabasi_albert_family(ba_n, 1),
                barabasi_albert_family(ba_n, 2),
                power_law_tree_family(tree_n, 3.0),
            ),
            epochs=76,
            mus=tuple(mus),
        ),
    ]


def smoke_curriculum(
    star_leaves: int = 10,
    er_n: int = 30,
    star_epochs: int = 16,
    mixed_epochs: int = 24,
    graphs_per_epoch: int = 8,
    mu: float = 0.07,
) -> list[CurriculumPhase]:
    """Desk-scale curriculum (n <= 30, bounded epochs): a star phase, then a
    mixed star+ER phase so the final parameters stay strong on both."""
    from .graphs import erdos_renyi_family, star_family

    return [
        CurriculumPhase(
            name="star",
            families=(star_family(star_leaves),),
            epochs=star_epochs,
            graphs_per_epoch=graphs_per_epoch,
            mus=(mu,),
        ),
        CurriculumPhase(
            name="star_er",
            families=(star_family(star_leaves), erdos_renyi_family(er_n, 0.1)),
            epochs=mixed_epochs,
            graphs_per_epoch=graphs_per_epoch,
            mus=(mu,),
        ),
    ]
