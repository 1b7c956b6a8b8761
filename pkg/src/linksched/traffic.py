"""Slotted-time queue simulator for conflict-graph link scheduling.

Per slot, every link v holds a real-valued backlog q(v) and sees a fresh
fading rate r(v).  A scheduling policy observes (graph, q, r) and claims an
independent set; the queues then update simultaneously:

    q'(v) = q(v) + a(v)                      v unscheduled
    q'(v) = q(v) + a(v) - min(r(v), q(v))    v scheduled

with Poisson arrivals a(v).  Service is capped by the backlog observed at
the start of the slot, so queues never go negative.

Arrivals are drawn by inverse-CDF from per-slot uniforms.  Feeding the same
uniform stream at a higher load therefore never produces fewer packets,
which keeps load sweeps monotone under common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .graphs import ConflictGraph, is_independent_set

__all__ = [
    "TrafficConfig",
    "NetworkState",
    "BacklogMetrics",
    "FeasibilityError",
    "expected_clipped_rate",
    "sample_rates",
    "sample_arrivals",
    "poisson_inverse_cdf",
    "step",
    "run_episode",
    "metrics_csv_header",
    "metrics_csv_row",
    "write_trace",
]

# Policy: (graph, q, r) -> iterable of scheduled vertex ids
Policy = Callable[[ConflictGraph, np.ndarray, np.ndarray], Iterable[int]]

DEFAULT_MU_GRID = (0.01, 0.03, 0.05, 0.07, 0.08, 0.10)


class FeasibilityError(RuntimeError):
    """A policy produced a schedule that is not an independent set."""


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _Phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def expected_clipped_rate(mean: float, std: float, lo: float, hi: float) -> float:
    """Mean of clip(N(mean, std), lo, hi); computed, never assumed."""
    if std == 0.0:
        return min(max(mean, lo), hi)
    a = (lo - mean) / std
    b = (hi - mean) / std
    return (
        lo * _Phi(a)
        + hi * (1.0 - _Phi(b))
        + mean * (_Phi(b) - _Phi(a))
        - std * (_phi(b) - _phi(a))
    )


@dataclass(frozen=True)
class TrafficConfig:
    """Traffic intensity knobs; the load mu ties arrivals to the fading mean.

    lambda = mu * E[r] where E[r] is the mean of the clipped rate
    distribution (exactly rate_mean here because the clip bounds sit
    symmetrically around it, but always computed).
    """

    mu: float
    rate_mean: float = 50.0
    rate_std: float = 25.0
    rate_clip: tuple[float, float] = (0.0, 100.0)
    horizon: int = 64

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError(f"mu: normalized load must be positive, got {self.mu}")
        lo, hi = self.rate_clip
        if not lo < hi:
            raise ValueError(f"rate_clip: bounds {self.rate_clip} must satisfy lo < hi")
        if self.rate_std < 0.0:
            raise ValueError("rate_std: must be >= 0")
        if self.horizon < 0:
            raise ValueError("horizon: must be >= 0")
        if self.arrival_rate > 500.0:
            raise ValueError(
                f"mu: implied arrival rate {self.arrival_rate:.1f} exceeds the "
                "exact-sampling bound of 500 packets/slot"
            )

    @property
    def expected_rate(self) -> float:
        lo, hi = self.rate_clip
        return expected_clipped_rate(self.rate_mean, self.rate_std, lo, hi)

    @property
    def arrival_rate(self) -> float:
        return self.mu * self.expected_rate


@dataclass(frozen=True)
class NetworkState:
    """Snapshot (graph, queue vector, rate vector) at slot t."""

    graph: ConflictGraph
    q: np.ndarray
    r: np.ndarray
    t: int = 0

    def __post_init__(self):
        if self.q.shape != (self.graph.n,) or self.r.shape != (self.graph.n,):
            raise ValueError("q and r must both have length graph.n")
        if (self.q < 0).any():
            raise ValueError("queue lengths must be non-negative")
        if (self.r < 0).any() or not np.isfinite(self.r).all():
            raise ValueError("rates must be finite and non-negative")

    @staticmethod
    def initial(graph: ConflictGraph, r: np.ndarray) -> "NetworkState":
        return NetworkState(graph=graph, q=np.zeros(graph.n), r=np.asarray(r, float), t=0)


@dataclass
class BacklogMetrics:
    """Episode-level backlog summary.

    mean_q averages the observed per-vertex backlog over slots 0..T;
    median_q / p95_q summarize the distribution of per-vertex time
    averages.  mean_sched_weight is the average per-slot sum of q*r over
    scheduled links, the scheduling-efficiency column of the reports.
    """

    mean_q: float
    median_q: float
    p95_q: float
    horizon: int
    n: int
    total_arrivals: float
    total_served: float
    mean_sched_weight: float
    mean_schedule_size: float
    per_slot: Optional[list[tuple[int, float, int]]] = field(default=None, repr=False)

    def littles_law_delay(self, arrival_rate: float) -> float:
        return self.mean_q / arrival_rate


def sample_rates(cfg: TrafficConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """n fading rates: clipped normal draws (mass at the clip bounds kept)."""
    if n < 1:
        raise ValueError("n: need at least one draw")
    lo, hi = cfg.rate_clip
    return np.clip(rng.normal(cfg.rate_mean, cfg.rate_std, size=n), lo, hi)


def poisson_inverse_cdf(lam: float, uniforms: np.ndarray) -> np.ndarray:
    """Poisson(lam) counts from uniforms, monotone in lam for fixed inputs."""
    if lam < 0:
        raise ValueError("lam: must be >= 0")
    u = np.asarray(uniforms, dtype=np.float64)
    k = np.zeros(u.shape, dtype=np.int64)
    p = np.full(u.shape, math.exp(-lam))
    cdf = p.copy()
    pending = u > cdf
    while pending.any():
        k[pending] += 1
        p = p * (lam / np.maximum(k, 1))
        cdf = cdf + np.where(pending, p, 0.0)
        pending = pending & (u > cdf)
    return k


def sample_arrivals(cfg: TrafficConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """n Poisson arrival counts at rate lambda = mu * E[r]."""
    if n < 1:
        raise ValueError("n: need at least one draw")
    return poisson_inverse_cdf(cfg.arrival_rate, rng.random(n))


def step(state: NetworkState, schedule, arrivals) -> NetworkState:
    """One slot of the queue update law; rates are left for the driver."""
    n = state.graph.n
    a = np.asarray(arrivals, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"arrivals have shape {a.shape}, expected ({n},)")
    if (a < 0).any():
        raise ValueError("arrivals must be non-negative")
    members = np.asarray(sorted(set(int(v) for v in schedule)), dtype=np.int64)
    if not is_independent_set(state.graph, members):
        raise FeasibilityError(
            f"schedule {members.tolist()} is not an independent set at slot {state.t}"
        )
    q = state.q + a
    if members.size:
        q[members] -= np.minimum(state.r[members], state.q[members])
    # min(r, q) <= q keeps queues non-negative up to roundoff
    q = np.maximum(q, 0.0)
    return NetworkState(graph=state.graph, q=q, r=state.r, t=state.t + 1)


def run_episode(
    graph: ConflictGraph,
    cfg: TrafficConfig,
    policy: Policy,
    seed: int,
    collect_trace: bool = False,
) -> BacklogMetrics:
    """Simulate one episode of cfg.horizon slots from empty queues.

    mean_q implements the backlog objective (1/(T+1)) sum_t |q(t)|_1 / n
    over the observed states t = 0..T.  Rate and arrival streams depend
    only on (seed, slot), never on the policy, so different policies can
    be compared on identical randomness.
    """
    T = cfg.horizon
    ss = np.random.SeedSequence(seed)
    rate_rng, arr_rng = (np.random.default_rng(c) for c in ss.spawn(2))

    n = graph.n
    state = NetworkState.initial(graph, sample_rates(cfg, n, rate_rng))
    q_time_sum = np.zeros(n)
    per_slot: Optional[list[tuple[int, float, int]]] = [] if collect_trace else None
    total_arrivals = 0.0
    total_served = 0.0
    sched_weight_sum = 0.0
    sched_size_sum = 0
    for _ in range(T):
        q_time_sum += state.q
        members = np.asarray(sorted(set(int(v) for v in policy(graph, state.q, state.r))),
                             dtype=np.int64)
        if per_slot is not None:
            per_slot.append((state.t, float(state.q.sum()), int(members.size)))
        if members.size:
            sched_weight_sum += float((state.q[members] * state.r[members]).sum())
            total_served += float(np.minimum(state.r[members], state.q[members]).sum())
        sched_size_sum += int(members.size)
        arrivals = sample_arrivals(cfg, n, arr_rng)
        total_arrivals += float(arrivals.sum())
        state = step(state, members, arrivals)
        state = replace(state, r=sample_rates(cfg, n, rate_rng))
    q_time_sum += state.q
    if per_slot is not None:
        per_slot.append((state.t, float(state.q.sum()), 0))

    q_bar = q_time_sum / (T + 1)
    return BacklogMetrics(
        mean_q=float(q_bar.mean()),
        median_q=float(np.median(q_bar)),
        p95_q=float(np.percentile(q_bar, 95)),
        horizon=T,
        n=n,
        total_arrivals=total_arrivals,
        total_served=total_served,
        mean_sched_weight=sched_weight_sum / T if T else 0.0,
        mean_schedule_size=sched_size_sum / T if T else 0.0,
        per_slot=per_slot,
    )


def metrics_csv_header() -> str:
    return "topology,seed,mu,policy,mean_q,median_q,p95_q,horizon"


def metrics_csv_row(
    topology: str, seed: int, mu: float, policy: str, m: BacklogMetrics
) -> str:
    return (
        f"{topology},{seed},{mu!r},{policy},"
        f"{m.mean_q!r},{m.median_q!r},{m.p95_q!r},{m.horizon}"
    )


def write_trace(path, metrics: BacklogMetrics) -> None:
    """Per-slot trace file: one 't, |q|_1, |schedule|' line per slot."""
    if metrics.per_slot is None:
        raise ValueError("episode was run without collect_trace=True")
    with open(path, "w", encoding="ascii") as fh:
        for t, qsum, ssize in metrics.per_slot:
            fh.write(f"{t}, {qsum!r}, {ssize}\n")
