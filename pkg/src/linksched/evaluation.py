"""Paired policy evaluation and ratio-to-baseline reporting.

Every policy in an experiment sees the identical graph instance and the
identical traffic seed, so per-instance comparisons are paired.  Reported
values are ratios of instance-aggregated metrics against the greedy
baseline row, which is therefore exactly 1.000 everywhere.  Bootstrap
confidence intervals over instance resamples accompany each ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graphs import TopologyFamily, generate
from .models import ModelConfig, load_model, make_policy
from .nn import Params
from .solver import baseline_utilities, solve
from .traffic import TrafficConfig, run_episode
from .training import derive_seed

__all__ = [
    "PolicySpec",
    "ExperimentSpec",
    "RatioReport",
    "ReportRow",
    "evaluate",
    "ablation_sweep",
    "ABLATION_POLICY_ORDER",
    "REPORT_METRICS",
]

REPORT_METRICS = ("q_med", "q_95", "q_avg", "d_avg", "u_sched")

# fixed row order of the ablation reports
ABLATION_POLICY_ORDER = ("lgs", "gcn", "no_attn_sampling", "no_pos_encoding", "full")


@dataclass(frozen=True)
class PolicySpec:
    """A named scheduling policy: the greedy baseline or a model checkpoint."""

    name: str
    kind: str = "lgs"                       # "lgs" | "model"
    weight: str = "q_times_r"               # baseline utility choice
    checkpoint: str | None = None
    params: Params | None = None
    config: ModelConfig | None = None

    def resolve(self) -> tuple[Params | None, ModelConfig | None]:
        if self.kind == "lgs":
            return None, None
        if self.params is not None and self.config is not None:
            return self.params, self.config
        if self.checkpoint is None:
            raise ValueError(f"policy {self.name!r} needs a checkpoint or params")
        params, config, _ = load_model(self.checkpoint)
        return params, config


@dataclass(frozen=True)
class ExperimentSpec:
    families: tuple[TopologyFamily, ...]
    policies: tuple[PolicySpec, ...]
    mus: tuple[float, ...] = (0.07,)
    instances: int = 100
    horizon: int = 64
    base_seed: int = 0
    bootstrap_samples: int = 1000

    def __post_init__(self):
        if self.instances < 1:
            raise ValueError("instances must be >= 1")
        if not self.families or not self.policies:
            raise ValueError("spec needs at least one family and one policy")
        if not any(p.kind == "lgs" for p in self.policies):
            raise ValueError("spec needs the greedy baseline policy for normalization")
        for p in self.policies:
            if p.kind not in ("lgs", "model"):
                raise ValueError(f"unknown policy kind {p.kind!r}")


@dataclass
class ReportRow:
    topology: str
    mu: float
    policy: str
    metric: str
    value: float
    ci_low: float
    ci_high: float


@dataclass
class RatioReport:
    rows: list[ReportRow] = field(default_factory=list)
    schedules_checked: int = 0
    feasibility_violations: int = 0

    def ratio(self, topology: str, mu: float, policy: str, metric: str) -> float:
        for row in self.rows:
            if (row.topology, row.policy, row.metric) == (topology, policy, metric) \
                    and row.mu == mu:
                return row.value
        raise KeyError((topology, mu, policy, metric))

    def policies(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.policy not in seen:
                seen.append(row.policy)
        return seen

    def csv_lines(self) -> list[str]:
        lines = ["topology,mu,policy,metric,value,ci_low,ci_high"]
        for r in self.rows:
            lines.append(
                f"{r.topology},{r.mu!r},{r.policy},{r.metric},"
                f"{r.value!r},{r.ci_low!r},{r.ci_high!r}"
            )
        return lines

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")


def _policy_factory(spec: PolicySpec):
    """Resolve checkpoints once; returns a zero-arg maker of fresh
    per-episode policy closures."""
    if spec.kind == "lgs":
        weight = spec.weight

        def make():
            def policy(graph, q, r):
                return solve(graph, baseline_utilities(q, r, weight)).members

            return policy

        return make
    params, config = spec.resolve()
    return lambda: make_policy(config, params)


def _episode_metrics(metrics, arrival_rate: float) -> dict[str, float]:
    return {
        "q_med": metrics.median_q,
        "q_95": metrics.p95_q,
        "q_avg": metrics.mean_q,
        "d_avg": metrics.mean_q / arrival_rate,
        "u_sched": metrics.mean_sched_weight,
    }


def evaluate(spec: ExperimentSpec) -> RatioReport:
    """Run the full (family x mu x instance x policy) grid.

    Aggregation: per cell, each metric is averaged over instances and then
    divided by the baseline's average.  Per-instance pairing additionally
    feeds the bootstrap CIs.  Any infeasible schedule raises immediately
    (the simulator checks every slot), so a finished report certifies zero
    violations.
    """
    baseline_name = next(p.name for p in spec.policies if p.kind == "lgs")
    factories = {p.name: _policy_factory(p) for p in spec.policies}
    report = RatioReport()
    boot_rng = np.random.default_rng(derive_seed(spec.base_seed, 7001))

    for fi, family in enumerate(spec.families):
        label = family.label()
        graphs = [
            generate(family.with_seed(derive_seed(spec.base_seed, 7100, fi, i)))
            for i in range(spec.instances)
        ]
        traffic_seeds = [
            derive_seed(spec.base_seed, 7200, fi, i) for i in range(spec.instances)
        ]
        for mu in spec.mus:
            cfg = TrafficConfig(mu=float(mu), horizon=spec.horizon)
            # per-policy matrix of per-instance metric values
            values: dict[str, dict[str, np.ndarray]] = {
                p.name: {m: np.zeros(spec.instances) for m in REPORT_METRICS}
                for p in spec.policies
            }
            for i in range(spec.instances):
                for pol in spec.policies:
                    policy_fn = factories[pol.name]()
                    metrics = run_episode(graphs[i], cfg, policy_fn, traffic_seeds[i])
                    report.schedules_checked += metrics.horizon
                    em = _episode_metrics(metrics, cfg.arrival_rate)
                    for m in REPORT_METRICS:
                        values[pol.name][m][i] = em[m]
            base = values[baseline_name]
            boot_idx = boot_rng.integers(
                0, spec.instances, size=(spec.bootstrap_samples, spec.instances)
            )
            for pol in spec.policies:
                for m in REPORT_METRICS:
                    num = values[pol.name][m]
                    den = base[m]
                    value = _safe_ratio(num.mean(), den.mean())
                    if pol.name == baseline_name:
                        lo = hi = value
                    else:
                        samples = np.array(
                            [
                                _safe_ratio(num[idx].mean(), den[idx].mean())
                                for idx in boot_idx
                            ]
                        )
                        lo = float(np.percentile(samples, 2.5))
                        hi = float(np.percentile(samples, 97.5))
                    report.rows.append(
                        ReportRow(
                            topology=label,
                            mu=float(mu),
                            policy=pol.name,
                            metric=m,
                            value=value,
                            ci_low=lo,
                            ci_high=hi,
                        )
                    )
    return report


def _safe_ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 1.0 if num == 0.0 else float("inf")
    return float(num / den)


def ablation_sweep(
    checkpoints: dict[str, str],
    families: Sequence[TopologyFamily],
    mus: Sequence[float] = (0.07,),
    instances: int = 100,
    horizon: int = 64,
    base_seed: int = 0,
    baseline_weight: str = "q_times_r",
) -> RatioReport:
    """The five-row ablation table: baseline, gcn, both single-module
    removals, and the full model, on every requested family.

    checkpoints maps the four learned row names ("gcn", "no_attn_sampling",
    "no_pos_encoding", "full") to checkpoint paths.
    """
    missing = [k for k in ABLATION_POLICY_ORDER[1:] if k not in checkpoints]
    if missing:
        raise ValueError(f"ablation sweep needs checkpoints for {missing}")
    policies = [PolicySpec(name="lgs", kind="lgs", weight=baseline_weight)]
    for name in ABLATION_POLICY_ORDER[1:]:
        policies.append(
            PolicySpec(name=name, kind="model", checkpoint=checkpoints[name])
        )
    spec = ExperimentSpec(
        families=tuple(families),
        policies=tuple(policies),
        mus=tuple(float(m) for m in mus),
        instances=instances,
        horizon=horizon,
        base_seed=base_seed,
    )
    return evaluate(spec)
