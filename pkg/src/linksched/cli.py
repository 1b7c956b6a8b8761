"""Command-line front end.

Subcommands: generate (graph files), simulate (single traced episode),
train (curriculum from a JSON config), evaluate (ratio report), ablate
(five-row module-removal table), gradcheck (derivative verification).

Outputs land in a run directory (rooted at $LINKSCHED_RUN_ROOT when the
--out path is relative) containing a config echo plus CSVs, checkpoints,
graphs/, and traces/ as applicable.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import nn
from .evaluation import (
    ABLATION_POLICY_ORDER,
    ExperimentSpec,
    PolicySpec,
    ablation_sweep,
    evaluate,
)
from .graphs import (
    TopologyFamily,
    barabasi_albert_family,
    erdos_renyi_family,
    generate,
    power_law_tree_family,
    save_graph,
    star_family,
)
from .models import (
    ModelConfig,
    init_params,
    mean_utility_fn,
    save_model,
    utilities,
)
from .solver import BASELINE_WEIGHTS, baseline_utilities, solve
from .traffic import TrafficConfig, metrics_csv_header, metrics_csv_row, run_episode, write_trace
from .training import (
    CurriculumPhase,
    TrainerConfig,
    history_csv_lines,
    smoke_curriculum,
    train_curriculum,
)

RUN_ROOT_ENV = "LINKSCHED_RUN_ROOT"


def _run_dir(out: str) -> Path:
    path = Path(out)
    if not path.is_absolute():
        path = Path(os.environ.get(RUN_ROOT_ENV, ".")) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_topology(text: str) -> TopologyFamily:
    """Compact topology names: star10, er30, er30p0.2, ba30m2, tree30."""
    m = re.fullmatch(r"star(\d+)", text)
    if m:
        return star_family(int(m.group(1)))
    m = re.fullmatch(r"er(\d+)(?:p([\d.]+))?", text)
    if m:
        return erdos_renyi_family(int(m.group(1)), float(m.group(2) or 0.1))
    m = re.fullmatch(r"ba(\d+)m(\d+)", text)
    if m:
        return barabasi_albert_family(int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"tree(\d+)(?:g([\d.]+))?", text)
    if m:
        return power_law_tree_family(int(m.group(1)), float(m.group(2) or 3.0))
    raise argparse.ArgumentTypeError(
        f"cannot parse topology {text!r}; expected star<k>, er<n>[p<p>], "
        "ba<n>m<m>, or tree<n>[g<gamma>]"
    )


def _family_from_dict(d: dict) -> TopologyFamily:
    kind = d["kind"]
    if kind == "star":
        return star_family(int(d["n_leaves"]))
    if kind == "er":
        return erdos_renyi_family(int(d["n"]), float(d.get("p", 0.1)))
    if kind == "ba":
        return barabasi_albert_family(int(d["n"]), int(d["m"]))
    if kind == "tree":
        return power_law_tree_family(int(d["n"]), float(d.get("gamma", 3.0)))
    raise ValueError(f"unknown topology kind {kind!r}")


def _echo_config(run_dir: Path, payload: dict) -> None:
    with open(run_dir / "config.echo.json", "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    run_dir = _run_dir(args.out)
    graph_dir = run_dir / "graphs"
    graph_dir.mkdir(exist_ok=True)
    family = parse_topology(args.topology)
    for i in range(args.count):
        g = generate(family.with_seed(args.seed + i))
        save_graph(g, graph_dir / f"{family.label()}_{args.seed + i}.txt")
    _echo_config(run_dir, {
        "command": "generate",
        "topology": args.topology,
        "count": args.count,
        "seed": args.seed,
    })
    print(f"wrote {args.count} graph files to {graph_dir}")
    return 0


def _policy_from_arg(text: str) -> PolicySpec:
    if text == "lgs" or text.startswith("lgs:"):
        weight = text.partition(":")[2] or "q_times_r"
        if weight not in BASELINE_WEIGHTS:
            raise argparse.ArgumentTypeError(
                f"baseline weight {weight!r} not in {BASELINE_WEIGHTS}"
            )
        return PolicySpec(name=text.replace(":", "_"), kind="lgs", weight=weight)
    path = Path(text)
    if not path.exists():
        raise argparse.ArgumentTypeError(
            f"policy {text!r} is neither 'lgs[:weight]' nor a checkpoint path"
        )
    return PolicySpec(name=path.stem, kind="model", checkpoint=str(path))


def cmd_simulate(args) -> int:
    run_dir = _run_dir(args.out)
    family = parse_topology(args.topology).with_seed(args.seed)
    graph = generate(family)
    cfg = TrafficConfig(mu=args.mu, horizon=args.horizon)
    spec = _policy_from_arg(args.policy)
    from .evaluation import _policy_factory

    policy = _policy_factory(spec)()
    metrics = run_episode(graph, cfg, policy, args.seed, collect_trace=True)
    trace_dir = run_dir / "traces"
    trace_dir.mkdir(exist_ok=True)
    trace_path = trace_dir / f"{family.label()}_mu{args.mu:g}_seed{args.seed}.trace"
    write_trace(trace_path, metrics)
    csv_path = run_dir / "episode.csv"
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write(metrics_csv_header() + "\n")
        fh.write(metrics_csv_row(family.label(), args.seed, args.mu, spec.name, metrics) + "\n")
    _echo_config(run_dir, {
        "command": "simulate",
        "topology": args.topology,
        "mu": args.mu,
        "horizon": args.horizon,
        "seed": args.seed,
        "policy": args.policy,
    })
    print(f"mean_q {metrics.mean_q!r}  median_q {metrics.median_q!r}  "
          f"p95_q {metrics.p95_q!r}")
    print(f"trace written to {trace_path}")
    return 0


def cmd_train(args) -> int:
    run_dir = _run_dir(args.out)
    with open(args.config, "r", encoding="utf-8") as fh:
        conf = json.load(fh)
    seed = args.seed if args.seed is not None else int(conf.get("seed", 0))
    model_config = ModelConfig(**conf.get("model", {}))
    trainer = TrainerConfig(**conf.get("trainer", {}))
    if "phases" in conf:
        phases = [
            CurriculumPhase(
                name=ph["name"],
                families=tuple(_family_from_dict(f) for f in ph["families"]),
                epochs=int(ph["epochs"]),
                graphs_per_epoch=int(ph.get("graphs_per_epoch", 8)),
                mus=tuple(float(m) for m in ph.get("mus", [0.07])),
            )
            for ph in conf["phases"]
        ]
    else:
        phases = smoke_curriculum()
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    _echo_config(run_dir, {"command": "train", "seed": seed, "config": conf})
    t0 = time.perf_counter()
    result = train_curriculum(
        phases,
        model_config,
        seed=seed,
        trainer=trainer,
        checkpoint_dir=str(ckpt_dir),
        log=print,
    )
    elapsed = time.perf_counter() - t0
    with open(run_dir / "history.csv", "w", encoding="ascii") as fh:
        fh.write("\n".join(history_csv_lines(result.history)) + "\n")
    with open(run_dir / "metadata.json", "w", encoding="ascii") as fh:
        json.dump(result.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    # timing lives outside history.csv so reruns stay byte-identical
    with open(run_dir / "timing.txt", "w", encoding="ascii") as fh:
        fh.write(f"train_wall_clock_seconds {elapsed:.3f}\n")
    save_model(run_dir / "final.ckpt", result.params, model_config,
               extra_meta={"phase": "final"})
    print(f"final checkpoint: {run_dir / 'final.ckpt'}")
    return 0


def cmd_evaluate(args) -> int:
    run_dir = _run_dir(args.out)
    policies = tuple(_policy_from_arg(p) for p in args.policies)
    spec = ExperimentSpec(
        families=tuple(parse_topology(t) for t in args.topologies),
        policies=policies,
        mus=tuple(args.mu),
        instances=args.instances,
        horizon=args.horizon,
        base_seed=args.seed,
    )
    report = evaluate(spec)
    reports_dir = run_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    out_csv = reports_dir / "ratio_report.csv"
    report.to_csv(out_csv)
    _echo_config(run_dir, {
        "command": "evaluate",
        "topologies": list(args.topologies),
        "policies": list(args.policies),
        "mus": list(args.mu),
        "instances": args.instances,
        "horizon": args.horizon,
        "seed": args.seed,
    })
    print(f"schedules checked: {report.schedules_checked}, violations: "
          f"{report.feasibility_violations}")
    print(f"report written to {out_csv}")
    return 0


def cmd_ablate(args) -> int:
    run_dir = _run_dir(args.out)
    checkpoints = {
        "gcn": args.gcn,
        "no_attn_sampling": args.no_attn_sampling,
        "no_pos_encoding": args.no_pos_encoding,
        "full": args.full,
    }
    report = ablation_sweep(
        checkpoints,
        families=[parse_topology(t) for t in args.topologies],
        mus=tuple(args.mu),
        instances=args.instances,
        horizon=args.horizon,
        base_seed=args.seed,
    )
    reports_dir = run_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    out_csv = reports_dir / "ablation_report.csv"
    report.to_csv(out_csv)
    _echo_config(run_dir, {
        "command": "ablate",
        "topologies": list(args.topologies),
        "instances": args.instances,
        "horizon": args.horizon,
        "seed": args.seed,
        "checkpoints": checkpoints,
    })
    print(f"ablation rows: {ABLATION_POLICY_ORDER}")
    print(f"report written to {out_csv}")
    return 0


def cmd_gradcheck(args) -> int:
    from .graphs import erdos_renyi_family
    from .traffic import sample_rates

    rng = np.random.default_rng(args.seed)
    graph = generate(erdos_renyi_family(8, 0.3, seed=args.seed))
    q = rng.uniform(0.0, 20.0, graph.n)
    r = np.clip(rng.normal(50.0, 25.0, graph.n), 0.0, 100.0)
    worst = 0.0
    for variant, as_flag, pe_flag in [
        ("gcn", False, False),
        ("transgnn", True, True),
        ("transgnn", False, True),
        ("transgnn", True, False),
        ("transgnn", False, False),
    ]:
        config = ModelConfig(
            variant=variant,
            attention_sampling=as_flag,
            positional_encoding=pe_flag,
            hidden_dim=8,
            num_layers=2,
            num_heads=2,
            sample_k=5,
            pe_dim=4,
        )
        params = init_params(config, np.random.default_rng(args.seed + 1))
        f = mean_utility_fn(graph, q, r, config)
        report = nn.grad_check(f, params, tolerance=1e-3,
                               rng=np.random.default_rng(args.seed + 2))
        tag = variant if variant == "gcn" else (
            f"transgnn(as={'on' if as_flag else 'off'},pe={'on' if pe_flag else 'off'})"
        )
        print(f"{report}  [{tag}]")
        worst = max(worst, report.max_rel_err)
        if not report.passed:
            return 1
    print(f"max relative error across estimators: {worst:.3e}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linksched",
        description="Delay-oriented link scheduling on conflict graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit conflict-graph edge-list files")
    p.add_argument("--topology", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run_generate")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("simulate", help="run one traced episode")
    p.add_argument("--topology", required=True)
    p.add_argument("--mu", type=float, default=0.07)
    p.add_argument("--horizon", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", default="lgs")
    p.add_argument("--out", default="run_simulate")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("train", help="run curriculum training from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default="run_train")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="paired ratio report against the baseline")
    p.add_argument("--topologies", nargs="+", required=True)
    p.add_argument("--policies", nargs="+", default=["lgs"])
    p.add_argument("--mu", type=float, nargs="+", default=[0.07])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--horizon", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run_evaluate")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="five-row module-removal table")
    p.add_argument("--topologies", nargs="+", default=["star10", "er30"])
    p.add_argument("--gcn", required=True, help="gcn checkpoint path")
    p.add_argument("--full", required=True, help="full model checkpoint path")
    p.add_argument("--no-attn-sampling", dest="no_attn_sampling", required=True)
    p.add_argument("--no-pos-encoding", dest="no_pos_encoding", required=True)
    p.add_argument("--mu", type=float, nargs="+", default=[0.07])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--horizon", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="run_ablate")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference derivative audit")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
