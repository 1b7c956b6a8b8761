"""Local Greedy Solver and an exact small-graph MWIS oracle.

The solver runs synchronous rounds that mirror a distributed message
exchange: every vertex still in the residual graph compares its utility
with its residual neighbors and claims the slot when it strictly wins.
Winners and their neighbors leave the residual graph; the process repeats
until nothing remains, which yields a maximal independent set.

Strict comparison alone can deadlock on equal utilities, so comparisons
use the total order (u(v), -v): ties go to the lower vertex id.  That
guarantees at least one winner per round and hence termination in at
most n rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import ConflictGraph, is_independent_set

__all__ = [
    "Schedule",
    "solve",
    "mwis_exact",
    "queue_weighted_lgs",
    "baseline_utilities",
    "audit_schedule",
    "MWIS_ENUM_BOUND",
]

MWIS_ENUM_BOUND = 26

BASELINE_WEIGHTS = ("q_times_r", "q", "min_q_r")


@dataclass(frozen=True)
class Schedule:
    """A feasible transmission set plus the distributed cost of finding it.

    ``messages_per_round[k]`` counts the directed utility messages exchanged
    in round k (one per residual vertex per residual neighbor).
    """

    members: np.ndarray
    rounds_used: int
    messages_per_round: tuple[int, ...] = ()

    def member_set(self) -> set[int]:
        return set(self.members.tolist())

    @property
    def total_messages(self) -> int:
        return sum(self.messages_per_round)


def solve(g: ConflictGraph, u, tie_break: str = "index") -> Schedule:
    """Round-synchronous greedy selection of local utility maxima.

    A vertex wins a round when its (utility, -id) pair exceeds that of every
    neighbor still in the residual graph.  Winners join the schedule; winners
    and their neighbors are removed.  Output is always a maximal independent
    set of g.
    """
    if tie_break != "index":
        raise ValueError(f"unknown tie_break policy {tie_break!r}")
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (g.n,):
        raise ValueError(f"utility vector has shape {u.shape}, expected ({g.n},)")
    if not np.isfinite(u).all():
        raise ValueError("utility vector contains NaN or infinite entries")

    n = g.n
    idx = np.arange(n)
    residual = np.ones(n, dtype=bool)
    selected = np.zeros(n, dtype=bool)
    rounds = 0
    messages: list[int] = []
    while residual.any():
        rounds += 1
        live = g.adj & residual[None, :] & residual[:, None]
        messages.append(int(live.sum()))
        nb_best = np.where(live, u[None, :], -np.inf).max(axis=1)
        # lowest neighbor id among those achieving the neighborhood max
        tied = live & (u[None, :] == nb_best[:, None])
        nb_best_id = np.where(tied, idx[None, :], n).min(axis=1)
        wins = residual & ((u > nb_best) | ((u == nb_best) & (idx < nb_best_id)))
        if not wins.any():
            raise AssertionError("greedy round removed nothing; tie-break broken")
        selected |= wins
        removed = wins | (g.adj & wins[None, :]).any(axis=1)
        residual &= ~removed
    return Schedule(
        members=idx[selected],
        rounds_used=rounds,
        messages_per_round=tuple(messages),
    )


def mwis_exact(
    g: ConflictGraph, w, enum_bound: int = MWIS_ENUM_BOUND
) -> tuple[set[int], float]:
    """Globally optimal maximum-weight independent set by branch and bound.

    Only intended as an oracle for small instances; ties in total weight are
    broken toward the lexicographically smallest vertex set.
    """
    if g.n > enum_bound:
        raise ValueError(
            f"n={g.n} exceeds the enumeration bound {enum_bound}; "
            "use solve() for large graphs"
        )
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (g.n,):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({g.n},)")
    if not np.isfinite(w).all():
        raise ValueError("weight vector contains NaN or infinite entries")

    nb_mask = [0] * g.n
    for v in range(g.n):
        bits = 0
        for x in g.neighbors[v]:
            bits |= 1 << int(x)
        nb_mask[v] = bits

    memo: dict[int, tuple[float, tuple[int, ...]]] = {}

    def best(mask: int) -> tuple[float, tuple[int, ...]]:
        if mask == 0:
            return 0.0, ()
        hit = memo.get(mask)
        if hit is not None:
            return hit
        v = (mask & -mask).bit_length() - 1
        ex_w, ex_set = best(mask & ~(1 << v))
        in_w, in_sub = best(mask & ~(1 << v) & ~nb_mask[v])
        in_w += w[v]
        in_set = (v, *in_sub)
        if in_w > ex_w or (in_w == ex_w and in_set < ex_set):
            out = (in_w, in_set)
        else:
            out = (ex_w, ex_set)
        memo[mask] = out
        return out

    weight, members = best((1 << g.n) - 1)
    return set(members), float(weight)


def baseline_utilities(q, r, weight: str = "q_times_r") -> np.ndarray:
    """Hand-crafted per-link weights for the greedy baseline."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if weight == "q_times_r":
        return q * r
    if weight == "q":
        return q.copy()
    if weight == "min_q_r":
        return np.minimum(q, r)
    raise ValueError(f"unknown baseline weight {weight!r}; pick one of {BASELINE_WEIGHTS}")


def queue_weighted_lgs(g: ConflictGraph, q, r, weight: str = "q_times_r") -> Schedule:
    """Baseline scheduling policy: greedy over backlog-rate weights."""
    return solve(g, baseline_utilities(q, r, weight))


def audit_schedule(g: ConflictGraph, schedule: Schedule) -> bool:
    """Feasibility plus maximality: no unscheduled vertex could be added."""
    members = schedule.members
    if not is_independent_set(g, members):
        return False
    covered = np.zeros(g.n, dtype=bool)
    covered[members] = True
    covered |= (g.adj & covered[None, :]).any(axis=1)
    return bool(covered.all())
