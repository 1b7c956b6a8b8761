"""Greedy solver behavior against hand traces and the exact oracle."""

import numpy as np
import pytest

from linksched.graphs import (
    ConflictGraph,
    erdos_renyi_family,
    generate,
    is_independent_set,
    star_family,
)
from linksched.solver import (
    audit_schedule,
    baseline_utilities,
    mwis_exact,
    queue_weighted_lgs,
    solve,
)


def path3():
    return ConflictGraph.from_edges(3, [(0, 1), (1, 2)])


def triangle():
    return ConflictGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def random_instance(rng, n_max=20):
    n = int(rng.integers(1, n_max + 1))
    g = generate(erdos_renyi_family(n, float(rng.uniform(0, 0.6)),
                                    seed=int(rng.integers(2**32))))
    u = rng.uniform(0.0, 1.0, n)
    return g, u


class TestSolve:
    def test_path_selects_both_ends(self):
        s = solve(path3(), [3.0, 1.0, 2.0])
        assert s.member_set() == {0, 2}
        assert s.rounds_used == 1

    def test_single_vertex_always_wins(self):
        g = ConflictGraph.from_edges(1, [])
        s = solve(g, [7.0])
        assert s.member_set() == {0}

    def test_triangle_unique_winner(self):
        s = solve(triangle(), [3.0, 1.0, 2.0])
        assert s.member_set() == {0}
        assert s.rounds_used == 1

    def test_tie_goes_to_lower_index(self):
        g = ConflictGraph.from_edges(2, [(0, 1)])
        assert solve(g, [5.0, 5.0]).member_set() == {0}

    def test_all_equal_utilities_terminate(self):
        g = generate(erdos_renyi_family(15, 0.4, seed=3))
        s = solve(g, np.zeros(15))
        assert audit_schedule(g, s)

    def test_multi_round_chain(self):
        # path 0-1-2-3-4 with descending u: one winner per round cascade
        g = ConflictGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        s = solve(g, [5.0, 4.0, 3.0, 2.0, 1.0])
        assert s.member_set() == {0, 2, 4}
        assert s.rounds_used <= 5

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="NaN|finite"):
            solve(path3(), [1.0, float("nan"), 2.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            solve(path3(), [1.0, 2.0])

    def test_messages_recorded(self):
        s = solve(path3(), [3.0, 1.0, 2.0])
        assert len(s.messages_per_round) == s.rounds_used
        assert s.messages_per_round[0] == 4  # both directed edges, both ways

    def test_local_maxima_selected_in_round_one(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            g, u = random_instance(rng)
            members = solve(g, u).member_set()
            for v in range(g.n):
                nb = g.neighbors[v]
                if nb.size == 0 or u[v] > u[nb].max():
                    assert v in members

    def test_feasibility_and_maximality_fuzz(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            g, u = random_instance(rng)
            s = solve(g, u)
            assert is_independent_set(g, s.members)
            assert audit_schedule(g, s)
            assert s.rounds_used <= g.n

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            g, u = random_instance(rng)
            base = solve(g, u).member_set()
            assert solve(g, 2.0 * u + 1.0).member_set() == base
            assert solve(g, np.exp(u)).member_set() == base
            assert solve(g, u / 3.0 - 5.0).member_set() == base

    def test_monotone_transform_preserves_ties(self):
        g = ConflictGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        u = np.array([1.0, 1.0, 1.0, 1.0])
        base = solve(g, u).member_set()
        assert solve(g, 3.0 * u - 2.0).member_set() == base

    def test_unknown_tie_break(self):
        with pytest.raises(ValueError):
            solve(path3(), [1.0, 2.0, 3.0], tie_break="random")


class TestMwisExact:
    def test_triangle(self):
        members, weight = mwis_exact(triangle(), [3.0, 1.0, 2.0])
        assert members == {0}
        assert weight == 3.0

    def test_star_hub_beats_leaves(self):
        g = generate(star_family(4))
        members, weight = mwis_exact(g, [10.0, 1.0, 1.0, 1.0, 1.0])
        assert members == {0}
        assert weight == 10.0

    def test_star_leaves_beat_hub(self):
        g = generate(star_family(4))
        members, weight = mwis_exact(g, [3.0, 1.0, 1.0, 1.0, 1.0])
        assert members == {1, 2, 3, 4}
        assert weight == 4.0

    def test_empty_graph(self):
        g = ConflictGraph.from_edges(3, [])
        members, weight = mwis_exact(g, [1.0, 1.0, 1.0])
        assert members == {0, 1, 2}
        assert weight == 3.0

    def test_size_bound(self):
        g = generate(erdos_renyi_family(30, 0.1, seed=0))
        with pytest.raises(ValueError, match="solve"):
            mwis_exact(g, np.ones(30))

    def test_brute_force_agreement(self):
        # independent re-derivation by full subset enumeration
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(1, 9))
            g = generate(erdos_renyi_family(n, 0.4, seed=int(rng.integers(2**32))))
            w = rng.uniform(0, 1, n)
            best = -1.0
            for mask in range(1 << n):
                members = [v for v in range(n) if mask >> v & 1]
                if is_independent_set(g, members):
                    best = max(best, float(w[members].sum()) if members else 0.0)
            _, weight = mwis_exact(g, w)
            assert weight == pytest.approx(best, abs=1e-12)

    def test_greedy_respects_degree_bound(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            n = int(rng.integers(2, 13))
            g = generate(erdos_renyi_family(n, 0.3, seed=int(rng.integers(2**32))))
            u = rng.uniform(0, 1, n)
            got = float(u[solve(g, u).members].sum())
            _, opt = mwis_exact(g, u)
            delta = int(g.degrees().max())
            assert got >= opt / (delta + 1) - 1e-12


class TestQueueWeightedBaseline:
    def test_empty_queue_cannot_win(self):
        g = ConflictGraph.from_edges(2, [(0, 1)])
        s = queue_weighted_lgs(g, [5.0, 0.0], [10.0, 10.0])
        assert s.member_set() == {0}

    def test_zero_queues_tie_break(self):
        g = ConflictGraph.from_edges(2, [(0, 1)])
        s = queue_weighted_lgs(g, [0.0, 0.0], [10.0, 10.0])
        assert s.member_set() == {0}

    def test_equal_weights_tie_break(self):
        g = ConflictGraph.from_edges(2, [(0, 1)])
        s = queue_weighted_lgs(g, [3.0, 3.0], [50.0, 50.0])
        assert s.member_set() == {0}

    def test_weight_variants(self):
        q = np.array([2.0, 7.0])
        r = np.array([5.0, 3.0])
        assert np.allclose(baseline_utilities(q, r, "q_times_r"), [10.0, 21.0])
        assert np.allclose(baseline_utilities(q, r, "q"), q)
        assert np.allclose(baseline_utilities(q, r, "min_q_r"), [2.0, 3.0])
        with pytest.raises(ValueError):
            baseline_utilities(q, r, "nope")
